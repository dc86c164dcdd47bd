"""Parsers turning tool artifacts into domain values.

Covers JaCoCo XML coverage reports, PIT XML mutation reports, Maven/javac/
surefire build logs and unified diffs.
"""

from __future__ import annotations

import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Optional

from .errors import FocalNotFound, MalformedDiff, ReportError
from .model import (
    CoverageFacts,
    Diagnostic,
    DiagnosticKind,
    DiffHunk,
    HunkTag,
    LineStatus,
    MethodRef,
    Mutant,
    MutantStatus,
    MutationFacts,
)

log = logging.getLogger(__name__)


def _parse_xml(data) -> ET.Element:
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        return ET.fromstring(data)
    except ET.ParseError as exc:
        raise ReportError(f"malformed XML: {exc}") from exc


# --- JaCoCo ------------------------------------------------------------------

def parse_coverage_report(xml, focal: MethodRef) -> CoverageFacts:
    """Line and branch coverage of the focal method's line span.

    Lines the report does not mention are ``NO_INSTRUCTION``. A line with any
    covered instruction counts as covered (JaCoCo's partly-covered lines
    included); branch counters come from the ``mb``/``cb`` attributes.
    """
    root = _parse_xml(xml)
    vm_name = focal.fully_qualified_class.replace(".", "/")
    pkg_name = vm_name.rsplit("/", 1)[0] if "/" in vm_name else ""
    source_name = None
    package = None
    for pkg in root.iter("package"):
        for cls in pkg.findall("class"):
            if cls.get("name") == vm_name:
                package = pkg
                source_name = cls.get("sourcefilename") or focal.class_name + ".java"
                break
        if package is not None:
            break
    if package is None:
        raise FocalNotFound(f"class {focal.fully_qualified_class} not in coverage report")
    if package.get("name", "") != pkg_name:
        log.warning("package %s holds class %s", package.get("name"), vm_name)

    report_lines: dict[int, tuple[int, int, int, int]] = {}
    for sf in package.findall("sourcefile"):
        if sf.get("name") != source_name:
            continue
        for ln in sf.findall("line"):
            try:
                nr = int(ln.get("nr"))
                counts = tuple(int(ln.get(k, "0")) for k in ("mi", "ci", "mb", "cb"))
            except (TypeError, ValueError) as exc:
                raise ReportError(f"bad <line> element in {source_name}: {exc}") from exc
            report_lines[nr] = counts

    start, end = focal.line_span
    line_status: dict[int, LineStatus] = {}
    branch_status: dict[int, tuple[int, int]] = {}
    for nr in range(start, end + 1):
        if nr not in report_lines:
            line_status[nr] = LineStatus.NO_INSTRUCTION
            continue
        mi, ci, mb, cb = report_lines[nr]
        if ci > 0:
            line_status[nr] = LineStatus.COVERED
        elif mi > 0:
            line_status[nr] = LineStatus.NOT_COVERED
        else:
            line_status[nr] = LineStatus.NO_INSTRUCTION
        if mb + cb > 0:
            branch_status[nr] = (cb, mb + cb)
    return CoverageFacts.build(focal, line_status, branch_status)


# --- PIT ---------------------------------------------------------------------

# PIT's "detected" outcomes count as killed.
PIT_STATUS = {
    "KILLED": MutantStatus.KILLED,
    "TIMED_OUT": MutantStatus.KILLED,
    "MEMORY_ERROR": MutantStatus.KILLED,
    "RUN_ERROR": MutantStatus.KILLED,
    "SURVIVED": MutantStatus.SURVIVED,
    "NO_COVERAGE": MutantStatus.NO_COVERAGE,
}


_PRIMITIVES = {"Z": "boolean", "B": "byte", "C": "char", "S": "short", "I": "int", "J": "long",
               "F": "float", "D": "double", "V": "void"}


def descriptor_param_types(desc: str) -> Optional[list[str]]:
    """Simple type names of a JVM descriptor's parameters: ``(I[Ljava/lang/String;)V`` -> ``['int', 'String[]']``."""
    m = re.match(r"\((.*)\)", desc or "")
    if not m:
        return None
    params, out, i = m.group(1), [], 0
    while i < len(params):
        dims = 0
        while params[i] == "[":
            dims += 1
            i += 1
        if params[i] == "L":
            end = params.index(";", i)
            name = params[i + 1:end].rsplit("/", 1)[-1].rsplit("$", 1)[-1]
            i = end + 1
        else:
            name = _PRIMITIVES[params[i]]
            i += 1
        out.append(name + "[]" * dims)
    return out


def simple_type(java_type: str) -> str:
    """``java.util.List<String>`` -> ``List``; ``String...`` -> ``String[]``; ``Map.Entry`` -> ``Entry``."""
    t = re.sub(r"<.*>", "", java_type).strip()
    t = t.replace("...", "[]")
    dims = t.count("[]")
    base = t.replace("[]", "").strip().rsplit(".", 1)[-1]
    return base + "[]" * dims


def signature_matches(desc: str, signature) -> bool:
    types = descriptor_param_types(desc)
    return types is not None and types == [simple_type(t) for t in signature]


def operator_name(mutator: str) -> str:
    """``org.pitest...NegateConditionalsMutator`` -> ``NegateConditionals``."""
    simple = mutator.rsplit(".", 1)[-1].split("_")[0]
    return simple.removesuffix("Mutator") or simple


def _text(el: ET.Element, tag: str) -> str:
    child = el.find(tag)
    return (child.text or "").strip() if child is not None else ""


def parse_mutation_report(xml, focal: MethodRef) -> MutationFacts:
    """Mutants of the focal method.

    Entries are matched on class, method name and parameter count. When some
    of them also match the parameter types exactly (overloads of equal
    arity), only those are kept; otherwise the count match stands, which
    tolerates erased generic parameters.
    """
    root = _parse_xml(xml)
    matched = []
    for el in root.iter("mutation"):
        status_token = el.get("status", "").strip()
        if status_token not in PIT_STATUS:
            raise ReportError(f"unknown mutation status token {status_token!r}")
        if _text(el, "mutatedClass") != focal.fully_qualified_class:
            continue
        if _text(el, "mutatedMethod") != focal.method_name:
            continue
        desc = _text(el, "methodDescription")
        types = descriptor_param_types(desc)
        if types is None or len(types) != len(focal.signature):
            continue
        try:
            line = int(_text(el, "lineNumber"))
        except ValueError as exc:
            raise ReportError(f"bad lineNumber in mutation entry: {exc}") from exc
        mutant = Mutant(line, operator_name(_text(el, "mutator")), _text(el, "description"), PIT_STATUS[status_token])
        matched.append((signature_matches(desc, focal.signature), mutant))
    if any(exact for exact, _ in matched):
        matched = [(exact, m) for exact, m in matched if exact]
    return MutationFacts.build(focal, [m for _, m in matched])


# --- build logs ----------------------------------------------------------------

class DiagnosticList(list):
    """List of diagnostics with a flag raised when a failing log yielded nothing."""

    unrecognized: bool = False


@dataclass(frozen=True)
class LogPatterns:
    """Regex catalog for one build tool's log format."""

    compile_error: re.Pattern
    symbol_line: re.Pattern
    location_line: re.Pattern
    failure_header: re.Pattern
    assertion: tuple[re.Pattern, ...]
    exception_line: re.Pattern
    stack_frame: re.Pattern
    failure_marker: re.Pattern


MAVEN = LogPatterns(
    # [ERROR] /p/Foo.java:[32,28] msg   |   /p/Foo.java:32: error: msg
    compile_error=re.compile(
        r"^(?:\[ERROR\]\s+)?(?P<file>(?:[A-Za-z]:)?[^\s:\[]+\.java)"
        r"(?::\[(?P<line>\d+)(?:,(?P<col>\d+))?\]|:(?P<line2>\d+):\s*error:)\s*(?P<msg>.*)$"
    ),
    symbol_line=re.compile(r"^(?:\[ERROR\])?\s*symbol\s*:\s*(?P<kind>\w+)\s+(?P<sym>[\w$]+)(?P<rest>.*)$"),
    location_line=re.compile(r"^(?:\[ERROR\])?\s*location\s*:\s*(?P<loc>.*)$"),
    failure_header=re.compile(
        r"^(?:\[ERROR\]\s+)?(?P<test>[\w$.]+(?:\([\w$.]+\)|\.[\w$]+))\s+"
        r"(?:Time elapsed:.*?)?<<<\s*(?P<what>FAILURE|ERROR)!"
    ),
    assertion=(
        re.compile(r"expected:\s*<(?P<exp>.*)>\s*but was:\s*<(?P<act>.*)>"),
        re.compile(r"[Ee]xpected:\s*(?P<exp>.*?)\s+but:\s*was\s+(?P<act>.*)$"),
    ),
    exception_line=re.compile(r"^(?P<cls>(?:[a-z_$][\w$]*\.)+[A-Z][\w$]*(?:Error|Exception|Failure|Throwable))(?::\s*(?P<msg>.*))?$"),
    stack_frame=re.compile(r"^\s*at\s+(?P<cls>[\w$.]+)\.(?P<meth>[\w$<>]+)\((?P<file>[\w$]+\.java):(?P<line>\d+)\)"),
    failure_marker=re.compile(r"BUILD FAILURE|COMPILATION ERROR|<<< (FAILURE|ERROR)!|\berror:"),
)

_ASSERTION_CLASSES = ("AssertionError", "AssertionFailedError", "ComparisonFailure", "AssertionFailure",
                      "MultipleFailuresError")


def _strip_error_prefix(line: str) -> str:
    return re.sub(r"^\[ERROR\]\s?", "", line)


def parse_build_log(text: str, patterns: LogPatterns = MAVEN) -> DiagnosticList:
    """Extract compile errors, assertion failures and runtime failures in log order.

    Maven repeats compile errors in its trailing "Failed to execute goal"
    block; the repeats are dropped. Raw message blocks are kept verbatim.
    """
    lines = text.splitlines()
    out = DiagnosticList()
    seen = set()
    i = 0
    while i < len(lines):
        line = lines[i]
        m = patterns.compile_error.match(line.rstrip())
        if m:
            block = [line]
            symbol = None
            j = i + 1
            while j < len(lines):
                sm = patterns.symbol_line.match(lines[j])
                lm = patterns.location_line.match(lines[j])
                if sm:
                    symbol = sm.group("sym")
                elif not lm:
                    break
                block.append(lines[j])
                j += 1
            msg = m.group("msg").strip()
            if symbol is None:
                cm = re.search(r"cannot find (?:symbol|method)[:\s]+(?:method\s+|variable\s+|class\s+)?([\w$]+)", msg)
                symbol = cm.group(1) if cm else None
            lineno = int(m.group("line") or m.group("line2"))
            key = (m.group("file"), lineno, msg, symbol)
            if key not in seen:
                seen.add(key)
                out.append(Diagnostic(DiagnosticKind.COMPILE_ERROR,
                                      "\n".join(_strip_error_prefix(b) for b in block),
                                      symbol=symbol, file_path=m.group("file"), line=lineno))
            i = j
            continue
        fm = patterns.failure_header.match(line.strip())
        if fm:
            diag, j = _parse_failure(lines, i, fm, patterns)
            key = (diag.kind, diag.message)
            if key not in seen:
                seen.add(key)
                out.append(diag)
            i = j
            continue
        i += 1
    if not out and patterns.failure_marker.search(text):
        out.unrecognized = True
        log.warning("failing build log produced no recognizable diagnostics")
    return out


def _parse_failure(lines, i, header, patterns):
    test_id = header.group("test")
    if "(" in test_id:
        meth, cls = re.match(r"([\w$]+)\(([\w$.]+)\)", test_id).groups()
    else:
        cls, meth = test_id.rsplit(".", 1)
    block = [lines[i].strip()]
    exc_cls = exc_msg = None
    file_line = None
    file_name = None
    saw_frame = False
    j = i + 1
    while j < len(lines):
        raw = lines[j]
        stripped = raw.strip()
        if patterns.failure_header.match(stripped) or patterns.compile_error.match(raw.rstrip()):
            break
        if raw.startswith("[") or (not stripped and exc_cls is not None):
            break
        fm = patterns.stack_frame.match(raw)
        if fm:
            if file_line is None and fm.group("meth") == meth and fm.group("cls").rsplit(".", 1)[-1] == cls.rsplit(".", 1)[-1]:
                file_line = int(fm.group("line"))
                file_name = fm.group("file")
        elif exc_cls is None and stripped:
            em = patterns.exception_line.match(stripped)
            if em:
                exc_cls, exc_msg = em.group("cls"), (em.group("msg") or "")
        elif exc_cls is not None and stripped and not saw_frame:
            # multi-line messages (hamcrest "Expected: ... but: was ...")
            exc_msg = f"{exc_msg} {stripped}".strip()
        if fm:
            saw_frame = True
        if stripped:
            block.append(stripped if fm else raw.rstrip())
        j += 1
    is_assertion = header.group("what") == "FAILURE" or (
        exc_cls is not None and exc_cls.rsplit(".", 1)[-1] in _ASSERTION_CLASSES)
    expected = actual = None
    for pat in patterns.assertion:
        am = pat.search(exc_msg or "")
        if am:
            expected, actual = am.group("exp"), am.group("act")
            if exc_cls and exc_cls.endswith("ComparisonFailure"):
                expected, actual = _unbracket(expected), _unbracket(actual)
            break
    kind = DiagnosticKind.ASSERTION_FAILURE if is_assertion else DiagnosticKind.RUNTIME_FAILURE
    return Diagnostic(kind, "\n".join(block), file_path=file_name, line=file_line,
                      expected=expected, actual=actual), j


def _unbracket(value: str) -> str:
    # ComparisonFailure marks the differing region with [...]
    return re.sub(r"\[(.*?)\]", r"\1", value, count=1) if value.count("[") == 1 and value.count("]") == 1 else value


def concise_message(diag: Diagnostic) -> str:
    """Short, prompt-friendly rendering of a diagnostic."""
    if diag.kind is DiagnosticKind.ASSERTION_FAILURE:
        if diag.expected is not None or diag.actual is not None:
            return f"expected {diag.expected} but was {diag.actual}"
        return _exception_summary(diag.message)
    if diag.kind is DiagnosticKind.RUNTIME_FAILURE:
        return _exception_summary(diag.message)
    sm = re.search(r"symbol\s*:\s*(\w+)\s+([\w$]+)", diag.message)
    if sm:
        kind, name = sm.groups()
        return f"cannot find {kind}: {name}()" if kind == "method" else f"cannot find {kind}: {name}"
    first = diag.message.splitlines()[0] if diag.message else ""
    m = MAVEN.compile_error.match(first)
    return m.group("msg").strip() if m else first.strip()


def _exception_summary(message: str) -> str:
    for ln in message.splitlines()[1:]:
        if ln.strip() and not ln.strip().startswith("at "):
            return ln.strip()
    return message.splitlines()[0].strip() if message else ""


# --- unified diff --------------------------------------------------------------

_HUNK_RE = re.compile(r"^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@ ?(.*)$")
_TAGS = {" ": HunkTag.CONTEXT, "+": HunkTag.ADD, "-": HunkTag.DEL}
_PREFIX = {v: k for k, v in _TAGS.items()}


def _diff_path(raw: str) -> Optional[str]:
    raw = raw.split("\t", 1)[0].strip()
    if raw == "/dev/null":
        return None
    if raw.startswith(("a/", "b/")):
        raw = raw[2:]
    return raw


def parse_unified_diff(text: str) -> list[DiffHunk]:
    """Hunks in file order with stable indices; count mismatches are errors."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    hunks: list[DiffHunk] = []
    old_path = new_path = None
    pending: list[str] = []
    i = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("--- ") and i + 1 < len(lines) and lines[i + 1].startswith("+++ "):
            old_path, new_path = _diff_path(line[4:]), _diff_path(lines[i + 1][4:])
            pending.extend(lines[i:i + 2])
            i += 2
            continue
        if line.startswith("@@"):
            m = _HUNK_RE.match(line)
            if not m:
                raise MalformedDiff(i + 1, f"malformed hunk header {line!r}")
            os_, oc, ns, nc, section = m.groups()
            oc = 1 if oc is None else int(oc)
            nc = 1 if nc is None else int(nc)
            body: list[tuple[HunkTag, str]] = []
            markers: list[int] = []
            old_seen = new_seen = 0
            j = i + 1
            while j < len(lines) and (old_seen < oc or new_seen < nc):
                ln = lines[j]
                if ln.startswith("\\"):
                    markers.append(len(body))
                    j += 1
                    continue
                tag = _TAGS.get(ln[:1]) if ln else HunkTag.CONTEXT
                if tag is None:
                    break
                body.append((tag, ln[1:]))
                old_seen += tag is not HunkTag.ADD
                new_seen += tag is not HunkTag.DEL
                j += 1
            while j < len(lines) and lines[j].startswith("\\"):
                markers.append(len(body))
                j += 1
            if old_seen != oc or new_seen != nc:
                raise MalformedDiff(i + 1, f"hunk header counts -{oc} +{nc} do not match body -{old_seen} +{new_seen}")
            if j < len(lines) and lines[j][:1] in ("+", "-", " ") and not lines[j].startswith(("--- ", "+++ ")):
                raise MalformedDiff(i + 1, "hunk body longer than its header counts")
            path = new_path or old_path or ""
            hunks.append(DiffHunk(path, (int(os_), oc), (int(ns), nc), tuple(body), len(hunks),
                                  section, tuple(markers), line, "".join(p + "\n" for p in pending)))
            pending = []
            i = j
            continue
        pending.append(line)
        i += 1
    return hunks


def render_hunk(hunk: DiffHunk) -> str:
    """Header (as parsed, or canonical for constructed hunks) plus the hunk body."""
    header = hunk.header
    if not header:
        header = f"@@ -{hunk.old_range[0]},{hunk.old_range[1]} +{hunk.new_range[0]},{hunk.new_range[1]} @@"
        if hunk.section:
            header += " " + hunk.section
    out = [header]
    markers = list(hunk.no_newline_after)
    for pos, (tag, text) in enumerate(hunk.lines):
        out.append(_PREFIX[tag] + text)
        while markers and markers[0] == pos + 1:
            out.append("\\ No newline at end of file")
            markers.pop(0)
    return "\n".join(out) + "\n"


def render_unified_diff(hunks) -> str:
    """Inverse of :func:`parse_unified_diff` for diffs whose context lines carry their space prefix."""
    return "".join(h.preamble + render_hunk(h) for h in hunks)


def hunk_body(hunk: DiffHunk) -> str:
    return render_hunk(hunk).split("\n", 1)[1]
