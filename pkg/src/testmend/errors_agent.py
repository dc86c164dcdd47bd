"""Error analysis: locate diagnostics in the test, resolve missing symbols, ask for repairs."""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import PreconditionError
from .model import Diagnostic, DiagnosticKind, ExecutionOutcome, Phase, ResolvedSymbol, UpdateTask
from .reports import concise_message

ERROR_MARK = "// ERROR: "
ASSERTION_MARK = "// ASSERTION FAILED: "
RUNTIME_MARK = "// RUNTIME FAILURE: "
MARKERS = (ERROR_MARK, ASSERTION_MARK, RUNTIME_MARK)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str  # class | static
    import_path: str

    def import_decl(self) -> str:
        if self.kind == "static":
            return f"import static {self.import_path};"
        return f"import {self.import_path};"


class KnownSymbolCatalog:
    """Symbols from the JDK and common test libraries, with their imports.

    Data files are tab separated ``symbol, kind, import path`` lines; ``#``
    starts a comment. Later files override earlier ones.
    """

    def __init__(self, entries: Iterable[CatalogEntry] = ()):
        self.entries: dict[str, CatalogEntry] = {}
        for e in entries:
            self.entries[e.name] = e

    @classmethod
    def load(cls, *extra_files) -> "KnownSymbolCatalog":
        text = (resources.files("testmend") / "data" / "known_symbols.tsv").read_text(encoding="utf-8")
        entries = list(parse_catalog(text, "known_symbols.tsv"))
        for path in extra_files:
            entries.extend(parse_catalog(Path(path).read_text(encoding="utf-8"), str(path)))
        return cls(entries)

    def lookup(self, name: str) -> Optional[CatalogEntry]:
        return self.entries.get(name)

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def parse_catalog(text: str, source: str = "<catalog>") -> Iterable[CatalogEntry]:
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[1] not in ("class", "static"):
            raise ValueError(f"{source}:{lineno}: expected 'symbol<TAB>class|static<TAB>import path'")
        yield CatalogEntry(parts[0].strip(), parts[1], parts[2].strip())


_DEFAULT: Optional[KnownSymbolCatalog] = None


def default_catalog() -> KnownSymbolCatalog:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = KnownSymbolCatalog.load()
    return _DEFAULT


def distinguish_unknown_symbols(symbols: Sequence[str], catalog: KnownSymbolCatalog):
    """Split symbols into ``([(name, import decl)], [unknown names])``, first occurrence order."""
    known, unknown, seen = [], [], set()
    for s in symbols:
        if s in seen:
            continue
        seen.add(s)
        entry = catalog.lookup(s)
        if entry is not None:
            known.append((s, entry.import_decl()))
        else:
            unknown.append(s)
    return known, unknown


# --- annotation ------------------------------------------------------------------

def _one_line(text: str) -> str:
    return " ".join(text.split())


def error_comment(diag: Diagnostic) -> str:
    if diag.kind is DiagnosticKind.COMPILE_ERROR:
        return ERROR_MARK + _one_line(concise_message(diag))
    if diag.kind is DiagnosticKind.ASSERTION_FAILURE:
        if diag.expected is not None or diag.actual is not None:
            return f"{ASSERTION_MARK}expected <{_one_line(str(diag.expected))}> but was <{_one_line(str(diag.actual))}>"
        return ASSERTION_MARK + _one_line(concise_message(diag))
    return RUNTIME_MARK + _one_line(concise_message(diag))


def annotate_errors(test_code: str, diagnostics: Sequence[Diagnostic], first_line: int = 1) -> str:
    """Insert one comment line per diagnostic above the line it refers to.

    ``first_line`` is the file line number of the first line of ``test_code``.
    Diagnostics without a line inside the code go to a trailing comment block.
    Comments on one line stack in diagnostic order.
    """
    if not diagnostics:
        return test_code
    lines = test_code.splitlines(keepends=True)
    above: dict[int, list[str]] = {}
    trailing = []
    for d in diagnostics:
        idx = d.line - first_line if d.line is not None else -1
        if 0 <= idx < len(lines):
            above.setdefault(idx, []).append(error_comment(d))
        else:
            trailing.append(error_comment(d))
    out = []
    for i, raw in enumerate(lines):
        indent = re.match(r"[ \t]*", raw).group(0)
        out.extend(f"{indent}{c}\n" for c in above.get(i, ()))
        out.append(raw)
    text = "".join(out)
    if trailing:
        if text.endswith("\n"):
            text += "".join(c + "\n" for c in trailing)
        else:
            text += "\n" + "\n".join(trailing)
    return text


def is_annotation_line(line: str) -> bool:
    return line.lstrip(" \t").startswith(MARKERS)


def strip_error_annotations(annotated: str) -> str:
    lines = annotated.splitlines(keepends=True)
    kept = [ln for ln in lines if not is_annotation_line(ln)]
    text = "".join(kept)
    # a trailing block appended to code without a final newline added one
    if lines and is_annotation_line(lines[-1]) and not annotated.endswith("\n") and text.endswith("\n"):
        text = text[:-1]
    return text


# --- analysis --------------------------------------------------------------------

def _symbol_instruction(requested: str, sym: ResolvedSymbol) -> str:
    if sym.name == requested:
        return (f"use {sym.name} as declared: {sym.signature_or_definition} "
                f"(in {sym.file_path}); import {sym.import_path}")
    return (f"replace hallucinated symbol {requested} with {sym.name}: {sym.signature_or_definition} "
            f"(in {sym.file_path}); import {sym.import_path}")


def _parse_instructions(reply: str) -> list[str]:
    out = []
    in_fence = False
    for line in reply.splitlines():
        if line.strip().startswith("```"):
            in_fence = not in_fence
            continue
        if in_fence:
            continue
        text = re.sub(r"^\s*(?:[-*]|\d+[.)])\s+", "", line).strip()
        if text:
            out.append(text)
    return out


def _failure_line(d: Diagnostic) -> str:
    where = f"line {d.line}: " if d.line is not None else ""
    return f"- [{d.kind.value}] {where}{_one_line(concise_message(d))}"


def _default_instruction(d: Diagnostic) -> str:
    where = f" at line {d.line}" if d.line is not None else ""
    if d.kind is DiagnosticKind.ASSERTION_FAILURE and (d.expected is not None or d.actual is not None):
        return (f"revise the assertion{where}: it expected {d.expected} but the updated code "
                f"produced {d.actual}; align it with the new behaviour")
    if d.kind is DiagnosticKind.COMPILE_ERROR:
        return f"fix the compile error{where}: {_one_line(concise_message(d))}"
    return f"fix the failure{where}: {_one_line(concise_message(d))}"


def analyze(outcome: ExecutionOutcome, task: UpdateTask, retriever, gateway,
            test_code: Optional[str] = None, first_line: int = 1,
            catalog: Optional[KnownSymbolCatalog] = None) -> tuple[list[str], list[ResolvedSymbol]]:
    """Repair instructions for a failing outcome and the symbols retrieved along the way.

    Known symbols only need an import. Unknown ones go to ``retriever``
    (which may be ``None``, leaving them unresolved). Assertion and runtime
    failures, and compile errors that name no symbol, are sent to the model
    together with the annotated test.
    """
    if outcome.phase_reached is Phase.PASSED:
        raise PreconditionError("error analysis needs a failing outcome")
    catalog = catalog or default_catalog()
    code = task.test_before if test_code is None else test_code
    symbols = [d.symbol for d in outcome.diagnostics if d.kind is DiagnosticKind.COMPILE_ERROR and d.symbol]
    known, unknown = distinguish_unknown_symbols(symbols, catalog)
    instructions = [f"add {decl} (for {name})" for name, decl in known]
    resolved_list: list[ResolvedSymbol] = []
    if unknown:
        if retriever is not None:
            resolved, unresolved = retriever.resolve_symbols(unknown, task, test_code=code)
        else:
            resolved, unresolved = {}, list(unknown)
        for name in unknown:
            if name in resolved:
                instructions.append(_symbol_instruction(name, resolved[name]))
                if resolved[name] not in resolved_list:
                    resolved_list.append(resolved[name])
        instructions.extend(f"symbol unresolved: {name}; consider removing or re-deriving it from the focal code"
                            for name in unresolved)
    others = [d for d in outcome.diagnostics if not (d.kind is DiagnosticKind.COMPILE_ERROR and d.symbol)]
    if others:
        reply = gateway.ask(
            "error_analyze",
            annotated_test=annotate_errors(code, outcome.diagnostics, first_line),
            failures="\n".join(_failure_line(d) for d in others),
        )
        parsed = _parse_instructions(reply)
        instructions.extend(parsed or [_default_instruction(d) for d in others])
    return instructions, resolved_list
