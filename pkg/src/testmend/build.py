"""Workspaces and build adapters.

``apply_test_code`` splices a candidate test method into its test class.
Adapters then run the compile / test / coverage / mutation phases: the
:class:`MavenAdapter` shells out to a configurable Maven command line, the
:class:`ReplayAdapter` serves recordings from a bundle directory so the
whole pipeline runs without a JDK.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import shlex
import shutil
import subprocess
import textwrap
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import MethodNotFound, PreconditionError, ReplayMiss, ToolchainMissing, UnbalancedReplacement
from .javasrc import find_method, first_method_name, is_balanced, mask
from .model import CandidateUpdate, MethodRef, UpdateTask, candidate_violations

log = logging.getLogger(__name__)

IGNORED_DIRS = {".git", "target", "build", ".idea", "__pycache__"}


def tree_hash(root: Path) -> str:
    """sha256 over sorted relative paths and file bytes, skipping build output."""
    h = hashlib.sha256()
    root = Path(root)
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames[:] = sorted(d for d in dirnames if d not in IGNORED_DIRS)
        for name in sorted(filenames):
            p = Path(dirpath) / name
            h.update(p.relative_to(root).as_posix().encode())
            h.update(b"\0")
            h.update(p.read_bytes())
            h.update(b"\0")
    return h.hexdigest()


class Workspace:
    """A checked-out revision that candidate code is written into.

    Original bytes of every touched file are kept so :meth:`reset` restores
    the snapshot exactly.
    """

    def __init__(self, root, snapshot_id: Optional[str] = None):
        self.root = Path(root)
        self.snapshot_id = snapshot_id or (tree_hash(self.root) if self.root.is_dir() else str(root))
        self._originals: dict[Path, bytes] = {}

    @property
    def dirty(self) -> bool:
        return any(p.read_bytes() != b for p, b in self._originals.items() if p.exists())

    def write(self, rel_path: str, text: str) -> Path:
        path = self._resolve(rel_path)
        if path not in self._originals:
            self._originals[path] = path.read_bytes()
        path.write_text(text, encoding="utf-8")
        return path

    def read(self, rel_path: str) -> str:
        return self._resolve(rel_path).read_text(encoding="utf-8")

    def reset(self) -> None:
        for path, data in self._originals.items():
            path.write_bytes(data)
        self._originals.clear()

    def _resolve(self, rel_path: str) -> Path:
        path = (self.root / rel_path).resolve()
        if self.root.resolve() not in path.parents:
            raise PreconditionError(f"{rel_path} escapes workspace {self.root}")
        return path

    def __repr__(self) -> str:
        return f"Workspace({str(self.root)!r}, snapshot_id={self.snapshot_id!r})"


@dataclass(frozen=True)
class PhaseTimeouts:
    compile_s: float = 300
    tests_s: float = 300
    coverage_s: float = 300
    mutation_s: float = 900

    def __post_init__(self):
        if min(self.compile_s, self.tests_s, self.coverage_s, self.mutation_s) <= 0:
            raise ValueError("phase timeouts must be positive")


@dataclass
class RunRequest:
    workspace: Workspace
    test_class: str
    test_method: str
    focal: MethodRef
    timeouts: PhaseTimeouts = field(default_factory=PhaseTimeouts)


@dataclass(frozen=True)
class PhaseResult:
    ok: bool
    log_text: str
    log_ref: str
    report: Optional[Path] = None
    timed_out: bool = False


# --- applying candidate code ---------------------------------------------------

_IMPORT_LINE = re.compile(r"^\s*import\s+(static\s+)?[\w.$*]+\s*;[ \t]*$", re.M)


def normalize_import(decl: str) -> str:
    decl = decl.strip()
    if not decl.startswith("import "):
        decl = "import " + decl
    if not decl.endswith(";"):
        decl += ";"
    return re.sub(r"\s+", " ", decl)


def _leading_annotations(code: str) -> tuple[list[str], str]:
    lines = code.split("\n")
    anns = []
    while lines and (lines[0].strip().startswith("@") or not lines[0].strip()):
        if lines[0].strip():
            anns.append(lines[0].strip())
        lines.pop(0)
    return anns, "\n".join(lines)


def splice_method(source: str, candidate: CandidateUpdate) -> str:
    """Return ``source`` with the candidate's method and imports spliced in."""
    name = first_method_name(candidate.test_code)
    if name is None:
        raise MethodNotFound("candidate code declares no method")
    span = find_method(source, name)
    if span is None:
        raise MethodNotFound(f"method {name} not found in test class")
    indent = re.match(r"[ \t]*", source[span.decl_offset:]).group(0)
    anns, body = _leading_annotations(textwrap.dedent(candidate.test_code).strip("\n"))
    # annotations already sitting above the method are kept in place
    above = source[:span.decl_offset].rstrip("\n").split("\n")
    present = set()
    for ln in reversed(above):
        if ln.strip().startswith("@"):
            present.add(ln.strip())
        else:
            break
    new_lines = [a for a in anns if a not in present] + body.split("\n")
    block = "\n".join(indent + ln if ln.strip() else ln for ln in new_lines)
    out = source[:span.decl_offset] + block + source[span.end_offset:]
    return insert_imports(out, candidate.imports)


def insert_imports(source: str, imports) -> str:
    existing = {normalize_import(m.group(0)) for m in _IMPORT_LINE.finditer(source)}
    new = []
    for imp in imports:
        decl = normalize_import(imp)
        if decl not in existing and decl not in new:
            new.append(decl)
    if not new:
        return source
    matches = list(_IMPORT_LINE.finditer(source))
    if matches:
        pos = matches[-1].end()
        return source[:pos] + "".join("\n" + d for d in new) + source[pos:]
    pkg = re.search(r"^\s*package\s+[\w.]+\s*;[ \t]*$", mask(source), re.M)
    if pkg:
        pos = pkg.end()
        return source[:pos] + "\n\n" + "\n".join(new) + source[pos:]
    return "\n".join(new) + "\n\n" + source


def apply_test_code(workspace: Workspace, task: UpdateTask, candidate: CandidateUpdate) -> Path:
    """Replace the test method in ``task.test_class_path`` and add missing imports."""
    problems = candidate_violations(candidate)
    if problems:
        raise PreconditionError("; ".join(problems))
    original = workspace.read(task.test_class_path)
    updated = splice_method(original, candidate)
    if not is_balanced(updated):
        raise UnbalancedReplacement(f"{task.test_class_path} unbalanced after replacement")
    path = workspace._resolve(task.test_class_path)
    if updated != original:
        workspace.write(task.test_class_path, updated)
    return path


def method_first_line(workspace: Workspace, rel_path: str, name: str) -> Optional[int]:
    span = find_method(workspace.read(rel_path), name)
    return span.start_line if span else None


def candidate_digest(candidate: CandidateUpdate) -> str:
    """Replay key: code and imports, trailing whitespace normalized."""
    code = "\n".join(ln.rstrip() for ln in candidate.test_code.strip("\n").split("\n"))
    imports = sorted({normalize_import(i) for i in candidate.imports})
    payload = json.dumps([code, imports], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


# --- adapters ------------------------------------------------------------------

class BuildAdapter:
    """Interface shared by the real and replay adapters."""

    def __init__(self):
        self._passed: set[tuple[str, str]] = set()
        self._current: Optional[str] = None

    def apply(self, workspace: Workspace, task: UpdateTask, candidate: CandidateUpdate) -> Path:
        path = apply_test_code(workspace, task, candidate)
        self._current = candidate_digest(candidate)
        return path

    def _key(self, request: RunRequest) -> tuple[str, str]:
        if self._current is None:
            raise PreconditionError("no candidate applied")
        return (request.workspace.snapshot_id, self._current)

    def _mark_tests(self, request: RunRequest, ok: bool) -> None:
        key = self._key(request)
        if ok:
            self._passed.add(key)
        else:
            self._passed.discard(key)

    def _require_passed(self, request: RunRequest, phase: str) -> None:
        if self._key(request) not in self._passed:
            raise PreconditionError(f"{phase} requested but tests have not passed for this candidate")

    def run_compile(self, request: RunRequest) -> PhaseResult:
        raise NotImplementedError

    def run_tests(self, request: RunRequest) -> PhaseResult:
        raise NotImplementedError

    def run_coverage(self, request: RunRequest) -> PhaseResult:
        raise NotImplementedError

    def run_mutation(self, request: RunRequest) -> PhaseResult:
        raise NotImplementedError


DEFAULT_COMMANDS = {
    "compile": "{mvn} -B -q test-compile",
    "tests": "{mvn} -B test -Dtest={test_class}#{test_method} -DfailIfNoTests=false -Dsurefire.failIfNoSpecifiedTests=false",
    "coverage": "{mvn} -B org.jacoco:jacoco-maven-plugin:prepare-agent test "
                "-Dtest={test_class}#{test_method} -DfailIfNoTests=false -Dsurefire.failIfNoSpecifiedTests=false "
                "org.jacoco:jacoco-maven-plugin:report",
    "mutation": "{mvn} -B org.pitest:pitest-maven:mutationCoverage -DtargetClasses={focal_class} "
                "-DtargetTests={test_class} -DoutputFormats=XML -DtimestampedReports=false",
}

DEFAULT_REPORTS = {
    "coverage": "target/site/jacoco/jacoco.xml",
    "mutation": "target/pit-reports/mutations.xml",
}


class MavenAdapter(BuildAdapter):
    """Runs phases through Maven command templates.

    Templates are ``str.format`` strings over ``mvn``, ``test_class``,
    ``test_method`` and ``focal_class``.
    """

    def __init__(self, mvn: str = "mvn", commands: Optional[dict] = None,
                 reports: Optional[dict] = None, log_dir: Optional[Path] = None):
        super().__init__()
        self.mvn = mvn
        self.commands = {**DEFAULT_COMMANDS, **(commands or {})}
        self.reports = {**DEFAULT_REPORTS, **(reports or {})}
        self.log_dir = Path(log_dir) if log_dir else None
        self._counter = 0

    def _run(self, phase: str, request: RunRequest, timeout: float) -> PhaseResult:
        exe = shlex.split(self.mvn)[0]
        if shutil.which(exe) is None and not Path(exe).is_file():
            raise ToolchainMissing(f"{exe} not found on PATH")
        cmd = self.commands[phase].format(
            mvn=self.mvn, test_class=request.test_class, test_method=request.test_method,
            focal_class=request.focal.fully_qualified_class)
        log.info("running %s: %s", phase, cmd)
        try:
            proc = subprocess.run(shlex.split(cmd), cwd=request.workspace.root, capture_output=True,
                                  text=True, timeout=timeout)
            text = proc.stdout + proc.stderr
            ok, timed_out = proc.returncode == 0, False
        except subprocess.TimeoutExpired as exc:
            text = _decode(exc.stdout) + _decode(exc.stderr) + f"\nphase timeout after {timeout}s\n"
            ok, timed_out = False, True
        self._counter += 1
        ref = f"{phase}-{self._counter}.log"
        if self.log_dir:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            (self.log_dir / ref).write_text(text, encoding="utf-8")
        report = None
        if phase in self.reports and ok:
            report = request.workspace.root / self.reports[phase]
            if not report.is_file():
                report = None
                ok = False
                text += f"\nexpected report {self.reports[phase]} was not produced\n"
        return PhaseResult(ok, text, ref, report, timed_out)

    def run_compile(self, request):
        return self._run("compile", request, request.timeouts.compile_s)

    def run_tests(self, request):
        result = self._run("tests", request, request.timeouts.tests_s)
        self._mark_tests(request, result.ok)
        return result

    def run_coverage(self, request):
        self._require_passed(request, "coverage")
        return self._run("coverage", request, request.timeouts.coverage_s)

    def run_mutation(self, request):
        self._require_passed(request, "mutation")
        return self._run("mutation", request, request.timeouts.mutation_s)


def _decode(data) -> str:
    if data is None:
        return ""
    return data.decode("utf-8", "replace") if isinstance(data, bytes) else data


@dataclass(frozen=True)
class ReplayEntry:
    name: str
    directory: Path
    phase: str  # compile_failed | tests_failed | passed
    snapshot: Optional[str]

    def log(self, phase: str) -> tuple[str, str]:
        for fname in (f"{phase}.log", "log.txt"):
            p = self.directory / fname
            if p.is_file():
                return p.read_text(encoding="utf-8"), f"replay:{self.name}/{fname}"
        return "", f"replay:{self.name}"


class ReplayAdapter(BuildAdapter):
    """Serves recorded phase results keyed by (snapshot, candidate digest).

    Each bundle entry is a directory holding ``meta.json`` (``phase``, optional
    ``snapshot`` and optional ``candidate`` with ``test_code``/``imports``),
    a ``log.txt`` (or per-phase ``compile.log``/``tests.log``/...) and, for
    passing candidates, ``coverage.xml`` and ``mutations.xml``. Entries
    carrying a candidate are keyed by its digest; otherwise the directory
    name is the digest.
    """

    def __init__(self, bundle_dir):
        super().__init__()
        self.bundle_dir = Path(bundle_dir)
        self.entries: dict[tuple[Optional[str], str], ReplayEntry] = {}
        if not self.bundle_dir.is_dir():
            raise PreconditionError(f"replay bundle {self.bundle_dir} is not a directory")
        for meta_path in sorted(self.bundle_dir.rglob("meta.json")):
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            d = meta_path.parent
            if "candidate" in meta:
                cand = CandidateUpdate(meta["candidate"]["test_code"], tuple(meta["candidate"].get("imports", ())))
                digest = candidate_digest(cand)
            else:
                digest = d.name
            name = d.relative_to(self.bundle_dir).as_posix()
            entry = ReplayEntry(name, d, meta["phase"], meta.get("snapshot"))
            self.entries[(entry.snapshot, digest)] = entry

    def apply(self, workspace, task, candidate):
        if workspace.root.is_dir():
            return super().apply(workspace, task, candidate)
        self._current = candidate_digest(candidate)
        return workspace.root / task.test_class_path

    def _entry(self, request: RunRequest) -> ReplayEntry:
        snapshot, digest = self._key(request)
        entry = self.entries.get((snapshot, digest)) or self.entries.get((None, digest))
        if entry is None:
            raise ReplayMiss(f"no recording for candidate {digest[:12]} on snapshot {snapshot}")
        return entry

    def run_compile(self, request):
        e = self._entry(request)
        text, ref = e.log("compile")
        return PhaseResult(e.phase != "compile_failed", text, ref)

    def run_tests(self, request):
        e = self._entry(request)
        text, ref = e.log("tests")
        ok = e.phase == "passed"
        self._mark_tests(request, ok)
        return PhaseResult(ok, text, ref)

    def _report(self, request, phase, fname):
        self._require_passed(request, phase)
        e = self._entry(request)
        text, ref = e.log(phase)
        path = e.directory / fname
        if not path.is_file():
            raise ReplayMiss(f"replay entry {e.name} has no {fname}")
        return PhaseResult(True, text, ref, path)

    def run_coverage(self, request):
        return self._report(request, "coverage", "coverage.xml")

    def run_mutation(self, request):
        return self._report(request, "mutation", "mutations.xml")


class RecordingAdapter(BuildAdapter):
    """Wraps another adapter and writes every run into a replay bundle."""

    def __init__(self, inner: BuildAdapter, bundle_dir):
        super().__init__()
        self.inner = inner
        self.bundle_dir = Path(bundle_dir)
        self._candidate: Optional[CandidateUpdate] = None

    def apply(self, workspace, task, candidate):
        self._candidate = candidate
        path = self.inner.apply(workspace, task, candidate)
        self._current = self.inner._current
        return path

    def _dir(self, request) -> Path:
        snapshot, digest = self._key(request)
        d = self.bundle_dir / snapshot / digest
        d.mkdir(parents=True, exist_ok=True)
        meta = {"phase": "compile_failed", "snapshot": snapshot,
                "candidate": {"test_code": self._candidate.test_code, "imports": list(self._candidate.imports)}}
        if (d / "meta.json").is_file():
            meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        d.joinpath("meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        return d

    def _store(self, request, phase, result: PhaseResult, next_phase: Optional[str], fname=None):
        d = self._dir(request)
        (d / f"{phase}.log").write_text(result.log_text, encoding="utf-8")
        meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        if result.ok and next_phase:
            meta["phase"] = next_phase
        (d / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        if fname and result.report is not None:
            shutil.copyfile(result.report, d / fname)
        return result

    def run_compile(self, request):
        return self._store(request, "compile", self.inner.run_compile(request), "tests_failed")

    def run_tests(self, request):
        result = self.inner.run_tests(request)
        self._mark_tests(request, result.ok)
        return self._store(request, "tests", result, "passed")

    def run_coverage(self, request):
        return self._store(request, "coverage", self.inner.run_coverage(request), None, "coverage.xml")

    def run_mutation(self, request):
        return self._store(request, "mutation", self.inner.run_mutation(request), None, "mutations.xml")


def candidate_method_name(candidate: CandidateUpdate) -> str:
    name = first_method_name(candidate.test_code)
    if name is None:
        raise MethodNotFound("candidate code declares no method")
    return name
