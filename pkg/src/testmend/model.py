"""Shared value types and their invariants.

Every type here is a frozen dataclass that round-trips through the JSON
interchange format via :func:`to_json` / :func:`from_json`.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import re
import types
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional, Union


class Phase(str, enum.Enum):
    COMPILE_FAILED = "compile_failed"
    TESTS_FAILED = "tests_failed"
    PASSED = "passed"

    @property
    def rank(self) -> int:
        return _PHASE_RANK[self]


_PHASE_RANK = {Phase.COMPILE_FAILED: 0, Phase.TESTS_FAILED: 1, Phase.PASSED: 2}


class DiagnosticKind(str, enum.Enum):
    COMPILE_ERROR = "compile_error"
    ASSERTION_FAILURE = "assertion_failure"
    RUNTIME_FAILURE = "runtime_failure"


class LineStatus(str, enum.Enum):
    COVERED = "covered"
    NOT_COVERED = "not_covered"
    NO_INSTRUCTION = "no_instruction"


class MutantStatus(str, enum.Enum):
    NO_COVERAGE = "no_coverage"
    SURVIVED = "survived"
    KILLED = "killed"


class SymbolKind(str, enum.Enum):
    METHOD = "method"
    FIELD = "field"


class Termination(str, enum.Enum):
    THRESHOLDS_MET = "thresholds_met"
    MAX_ITERATIONS = "max_iterations"


class HunkTag(str, enum.Enum):
    CONTEXT = "context"
    ADD = "add"
    DEL = "del"


def pct(numerator: int, denominator: int) -> float:
    """Percentage rounded to two decimals; an empty denominator counts as 100."""
    if denominator == 0:
        return 100.0
    return round(100.0 * numerator / denominator, 2)


@dataclass(frozen=True)
class MethodRef:
    file_path: str
    fully_qualified_class: str
    method_name: str
    signature: tuple[str, ...] = ()
    line_span: tuple[int, int] = (1, 1)

    @property
    def class_name(self) -> str:
        return self.fully_qualified_class.rsplit(".", 1)[-1]

    def violations(self) -> list[str]:
        out = []
        if not self.method_name:
            out.append("MethodRef.method_name empty")
        if self.line_span[0] > self.line_span[1]:
            out.append(f"MethodRef.line_span start > end for {self.method_name}")
        return out


@dataclass(frozen=True)
class MethodSource:
    ref: MethodRef
    source: str


@dataclass(frozen=True)
class DiffHunk:
    file_path: str
    old_range: tuple[int, int]
    new_range: tuple[int, int]
    lines: tuple[tuple[HunkTag, str], ...]
    index: int
    section: str = ""
    # positions (line offsets) followed by a "\ No newline at end of file" marker
    no_newline_after: tuple[int, ...] = ()
    # raw "@@" line and the raw file-header lines preceding it, kept for exact re-rendering
    header: str = ""
    preamble: str = ""

    def changed_lines(self) -> list[str]:
        return [text for tag, text in self.lines if tag is not HunkTag.CONTEXT]

    def count_violations(self) -> list[str]:
        old = sum(1 for tag, _ in self.lines if tag is not HunkTag.ADD)
        new = sum(1 for tag, _ in self.lines if tag is not HunkTag.DEL)
        out = []
        if old != self.old_range[1]:
            out.append(f"DiffHunk[{self.index}] old count {self.old_range[1]} != {old}")
        if new != self.new_range[1]:
            out.append(f"DiffHunk[{self.index}] new count {self.new_range[1]} != {new}")
        return out


@dataclass(frozen=True)
class UpdateTask:
    test_before: str
    test_class_path: str
    non_test_methods: tuple[str, ...]
    class_variables: tuple[str, ...]
    focal_before: MethodSource
    focal_after: MethodSource
    diff_hunks: tuple[DiffHunk, ...]
    repo_pre: str = ""
    repo_post: str = ""
    task_id: str = ""

    @property
    def focal_changed(self) -> bool:
        return self.focal_before != self.focal_after

    @property
    def test_class(self) -> str:
        """Fully qualified test class derived from the conventional source layout."""
        path = self.test_class_path.replace("\\", "/")
        for root in ("src/test/java/", "src/main/java/", "test/", "src/"):
            if root in path:
                path = path.split(root, 1)[1]
                break
        return path.removesuffix(".java").replace("/", ".")


@dataclass(frozen=True)
class CandidateUpdate:
    test_code: str
    imports: tuple[str, ...] = ()
    iteration: int = 1


_IMPORT_RE = re.compile(r"^import\s+(static\s+)?[A-Za-z_$][\w$]*(\.[A-Za-z_$][\w$]*)*(\.\*)?\s*;$")


def candidate_violations(candidate: CandidateUpdate) -> list[str]:
    from .javasrc import is_balanced

    out = []
    if candidate.iteration < 1:
        out.append("CandidateUpdate.iteration < 1")
    if not candidate.test_code.strip() or "{" not in candidate.test_code:
        out.append("CandidateUpdate.test_code has no method body")
    elif not is_balanced(candidate.test_code):
        out.append("CandidateUpdate.test_code braces unbalanced")
    for imp in candidate.imports:
        if not _IMPORT_RE.match(imp.strip()):
            out.append(f"CandidateUpdate.imports malformed: {imp!r}")
    return out


@dataclass(frozen=True)
class Diagnostic:
    kind: DiagnosticKind
    message: str
    symbol: Optional[str] = None
    file_path: Optional[str] = None
    line: Optional[int] = None
    expected: Optional[str] = None
    actual: Optional[str] = None


@dataclass(frozen=True)
class CoverageFacts:
    method: MethodRef
    line_status: dict[int, LineStatus]
    branch_status: dict[int, tuple[int, int]]
    line_coverage_pct: float
    branch_coverage_pct: float

    @classmethod
    def build(cls, method, line_status, branch_status) -> "CoverageFacts":
        line_pct, branch_pct = coverage_percentages(line_status, branch_status)
        return cls(method, dict(line_status), dict(branch_status), line_pct, branch_pct)


def coverage_percentages(line_status, branch_status) -> tuple[float, float]:
    covered = sum(1 for s in line_status.values() if s is LineStatus.COVERED)
    missed = sum(1 for s in line_status.values() if s is LineStatus.NOT_COVERED)
    b_cov = sum(c for c, _ in branch_status.values())
    b_tot = sum(t for _, t in branch_status.values())
    return pct(covered, covered + missed), pct(b_cov, b_tot)


@dataclass(frozen=True)
class Mutant:
    line: int
    operator: str
    description: str
    status: MutantStatus


@dataclass(frozen=True)
class MutationFacts:
    method: MethodRef
    mutants: tuple[Mutant, ...]
    mutation_score_pct: float

    @classmethod
    def build(cls, method, mutants) -> "MutationFacts":
        mutants = tuple(mutants)
        return cls(method, mutants, mutation_score(mutants))


def mutation_score(mutants) -> float:
    killed = sum(1 for m in mutants if m.status is MutantStatus.KILLED)
    return pct(killed, len(mutants))


@dataclass(frozen=True)
class ExecutionOutcome:
    phase_reached: Phase
    diagnostics: tuple[Diagnostic, ...] = ()
    coverage: Optional[CoverageFacts] = None
    mutation: Optional[MutationFacts] = None
    raw_log_ref: str = ""

    def violations(self) -> list[str]:
        passed = self.phase_reached is Phase.PASSED
        out = []
        if passed != (self.coverage is not None and self.mutation is not None):
            out.append("ExecutionOutcome facts present iff passed")
        if passed == bool(self.diagnostics):
            out.append("ExecutionOutcome diagnostics non-empty iff not passed")
        return out


@dataclass(frozen=True)
class ResolvedSymbol:
    name: str
    kind: SymbolKind
    signature_or_definition: str
    file_path: str
    import_path: str


INSTRUCTION_KEYS = ("error_analysis", "coverage_analysis", "mutation_analysis")


@dataclass(frozen=True)
class InstructionBundle:
    error_instructions: tuple[str, ...] = ()
    coverage_instructions: tuple[str, ...] = ()
    mutation_instructions: tuple[str, ...] = ()
    retrieved_context: tuple[ResolvedSymbol, ...] = ()

    def to_document(self) -> dict:
        """Key-value document fed back into the update prompt."""
        return {
            "error_analysis": list(self.error_instructions),
            "coverage_analysis": list(self.coverage_instructions),
            "mutation_analysis": list(self.mutation_instructions),
            "context": [encode(s) for s in self.retrieved_context],
        }

    def is_empty(self) -> bool:
        return not (self.error_instructions or self.coverage_instructions
                    or self.mutation_instructions or self.retrieved_context)


@dataclass(frozen=True)
class TraceStep:
    candidate: CandidateUpdate
    outcome: ExecutionOutcome
    instructions: Optional[InstructionBundle] = None


@dataclass(frozen=True)
class SessionResult:
    best: CandidateUpdate
    best_outcome: ExecutionOutcome
    iterations_used: int
    trace: tuple[TraceStep, ...]
    terminated_by: Termination


def validate_task(task: UpdateTask, workspace_root: Union[str, Path, None] = None) -> list[str]:
    """Return one description per violated UpdateTask invariant (empty when valid).

    The test-class-exists check needs a directory; it uses ``workspace_root``
    or, failing that, ``task.repo_post`` when that names an existing directory.
    """
    out = []
    if not task.test_before.strip():
        out.append("test_before empty")
    if not task.test_class_path:
        out.append("test_class_path empty")
    else:
        root = Path(workspace_root) if workspace_root else Path(task.repo_post) if task.repo_post else None
        if root is not None and root.is_dir() and not (root / task.test_class_path).is_file():
            out.append(f"test_class_path {task.test_class_path} missing from repo_post")
    if task.focal_after is None or not task.focal_after.source.strip():
        out.append("focal_after missing")
    else:
        out.extend(task.focal_after.ref.violations())
    if task.focal_before is not None:
        out.extend(task.focal_before.ref.violations())
    seen = set()
    for hunk in task.diff_hunks:
        if hunk.index in seen:
            out.append(f"DiffHunk.index duplicated: {hunk.index}")
        seen.add(hunk.index)
        out.extend(hunk.count_violations())
    indices = [h.index for h in task.diff_hunks]
    if indices != sorted(indices):
        out.append("diff_hunks not in original diff order")
    return out


# --- interchange codec -------------------------------------------------------

def encode(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: encode(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(encode(k)): encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode(v) for v in obj]
    return obj


_HINTS: dict[type, dict[str, Any]] = {}


def _hints(cls) -> dict[str, Any]:
    if cls not in _HINTS:
        _HINTS[cls] = typing.get_type_hints(cls)
    return _HINTS[cls]


def decode(tp: Any, data: Any) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (Union, types.UnionType):
        if data is None:
            return None
        inner = [a for a in args if a is not type(None)]
        return decode(inner[0], data)
    if origin is tuple:
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(decode(args[0], v) for v in data)
        return tuple(decode(a, v) for a, v in zip(args, data))
    if origin is list:
        return [decode(args[0], v) for v in data]
    if origin is dict:
        return {decode(args[0], k): decode(args[1], v) for k, v in data.items()}
    if isinstance(tp, type) and dataclasses.is_dataclass(tp):
        hints = _hints(tp)
        kwargs = {}
        for f in dataclasses.fields(tp):
            if f.name in data:
                kwargs[f.name] = decode(hints[f.name], data[f.name])
        return tp(**kwargs)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return tp(data)
    if tp is int and isinstance(data, str):
        return int(data)
    if tp is float and isinstance(data, int):
        return float(data)
    return data


def to_json(obj: Any, indent: Optional[int] = 2) -> str:
    return json.dumps(encode(obj), indent=indent, sort_keys=False, ensure_ascii=False)


def from_json(cls: Any, text: str) -> Any:
    return decode(cls, json.loads(text))
