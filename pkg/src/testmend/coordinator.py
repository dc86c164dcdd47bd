"""The update loop: generate, execute, analyse, merge, repeat."""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from . import coverage_agent, errors_agent, mutation_agent
from .build import BuildAdapter, PhaseTimeouts, RunRequest, Workspace, method_first_line, normalize_import
from .errors import (InvalidTask, MethodNotFound, NoExtractableCode, PreconditionError, ReportError,
                     SessionAborted, TestmendError, UnbalancedReplacement)
from .javasrc import first_method_name, is_balanced, mask, match_brace, members
from .model import (CandidateUpdate, Diagnostic, DiagnosticKind, ExecutionOutcome, InstructionBundle,
                    MethodRef, Phase, ResolvedSymbol, SessionResult, Termination, TraceStep, UpdateTask,
                    validate_task)
from .preprocess import DEFAULT_K, filter_context, rank_hunks
from .reports import parse_build_log, parse_coverage_report, parse_mutation_report
from .update import generate_update

log = logging.getLogger(__name__)

ERROR_AGENT = "error_analysis"
COVERAGE_AGENT = "coverage_analysis"
MUTATION_AGENT = "mutation_analysis"


@dataclass(frozen=True)
class SessionConfig:
    max_iterations: int = 4
    line_threshold: float = 100.0
    branch_threshold: float = 100.0
    mutation_threshold: float = 100.0
    max_retrieval_iterations: int = 3
    top_k_hunks: int = DEFAULT_K

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.max_retrieval_iterations < 1:
            raise ValueError("max_retrieval_iterations must be >= 1")
        for name in ("line_threshold", "branch_threshold", "mutation_threshold"):
            if not 0 <= getattr(self, name) <= 100:
                raise ValueError(f"{name} must lie in [0, 100]")


class Decision(str, enum.Enum):
    DONE_THRESHOLDS = "done_thresholds"
    DONE_BUDGET = "done_budget"
    CONTINUE = "continue"


# --- extraction ------------------------------------------------------------------

_FENCE_RE = re.compile(r"^[ \t]*```[ \t]*([\w+-]*)[^\n]*\n(.*?)^[ \t]*```[ \t]*$", re.S | re.M)
_IMPORT_DECL = re.compile(r"^\s*import\s+(static\s+)?[\w.$*]+\s*;?\s*$")
_CLASS_DECL = re.compile(r"\b(class|interface|enum)\s+[A-Za-z_$][\w$]*[^{;]*\{")


def _import_lines(block: str) -> list[str]:
    out = []
    for line in block.splitlines():
        if _IMPORT_DECL.match(line):
            out.append(normalize_import(line))
    return out


def _split_leading_imports(code: str) -> tuple[str, list[str]]:
    imports, rest = [], []
    lines = code.splitlines()
    i = 0
    while i < len(lines) and (not lines[i].strip() or _IMPORT_DECL.match(lines[i])
                              or re.match(r"^\s*package\s", lines[i])):
        if _IMPORT_DECL.match(lines[i]):
            imports.append(normalize_import(lines[i]))
        i += 1
    rest = lines[i:]
    return "\n".join(rest), imports


def _method_from_class(code: str, method_name: Optional[str]) -> Optional[str]:
    found = [m for m in members(code) if m.kind == "method"]
    if not found:
        return None
    pick = next((m for m in found if m.name == method_name), None)
    pick = pick or next((m for m in found if any(a.startswith("@Test") for a in m.annotations)), found[0])
    anns = "".join(a.strip() + "\n" for a in pick.annotations if a.strip() not in pick.source)
    return anns + pick.source


def _largest_balanced_block(text: str) -> Optional[str]:
    """Largest top-level ``{...}`` region, widened to its declaration and annotation lines."""
    masked = mask(text)
    best = None
    i = 0
    while i < len(masked):
        if masked[i] == "{":
            end = match_brace(masked, i)
            if end < 0:
                break
            start = masked.rfind("\n", 0, i) + 1
            # pull in annotation lines directly above
            while start > 0:
                prev_start = masked.rfind("\n", 0, start - 1) + 1
                if masked[prev_start:start].strip().startswith("@"):
                    start = prev_start
                else:
                    break
            block = text[start:end + 1]
            if best is None or len(block) > len(best):
                best = block
            i = end + 1
            continue
        i += 1
    return best


def extract_test_code(raw: str, iteration: int = 1, method_name: Optional[str] = None) -> CandidateUpdate:
    """Pull the updated test method and its imports out of a model reply.

    Preferred shape is a ```test block plus an optional ```imports block. Any
    other fenced block holding a method is accepted next, and with no fences
    at all the largest brace-balanced region is used. Whole classes are cut
    down to ``method_name`` (or the first ``@Test`` method).
    """
    fences = [(m.group(1).lower(), m.group(2)) for m in _FENCE_RE.finditer(raw)]
    imports: list[str] = []
    for tag, body in fences:
        if tag == "imports":
            imports.extend(_import_lines(body))
    code = next((body for tag, body in fences if tag == "test"), None)
    if code is None:
        blocks = [body for tag, body in fences if tag != "imports" and "{" in body and is_balanced(body)]
        code = max(blocks, key=len) if blocks else None
    if code is None and not fences:
        code = _largest_balanced_block(raw)
    if code is None:
        raise NoExtractableCode("no extractable code block in model output")
    code, leading = _split_leading_imports(code)
    imports.extend(leading)
    if _CLASS_DECL.search(mask(code)):
        method = _method_from_class(code, method_name)
        if method is None:
            raise NoExtractableCode("class in model output declares no method")
        code = method
    if first_method_name(code) is None:
        raise NoExtractableCode("extracted block declares no method")
    return CandidateUpdate(code.strip("\n"), tuple(dict.fromkeys(imports)), iteration)


# --- execution -------------------------------------------------------------------

def _log_tail(text: str, n: int = 20) -> str:
    return "\n".join(text.strip().splitlines()[-n:])


def _timeout(phase: Phase, name: str, result) -> ExecutionOutcome:
    diag = Diagnostic(DiagnosticKind.RUNTIME_FAILURE, f"phase timeout ({name})\n{_log_tail(result.log_text)}".strip())
    return ExecutionOutcome(phase, (diag,), raw_log_ref=result.log_ref)


def run_phases(adapter: BuildAdapter, workspace: Workspace, test_class: str, test_method: str,
               focal: MethodRef, timeouts: Optional[PhaseTimeouts] = None) -> ExecutionOutcome:
    """Run compile, tests, coverage and mutation on whatever is applied, stopping at the first failure.

    A phase that times out yields a ``runtime_failure`` diagnostic "phase
    timeout"; for coverage and mutation the candidate counts as not passed.
    """
    request = RunRequest(workspace, test_class, test_method, focal, timeouts or PhaseTimeouts())
    compiled = adapter.run_compile(request)
    if compiled.timed_out:
        return _timeout(Phase.COMPILE_FAILED, "compile", compiled)
    if not compiled.ok:
        diags = tuple(d for d in parse_build_log(compiled.log_text) if d.kind is DiagnosticKind.COMPILE_ERROR)
        if not diags:
            diags = (Diagnostic(DiagnosticKind.COMPILE_ERROR,
                                f"compilation failed\n{_log_tail(compiled.log_text)}".strip()),)
        return ExecutionOutcome(Phase.COMPILE_FAILED, diags, raw_log_ref=compiled.log_ref)
    tested = adapter.run_tests(request)
    if tested.timed_out:
        return _timeout(Phase.TESTS_FAILED, "tests", tested)
    if not tested.ok:
        diags = tuple(d for d in parse_build_log(tested.log_text) if d.kind is not DiagnosticKind.COMPILE_ERROR)
        if not diags:
            diags = (Diagnostic(DiagnosticKind.RUNTIME_FAILURE,
                                f"test run failed\n{_log_tail(tested.log_text)}".strip()),)
        return ExecutionOutcome(Phase.TESTS_FAILED, diags, raw_log_ref=tested.log_ref)
    cov = adapter.run_coverage(request)
    if cov.timed_out:
        return _timeout(Phase.TESTS_FAILED, "coverage", cov)
    if not cov.ok or cov.report is None:
        raise ReportError(f"coverage phase produced no report ({cov.log_ref})")
    coverage = parse_coverage_report(cov.report.read_bytes(), focal)
    mut = adapter.run_mutation(request)
    if mut.timed_out:
        return _timeout(Phase.TESTS_FAILED, "mutation", mut)
    if not mut.ok or mut.report is None:
        raise ReportError(f"mutation phase produced no report ({mut.log_ref})")
    mutation = parse_mutation_report(mut.report.read_bytes(), focal)
    return ExecutionOutcome(Phase.PASSED, (), coverage, mutation, mut.log_ref)


def _apply_failure(exc: Exception) -> ExecutionOutcome:
    return ExecutionOutcome(Phase.COMPILE_FAILED, (Diagnostic(DiagnosticKind.COMPILE_ERROR, str(exc)),),
                            raw_log_ref="apply")


def _evaluate(candidate: CandidateUpdate, task: UpdateTask, adapter: BuildAdapter, workspace: Workspace,
              timeouts: Optional[PhaseTimeouts] = None) -> tuple[ExecutionOutcome, int]:
    """Outcome plus the file line where the candidate method starts (1 when unknown)."""
    workspace.reset()
    try:
        adapter.apply(workspace, task, candidate)
    except (MethodNotFound, UnbalancedReplacement, PreconditionError) as exc:
        log.info("candidate could not be applied: %s", exc)
        return _apply_failure(exc), 1
    name = first_method_name(candidate.test_code)
    first_line = 1
    if workspace.root.is_dir():
        first_line = method_first_line(workspace, task.test_class_path, name) or 1
    outcome = run_phases(adapter, workspace, task.test_class, name, task.focal_after.ref, timeouts)
    return outcome, first_line


def evaluate_candidate(candidate: CandidateUpdate, task: UpdateTask, adapter: BuildAdapter,
                       workspace: Workspace, timeouts: Optional[PhaseTimeouts] = None) -> ExecutionOutcome:
    return _evaluate(candidate, task, adapter, workspace, timeouts)[0]


# --- bookkeeping -----------------------------------------------------------------

def quality_key(candidate: CandidateUpdate, outcome: ExecutionOutcome) -> tuple:
    """Larger is better: phase, then mutation score, branch and line coverage, then earlier iteration."""
    mut = outcome.mutation.mutation_score_pct if outcome.mutation else -1.0
    br = outcome.coverage.branch_coverage_pct if outcome.coverage else -1.0
    ln = outcome.coverage.line_coverage_pct if outcome.coverage else -1.0
    return (outcome.phase_reached.rank, mut, br, ln, -candidate.iteration)


def record_best(best, new):
    """Keep the better of two ``(candidate, outcome)`` pairs; ``best`` may be None."""
    if best is None or quality_key(*new) > quality_key(*best):
        return new
    return best


def _meets(outcome: ExecutionOutcome, config: SessionConfig) -> tuple[bool, bool, bool]:
    cov, mut = outcome.coverage, outcome.mutation
    line_ok = cov is not None and cov.line_coverage_pct >= config.line_threshold
    branch_ok = cov is not None and cov.branch_coverage_pct >= config.branch_threshold
    mut_ok = mut is not None and mut.mutation_score_pct >= config.mutation_threshold
    return line_ok, branch_ok, mut_ok


def has_done(outcome: ExecutionOutcome, config: SessionConfig, iteration: int) -> Decision:
    if outcome.phase_reached is Phase.PASSED and all(_meets(outcome, config)):
        return Decision.DONE_THRESHOLDS
    if iteration >= config.max_iterations:
        return Decision.DONE_BUDGET
    return Decision.CONTINUE


def choose_agents(outcome: ExecutionOutcome, config: SessionConfig) -> list[str]:
    if outcome.phase_reached is not Phase.PASSED:
        return [ERROR_AGENT]
    line_ok, branch_ok, mut_ok = _meets(outcome, config)
    agents = []
    if not (line_ok and branch_ok):
        agents.append(COVERAGE_AGENT)
    if not mut_ok:
        agents.append(MUTATION_AGENT)
    return agents


def merge_instructions(outputs: dict, context: Sequence[ResolvedSymbol] = ()) -> InstructionBundle:
    """Group per-agent instructions under their keys, dropping exact repeats across the whole bundle."""
    seen = set()
    grouped = {}
    for key in (ERROR_AGENT, COVERAGE_AGENT, MUTATION_AGENT):
        kept = []
        for text in outputs.get(key, ()):
            if text not in seen:
                seen.add(text)
                kept.append(text)
        grouped[key] = tuple(kept)
    return InstructionBundle(grouped[ERROR_AGENT], grouped[COVERAGE_AGENT], grouped[MUTATION_AGENT],
                             tuple(dict.fromkeys(context)))


# --- session ---------------------------------------------------------------------

def _analyze(agents, outcome, candidate, first_line, task, gateway, retriever, catalog) -> InstructionBundle:
    outputs: dict[str, list[str]] = {}
    context: list[ResolvedSymbol] = []
    focal = task.focal_after.source
    for agent in agents:
        if agent == ERROR_AGENT:
            outputs[agent], context = errors_agent.analyze(outcome, task, retriever, gateway,
                                                           candidate.test_code, first_line, catalog)
        elif agent == COVERAGE_AGENT:
            outputs[agent] = coverage_agent.analyze(outcome.coverage, focal, gateway, candidate.test_code)
        else:
            outputs[agent] = mutation_agent.analyze(outcome.mutation, focal, gateway, candidate.test_code)
    return merge_instructions(outputs, context)


def run_update_session(task: UpdateTask, config: SessionConfig, gateway, adapter: BuildAdapter,
                       workspace: Workspace, retriever=None, catalog=None,
                       timeouts: Optional[PhaseTimeouts] = None) -> SessionResult:
    """Update ``task``'s test until the thresholds are met or the iteration budget runs out.

    The workspace is restored to its original state on exit. Unrecoverable
    model or build errors raise :class:`SessionAborted` carrying the steps
    completed so far.
    """
    problems = validate_task(task, workspace.root if workspace.root.is_dir() else None)
    if problems:
        raise InvalidTask(problems)
    trace: list[TraceStep] = []
    method_name = first_method_name(task.test_before)
    best = None
    terminated = Termination.MAX_ITERATIONS
    try:
        ranked = rank_hunks(task.test_before, task.diff_hunks, config.top_k_hunks)
        context = filter_context(task, ranked, gateway)
        instructions = None
        for iteration in range(1, config.max_iterations + 1):
            raw = generate_update(task, context, instructions, iteration, gateway)
            try:
                candidate = extract_test_code(raw, iteration, method_name)
            except NoExtractableCode as exc:
                candidate = CandidateUpdate(task.test_before, (), iteration)
                outcome, first_line = _apply_failure(exc), 1
            else:
                outcome, first_line = _evaluate(candidate, task, adapter, workspace, timeouts)
            best = record_best(best, (candidate, outcome))
            decision = has_done(outcome, config, iteration)
            log.info("iteration %d: %s -> %s", iteration, outcome.phase_reached.value, decision.value)
            if decision is not Decision.CONTINUE:
                trace.append(TraceStep(candidate, outcome, None))
                if decision is Decision.DONE_THRESHOLDS:
                    terminated = Termination.THRESHOLDS_MET
                break
            agents = choose_agents(outcome, config)
            assert agents, "no analysis agent selected although thresholds are not met"
            instructions = _analyze(agents, outcome, candidate, first_line, task, gateway, retriever, catalog)
            trace.append(TraceStep(candidate, outcome, instructions))
    except (TestmendError, OSError) as exc:
        if isinstance(exc, InvalidTask):
            raise
        raise SessionAborted(exc, tuple(trace)) from exc
    finally:
        workspace.reset()
    return SessionResult(best[0], best[1], len(trace), tuple(trace), terminated)
