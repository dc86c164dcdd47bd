"""Dataset helpers: focal-method identification and outdated-test detection."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from .build import BuildAdapter, PhaseTimeouts, Workspace
from .coordinator import run_phases
from .errors import PreconditionError
from .javasrc import call_sites, find_method, fqcn_from_path, members
from .model import (CandidateUpdate, CoverageFacts, ExecutionOutcome, MethodRef, MethodSource, MutationFacts,
                    Phase, UpdateTask)


def lcs_length(a: str, b: str) -> int:
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if ca == cb else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def name_similarity(a: str, b: str) -> float:
    """Case-insensitive LCS length normalised by the mean name length (Dice style)."""
    a, b = a.lower(), b.lower()
    if not a and not b:
        return 1.0
    return 2.0 * lcs_length(a, b) / (len(a) + len(b))


def production_path(test_path: str) -> str:
    """Mirror a test source path into the production tree and drop the ``Test`` affix."""
    parts = test_path.replace("\\", "/").split("/")
    parts = ["main" if p == "test" else p for p in parts]
    stem = parts[-1].removesuffix(".java")
    if stem.endswith("Tests"):
        stem = stem[:-5]
    elif stem.endswith("Test"):
        stem = stem[:-4]
    elif stem.startswith("Test"):
        stem = stem[4:]
    parts[-1] = stem + ".java"
    return "/".join(parts)


def method_source(text: str, name: str) -> Optional[str]:
    span = find_method(text, name)
    if span is None:
        return None
    return text[span.decl_offset:span.end_offset]


def identify_focal_method(test_ref: MethodRef, repo, similarity: Callable[[str, str], float] = name_similarity
                          ) -> list[MethodRef]:
    """Production methods the test calls directly, from the mirrored class, most similar name first."""
    repo = Path(repo)
    text = (repo / test_ref.file_path).read_text(encoding="utf-8")
    code = method_source(text, test_ref.method_name)
    if code is None:
        raise PreconditionError(f"{test_ref.method_name} not found in {test_ref.file_path}")
    called = {name for _, name in call_sites(code)}
    prod_rel = production_path(test_ref.file_path)
    prod = repo / prod_rel
    if not prod.is_file():
        return []
    fqcn = fqcn_from_path(prod_rel)
    found = []
    for order, m in enumerate(members(prod.read_text(encoding="utf-8"))):
        if m.kind == "method" and m.name in called:
            ref = MethodRef(prod_rel, fqcn, m.name, m.param_types, (m.start_line, m.end_line))
            found.append((-similarity(test_ref.method_name, m.name), order, ref))
    found.sort(key=lambda t: (t[0], t[1]))
    return [ref for _, _, ref in found]


class Cause(str, enum.Enum):
    COMPILE_ERROR = "compile_error"
    TEST_FAILURE = "test_failure"
    COVERAGE_DEGRADATION = "coverage_degradation"
    MUTATION_DEGRADATION = "mutation_degradation"


@dataclass(frozen=True)
class OutdatedVerdict:
    is_outdated: bool
    cause: Optional[Cause]
    round_outcomes: tuple[ExecutionOutcome, ExecutionOutcome, ExecutionOutcome]
    baseline_coverage: Optional[CoverageFacts] = None
    baseline_mutation: Optional[MutationFacts] = None


def classify(r1: ExecutionOutcome, r2: ExecutionOutcome, r3: ExecutionOutcome) -> Optional[Cause]:
    """The highest-priority reason round 2 falls short of round 1, or None."""
    if r1.phase_reached is not Phase.PASSED or r3.phase_reached is not Phase.PASSED:
        return None
    if r2.phase_reached is Phase.COMPILE_FAILED:
        return Cause.COMPILE_ERROR
    if r2.phase_reached is Phase.TESTS_FAILED:
        return Cause.TEST_FAILURE
    base_c, new_c = r1.coverage, r2.coverage
    if (round(new_c.line_coverage_pct, 2) < round(base_c.line_coverage_pct, 2)
            or round(new_c.branch_coverage_pct, 2) < round(base_c.branch_coverage_pct, 2)):
        return Cause.COVERAGE_DEGRADATION
    if round(r2.mutation.mutation_score_pct, 2) < round(r1.mutation.mutation_score_pct, 2):
        return Cause.MUTATION_DEGRADATION
    return None


def _round(adapter, ws: Workspace, test_ref: MethodRef, code: str, focal: MethodRef, timeouts) -> ExecutionOutcome:
    ws.reset()
    task = _probe_task(test_ref, focal)
    adapter.apply(ws, task, CandidateUpdate(code))
    return run_phases(adapter, ws, task.test_class, test_ref.method_name, focal, timeouts)


def _probe_task(test_ref: MethodRef, focal: MethodRef) -> UpdateTask:
    src = MethodSource(focal, "")
    return UpdateTask("", test_ref.file_path, (), (), src, src, ())


def _test_code(ws: Workspace, test_ref: MethodRef, label: str) -> str:
    code = method_source(ws.read(test_ref.file_path), test_ref.method_name)
    if code is None:
        raise PreconditionError(f"{label}: {test_ref.method_name} not found in {test_ref.file_path}")
    return code


def detect_outdated(pre_ws: Workspace, post_ws: Workspace, test_ref: MethodRef, focal: MethodRef,
                    adapter: BuildAdapter, focal_post: Optional[MethodRef] = None,
                    timeouts: Optional[PhaseTimeouts] = None) -> OutdatedVerdict:
    """Three rounds: pre test on pre code, pre test on post code, post test on post code.

    ``focal`` locates the focal method in the pre revision, ``focal_post``
    (default: same) in the post revision.
    """
    focal_post = focal_post or focal
    pre_test = _test_code(pre_ws, test_ref, "pre revision")
    post_test = _test_code(post_ws, test_ref, "post revision")
    try:
        r1 = _round(adapter, pre_ws, test_ref, pre_test, focal, timeouts)
        r2 = _round(adapter, post_ws, test_ref, pre_test, focal_post, timeouts)
        r3 = _round(adapter, post_ws, test_ref, post_test, focal_post, timeouts)
    finally:
        pre_ws.reset()
        post_ws.reset()
    cause = classify(r1, r2, r3)
    return OutdatedVerdict(cause is not None, cause, (r1, r2, r3), r1.coverage, r1.mutation)

