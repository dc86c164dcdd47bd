"""Coverage analysis: annotate the focal method and turn gaps into instructions."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import PreconditionError, SpanMismatch
from .model import CoverageFacts, LineStatus

LABELS = {
    LineStatus.COVERED: "COVERED",
    LineStatus.NOT_COVERED: "NOT_COVERED",
    LineStatus.NO_INSTRUCTION: "NO_INSTRUCTION",
}
_SUFFIX_RE = re.compile(r" // (?:COVERED|NOT_COVERED|NO_INSTRUCTION)(?: // BRANCH: \d+/\d+ covered)?$")


@dataclass(frozen=True)
class CoverageTarget:
    id: str
    line: int
    kind: str  # line | branch
    covered: int = 0
    total: int = 0

    def default_instruction(self) -> str:
        if self.kind == "line":
            return f"construct an input reaching line {self.line}"
        return (f"construct an input reaching the untaken branch direction at line {self.line} "
                f"({self.covered}/{self.total} covered); infer the missing direction from the predicate")

    def label(self) -> str:
        if self.kind == "line":
            return f"line {self.line} (NOT_COVERED)"
        return f"branch at line {self.line} ({self.covered}/{self.total} covered)"


def extract_uncover_info(facts: CoverageFacts) -> tuple[list[int], list[tuple[int, int, int]]]:
    """Uncovered lines and partially covered branches as ``(line, covered, total)``."""
    lines = sorted(n for n, s in facts.line_status.items() if s is LineStatus.NOT_COVERED)
    branches = sorted((n, c, t) for n, (c, t) in facts.branch_status.items() if c < t)
    return lines, branches


def _split_lines(source: str) -> list[tuple[str, str]]:
    """(content, line ending) pairs."""
    out = []
    for raw in source.splitlines(keepends=True):
        body = raw.rstrip("\r\n")
        out.append((body, raw[len(body):]))
    return out


def _check_span(source: str, facts_method) -> list[tuple[str, str]]:
    lines = _split_lines(source)
    start, end = facts_method.line_span
    if len(lines) != end - start + 1:
        raise SpanMismatch(f"source has {len(lines)} lines but {facts_method.method_name} spans {start}-{end}")
    return lines


def annotate_coverage(focal_source: str, facts: CoverageFacts) -> str:
    lines = _check_span(focal_source, facts.method)
    start = facts.method.line_span[0]
    out = []
    for offset, (body, ending) in enumerate(lines):
        nr = start + offset
        suffix = " // " + LABELS[facts.line_status.get(nr, LineStatus.NO_INSTRUCTION)]
        if nr in facts.branch_status:
            covered, total = facts.branch_status[nr]
            suffix += f" // BRANCH: {covered}/{total} covered"
        out.append(body + suffix + ending)
    return "".join(out)


def strip_coverage_annotations(annotated: str) -> str:
    return "".join(_SUFFIX_RE.sub("", body) + ending for body, ending in _split_lines(annotated))


def coverage_targets(facts: CoverageFacts) -> list[CoverageTarget]:
    lines, branches = extract_uncover_info(facts)
    return ([CoverageTarget(f"L{n}", n, "line") for n in lines]
            + [CoverageTarget(f"B{n}", n, "branch", c, t) for n, c, t in branches])


_REPLY_RE = re.compile(r"^\s*(?:[-*]\s*)?\[?([LB]\d+)\]?\s*[|:]\s*(.*)$")


def parse_coverage_reply(reply: str, targets) -> dict[str, tuple[str, str]]:
    """Map target id -> (difficulty, text); unknown ids are ignored, first answer wins."""
    known = {t.id for t in targets}
    out = {}
    for line in reply.splitlines():
        m = _REPLY_RE.match(line)
        if not m or m.group(1) not in known or m.group(1) in out:
            continue
        parts = [p.strip() for p in m.group(2).split("|")]
        if len(parts) >= 2:
            tag = parts[0].lower()
            difficulty = tag if tag in ("easy", "hard") else "hard"
            text = " | ".join(parts[1:]).strip()
        else:
            difficulty, text = "hard", parts[0]
        if text:
            out[m.group(1)] = (difficulty, text)
    return out


def analyze(facts: CoverageFacts, focal_source: str, gateway, test_code: str = "") -> list[str]:
    """One instruction per uncovered line and per partial branch, easy ones first."""
    targets = coverage_targets(facts)
    if not targets:
        raise PreconditionError("coverage analysis needs at least one uncovered target")
    reply = gateway.ask(
        "coverage_analyze",
        annotated_focal=annotate_coverage(focal_source, facts),
        test_code=test_code or "// (not available)",
        targets="\n".join(f"{t.id}: {t.label()}" for t in targets),
    )
    answers = parse_coverage_reply(reply, targets)
    items = []
    for t in targets:
        difficulty, text = answers.get(t.id, ("hard", t.default_instruction()))
        items.append((difficulty, f"[{difficulty}] {t.label()}: {text}"))
    easy = [text for d, text in items if d == "easy"]
    hard = [text for d, text in items if d != "easy"]
    return easy + hard
