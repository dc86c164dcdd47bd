"""Mutation analysis: annotate mutants in the focal method and ask for assertions that kill them."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import PreconditionError, SpanMismatch
from .model import Mutant, MutantStatus, MutationFacts

STATUS_LABELS = {
    MutantStatus.NO_COVERAGE: "NO_COVERAGE",
    MutantStatus.SURVIVED: "SURVIVED",
    MutantStatus.KILLED: "KILLED",
}
_MARK = " // MUTANT["


def extract_mutation_info(facts: MutationFacts) -> tuple[list[Mutant], list[Mutant]]:
    """(surviving mutants, uncovered mutants); killed mutants are dropped."""
    survived = [m for m in facts.mutants if m.status is MutantStatus.SURVIVED]
    uncovered = [m for m in facts.mutants if m.status is MutantStatus.NO_COVERAGE]
    return survived, uncovered


def mutant_comment(m: Mutant) -> str:
    return f"// MUTANT[{m.operator}] {STATUS_LABELS[m.status]}: {m.description}"


def annotate_mutations(focal_source: str, facts: MutationFacts) -> str:
    lines = focal_source.splitlines(keepends=True)
    start, end = facts.method.line_span
    if len(lines) != end - start + 1:
        raise SpanMismatch(f"source has {len(lines)} lines but {facts.method.method_name} spans {start}-{end}")
    by_line: dict[int, list[Mutant]] = {}
    for m in facts.mutants:
        if not start <= m.line <= end:
            raise SpanMismatch(f"mutant on line {m.line} outside {start}-{end}")
        by_line.setdefault(m.line, []).append(m)
    out = []
    for offset, raw in enumerate(lines):
        body = raw.rstrip("\r\n")
        ending = raw[len(body):]
        extra = "".join(" " + mutant_comment(m) for m in by_line.get(start + offset, ()))
        out.append(body + extra + ending)
    return "".join(out)


def strip_mutation_annotations(annotated: str) -> str:
    out = []
    for raw in annotated.splitlines(keepends=True):
        body = raw.rstrip("\r\n")
        ending = raw[len(body):]
        cut = body.find(_MARK)
        out.append((body[:cut] if cut >= 0 else body) + ending)
    return "".join(out)


@dataclass(frozen=True)
class MutantTarget:
    id: str
    mutant: Mutant

    def label(self) -> str:
        m = self.mutant
        return f"line {m.line} {m.operator} {STATUS_LABELS[m.status]}: {m.description}"

    def prefix(self) -> str:
        m = self.mutant
        if m.status is MutantStatus.NO_COVERAGE:
            return f"cover line {m.line} so the mutant is reachable ({m.operator}: {m.description})"
        return f"kill surviving mutant at line {m.line} ({m.operator}: {m.description})"

    def default_instruction(self, method_name: str) -> str:
        m = self.mutant
        if m.status is MutantStatus.NO_COVERAGE:
            return "add an input that executes this line, then assert on its effect"
        if "Return" in m.operator or "return value" in m.description:
            return (f"assert equality on the return value of {method_name}(...), e.g. "
                    f"assertEquals(<expected value>, {method_name}(...)); do not just call it")
        if "VoidMethodCall" in m.operator or "removed call" in m.description:
            return "assert on the state change caused by the removed call"
        if "Conditional" in m.operator or "conditional" in m.description:
            return "add inputs on both sides of the condition and assert on the outcome of each"
        if "Math" in m.operator or "Increment" in m.operator or "Negs" in m.operator:
            return "assert the exact computed value so the changed arithmetic is detected"
        return "add or strengthen an assertion that distinguishes the mutated behaviour"


def mutation_targets(facts: MutationFacts) -> list[MutantTarget]:
    survived, uncovered = extract_mutation_info(facts)
    live = [m for m in facts.mutants if m in survived or m in uncovered]
    return [MutantTarget(f"M{i}", m) for i, m in enumerate(live, 1)]


_REPLY_RE = re.compile(r"^\s*(?:[-*]\s*)?\[?(M\d+)\]?\s*[|:]\s*(.+)$")


def parse_mutation_reply(reply: str, targets) -> dict[str, str]:
    known = {t.id for t in targets}
    out = {}
    for line in reply.splitlines():
        m = _REPLY_RE.match(line)
        if m and m.group(1) in known and m.group(1) not in out and m.group(2).strip():
            out[m.group(1)] = m.group(2).strip()
    return out


def analyze(facts: MutationFacts, focal_source: str, gateway, test_code: str = "") -> list[str]:
    """One instruction per surviving and per uncovered mutant."""
    targets = mutation_targets(facts)
    if not targets:
        raise PreconditionError("mutation analysis needs at least one live mutant")
    reply = gateway.ask(
        "mutation_analyze",
        annotated_focal=annotate_mutations(focal_source, facts),
        test_code=test_code or "// (not available)",
        targets="\n".join(f"{t.id}: {t.label()}" for t in targets),
    )
    answers = parse_mutation_reply(reply, targets)
    name = facts.method.method_name
    return [f"{t.prefix()}: {answers.get(t.id) or t.default_instruction(name)}" for t in targets]
