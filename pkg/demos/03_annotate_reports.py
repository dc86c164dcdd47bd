"""From raw JaCoCo and PIT reports to annotated source and repair instructions.

``Calculator.clamp(int, int)`` has one uncovered line, a half-covered
branch, a surviving boundary mutant and an unreached arithmetic mutant. The
agents annotate the method line by line and turn every gap into one
instruction. The model is given an empty reply here, so each instruction is
the deterministic default.

    python3 demos/03_annotate_reports.py
"""

from pathlib import Path

from testmend.coverage_agent import analyze as coverage_instructions, annotate_coverage
from testmend.llm import LLMGateway, ReplayBackend
from testmend.model import MethodRef
from testmend.mutation_agent import analyze as mutation_instructions, annotate_mutations
from testmend.reports import parse_coverage_report, parse_mutation_report

REPORTS = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "reports"
CLAMP = MethodRef("src/main/java/com/example/calc/Calculator.java", "com.example.calc.Calculator", "clamp",
                  ("int", "int"), (10, 17))


def silent_model():
    return LLMGateway(ReplayBackend([{"template_id": t, "binding_digest": "*", "response_text": ""}
                                     for t in ("coverage_analyze", "mutation_analyze")]))


def main():
    source = "".join((REPORTS / "Calculator.java").read_text().splitlines(keepends=True)[9:17])
    cov = parse_coverage_report((REPORTS / "jacoco_calculator.xml").read_bytes(), CLAMP)
    mut = parse_mutation_report((REPORTS / "pit_calculator.xml").read_bytes(), CLAMP)
    print(f"line {cov.line_coverage_pct:.2f}%  branch {cov.branch_coverage_pct:.2f}%  "
          f"mutation {mut.mutation_score_pct:.2f}%\n")
    print(annotate_coverage(source, cov))
    print(annotate_mutations(source, mut))
    gateway = silent_model()
    for text in coverage_instructions(cov, source, gateway) + mutation_instructions(mut, source, gateway):
        print("-", text)


if __name__ == "__main__":
    main()
