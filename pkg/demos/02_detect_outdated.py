"""Classify a test across a code change with the three-round procedure.

Round 1 runs the old test on the old code, round 2 the old test on the new
code, round 3 the new test on the new code. A pair is kept only when rounds
1 and 3 pass; round 2 then says why the old test became outdated (compile
error, test failure, lower coverage, lower mutation score, checked in that
order).

Each replay bundle below scripts a different round 2 for the same revision
pair, so one run shows every verdict.

    python3 demos/02_detect_outdated.py
"""

import json
import shutil
import tempfile
from pathlib import Path

from testmend.build import ReplayAdapter, Workspace
from testmend.corpus import detect_outdated, identify_focal_method
from testmend.model import MethodRef, decode

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def main():
    (sample,) = json.loads((FIXTURES / "detect" / "tests.json").read_text())
    test_ref = decode(MethodRef, sample["test"])
    focal_pre, focal_post = decode(MethodRef, sample["focal"]), decode(MethodRef, sample["focal_post"])

    found = identify_focal_method(test_ref, FIXTURES / "sniffy" / "merged")
    print("focal candidates in the new revision:", [f"{r.method_name}({', '.join(r.signature)})" for r in found])

    for name in ("compile_error", "test_failure", "coverage_degradation", "mutation_degradation",
                 "not_outdated", "rejected"):
        with tempfile.TemporaryDirectory() as tmp:
            pre = Path(shutil.copytree(FIXTURES / "sniffy" / "pre", Path(tmp) / "pre"))
            post = Path(shutil.copytree(FIXTURES / "sniffy" / "merged", Path(tmp) / "post"))
            v = detect_outdated(Workspace(pre, "pre"), Workspace(post, "post"), test_ref, focal_pre,
                                ReplayAdapter(FIXTURES / "detect" / name), focal_post)
        rounds = " / ".join(o.phase_reached.value for o in v.round_outcomes)
        verdict = v.cause.value if v.cause else ("not outdated" if v.round_outcomes[0].phase_reached.value == "passed"
                                                 else "rejected (round 1 fails)")
        print(f"{name:22s} rounds: {rounds:40s} -> {verdict}")


if __name__ == "__main__":
    main()
