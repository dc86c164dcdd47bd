"""Walk through one update session on the Sniffy-like fixture, fully offline.

The configuration setter ``setInjectHtml`` was renamed to
``setInjectHtmlEnabled`` and its test no longer compiles. The model replies
come from a recorded transcript and the build results from a replay bundle,
so every run prints the same trace:

* iteration 1 keeps the stale call and fails to compile; the error agent
  resolves the new name through retrieval;
* iteration 2 compiles and passes, but a branch and a mutant stay uncovered;
* iteration 3 exercises both branches and reaches 100/100/100.

    python3 demos/01_replay_session.py
"""

import shutil
import sys
import tempfile
from pathlib import Path

from testmend.build import ReplayAdapter, Workspace
from testmend.coordinator import SessionConfig, run_update_session
from testmend.llm import LLMGateway, load_transcript
from testmend.model import UpdateTask, from_json
from testmend.retrieval import HashEmbedder, Retriever

FIXTURES = Path(__file__).resolve().parents[1] / "tests" / "fixtures"


def main(transcript="transcript.jsonl"):
    task = from_json(UpdateTask, (FIXTURES / "sniffy" / "task.json").read_text())
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(shutil.copytree(FIXTURES / "sniffy" / "post", Path(tmp) / "post"))
        gateway = LLMGateway(load_transcript(FIXTURES / "sniffy" / transcript))
        result = run_update_session(task, SessionConfig(), gateway, ReplayAdapter(FIXTURES / "bundle"),
                                    Workspace(root), Retriever(root, HashEmbedder(), gateway))

    for step in result.trace:
        o = step.outcome
        line = f"iteration {step.candidate.iteration}: {o.phase_reached.value}"
        if o.coverage:
            line += (f"  line {o.coverage.line_coverage_pct:.2f}  branch {o.coverage.branch_coverage_pct:.2f}"
                     f"  mutation {o.mutation.mutation_score_pct:.2f}")
        print(line)
        for d in o.diagnostics:
            print(f"    {d.kind.value}: {d.message.splitlines()[0]}")
        if step.instructions:
            doc = step.instructions.to_document()
            for key in ("error_analysis", "coverage_analysis", "mutation_analysis"):
                for text in doc[key]:
                    print(f"    -> [{key}] {text}")

    print(f"\nterminated by {result.terminated_by.value} after {result.iterations_used} iteration(s); "
          f"best is iteration {result.best.iteration}")
    print("\nbest test:\n" + result.best.test_code)


if __name__ == "__main__":
    main(*sys.argv[1:])
