import json
import shutil
from pathlib import Path

import pytest

from testmend.build import ReplayAdapter, Workspace
from testmend.llm import LLMGateway, ReplayBackend, load_transcript
from testmend.model import UpdateTask, decode
from testmend.retrieval import HashEmbedder, Retriever

FIXTURES = Path(__file__).parent / "fixtures"


def load_task(name: str) -> UpdateTask:
    return decode(UpdateTask, json.loads((FIXTURES / name / "task.json").read_text(encoding="utf-8")))


def scripted(*pairs) -> LLMGateway:
    """Gateway answering each template from an ordered list of wildcard replies."""
    return LLMGateway(ReplayBackend([{"template_id": t, "binding_digest": "*", "response_text": r}
                                     for t, r in pairs]))


class Scenario:
    """A fixture session: task, copied workspace, replay adapter and transcript gateway."""

    def __init__(self, name: str, transcript: str, tmp_path: Path, project: str = "post"):
        self.task = load_task(name)
        self.root = tmp_path / f"{name}-{project}"
        shutil.copytree(FIXTURES / name / project, self.root)
        self.workspace = Workspace(self.root)
        self.adapter = ReplayAdapter(FIXTURES / "bundle")
        self.gateway = LLMGateway(load_transcript(FIXTURES / name / transcript))
        self.retriever = Retriever(self.root, HashEmbedder(), self.gateway)


@pytest.fixture
def sniffy(tmp_path):
    return Scenario("sniffy", "transcript.jsonl", tmp_path)


@pytest.fixture
def sniffy_regress(tmp_path):
    return Scenario("sniffy", "transcript_regress.jsonl", tmp_path)


@pytest.fixture
def wikidata(tmp_path):
    return Scenario("wikidata", "transcript.jsonl", tmp_path)
