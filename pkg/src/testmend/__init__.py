"""Iterative, feedback-driven update of outdated Java unit tests.

The public entry point is :func:`run_update_session`; the CLI in
:mod:`testmend.cli` wires it to configuration files and batch manifests.
"""

from .build import MavenAdapter, ReplayAdapter, Workspace
from .coordinator import SessionConfig, run_update_session
from .llm import ChatConfig, LLMGateway, ReplayBackend, load_transcript
from .model import SessionResult, UpdateTask, from_json, to_json
from .retrieval import HashEmbedder, Retriever

__all__ = [
    "ChatConfig", "HashEmbedder", "LLMGateway", "MavenAdapter", "ReplayAdapter", "ReplayBackend", "Retriever",
    "SessionConfig", "SessionResult", "UpdateTask", "Workspace", "from_json", "load_transcript",
    "run_update_session", "to_json",
]

__version__ = "0.1.0"
