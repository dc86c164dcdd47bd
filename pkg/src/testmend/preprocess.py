"""Context reduction before the first update: hunk ranking and helper filtering."""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

from .javasrc import first_method_name, members, tokenize
from .model import DiffHunk, UpdateTask
from .reports import render_hunk

log = logging.getLogger(__name__)

DEFAULT_K = 10
SCORE_DIGITS = 12


@dataclass(frozen=True)
class FilteredContext:
    kept_hunks: tuple[DiffHunk, ...]
    kept_non_test_methods: tuple[str, ...]
    kept_variables: tuple[str, ...]


def tfidf_vectors(docs: Sequence[Sequence[str]]) -> list[dict[str, float]]:
    """Raw-count TF times smoothed IDF, ``ln((1+N)/(1+df)) + 1``."""
    n = len(docs)
    df = Counter()
    for doc in docs:
        df.update(set(doc))
    idf = {t: math.log((1 + n) / (1 + c)) + 1.0 for t, c in df.items()}
    return [{t: c * idf[t] for t, c in Counter(doc).items()} for doc in docs]


def cosine(a: dict[str, float], b: dict[str, float]) -> float:
    dot = sum(v * b.get(t, 0.0) for t, v in a.items())
    na = math.sqrt(sum(v * v for v in a.values()))
    nb = math.sqrt(sum(v * v for v in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return dot / (na * nb)


def min_max(values: Sequence[float]) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def hunk_scores(test_before: str, hunks: Sequence[DiffHunk],
                tfidf_weight: float = 0.5, repetition_weight: float = 0.5) -> list[float]:
    test_tokens = tokenize(test_before)
    hunk_tokens = [tokenize("\n".join(h.changed_lines())) for h in hunks]
    vectors = tfidf_vectors([test_tokens] + hunk_tokens)
    sims = [cosine(vectors[0], v) for v in vectors[1:]]
    bags = [Counter(t) for t in hunk_tokens]
    repetition = [sum(1 for other in bags if other == bag) for bag in bags]
    sim_n, rep_n = min_max(sims), min_max(repetition)
    return [round(tfidf_weight * s + repetition_weight * r, SCORE_DIGITS) for s, r in zip(sim_n, rep_n)]


def rank_hunks(test_before: str, hunks: Sequence[DiffHunk], k: int = DEFAULT_K,
               tfidf_weight: float = 0.5, repetition_weight: float = 0.5) -> list[DiffHunk]:
    """Top-``k`` hunks by combined test TF-IDF similarity and repetition.

    Both signals are min-max normalised over the task's hunks; ties go to the
    lower original hunk index.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not hunks:
        return []
    scores = hunk_scores(test_before, hunks, tfidf_weight, repetition_weight)
    order = sorted(range(len(hunks)), key=lambda i: (-scores[i], hunks[i].index))
    return [hunks[i] for i in order[:k]]


def method_name(source: str) -> str:
    return first_method_name(source) or _fallback_name(source)


def _fallback_name(source: str) -> str:
    m = re.search(r"([A-Za-z_$][\w$]*)\s*\(", source)
    return m.group(1) if m else source.strip()


def variable_name(declaration: str) -> str:
    wrapped = "class __X {\n" + declaration + "\n}"
    found = [m for m in members(wrapped) if m.kind == "field"]
    if found:
        return found[0].name
    words = re.findall(r"[A-Za-z_$][\w$]*", declaration.split("=", 1)[0])
    return words[-1] if words else declaration.strip()


def _parse_filter_reply(reply: str) -> Optional[dict]:
    m = re.search(r"\{.*\}", reply, re.S)
    if not m:
        return None
    try:
        data = json.loads(m.group(0))
    except json.JSONDecodeError:
        return None
    if not isinstance(data, dict):
        return None
    methods = data.get("non_test_methods", [])
    variables = data.get("variables", [])
    if not isinstance(methods, list) or not isinstance(variables, list):
        return None
    return {"methods": [str(x) for x in methods], "variables": [str(x) for x in variables]}


def _bullets(items: Sequence[str]) -> str:
    return "\n".join(f"- {name}:\n```java\n{src}\n```" for name, src in items) if items else "(none)"


def filter_context(task: UpdateTask, ranked_hunks: Sequence[DiffHunk], gateway) -> FilteredContext:
    """Ask the model which helpers and variables to keep; names it invents are dropped."""
    methods = [(method_name(src), src) for src in task.non_test_methods]
    variables = [(variable_name(src), src) for src in task.class_variables]
    focal = task.focal_after.source
    if task.focal_changed:
        focal = task.focal_before.source + "\n\n" + focal
    reply = gateway.ask(
        "input_filter",
        test_before=task.test_before,
        focal_methods=focal,
        non_test_methods=_bullets(methods),
        class_variables=_bullets(variables),
        diff_hunks="".join(render_hunk(h) for h in ranked_hunks) or "(no changes)",
    )
    parsed = _parse_filter_reply(reply)
    if parsed is None:
        log.warning("unparsable input_filter reply; keeping full context")
        return FilteredContext(tuple(ranked_hunks), tuple(task.non_test_methods), tuple(task.class_variables))
    keep_m = set(parsed["methods"])
    keep_v = set(parsed["variables"])
    return FilteredContext(
        tuple(ranked_hunks),
        tuple(src for name, src in methods if name in keep_m),
        tuple(src for name, src in variables if name in keep_v),
    )
