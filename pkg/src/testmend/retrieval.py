"""Symbol retrieval over per-module embedding indexes.

Only modules the model picks are embedded. Each unknown symbol gets a
model-written query; the top hits are shown back to the model, which picks
the relevant one (or none). A declaration whose name matches the symbol
exactly is accepted without asking.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import httpx
import numpy as np

from .errors import DimensionMismatch, EmbedderError, PreconditionError
from .javasrc import members, package_of, tokenize, top_level_type
from .model import ResolvedSymbol, SymbolKind

log = logging.getLogger(__name__)

DEFAULT_K = 5
SCORE_DIGITS = 12
SKIP_DIRS = {".git", "target", "build", "node_modules", ".idea"}


# --- embedders -------------------------------------------------------------------

class Embedder:
    id: str = "embedder"
    dimension: int = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        raise NotImplementedError


class HashEmbedder(Embedder):
    """Signed feature hashing of identifier tokens, L2 normalised.

    Deterministic across runs and platforms; needs no network.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.id = f"hash-{dimension}"

    def vector(self, text: str) -> np.ndarray:
        v = np.zeros(self.dimension, dtype=np.float64)
        for tok in tokenize(text):
            h = int.from_bytes(hashlib.blake2b(tok.encode("utf-8"), digest_size=8).digest(), "big")
            v[h % self.dimension] += 1.0 if (h >> 63) & 1 else -1.0
        norm = np.linalg.norm(v)
        return v / norm if norm > 0 else v

    def embed(self, texts):
        if not texts:
            return np.zeros((0, self.dimension))
        return np.vstack([self.vector(t) for t in texts])


class HttpEmbedder(Embedder):
    """Client for an OpenAI-compatible ``/embeddings`` endpoint."""

    def __init__(self, endpoint: str, model: str, credential: str = "",
                 client: Optional[httpx.Client] = None, timeout_s: float = 60.0, batch_size: int = 64):
        self.endpoint = endpoint
        self.model = model
        self.credential = credential
        self.client = client or httpx.Client()
        self.timeout_s = timeout_s
        self.batch_size = batch_size
        self.id = f"http:{model}"
        self.dimension = 0

    def embed(self, texts):
        rows = []
        headers = {"Authorization": f"Bearer {self.credential}"} if self.credential else {}
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start:start + self.batch_size])
            try:
                resp = self.client.post(self.endpoint, json={"model": self.model, "input": batch},
                                        headers=headers, timeout=self.timeout_s)
            except httpx.HTTPError as exc:
                raise EmbedderError(f"embedding request failed: {exc}") from exc
            if resp.status_code >= 400:
                raise EmbedderError(f"embedding endpoint returned {resp.status_code}: {resp.text[:200]}")
            data = sorted(resp.json()["data"], key=lambda d: d.get("index", 0))
            if len(data) != len(batch):
                raise EmbedderError(f"expected {len(batch)} embeddings, got {len(data)}")
            rows.extend(d["embedding"] for d in data)
        if not rows:
            return np.zeros((0, self.dimension))
        arr = np.asarray(rows, dtype=np.float64)
        if self.dimension and arr.shape[1] != self.dimension:
            raise EmbedderError(f"embedding dimension changed from {self.dimension} to {arr.shape[1]}")
        self.dimension = arr.shape[1]
        return arr


# --- index -----------------------------------------------------------------------

@dataclass(frozen=True)
class IndexEntry:
    name: str
    kind: SymbolKind
    doc: str
    file_path: str
    import_path: str
    signature: str

    def to_symbol(self) -> ResolvedSymbol:
        return ResolvedSymbol(self.name, self.kind, self.signature, self.file_path, self.import_path)


@dataclass
class EmbeddingIndex:
    module_root: str
    entries: list[IndexEntry]
    vectors: np.ndarray
    dimension: int
    embedder_id: str

    def __post_init__(self):
        if self.vectors.shape != (len(self.entries), self.dimension):
            raise DimensionMismatch(f"vectors {self.vectors.shape} do not match {len(self.entries)}x{self.dimension}")

    @property
    def empty(self) -> bool:
        return not self.entries

    def save(self, path) -> None:
        doc = {
            "module_root": self.module_root,
            "dimension": self.dimension,
            "embedder_id": self.embedder_id,
            "entries": [
                {"name": e.name, "kind": e.kind.value, "doc": e.doc, "file_path": e.file_path,
                 "import_path": e.import_path, "signature": e.signature, "vector": v.tolist()}
                for e, v in zip(self.entries, self.vectors)
            ],
        }
        Path(path).write_text(json.dumps(doc), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "EmbeddingIndex":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        entries = [IndexEntry(e["name"], SymbolKind(e["kind"]), e["doc"], e["file_path"],
                              e["import_path"], e["signature"]) for e in doc["entries"]]
        dim = doc["dimension"]
        vectors = np.asarray([e["vector"] for e in doc["entries"]], dtype=np.float64).reshape(len(entries), dim)
        return cls(doc["module_root"], entries, vectors, dim, doc["embedder_id"])


def source_files(module_root: Path) -> list[Path]:
    """Production sources: ``src/main/java`` when present, else every non-test ``.java`` file."""
    main = module_root / "src" / "main" / "java"
    base = main if main.is_dir() else module_root
    out = []
    for dirpath, dirnames, filenames in os.walk(base):
        dirnames[:] = sorted(d for d in dirnames if d not in SKIP_DIRS and not (base is module_root and d == "test"))
        for name in sorted(filenames):
            if name.endswith(".java"):
                out.append(Path(dirpath) / name)
    return out


def describe(member) -> str:
    return member.doc or f"{member.name} {member.header}"


def build_index(module_root, embedder: Embedder, repo_root=None) -> EmbeddingIndex:
    """Embed the documentation of every method and field declared under ``module_root``."""
    module_root = Path(module_root)
    if not module_root.is_dir():
        raise PreconditionError(f"module {module_root} does not exist")
    repo_root = Path(repo_root) if repo_root else module_root
    entries = []
    texts = []
    for path in source_files(module_root):
        text = path.read_text(encoding="utf-8", errors="replace")
        cls, _ = top_level_type(text)
        pkg = package_of(text)
        fqcn = f"{pkg}.{cls}" if pkg else cls
        rel = path.relative_to(repo_root).as_posix() if repo_root in path.parents else path.as_posix()
        for m in members(text):
            if m.kind == "constructor":
                continue
            kind = SymbolKind.METHOD if m.kind == "method" else SymbolKind.FIELD
            doc = describe(m)
            entries.append(IndexEntry(m.name, kind, doc, rel, fqcn, m.header))
            texts.append(f"{m.name}. {doc}")
    vectors = embedder.embed(texts) if texts else np.zeros((0, embedder.dimension))
    dim = vectors.shape[1] if texts else embedder.dimension
    if not entries:
        log.warning("module %s has no indexable declarations", module_root)
    rel_root = module_root.relative_to(repo_root).as_posix() if module_root != repo_root else "."
    return EmbeddingIndex(rel_root, entries, np.asarray(vectors, dtype=np.float64), dim, embedder.id)


def cosine_scores(vectors: np.ndarray, q: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=1) if len(vectors) else np.zeros(0)
    qn = np.linalg.norm(q)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = (vectors @ q) / (norms * qn)
    scores = np.where((norms == 0) | (qn == 0), 0.0, scores)
    return np.round(np.clip(scores, -1.0, 1.0), SCORE_DIGITS)


def query(index: EmbeddingIndex, query_vector, k: int = DEFAULT_K) -> list[tuple[IndexEntry, float]]:
    """Top-``k`` entries by cosine similarity; ties keep insertion order."""
    q = np.asarray(query_vector, dtype=np.float64)
    if q.shape != (index.dimension,):
        raise DimensionMismatch(f"query has shape {q.shape}, index dimension is {index.dimension}")
    if index.empty or k < 1:
        return []
    scores = cosine_scores(index.vectors, q)
    order = np.argsort(-scores, kind="stable")[:k]
    return [(index.entries[i], float(scores[i])) for i in order]


# --- module discovery ------------------------------------------------------------

def discover_modules(repo_root) -> list[str]:
    """Maven module directories with production sources (``.`` for the root).

    Without any such module the top-level packages of the source root are used.
    """
    repo_root = Path(repo_root)
    found = []
    for dirpath, dirnames, filenames in os.walk(repo_root):
        dirnames[:] = sorted(d for d in dirnames if d not in SKIP_DIRS and d != "src")
        if "pom.xml" in filenames and (Path(dirpath) / "src" / "main" / "java").is_dir():
            rel = Path(dirpath).relative_to(repo_root).as_posix()
            found.append(rel or ".")
    if found:
        return found
    main = repo_root / "src" / "main" / "java"
    base = main if main.is_dir() else repo_root
    pkgs = [p for p in sorted(base.iterdir()) if p.is_dir() and p.name not in SKIP_DIRS
            and p.name != "test" and any(p.rglob("*.java"))] if base.is_dir() else []
    if pkgs:
        return [p.relative_to(repo_root).as_posix() for p in pkgs]
    return ["."]


# --- resolution loop -------------------------------------------------------------

@dataclass
class RetrievalBudget:
    max_iterations: int = 3
    embedded_modules: set = field(default_factory=set)

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


REWRITE_OPTION = ("If no remaining module is likely to declare a replacement, "
                  "reply REWRITE to retry with a rewritten search query instead.\n")


def _previous(q: Optional[str]) -> str:
    if not q:
        return ""
    return f"An earlier description found no suitable match: \"{q}\"\nWrite a different description.\n"


def _clean_reply(reply: str) -> str:
    for line in reply.splitlines():
        line = line.strip().strip("`'\"*").strip()
        if line:
            return line
    return ""


def format_candidates(hits) -> str:
    return "\n".join(f"{i}. {e.name} | {e.kind.value} | {e.signature} | {e.file_path} | {e.doc}"
                     for i, (e, _) in enumerate(hits, 1))


def parse_filter_reply(reply: str, hits) -> Optional[IndexEntry]:
    line = _clean_reply(reply)
    if not line or line.upper().startswith("NONE"):
        return None
    token = re.sub(r"\(.*$", "", line).strip().rstrip(".").strip()
    if token.isdigit():
        i = int(token)
        return hits[i - 1][0] if 1 <= i <= len(hits) else None
    for e, _ in hits:
        if e.name == token:
            return e
    for e, _ in hits:
        if re.search(r"(?<![\w$])" + re.escape(e.name) + r"(?![\w$])", line):
            return e
    return None


class Retriever:
    """Resolves unknown symbols against embedded modules of one repository.

    Indexes and the set of embedded modules live as long as the retriever
    (one update session); the iteration budget applies per call.
    """

    def __init__(self, repo_root, embedder: Embedder, gateway, budget: Optional[RetrievalBudget] = None,
                 k: int = DEFAULT_K, index_dir=None):
        self.repo_root = Path(repo_root)
        self.embedder = embedder
        self.gateway = gateway
        self.budget = budget or RetrievalBudget()
        self.k = k
        self.index_dir = Path(index_dir) if index_dir else None
        self.indexes: dict[str, EmbeddingIndex] = {}
        self.modules = discover_modules(self.repo_root)
        self.iterations_log: list[int] = []

    # model interactions

    def _pick_module(self, symbols, test_code, allow_rewrite: bool) -> Optional[str]:
        remaining = [m for m in self.modules if m not in self.budget.embedded_modules]
        if not remaining:
            return None
        reply = self.gateway.ask(
            "module_select",
            symbols=", ".join(symbols),
            test_code=test_code or "// (not available)",
            modules="\n".join(f"- {m}" for m in remaining),
            rewrite_option=REWRITE_OPTION if allow_rewrite else "",
        )
        choice = _clean_reply(reply).lstrip("- ").strip()
        if allow_rewrite and choice.upper().startswith("REWRITE"):
            return None
        for m in remaining:
            if choice == m or choice.rstrip("/") == m:
                return m
        return None if allow_rewrite else remaining[0]

    def _embed(self, module: str) -> EmbeddingIndex:
        cache = None
        if self.index_dir:
            slug = hashlib.sha256(f"{self.repo_root.resolve()}|{module}".encode()).hexdigest()[:16]
            cache = self.index_dir / f"{slug}.json"
            if cache.is_file():
                idx = EmbeddingIndex.load(cache)
                if idx.embedder_id == self.embedder.id:
                    self.indexes[module] = idx
                    self.budget.embedded_modules.add(module)
                    return idx
        idx = build_index(self.repo_root / module, self.embedder, self.repo_root)
        if cache is not None:
            self.index_dir.mkdir(parents=True, exist_ok=True)
            idx.save(cache)
        self.indexes[module] = idx
        self.budget.embedded_modules.add(module)
        return idx

    def _exact(self, symbol: str) -> Optional[IndexEntry]:
        for idx in self.indexes.values():
            for e in idx.entries:
                if e.name == symbol:
                    return e
        return None

    def _search(self, text: str) -> list[tuple[IndexEntry, float]]:
        q = self.embedder.embed([text])[0]
        hits = []
        for idx in self.indexes.values():
            if not idx.empty:
                hits.extend(query(idx, q, self.k))
        # stable sort keeps module order then insertion order on ties
        hits.sort(key=lambda h: -h[1])
        return hits[:self.k]

    def resolve_symbols(self, symbols: Sequence[str], task=None, test_code: str = ""):
        """Return ``(resolved: symbol -> ResolvedSymbol, unresolved names)``."""
        pending = list(dict.fromkeys(symbols))
        resolved: dict[str, ResolvedSymbol] = {}
        previous: dict[str, str] = {}
        if not test_code and task is not None:
            test_code = task.test_before
        next_module = None
        iteration = 0
        while pending and iteration < self.budget.max_iterations:
            iteration += 1
            if not self.indexes:
                next_module = self._pick_module(pending, test_code, allow_rewrite=False)
            if next_module is not None:
                self._embed(next_module)
                next_module = None
            for sym in list(pending):
                hit = self._exact(sym)
                if hit is not None:
                    resolved[sym] = hit.to_symbol()
                    pending.remove(sym)
            for sym in list(pending):
                q = self.gateway.ask("retrieval_query", symbol=sym, test_code=test_code or "// (not available)",
                                     previous_query=_previous(previous.get(sym))).strip()
                previous[sym] = q
                hits = self._search(q)
                if not hits:
                    continue
                reply = self.gateway.ask("retrieval_filter", symbol=sym, query=q, candidates=format_candidates(hits))
                choice = parse_filter_reply(reply, hits)
                if choice is not None:
                    resolved[sym] = choice.to_symbol()
                    pending.remove(sym)
            if pending and iteration < self.budget.max_iterations:
                next_module = self._pick_module(pending, test_code, allow_rewrite=True)
        self.iterations_log.append(iteration)
        unresolved = [s for s in dict.fromkeys(symbols) if s not in resolved]
        return resolved, unresolved
