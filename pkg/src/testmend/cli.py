"""Command line entry point: ``testmend update|detect|annotate|eval``.

Exit codes: 0 success, 1 partial (some session ended without a compiling
test, or aborted), 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from . import coverage_agent, mutation_agent
from .build import MavenAdapter, PhaseTimeouts, ReplayAdapter, Workspace
from .coordinator import SessionConfig, run_update_session
from .corpus import detect_outdated
from .errors import ConfigError, SessionAborted, TestmendError
from .evaluation import aggregate_metrics
from .javasrc import members, package_of, top_level_type
from .llm import ChatConfig, HttpChatBackend, LLMGateway, load_transcript
from .model import MethodRef, Phase, SessionResult, UpdateTask, decode, encode, from_json
from .reports import parse_coverage_report, parse_mutation_report
from .retrieval import HashEmbedder, HttpEmbedder, RetrievalBudget, Retriever

log = logging.getLogger("testmend")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


# --- configuration ---------------------------------------------------------------

@dataclass
class Config:
    path: str = "<defaults>"
    session: SessionConfig = field(default_factory=SessionConfig)
    llm: dict = field(default_factory=dict)
    adapter: dict = field(default_factory=dict)
    embedder: dict = field(default_factory=dict)
    retrieval: dict = field(default_factory=dict)


SECTIONS = {
    "session": {f.name for f in fields(SessionConfig)},
    "llm": {"backend", "model_id", "temperature", "max_output_tokens", "endpoint", "credential_env",
            "max_attempts", "backoff_base_s", "timeout_s", "transcript", "strict"},
    "adapter": {"kind", "mvn", "bundle", "commands", "reports", "timeouts"},
    "embedder": {"kind", "dimension", "endpoint", "model", "credential_env"},
    "retrieval": {"k", "index_dir"},
}


def load_config(path: Optional[str]) -> Config:
    if not path:
        return Config()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(path, "<file>", f"cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(path, "<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(path, "<root>", "expected an object")
    cfg = Config(path=str(path))
    base = Path(path).parent
    for section, value in data.items():
        if section not in SECTIONS:
            raise ConfigError(path, section, "unknown section")
        if not isinstance(value, dict):
            raise ConfigError(path, section, "expected an object")
        for key in value:
            if key not in SECTIONS[section]:
                raise ConfigError(path, f"{section}.{key}", "unknown key")
        if section == "session":
            try:
                cfg.session = SessionConfig(**value)
            except (TypeError, ValueError) as exc:
                raise ConfigError(path, "session", str(exc)) from None
        else:
            value = dict(value)
            for key in ("transcript", "bundle", "index_dir"):
                if isinstance(value.get(key), str):
                    value[key] = str(base / value[key])
            setattr(cfg, section, value)
    return cfg


def _secret(cfg: Config, section: str) -> str:
    var = getattr(cfg, section).get("credential_env")
    if not var:
        return ""
    if var not in os.environ:
        raise ConfigError(cfg.path, f"{section}.credential_env", f"environment variable {var} is not set")
    return os.environ[var]


def chat_config(cfg: Config) -> ChatConfig:
    llm = cfg.llm
    kwargs = {k: llm[k] for k in ("model_id", "temperature", "max_output_tokens", "endpoint", "max_attempts",
                                  "backoff_base_s", "timeout_s") if k in llm}
    return ChatConfig(**kwargs)


def make_backend(cfg: Config, transcript: Optional[str]):
    """A fresh chat backend; replay backends are per session so their queues do not interleave."""
    path = transcript or cfg.llm.get("transcript")
    backend = cfg.llm.get("backend", "replay" if path else "http")
    if transcript or backend == "replay":
        if not path:
            raise ConfigError(cfg.path, "llm.transcript", "replay backend needs a transcript")
        return load_transcript(path, strict=bool(cfg.llm.get("strict", False)))
    if backend != "http":
        raise ConfigError(cfg.path, "llm.backend", f"unknown backend {backend!r}")
    return HttpChatBackend()


def make_gateway(cfg: Config, transcript: Optional[str]) -> LLMGateway:
    backend = make_backend(cfg, transcript)
    config = chat_config(cfg)
    if isinstance(backend, HttpChatBackend):
        config = replace(config, credential=_secret(cfg, "llm"))
    return LLMGateway(backend, config)


def make_adapter(cfg: Config, bundle: Optional[str], log_dir: Optional[Path] = None):
    kind = "replay" if bundle else cfg.adapter.get("kind", "maven")
    if kind == "replay":
        path = bundle or cfg.adapter.get("bundle")
        if not path:
            raise ConfigError(cfg.path, "adapter.bundle", "replay adapter needs a bundle directory")
        return ReplayAdapter(path)
    if kind != "maven":
        raise ConfigError(cfg.path, "adapter.kind", f"unknown adapter {kind!r}")
    return MavenAdapter(cfg.adapter.get("mvn", "mvn"), cfg.adapter.get("commands"), cfg.adapter.get("reports"),
                        log_dir)


def make_timeouts(cfg: Config) -> PhaseTimeouts:
    try:
        return PhaseTimeouts(**cfg.adapter.get("timeouts", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(cfg.path, "adapter.timeouts", str(exc)) from None


def make_embedder(cfg: Config):
    kind = cfg.embedder.get("kind", "hash")
    if kind == "hash":
        return HashEmbedder(int(cfg.embedder.get("dimension", 256)))
    if kind == "http":
        for key in ("endpoint", "model"):
            if key not in cfg.embedder:
                raise ConfigError(cfg.path, f"embedder.{key}", "required for the http embedder")
        return HttpEmbedder(cfg.embedder["endpoint"], cfg.embedder["model"], _secret(cfg, "embedder"))
    raise ConfigError(cfg.path, "embedder.kind", f"unknown embedder {kind!r}")


# --- update ----------------------------------------------------------------------

def _read_manifest(path: str) -> list[dict]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(path, "<file>", f"cannot read: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(path, "<file>", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None
    tasks = data.get("tasks") if isinstance(data, dict) else None
    if not isinstance(tasks, list):
        raise ConfigError(path, "tasks", "expected a list")
    base = Path(path).parent
    out = []
    for i, entry in enumerate(tasks):
        for key in ("id", "task", "workspace"):
            if not isinstance(entry.get(key), str):
                raise ConfigError(path, f"tasks[{i}].{key}", "missing or not a string")
        ws = base / entry["workspace"]
        if not ws.is_dir():
            raise ConfigError(path, f"tasks[{i}].workspace", f"workspace {ws} does not exist")
        task_path = base / entry["task"]
        if not task_path.is_file():
            raise ConfigError(path, f"tasks[{i}].task", f"task file {task_path} does not exist")
        resolved = dict(entry, workspace=ws, task=task_path)
        if isinstance(entry.get("transcript"), str):
            resolved["transcript"] = str(base / entry["transcript"])
        out.append(resolved)
    return out


def _run_one(entry: dict, cfg: Config, args, clone: bool) -> dict:
    task = from_json(UpdateTask, Path(entry["task"]).read_text(encoding="utf-8"))
    root = Path(entry["workspace"])
    tmp = None
    if clone:
        tmp = tempfile.mkdtemp(prefix=f"testmend-{entry['id']}-")
        root = Path(shutil.copytree(root, Path(tmp) / "ws"))
    try:
        workspace = Workspace(root)
        gateway = make_gateway(cfg, entry.get("transcript") or args.transcript)
        adapter = make_adapter(cfg, args.replay_bundle, Path(args.out) / "logs" / entry["id"])
        retriever = Retriever(root, make_embedder(cfg), gateway,
                              RetrievalBudget(cfg.session.max_retrieval_iterations),
                              k=int(cfg.retrieval.get("k", 5)), index_dir=cfg.retrieval.get("index_dir"))
        try:
            result = run_update_session(task, cfg.session, gateway, adapter, workspace, retriever,
                                        timeouts=make_timeouts(cfg))
        except SessionAborted as exc:
            log.error("task %s aborted: %s", entry["id"], exc.cause)
            doc = {"id": entry["id"], "status": "aborted", "error": str(exc.cause),
                   "trace": encode(list(exc.trace))}
            return {"id": entry["id"], "status": "aborted", "doc": doc, "result": None}
        doc = {"id": entry["id"], "status": "completed", **encode(result)}
        return {"id": entry["id"], "status": "completed", "doc": doc, "result": result}
    finally:
        if tmp:
            shutil.rmtree(tmp, ignore_errors=True)


def cmd_update(args) -> int:
    cfg = load_config(args.config)
    entries = _read_manifest(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = max(1, args.jobs)
    if jobs == 1:
        runs = [_run_one(e, cfg, args, clone=False) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(lambda e: _run_one(e, cfg, args, clone=True), entries))
    summary_rows = []
    results = []
    for run in runs:
        (out / f"{run['id']}.json").write_text(json.dumps(run["doc"], indent=2, ensure_ascii=False) + "\n",
                                               encoding="utf-8")
        row = {"id": run["id"], "status": run["status"]}
        r: Optional[SessionResult] = run["result"]
        if r is not None:
            results.append(r)
            row.update(terminated_by=r.terminated_by.value, iterations_used=r.iterations_used,
                       best_phase=r.best_outcome.phase_reached.value)
        summary_rows.append(row)
    summary = {"tasks": summary_rows, "metrics": aggregate_metrics(results).as_dict() if results else None}
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    ok = all(run["result"] is not None and run["result"].best_outcome.phase_reached is not Phase.COMPILE_FAILED
             for run in runs)
    print(f"{len(runs)} task(s); traces in {out}")
    return EXIT_OK if ok else EXIT_PARTIAL


# --- detect ----------------------------------------------------------------------

def cmd_detect(args) -> int:
    cfg = load_config(args.config)
    for label, d in (("--pre", args.pre), ("--post", args.post)):
        if not Path(d).is_dir():
            raise ConfigError(d, label, "workspace directory does not exist")
    try:
        samples = json.loads(Path(args.tests).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(args.tests, "<file>", f"cannot load test list: {exc}") from None
    if isinstance(samples, dict):
        samples = samples.get("tests", [])
    adapter = make_adapter(cfg, args.replay_bundle)
    pre = Workspace(args.pre, args.pre_snapshot)
    post = Workspace(args.post, args.post_snapshot)
    verdicts = []
    for i, s in enumerate(samples):
        try:
            test_ref = decode(MethodRef, s["test"])
            focal = decode(MethodRef, s["focal"])
            focal_post = decode(MethodRef, s["focal_post"]) if s.get("focal_post") else None
        except (KeyError, TypeError) as exc:
            raise ConfigError(args.tests, f"[{i}]", f"malformed sample: {exc}") from None
        v = detect_outdated(pre, post, test_ref, focal, adapter, focal_post, make_timeouts(cfg))
        verdicts.append({"test": encode(test_ref), **encode(v)})
    text = json.dumps(verdicts, indent=2, ensure_ascii=False) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# --- annotate --------------------------------------------------------------------

def focal_ref(source_path: str, text: str, method: str, signature: Optional[str]) -> tuple[MethodRef, str]:
    cands = [m for m in members(text) if m.name == method and m.kind in ("method", "constructor")]
    if signature is not None:
        want = tuple(t.strip() for t in signature.split(",") if t.strip())
        cands = [m for m in cands if m.param_types == want]
    if not cands:
        raise ConfigError(source_path, "--method", f"method {method} not declared in source")
    m = cands[0]
    cls, _ = top_level_type(text)
    pkg = package_of(text)
    ref = MethodRef(source_path, f"{pkg}.{cls}" if pkg else cls, m.name, m.param_types, (m.start_line, m.end_line))
    lines = text.splitlines(keepends=True)[m.start_line - 1:m.end_line]
    return ref, "".join(lines)


def cmd_annotate(args) -> int:
    try:
        text = Path(args.source).read_text(encoding="utf-8")
        report = Path(args.report).read_bytes()
    except OSError as exc:
        raise ConfigError(exc.filename, "<file>", f"cannot read: {exc.strerror}") from None
    ref, method_src = focal_ref(args.source, text, args.method, args.signature)
    if not report.strip():
        sys.stdout.write(method_src)
        return EXIT_OK
    if args.mode == "coverage":
        facts = parse_coverage_report(report, ref)
        sys.stdout.write(coverage_agent.annotate_coverage(method_src, facts))
    else:
        facts = parse_mutation_report(report, ref)
        sys.stdout.write(mutation_agent.annotate_mutations(method_src, facts))
    return EXIT_OK


# --- eval ------------------------------------------------------------------------

def cmd_eval(args) -> int:
    d = Path(args.traces)
    if not d.is_dir():
        raise ConfigError(args.traces, "<dir>", "trace directory does not exist")
    results = []
    for p in sorted(d.glob("*.json")):
        doc = json.loads(p.read_text(encoding="utf-8"))
        if isinstance(doc, dict) and doc.get("status") == "completed":
            results.append(decode(SessionResult, doc))
    if not results:
        print("no completed session traces found")
        return EXIT_PARTIAL
    metrics = aggregate_metrics(results)
    print(metrics.table())
    if args.out:
        Path(args.out).write_text(json.dumps(metrics.as_dict(), indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


# --- entry -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="testmend", description="Update outdated Java unit tests with an LLM.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    u = sub.add_parser("update", help="run update sessions for every task in a manifest")
    u.add_argument("--config")
    u.add_argument("--manifest", required=True)
    u.add_argument("--replay-bundle")
    u.add_argument("--transcript")
    u.add_argument("--jobs", type=int, default=1)
    u.add_argument("--out", required=True)
    u.set_defaults(func=cmd_update)

    d = sub.add_parser("detect", help="three-round outdated-test detection")
    d.add_argument("--config")
    d.add_argument("--pre", required=True)
    d.add_argument("--post", required=True)
    d.add_argument("--tests", required=True, help="JSON list of {test, focal, focal_post?} method refs")
    d.add_argument("--pre-snapshot")
    d.add_argument("--post-snapshot")
    d.add_argument("--replay-bundle")
    d.add_argument("--out")
    d.set_defaults(func=cmd_detect)

    a = sub.add_parser("annotate", help="print a focal method annotated with a coverage or mutation report")
    a.add_argument("--report", required=True)
    a.add_argument("--source", required=True)
    a.add_argument("--method", required=True)
    a.add_argument("--signature", help="comma separated parameter types to pick an overload")
    a.add_argument("--mode", choices=("coverage", "mutation"), required=True)
    a.set_defaults(func=cmd_annotate)

    e = sub.add_parser("eval", help="aggregate metrics over a directory of session traces")
    e.add_argument("--traces", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TestmendError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTIAL


if __name__ == "__main__":
    sys.exit(main())
