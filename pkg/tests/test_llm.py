import json
import threading

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import FIXTURES, load_task
from testmend.errors import (MissingPlaceholder, ProviderRejected, ReplayMiss, TranscriptError, TransportExhausted,
                             UnknownTemplate)
from testmend.errors_agent import annotate_errors
from testmend.llm import (TEMPLATE_IDS, ChatConfig, HttpChatBackend, LLMGateway, PromptTemplate, RecordingBackend,
                          ReplayBackend, TemplateCatalog, binding_digest, default_catalog, load_transcript, render)
from testmend.model import Diagnostic, DiagnosticKind
from testmend.update import update_bindings
from testmend.preprocess import FilteredContext

GOLDEN = FIXTURES / "golden"


def full_update_bindings(task):
    ctx = FilteredContext(task.diff_hunks, task.non_test_methods, task.class_variables)
    return update_bindings(task, ctx, None)


def test_catalog_has_every_agent_template():
    cat = default_catalog()
    for tid in TEMPLATE_IDS:
        assert cat[tid].required_placeholders, tid
    with pytest.raises(UnknownTemplate):
        cat["nope"]


def test_render_embeds_test_verbatim_and_leaves_no_markers():
    task = load_task("sniffy")
    text = render("test_update", full_update_bindings(task))
    assert task.test_before in text
    assert "{{" not in text and "}}" not in text


def test_render_missing_binding_names_key():
    bindings = full_update_bindings(load_task("sniffy"))
    del bindings["instructions"]
    with pytest.raises(MissingPlaceholder) as info:
        render("test_update", bindings)
    assert info.value.name == "instructions"


def test_extra_bindings_are_ignored():
    t = PromptTemplate.from_body("x", "a {{b}} c")
    assert t.render({"b": "B", "zzz": "ignored"}) == "a B c"


def test_bound_values_are_not_rescanned():
    t = PromptTemplate.from_body("x", "{{a}}|{{b}}")
    assert t.render({"a": "{{b}}", "b": "2"}) == "{{b}}|2"


@given(st.dictionaries(st.sampled_from(["a", "b", "c"]), st.text(max_size=20), min_size=3))
def test_render_is_pure(bindings):
    t = PromptTemplate.from_body("x", "<{{a}}><{{ b }}><{{c}}><{{a}}>")
    out = t.render(bindings)
    assert out == t.render(dict(bindings))
    assert out == f"<{bindings['a']}><{bindings['b']}><{bindings['c']}><{bindings['a']}>"


def error_analyze_bindings():
    task = load_task("wikidata")
    diag = Diagnostic(DiagnosticKind.ASSERTION_FAILURE, "ComparisonFailure", line=3,
                      expected="http://wikiba.se/ontology#String",
                      actual="http://www.wikidata.org/ontology#propertyTypeString")
    return {"annotated_test": annotate_errors(task.test_before, [diag]),
            "failures": "- [assertion_failure] line 3: expected http://wikiba.se/ontology#String but was "
                        "http://www.wikidata.org/ontology#propertyTypeString"}


def test_error_analyze_rendering_matches_golden():
    text = render("error_analyze", error_analyze_bindings())
    assert "// ASSERTION FAILED: expected <http://wikiba.se/ontology#String>" in text
    assert text == (GOLDEN / "error_analyze_wikidata.txt").read_text(encoding="utf-8")


def test_custom_catalog_directory(tmp_path):
    (tmp_path / "greet.txt").write_text("hi {{name}}", encoding="utf-8")
    cat = TemplateCatalog(tmp_path)
    assert render("greet", {"name": "ann"}, cat) == "hi ann"


# --- replay ----------------------------------------------------------------------

PING = PromptTemplate.from_body("ping", "symbols {{symbols}} in {{modules}}")


def small_catalog():
    cat = TemplateCatalog.__new__(TemplateCatalog)
    cat.templates = {"ping": PING}
    return cat


def gateway_with(records, strict=False):
    return LLMGateway(ReplayBackend(records, strict=strict), catalog=small_catalog())


def record_for(gw, tid, bindings, response):
    p = gw.prompt(tid, bindings)
    return {"template_id": tid, "binding_digest": p.binding_digest, "response_text": response}


def test_replay_identity_and_miss():
    gw = LLMGateway(ReplayBackend(), catalog=small_catalog())
    rec = record_for(gw, "ping", {"symbols": "x", "modules": "a"}, "OK")
    gw = gateway_with([rec])
    assert gw.ask("ping", symbols="x", modules="a") == "OK"
    with pytest.raises(ReplayMiss):
        gw.ask("ping", symbols="y", modules="a")


def test_transcript_three_distinct_prompts(tmp_path):
    probe = LLMGateway(ReplayBackend(), catalog=small_catalog())
    recs = [record_for(probe, "ping", {"symbols": s, "modules": "m"}, s.upper()) for s in "abc"]
    path = tmp_path / "t.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in recs), encoding="utf-8")
    gw = LLMGateway(load_transcript(path), catalog=small_catalog())
    assert [gw.ask("ping", symbols=s, modules="m") for s in "cab"] == ["C", "A", "B"]


def test_duplicate_digests_served_in_order_then_miss(tmp_path):
    probe = LLMGateway(ReplayBackend(), catalog=small_catalog())
    recs = [record_for(probe, "ping", {"symbols": "s", "modules": "m"}, r) for r in ("first", "second")]
    path = tmp_path / "t.jsonl"
    path.write_text("\n".join(json.dumps(r) for r in recs), encoding="utf-8")
    gw = LLMGateway(load_transcript(path), catalog=small_catalog())
    calls = [gw.ask("ping", symbols="s", modules="m") for _ in range(2)]
    assert calls == ["first", "second"]
    with pytest.raises(ReplayMiss):
        gw.ask("ping", symbols="s", modules="m")


def test_empty_transcript_always_misses(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    gw = LLMGateway(load_transcript(path), catalog=small_catalog())
    with pytest.raises(ReplayMiss):
        gw.ask("ping", symbols="s", modules="m")


@pytest.mark.parametrize("body, lineno", [
    ('{"template_id": "a", "binding_digest": "b", "response_text": "c"}\n{broken\n', 2),
    ('\n\n[1, 2]\n', 3),
    ('{"template_id": "a", "binding_digest": "b"}\n', 1),
])
def test_malformed_transcript_reports_line(tmp_path, body, lineno):
    path = tmp_path / "bad.jsonl"
    path.write_text(body, encoding="utf-8")
    with pytest.raises(TranscriptError) as info:
        load_transcript(path)
    assert info.value.lineno == lineno


def test_digest_keys_on_bindings_not_cosmetics():
    a = PromptTemplate.from_body("t", "Please: {{x}}")
    b = PromptTemplate.from_body("t", "Kindly do this: {{x}}\n")
    assert binding_digest(a, {"x": "1"}) == binding_digest(b, {"x": "1"})
    assert binding_digest(a, {"x": "1"}) != binding_digest(a, {"x": "2"})


def test_strict_mode_pins_prompt_bytes():
    inner = ReplayBackend([{"template_id": "ping", "binding_digest": "*", "response_text": "r"}])
    recorder = RecordingBackend(inner, strict=True)
    LLMGateway(recorder, catalog=small_catalog()).ask("ping", symbols="s", modules="m")
    strict = LLMGateway(ReplayBackend(recorder.records, strict=True), catalog=small_catalog())
    assert strict.ask("ping", symbols="s", modules="m") == "r"
    lax = LLMGateway(ReplayBackend(recorder.records), catalog=small_catalog())
    with pytest.raises(ReplayMiss):
        lax.ask("ping", symbols="s", modules="m")


def test_recording_dump_round_trips(tmp_path):
    inner = ReplayBackend([{"template_id": "ping", "binding_digest": "*", "response_text": r}
                           for r in ("x", "y")])
    rec = RecordingBackend(inner)
    gw = LLMGateway(rec, catalog=small_catalog())
    gw.ask("ping", symbols="1", modules="m")
    gw.ask("ping", symbols="2", modules="m")
    rec.dump(tmp_path / "t.jsonl")
    replay = LLMGateway(load_transcript(tmp_path / "t.jsonl"), catalog=small_catalog())
    assert replay.ask("ping", symbols="2", modules="m") == "y"
    assert replay.ask("ping", symbols="1", modules="m") == "x"


def test_replay_backend_is_thread_safe():
    n = 200
    backend = ReplayBackend([{"template_id": "ping", "binding_digest": "*", "response_text": str(i)}
                             for i in range(n)])
    gw = LLMGateway(backend, catalog=small_catalog())
    got = []
    lock = threading.Lock()

    def worker():
        for _ in range(n // 4):
            r = gw.ask("ping", symbols="s", modules="m")
            with lock:
                got.append(r)

    threads = [threading.Thread(target=worker) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(got, key=int) == [str(i) for i in range(n)]
    assert backend.remaining() == 0


# --- live backend with fault injection ---------------------------------------------

def ok_body(text="done", usage=True):
    body = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if usage:
        body["usage"] = {"prompt_tokens": 3, "completion_tokens": 1}
    return body


class Script:
    """httpx transport answering from a list of (status | exception) steps."""

    def __init__(self, steps):
        self.steps = list(steps)
        self.requests = []

    def __call__(self, request):
        self.requests.append(request)
        step = self.steps.pop(0)
        if isinstance(step, Exception):
            raise step
        if step == 200:
            return httpx.Response(200, json=ok_body())
        return httpx.Response(step, text="oops")


def live(steps, **cfg):
    script = Script(steps)
    sleeps = []
    backend = HttpChatBackend(httpx.Client(transport=httpx.MockTransport(script)), sleep=sleeps.append)
    gw = LLMGateway(backend, ChatConfig(endpoint="http://llm.test/v1/chat/completions", credential="k", **cfg),
                    catalog=small_catalog())
    return gw, backend, script, sleeps


def test_two_5xx_then_success():
    gw, backend, script, sleeps = live([503, 502, 200])
    assert gw.ask("ping", symbols="s", modules="m") == "done"
    assert backend.attempts == 3
    assert sleeps == [1.0, 2.0]
    sent = json.loads(script.requests[0].content)
    assert sent["temperature"] == 0.0 and sent["model"] == "gpt-4.1"
    assert sent["messages"][0]["role"] == "user"
    assert script.requests[0].headers["authorization"] == "Bearer k"


def test_transport_errors_are_retried_then_exhausted():
    err = httpx.ConnectError("refused")
    gw, backend, _, sleeps = live([err, err, err])
    with pytest.raises(TransportExhausted):
        gw.ask("ping", symbols="s", modules="m")
    assert backend.attempts == 3 and len(sleeps) == 2


def test_4xx_is_terminal():
    gw, backend, _, sleeps = live([400, 200])
    with pytest.raises(ProviderRejected) as info:
        gw.ask("ping", symbols="s", modules="m")
    assert info.value.status == 400
    assert backend.attempts == 1 and sleeps == []


def test_default_temperature_is_zero():
    assert ChatConfig().temperature == 0
