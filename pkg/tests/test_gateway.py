import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import httpx
import pytest

from legalkg.errors import BackendUnavailableError, CacheMissError, InvalidConfigError
from legalkg.gateway import CompletionRequest, Gateway, HttpBackend, ReplayStore, request_digest
from legalkg.mock import MockBackend


def test_digest_depends_on_model_prompt_temperature():
    d = request_digest("p", 0.0, "m")
    assert d == CompletionRequest("p", model_name="m").digest
    assert d != request_digest("p", 0.1, "m")
    assert d != request_digest("p", 0.0, "n")
    assert d != request_digest("q", 0.0, "m")
    # stage tag and output budget are not part of the key
    assert d == CompletionRequest("p", max_output=10, model_name="m", stage_tag="x").digest


class Counting:
    name = "counting"

    def __init__(self, reply="ok"):
        self.calls = 0
        self.reply = reply

    def generate(self, request):
        self.calls += 1
        return self.reply


def test_record_then_replay(tmp_path):
    store = ReplayStore(tmp_path)
    backend = Counting("answer <END>")
    rec = Gateway(backend, store, "record")
    req = CompletionRequest("hello", stage_tag="t", terminator="<END>")
    first = rec.complete(req)
    assert first.text == "answer <END>" and first.backend == "counting" and not first.truncated
    assert rec.complete(req).backend == "replay"
    assert backend.calls == 1
    index = (tmp_path / "index.tsv").read_text().splitlines()
    assert index == [f"{req.digest}\tt\t{req.digest}.txt"]

    replay = Gateway(None, ReplayStore(tmp_path), "replay")
    assert replay.complete(req).text == "answer <END>"
    with pytest.raises(CacheMissError) as info:
        replay.complete(CompletionRequest("other", stage_tag="coref:Person"))
    assert info.value.stage_tag == "coref:Person"


def test_truncation_flag():
    gw = Gateway(Counting("no terminator here"))
    assert gw.complete(CompletionRequest("x", terminator="<|COMPLETE|>")).truncated


def test_gateway_config_errors(tmp_path):
    with pytest.raises(InvalidConfigError):
        Gateway(Counting(), None, "record")
    with pytest.raises(InvalidConfigError):
        Gateway(None, ReplayStore(tmp_path), "record")
    with pytest.raises(InvalidConfigError):
        Gateway(Counting(), mode="sometimes")
    with pytest.raises(ValueError):
        Gateway(Counting()).complete(CompletionRequest(""))


def _transport(responses, seen):
    it = iter(responses)

    def handler(request):
        seen.append(json.loads(request.content))
        item = next(it)
        if isinstance(item, Exception):
            raise item
        return item

    return httpx.MockTransport(handler)


def test_http_retries_then_succeeds():
    seen, sleeps = [], []
    client = httpx.Client(transport=_transport(
        [httpx.Response(503), httpx.ConnectError("down"), httpx.Response(200, json={"response": "hi"})], seen))
    b = HttpBackend("http://x", client=client, sleep=sleeps.append)
    assert b.generate(CompletionRequest("p", model_name="m", max_output=7)) == "hi"
    assert sleeps == [1.0, 2.0]
    assert seen[0]["model"] == "m" and seen[0]["options"] == {"temperature": 0.0, "num_predict": 7}


def test_http_gives_up_after_three():
    sleeps = []
    client = httpx.Client(transport=_transport([httpx.Response(429)] * 3, []))
    b = HttpBackend("http://x", client=client, sleep=sleeps.append)
    with pytest.raises(BackendUnavailableError, match="3 attempts"):
        b.generate(CompletionRequest("p"))
    assert sleeps == [1.0, 2.0]


@pytest.mark.parametrize("resp", [httpx.Response(400, text="bad"), httpx.Response(200, json={"nope": 1})])
def test_http_non_retryable(resp):
    sleeps = []
    client = httpx.Client(transport=_transport([resp], []))
    with pytest.raises(BackendUnavailableError):
        HttpBackend("http://x", client=client, sleep=sleeps.append).generate(CompletionRequest("p"))
    assert sleeps == []


def test_openai_adapter():
    seen = []
    body = {"choices": [{"message": {"content": "done"}}]}
    client = httpx.Client(transport=_transport([httpx.Response(200, json=body)], seen))
    b = HttpBackend("http://x/", adapter="openai", client=client, model="served", auth_header="Bearer k")
    assert b.url == "http://x/v1/chat/completions"
    assert b.generate(CompletionRequest("p", model_name="m")) == "done"
    assert seen[0]["model"] == "served" and seen[0]["messages"] == [{"role": "user", "content": "p"}]
    assert client.headers["Authorization"] == "Bearer k"


def test_http_against_local_server():
    hits = []

    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            hits.append(json.loads(self.rfile.read(int(self.headers["Content-Length"]))))
            code = 500 if len(hits) == 1 else 200
            payload = json.dumps({"response": "served"}).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = HTTPServer(("127.0.0.1", 0), Handler)
    t = threading.Thread(target=server.serve_forever, daemon=True)
    t.start()
    try:
        b = HttpBackend(f"http://127.0.0.1:{server.server_port}", backoff=0.01, timeout=5)
        assert b.generate(CompletionRequest("ping")) == "served"
        assert len(hits) == 2 and hits[1]["prompt"] == "ping"
    finally:
        server.shutdown()


def test_mock_echo_and_fixtures():
    req = CompletionRequest("say this", stage_tag="misc")
    assert MockBackend().generate(req) == "say this"
    assert MockBackend(fixtures={req.digest: "fixed"}).generate(req) == "fixed"
    with pytest.raises(BackendUnavailableError):
        MockBackend(echo=False).generate(req)
