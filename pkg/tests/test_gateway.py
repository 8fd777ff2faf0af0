import json
import threading

import pytest

from histeval.errors import EndpointError, ReplayMissError
from histeval.gateway import (
    EndpointConfig,
    Gateway,
    cache_key,
    key_from_entry,
    load_endpoints_file,
    wire_payload,
)


def chat_body(content: str) -> str:
    return json.dumps({"choices": [{"message": {"content": content}}]})


def make_transport(bodies):
    calls = []
    lock = threading.Lock()

    def transport(url, headers, payload, timeout):
        with lock:
            calls.append({"url": url, "headers": headers, "payload": payload})
            idx = min(len(calls) - 1, len(bodies) - 1)
        status, content = bodies[idx]
        return status, content

    transport.calls = calls
    return transport


def panicking_transport(url, headers, payload, timeout):
    raise AssertionError("network touched in replay mode")


ENDPOINT = EndpointConfig(
    endpoint_id="ep", base_url="http://localhost:0/v1", model_name="test-model"
)

MESSAGES = [{"role": "user", "text": "Say hi"}]


class TestCompleteAndCache:
    def test_second_identical_request_served_from_cache(self, tmp_path):
        transport = make_transport([(200, chat_body("hi"))])
        gateway = Gateway(tmp_path, transport=transport, backoff_base=0)
        assert gateway.complete(ENDPOINT, MESSAGES) == "hi"
        assert gateway.complete(ENDPOINT, MESSAGES) == "hi"
        assert len(transport.calls) == 1

    def test_replay_serves_without_network(self, tmp_path):
        recorder = Gateway(tmp_path, transport=make_transport([(200, chat_body("hi"))]),
                           backoff_base=0)
        recorder.complete(ENDPOINT, MESSAGES)
        replayer = Gateway(tmp_path, replay=True, transport=panicking_transport)
        assert replayer.complete(ENDPOINT, MESSAGES) == "hi"

    def test_replay_miss_names_key(self, tmp_path):
        gateway = Gateway(tmp_path, replay=True, transport=panicking_transport)
        key = cache_key(ENDPOINT, MESSAGES)
        with pytest.raises(ReplayMissError, match=key):
            gateway.complete(ENDPOINT, MESSAGES)

    def test_image_digest_changes_key(self, tmp_path):
        img_a = tmp_path / "a.png"
        img_b = tmp_path / "b.png"
        img_a.write_bytes(b"image-a")
        img_b.write_bytes(b"image-b")
        with_a = [{"role": "user", "text": "what?", "image": str(img_a)}]
        with_b = [{"role": "user", "text": "what?", "image": str(img_b)}]
        assert cache_key(ENDPOINT, with_a) != cache_key(ENDPOINT, with_b)
        assert cache_key(ENDPOINT, with_a) == cache_key(ENDPOINT, with_a)

    def test_key_recomputable_from_stored_entry(self, tmp_path):
        gateway = Gateway(tmp_path, transport=make_transport([(200, chat_body("ok"))]),
                          backoff_base=0)
        gateway.complete(ENDPOINT, MESSAGES)
        entries = list(tmp_path.glob("*.json"))
        assert len(entries) == 1
        entry = json.loads(entries[0].read_text())
        assert key_from_entry(entry) == entries[0].stem == entry["key"]

    def test_key_stable_literal(self):
        # canonical serialization pins keys across runs and platforms
        endpoint = EndpointConfig("e", "http://x/v1", "m")
        key = cache_key(endpoint, [{"role": "user", "text": "ping"}])
        assert key == cache_key(endpoint, [{"role": "user", "text": "ping"}])
        assert key == "131e88d65c470786159f115d5a95341ce1cc14d2c27f92204c4e7c702957d940"

    def test_no_temp_files_left(self, tmp_path):
        gateway = Gateway(tmp_path, transport=make_transport([(200, chat_body("ok"))]),
                          backoff_base=0)
        gateway.complete(ENDPOINT, MESSAGES)
        assert not list(tmp_path.glob("*.tmp"))


class TestRetries:
    def test_retries_on_5xx_then_succeeds(self, tmp_path):
        transport = make_transport([(500, "boom"), (502, "boom"), (200, chat_body("ok"))])
        gateway = Gateway(tmp_path, transport=transport, backoff_base=0)
        assert gateway.complete(ENDPOINT, MESSAGES) == "ok"
        assert len(transport.calls) == 3

    def test_429_retried(self, tmp_path):
        transport = make_transport([(429, "slow down"), (200, chat_body("ok"))])
        gateway = Gateway(tmp_path, transport=transport, backoff_base=0)
        assert gateway.complete(ENDPOINT, MESSAGES) == "ok"
        assert len(transport.calls) == 2

    def test_4xx_fails_fast(self, tmp_path):
        transport = make_transport([(404, "nope")])
        gateway = Gateway(tmp_path, transport=transport, backoff_base=0)
        with pytest.raises(EndpointError, match="404"):
            gateway.complete(ENDPOINT, MESSAGES)
        assert len(transport.calls) == 1

    def test_gives_up_after_max_retries(self, tmp_path):
        transport = make_transport([(500, "boom")])
        endpoint = EndpointConfig("ep", "http://x/v1", "m", max_retries=2)
        gateway = Gateway(tmp_path, transport=transport, backoff_base=0)
        with pytest.raises(EndpointError, match="giving up after 3 attempts"):
            gateway.complete(endpoint, MESSAGES)
        assert len(transport.calls) == 3

    def test_transport_exception_retried(self, tmp_path):
        state = {"n": 0}

        def flaky(url, headers, payload, timeout):
            state["n"] += 1
            if state["n"] == 1:
                raise ConnectionError("reset")
            return 200, chat_body("ok")

        gateway = Gateway(tmp_path, transport=flaky, backoff_base=0)
        assert gateway.complete(ENDPOINT, MESSAGES) == "ok"
        assert state["n"] == 2

    def test_missing_api_key_env_fails(self, tmp_path, monkeypatch):
        monkeypatch.delenv("HISTEVAL_TEST_KEY", raising=False)
        endpoint = EndpointConfig("ep", "http://x/v1", "m", api_key_env="HISTEVAL_TEST_KEY")
        gateway = Gateway(tmp_path, transport=make_transport([(200, chat_body("ok"))]),
                          backoff_base=0)
        with pytest.raises(EndpointError, match="HISTEVAL_TEST_KEY"):
            gateway.complete(endpoint, MESSAGES)

    def test_api_key_header_sent(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HISTEVAL_TEST_KEY", "secret")
        endpoint = EndpointConfig("ep", "http://x/v1", "m", api_key_env="HISTEVAL_TEST_KEY")
        transport = make_transport([(200, chat_body("ok"))])
        gateway = Gateway(tmp_path, transport=transport, backoff_base=0)
        gateway.complete(endpoint, MESSAGES)
        assert transport.calls[0]["headers"]["Authorization"] == "Bearer secret"


class TestBatch:
    def requests(self, n):
        return [[{"role": "user", "text": f"req-{i}"}] for i in range(n)]

    def test_order_preserved_and_independent_of_parallelism(self, tmp_path):
        reqs = self.requests(10)
        recorder = Gateway(
            tmp_path,
            transport=lambda url, h, payload, t: (
                200,
                chat_body("reply-" + payload["messages"][0]["content"].split("-")[1]),
            ),
            backoff_base=0,
        )
        recorded = recorder.batch(ENDPOINT, reqs, max_in_flight=3)
        assert recorded == [f"reply-{i}" for i in range(10)]
        serial = Gateway(tmp_path, replay=True).batch(ENDPOINT, reqs, max_in_flight=1)
        parallel = Gateway(tmp_path, replay=True).batch(ENDPOINT, reqs, max_in_flight=4)
        assert serial == parallel == recorded

    def test_partial_failure_positional(self, tmp_path):
        def transport(url, headers, payload, timeout):
            text = payload["messages"][0]["content"]
            if text == "req-1":
                return 400, "bad request"
            return 200, chat_body(text.upper())

        gateway = Gateway(tmp_path, transport=transport, backoff_base=0)
        out = gateway.batch(ENDPOINT, self.requests(3))
        assert out[0] == "REQ-0"
        assert isinstance(out[1], EndpointError)
        assert out[2] == "REQ-2"

    def test_empty_batch(self, tmp_path):
        gateway = Gateway(tmp_path, replay=True)
        assert gateway.batch(ENDPOINT, []) == []

    def test_max_in_flight_validated(self, tmp_path):
        gateway = Gateway(tmp_path, replay=True)
        with pytest.raises(EndpointError, match="max_in_flight"):
            gateway.batch(ENDPOINT, self.requests(2), max_in_flight=0)


class TestWireFormat:
    def test_text_only_content_is_string(self):
        payload = wire_payload(ENDPOINT, MESSAGES)
        assert payload["model"] == "test-model"
        assert payload["messages"][0]["content"] == "Say hi"

    def test_image_rides_as_data_url(self, tmp_path):
        img = tmp_path / "x.png"
        img.write_bytes(b"pngbytes")
        payload = wire_payload(ENDPOINT, [{"role": "user", "text": "what?", "image": str(img)}])
        parts = payload["messages"][0]["content"]
        assert parts[0] == {"type": "text", "text": "what?"}
        assert parts[1]["image_url"]["url"].startswith("data:image/png;base64,")


class TestEndpointConfigFile:
    def test_json_config(self, tmp_path):
        path = tmp_path / "endpoints.json"
        path.write_text(
            json.dumps(
                {
                    "endpoints": {
                        "gpt": {"base_url": "http://a/v1", "model_name": "gpt-x"},
                        "llama": {
                            "base_url": "http://b/v1",
                            "model_name": "llama-x",
                            "temperature": 0.5,
                            "max_retries": 1,
                        },
                    },
                    "proposal": "gpt",
                    "vqa": ["gpt", "llama"],
                    "baseline": "gpt",
                }
            )
        )
        cfg = load_endpoints_file(path)
        assert cfg["endpoints"]["llama"].temperature == 0.5
        assert cfg["vqa"] == ["gpt", "llama"]

    def test_toml_config(self, tmp_path):
        path = tmp_path / "endpoints.toml"
        path.write_text(
            'proposal = "gpt"\n'
            "[endpoints.gpt]\n"
            'base_url = "http://a/v1"\n'
            'model_name = "gpt-x"\n'
        )
        cfg = load_endpoints_file(path)
        assert cfg["endpoints"]["gpt"].model_name == "gpt-x"

    def test_negative_temperature_rejected(self):
        with pytest.raises(EndpointError, match="temperature"):
            EndpointConfig("e", "http://x", "m", temperature=-1.0)
