import json
import urllib.error
import urllib.request

import pytest

from chatctl.server import ChatServer

GREETING_VARIANTS = {"Hey! Chào bạn <3 !", "Chào bạn !", "Xin chào !"}


@pytest.fixture(scope="module")
def server(engine):
    srv = ChatServer(engine, host="127.0.0.1", port=0, global_seed=1)
    srv.start()
    yield srv
    srv.stop()


@pytest.fixture(scope="module")
def base(server):
    host, port = server.address
    return f"http://{host}:{port}"


def get(url):
    with urllib.request.urlopen(url) as response:
        return response.status, dict(response.headers), json.loads(response.read())


def post(url, payload=None, raw=None):
    body = raw if raw is not None else json.dumps(payload).encode("utf-8")
    request = urllib.request.Request(
        url, data=body, headers={"Content-Type": "application/json"}, method="POST"
    )
    with urllib.request.urlopen(request) as response:
        return response.status, dict(response.headers), json.loads(response.read())


class TestHealth:
    def test_ok_with_fingerprint(self, base, engine):
        status, _, payload = get(f"{base}/health")
        assert status == 200
        assert payload == {
            "status": "ok",
            "model_fingerprint": engine.domain.fingerprint(),
        }


class TestChat:
    def test_greeting_round_trip(self, base):
        status, _, payload = post(
            f"{base}/webhooks/chat", {"sender": "u1", "message": "xin chào"}
        )
        assert status == 200
        assert isinstance(payload, list) and len(payload) >= 1
        for item in payload:
            assert set(item) == {"recipient_id", "text"}
            assert item["recipient_id"] == "u1"
        assert payload[0]["text"] in GREETING_VARIANTS

    def test_conversation_state_persists_per_sender(self, base):
        post(f"{base}/webhooks/chat", {"sender": "state", "message": "học phần là cái gì"})
        status, _, payload = get(f"{base}/conversations/state/tracker")
        assert status == 200
        assert payload["last_action_chain"][0] == "action_dn"
        assert payload["last_intent_ranking"][0][0] == "dinhNghia"

    def test_malformed_json_is_400(self, base):
        with pytest.raises(urllib.error.HTTPError) as exc:
            post(f"{base}/webhooks/chat", raw=b"{not json")
        assert exc.value.code == 400
        assert "error" in json.loads(exc.value.read())

    def test_missing_fields_is_400(self, base):
        with pytest.raises(urllib.error.HTTPError) as exc:
            post(f"{base}/webhooks/chat", {"sender": "u1"})
        assert exc.value.code == 400

    def test_server_survives_bad_requests(self, base):
        for _ in range(3):
            with pytest.raises(urllib.error.HTTPError):
                post(f"{base}/webhooks/chat", raw=b"\xff\xfe garbage")
        status, _, _ = get(f"{base}/health")
        assert status == 200


class TestParse:
    def test_intent_and_entities(self, base):
        status, _, payload = get(f"{base}/model/parse?q=h%E1%BB%8Dc%20ph%E1%BA%A7n%20l%C3%A0%20c%C3%A1i%20g%C3%AC")
        assert status == 200
        assert set(payload) == {"intent_ranking", "entities"}
        assert payload["intent_ranking"][0]["name"] == "dinhNghia"
        assert 0.0 <= payload["intent_ranking"][0]["confidence"] <= 1.0
        (entity,) = payload["entities"]
        assert set(entity) == {"entity", "raw_value", "value", "start", "end"}
        assert entity["entity"] == "dn"
        assert entity["value"] == "học phần"
        assert entity["start"] == 0

    def test_missing_query_is_400(self, base):
        with pytest.raises(urllib.error.HTTPError) as exc:
            get(f"{base}/model/parse")
        assert exc.value.code == 400


class TestRestart:
    def test_round_trip_resets_slots(self, base):
        post(f"{base}/webhooks/chat", {"sender": "r1", "message": "thầy nguyễn văn an dạy môn gì"})
        status, _, payload = post(f"{base}/conversations/r1/restart")
        assert status == 200
        assert payload == {"status": "restarted"}
        _, _, view = get(f"{base}/conversations/r1/tracker")
        assert all(value is None for value in view["slots"].values())
        assert view["last_action"] is None


class TestProtocol:
    def test_unknown_endpoint_is_404_json(self, base):
        with pytest.raises(urllib.error.HTTPError) as exc:
            get(f"{base}/nope")
        assert exc.value.code == 404
        assert "error" in json.loads(exc.value.read())

    def test_cors_headers_present(self, base):
        _, headers, _ = get(f"{base}/health")
        assert headers.get("Access-Control-Allow-Origin") == "*"

    def test_options_preflight(self, base):
        request = urllib.request.Request(f"{base}/webhooks/chat", method="OPTIONS")
        with urllib.request.urlopen(request) as response:
            assert response.status == 204
            assert response.headers["Access-Control-Allow-Methods"] == "GET, POST, OPTIONS"

    def test_concurrent_senders_are_isolated(self, base):
        import concurrent.futures

        def talk(sender):
            post(f"{base}/webhooks/chat", {"sender": sender, "message": "học phần là cái gì"})
            _, _, view = get(f"{base}/conversations/{sender}/tracker")
            return view["sender_id"]

        with concurrent.futures.ThreadPoolExecutor(max_workers=4) as pool:
            results = list(pool.map(talk, [f"c{i}" for i in range(8)]))
        assert results == [f"c{i}" for i in range(8)]


class TestStaticMount:
    def test_serves_files_and_guards_traversal(self, engine, tmp_path):
        (tmp_path / "index.html").write_text("<html>ui</html>", encoding="utf-8")
        server = ChatServer(engine, host="127.0.0.1", port=0, static_dir=str(tmp_path))
        server.start()
        try:
            host, port = server.address
            with urllib.request.urlopen(f"http://{host}:{port}/") as response:
                assert b"ui" in response.read()
            with pytest.raises(urllib.error.HTTPError) as exc:
                urllib.request.urlopen(f"http://{host}:{port}/../etc/passwd")
            assert exc.value.code == 404
        finally:
            server.stop()
