import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from upr_audit.rater import (
    FULL, NONE, PARTIAL, LLMProvider, MockProvider, ParseError, Provider, Rating, RatingCache,
    RatingFailure, RecordLog, ReplayProvider, TransportError, build_prompt, get_profile,
    load_ratings, make_provider, mock_rating, parse_reply, rate_all, rate_statement, stmt_hash,
    write_ratings,
)
from upr_audit.rater.cache import read_records
from upr_audit.rater.prompts import INSTRUCTION, MALICIOUS_GOALS, statement_of

REFERENCE = Path(__file__).parents[1] / "paper.md"


def reference_goals() -> list[str]:
    text = REFERENCE.read_text(encoding="utf-8")
    found = re.findall(r"\\item\[\d\.\] (One can [^\n]+)", text)
    return list(dict.fromkeys(g.strip() for g in found))


# -- prompts ----------------------------------------------------------------------

def test_goals_match_reference_text():
    goals = reference_goals()
    assert len(goals) == 5
    assert list(MALICIOUS_GOALS) == [g.strip() for g in goals]


def test_instruction_verbatim_in_reference_text():
    text = " ".join(REFERENCE.read_text(encoding="utf-8").split())
    assert INSTRUCTION in text
    assert "Only reply with the criticalness rating and do not write explanation" in INSTRUCTION


def test_full_prompt_layout():
    p = build_prompt(FULL, "setuid(0);")
    assert p.startswith(INSTRUCTION)
    goals_part = p[p.index("1. "):p.index("\n\nsetuid(0);")]
    assert goals_part.startswith("1. One can bypass authentication and/or authorization")
    assert goals_part.endswith("5. One can steal secrets (keys, passwd, etc.)")
    assert p.endswith("\n\nsetuid(0);")


def test_partial_prompt_has_goals_four_and_five():
    p = build_prompt(PARTIAL, "x = 1;")
    assert PARTIAL.goals == MALICIOUS_GOALS[3:5]
    assert sum(g in p for g in MALICIOUS_GOALS) == 2


def test_none_prompt_omits_enumeration():
    p = build_prompt(NONE, "i = 0;")
    assert p == f"{INSTRUCTION}\n\ni = 0;"
    assert "Regarding" not in p and not any(g in p for g in MALICIOUS_GOALS)


def test_prompt_length_grows_with_profile():
    lens = [len(build_prompt(p, "x = y;").split()) for p in (NONE, PARTIAL, FULL)]
    assert lens[0] < lens[1] < lens[2]


def test_statement_of_inverts_build_prompt():
    for p in (FULL, PARTIAL, NONE):
        assert statement_of(build_prompt(p, "a = b;")) == "a = b;"


def test_unknown_profile():
    with pytest.raises(ValueError):
        get_profile("verbose")


@pytest.mark.parametrize("reply,value", [("7", 7), ("Rating: 10.", 10), ("  0\n", 0), ("9/10", 9)])
def test_parse_reply(reply, value):
    assert parse_reply(reply) == value


@pytest.mark.parametrize("reply", ["none of concern", "", "11", "-1", "rating: high"])
def test_parse_reply_rejects(reply):
    with pytest.raises(ParseError):
        parse_reply(reply)


# -- mock ------------------------------------------------------------------------

@pytest.mark.parametrize("stmt,value", [
    ("password = read_line();", 9),
    ("setuid(0);", 9),
    ("file_uid = st.st_uid;", 9),
    ("if (TOKEN_OK)", 9),
    ("keyboard = 1;", 0),
    ("fluid = 2;", 0),
    ("if (stat(path, &st) != 0)", 5),
    ("while (access(p, R_OK))", 5),
    ("fd = open(path, 0);", 0),
    ("i = 0;", 0),
])
def test_mock_table(stmt, value):
    assert mock_rating(stmt) == value


# -- cache -------------------------------------------------------------------------

def test_rating_validates_range():
    with pytest.raises(ValueError):
        Rating("x", 11, "mock", "full")
    with pytest.raises(ValueError):
        Rating("x", 2.5, "mock", "full")


def test_cache_reload_reconstructs_entries(tmp_path):
    path = tmp_path / "cache.jsonl"
    cache = RatingCache(path)
    cache.put(Rating("a = 1;", 3, "mock", "full"))
    cache.put(Rating("b = 2;", 0, "mock", "none", flagged=True))
    again = RatingCache(path)
    assert again.entries == cache.entries
    rec = read_records(path)[0]
    assert set(rec) == {"key", "stmt", "value", "flagged", "timestamp"}
    assert rec["key"] == {"stmt_hash": stmt_hash("a = 1;"), "provider": "mock", "profile": "full"}


def test_prewarmed_cache_issues_no_calls():
    cache = RatingCache()
    cache.put(Rating("s;", 9, "mock", "full"))
    provider = MockProvider()
    assert rate_statement(provider, FULL, "s;", cache).value == 9
    assert provider.calls == 0 and cache.hits == 1


def test_cache_keys_include_provider_and_profile():
    cache = RatingCache()
    cache.put(Rating("s;", 9, "mock", "full"))
    assert cache.get("s;", "mock", "none") is None
    assert cache.get("s;", "replay", "full") is None


# -- rate_statement / rate_all -----------------------------------------------------

class Scripted(Provider):
    name = "scripted"

    def __init__(self, replies):
        super().__init__()
        self.replies = list(replies)

    def complete(self, prompt, statement, profile):
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


def test_retry_then_success():
    p = Scripted(["hmm", "8"])
    r = rate_statement(p, FULL, "x;", RatingCache())
    assert r.value == 8 and not r.flagged and p.calls == 2


def test_parse_failure_falls_back_to_flagged_zero():
    p = Scripted(["no", "nope", "never"])
    r = rate_statement(p, FULL, "x;", RatingCache())
    assert (r.value, r.flagged) == (0, True) and p.calls == 3


def test_transport_failure_raises_after_retries():
    p = Scripted([TransportError("down")] * 3)
    with pytest.raises(TransportError):
        rate_statement(p, FULL, "x;", RatingCache())
    assert p.calls == 3


def test_mixed_failures_fall_back():
    p = Scripted([TransportError("down"), "??", TransportError("down")])
    r = rate_statement(p, FULL, "x;", RatingCache())
    assert r.flagged


def test_rate_all_empty():
    assert rate_all(MockProvider(), FULL, [], RatingCache()) == {}


def test_rate_all_fails_above_flag_tolerance():
    class Mumbler(Provider):
        name = "mumbler"

        def complete(self, prompt, statement, profile):
            return "?" if statement.startswith("bad") else "1"

    stmts = [f"ok{i};" for i in range(9)] + ["bad;"]
    ratings = rate_all(Mumbler(), FULL, stmts, RatingCache())  # 10% flagged is tolerated
    assert sum(r.flagged for r in ratings.values()) == 1
    with pytest.raises(RatingFailure) as exc:
        rate_all(Mumbler(), FULL, stmts[:8] + ["bad1;", "bad2;"], RatingCache())
    assert len(exc.value.ratings) == 10


def test_inflight_bound_respected():
    class Gauge(Provider):
        name = "gauge"

        def __init__(self):
            super().__init__()
            self.now = 0
            self.peak = 0
            self.lock = threading.Lock()

        def complete(self, prompt, statement, profile):
            with self.lock:
                self.now += 1
                self.peak = max(self.peak, self.now)
            time.sleep(0.01)
            with self.lock:
                self.now -= 1
            return "1"

    g = Gauge()
    rate_all(g, FULL, [f"s{i};" for i in range(24)], RatingCache(), max_inflight=3)
    assert 1 < g.peak <= 3


def test_every_prompt_holds_one_statement(tmp_path):
    log = RecordLog(tmp_path / "t.jsonl")
    stmts = ["a = 1;", "b = password;", "if (x)"]
    rate_all(MockProvider(), PARTIAL, stmts, RatingCache(), max_inflight=2, transcript=log)
    recs = read_records(tmp_path / "t.jsonl")
    assert len(recs) == 3
    for rec in recs:
        assert rec["prompt"] == build_prompt(PARTIAL, rec["stmt"])
        assert sum(s in rec["prompt"] for s in stmts) == 1


def test_cache_soundness_counts():
    cache = RatingCache()
    provider = MockProvider()
    stmts = ["a;", "b;", "c;"]
    cache.put(Rating("b;", 0, "mock", "full"))
    rate_all(provider, FULL, stmts, cache)
    assert provider.calls + cache.hits == len(stmts)


def test_ratings_file_round_trip(tmp_path):
    ratings = rate_all(MockProvider(), FULL, ["x = uid;", "y;"], RatingCache())
    write_ratings(ratings, tmp_path / "r.jsonl")
    assert load_ratings(tmp_path / "r.jsonl") == ratings


# -- replay ---------------------------------------------------------------------

def test_replay_answers_and_is_closed_world(tmp_path):
    log = RecordLog(tmp_path / "rec.jsonl")
    rate_all(MockProvider(), FULL, ["x = uid;", "y;"], RatingCache(), transcript=log)
    replay = ReplayProvider(tmp_path / "rec.jsonl")
    got = rate_all(replay, FULL, ["x = uid;", "y;"], RatingCache())
    assert {k: v.value for k, v in got.items()} == {"x = uid;": 9, "y;": 0}
    with pytest.raises(TransportError):
        rate_statement(replay, FULL, "never seen;", RatingCache())
    with pytest.raises(TransportError):
        rate_statement(replay, NONE, "y;", RatingCache())


def test_make_provider_validation():
    assert isinstance(make_provider("mock"), MockProvider)
    with pytest.raises(ValueError):
        make_provider("replay")
    with pytest.raises(ValueError):
        make_provider("llm")
    with pytest.raises(ValueError):
        make_provider("oracle")


# -- remote endpoint against a local server -----------------------------------------

class _Handler(BaseHTTPRequestHandler):
    requests: list = []
    status = 200
    reply = "7"

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).requests.append({"path": self.path, "body": body,
                                    "auth": self.headers.get("Authorization")})
        payload = json.dumps({"choices": [{"message": {"content": type(self).reply}}]}).encode()
        self.send_response(type(self).status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.requests = []
    _Handler.status = 200
    _Handler.reply = "7"
    srv = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    t = threading.Thread(target=srv.serve_forever, daemon=True)
    t.start()
    yield f"http://127.0.0.1:{srv.server_address[1]}/v1", _Handler
    srv.shutdown()
    srv.server_close()


def test_llm_provider_request_shape(server, monkeypatch):
    url, handler = server
    monkeypatch.setenv("UPR_LLM_API_KEY", "sk-test")
    p = LLMProvider(url, "some-model")
    r = rate_statement(p, FULL, "setuid(0);", RatingCache())
    assert r.value == 7 and r.provider == "llm"
    req = handler.requests[0]
    assert req["path"] == "/v1/chat/completions"
    assert req["auth"] == "Bearer sk-test"
    assert req["body"]["temperature"] == 0 and req["body"]["model"] == "some-model"
    assert req["body"]["max_tokens"] <= 8
    assert req["body"]["messages"] == [{"role": "user", "content": build_prompt(FULL, "setuid(0);")}]


def test_llm_provider_http_error_is_transport_error(server, monkeypatch):
    url, handler = server
    monkeypatch.delenv("UPR_LLM_API_KEY", raising=False)
    handler.status = 503
    p = LLMProvider(url, "m")
    with pytest.raises(TransportError):
        rate_statement(p, FULL, "x;", RatingCache())
    assert handler.requests[0]["auth"] is None and len(handler.requests) == 3


def test_llm_provider_unreachable():
    p = LLMProvider("http://127.0.0.1:9", "m", timeout=0.5)
    with pytest.raises(TransportError):
        rate_statement(p, FULL, "x;", RatingCache())
