"""Web I/O tests: HTML text extraction, the fixture store, and the client's
replay/record/live behavior (all network interactions faked)."""

import json
import time

import pytest
import requests
from hypothesis import given
from hypothesis import strategies as st

import synth
from searchpipe.errors import (CapabilityError, FixtureMissError,
                               PreconditionError, StageError, TransportError)
from searchpipe.fixtures import FixtureMode, FixtureStore, fixture_key
from searchpipe.model import ImageKind, PipelineConfig
from searchpipe.webio import (CaptureMode, DuckDuckGoProvider, FetchResult,
                              HttpRenderer, WebClient, _decode_ddg_href,
                              extract_text, make_provider)


# ---------------------------------------------------------------------------
# extract_text

def test_extract_paragraph_boundaries():
    assert extract_text("<p>a</p><p>b</p>") == "a\n\nb"
    assert extract_text("<div>a</div><div>b</div>") == "a\n\nb"
    assert extract_text("<ul><li>x</li><li>y</li></ul>") == "x\n\ny"


def test_extract_inline_tags_do_not_split():
    assert extract_text("<p><span>a</span><b>b</b></p>") == "ab"


def test_extract_strips_boilerplate():
    html = ("<html><head><title>skip me</title></head><body>"
            "<nav>Home | About</nav><p>body text</p>"
            "<script>var x = 1;</script><style>p { color: red }</style>"
            "<noscript>enable js</noscript></body></html>")
    assert extract_text(html) == "body text"


def test_extract_keeps_img_alt():
    html = '<p>see <img alt="a chart"> here</p>'
    assert extract_text(html) == "see a chart here"
    assert extract_text('<p>x <img src="y.png"> z</p>') == "x z"


def test_extract_collapses_whitespace():
    assert extract_text("<p>a\n   b\t c</p>") == "a b c"


def test_extract_entities_decoded():
    assert extract_text("<p>ham &amp; eggs</p>") == "ham & eggs"


def test_extract_nested_and_stray_skip_tags():
    assert extract_text("<script>a<style>b</style>c</script>d") == "d"
    # stray close tags must not unskip real content later
    assert extract_text("</script></style><p>text</p>") == "text"
    assert extract_text("<script><div>hidden</div></script><p>shown</p>") \
        == "shown"


def test_extract_accepts_bytes():
    assert extract_text(b"<p>caf\xc3\xa9</p>") == "café"
    # invalid utf-8 is replaced, never fatal
    assert "x" in extract_text(b"<p>x\xff</p>")


@given(st.text(alphabet="<>/ab &;=\"'\n", max_size=300))
def test_extract_never_crashes_on_broken_markup(html):
    result = extract_text(html)
    assert isinstance(result, str)


# ---------------------------------------------------------------------------
# fixture store

def test_fixture_key_is_stable_and_order_insensitive():
    key = fixture_key("text_search", {"query": "q", "k": 8})
    assert key == fixture_key("text_search", {"k": 8, "query": "q"})
    assert len(key) == 64 and set(key) <= set("0123456789abcdef")
    assert key != fixture_key("text_search", {"query": "q", "k": 7})
    assert key != fixture_key("fetch_page", {"query": "q", "k": 8})


def test_fixture_store_round_trip(tmp_path):
    store = FixtureStore(tmp_path)
    key = fixture_key("fetch_page", {"url": "https://x.test/"})
    assert not store.exists("fetch_page", key, "bin")
    store.save_bytes("fetch_page", key, b"payload", ext="bin")
    assert store.exists("fetch_page", key, "bin")
    assert store.load_bytes("fetch_page", key, "bin") == b"payload"
    store.save_json("fetch_page", key, {"b": 2, "a": 1})
    assert store.load_json("fetch_page", key) == {"a": 1, "b": 2}


def test_fixture_store_overwrites_and_leaves_no_temp_files(tmp_path):
    store = FixtureStore(tmp_path)
    key = fixture_key("op", {"n": 1})
    store.save_bytes("op", key, b"one", ext="bin")
    store.save_bytes("op", key, b"two", ext="bin")
    assert store.load_bytes("op", key, "bin") == b"two"
    assert [p.name for p in (tmp_path / "op").iterdir()] == [f"{key}.bin"]


def test_fixture_miss_raises(tmp_path):
    store = FixtureStore(tmp_path)
    with pytest.raises(FixtureMissError) as info:
        store.load_bytes("render_screenshot", "0" * 64, "png")
    assert "render_screenshot" in str(info.value)
    assert "0" * 64 in str(info.value)


# ---------------------------------------------------------------------------
# provider and renderer plumbing

def test_decode_ddg_href():
    wrapped = "//duckduckgo.com/l/?uddg=https%3A%2F%2Fexample.com%2Fpage&rut=x"
    assert _decode_ddg_href(wrapped) == "https://example.com/page"
    assert _decode_ddg_href("https://plain.test/a") == "https://plain.test/a"


class _FakeResponse:
    def __init__(self, *, status=200, body=b"", url="", json_doc=None,
                 text=""):
        self.status_code = status
        self.content = body
        self.url = url
        self.text = text
        self._json = json_doc
        self.closed = False

    def iter_content(self, chunk_size):
        for i in range(0, len(self.content), chunk_size):
            yield self.content[i:i + chunk_size]

    def json(self):
        return self._json

    def close(self):
        self.closed = True


class _FakeSession:
    """Scripted requests.Session stand-in; records every call."""

    def __init__(self, handler):
        self.handler = handler
        self.calls = []

    def get(self, url, **kwargs):
        self.calls.append(("get", url, kwargs))
        return self.handler("get", url, kwargs)

    def post(self, url, **kwargs):
        self.calls.append(("post", url, kwargs))
        return self.handler("post", url, kwargs)


DDG_HTML = """
<div class="result">
 <a class="result__a" href="//duckduckgo.com/l/?uddg=https%3A%2F%2Fone.test%2F">First <b>Hit</b></a>
 <a class="result__snippet" href="#">about the  first hit</a>
</div>
<div class="result">
 <a class="result__a" href="https://two.test/page">Second</a>
 <a class="result__snippet" href="#">second snippet</a>
</div>
"""


def test_ddg_provider_parses_results():
    session = _FakeSession(lambda m, u, kw: _FakeResponse(text=DDG_HTML))
    provider = DuckDuckGoProvider(session=session)
    rows = provider.search("anything", 8)
    assert rows == [
        {"url": "https://one.test/", "title": "First Hit",
         "snippet": "about the first hit"},
        {"url": "https://two.test/page", "title": "Second",
         "snippet": "second snippet"},
    ]
    assert provider.search("anything", 1) == rows[:1]


def test_ddg_provider_http_error():
    session = _FakeSession(lambda m, u, kw: _FakeResponse(status=503))
    with pytest.raises(TransportError) as info:
        DuckDuckGoProvider(session=session).search("q", 8)
    assert info.value.status == 503


def test_make_provider():
    assert isinstance(make_provider("duckduckgo"), DuckDuckGoProvider)
    with pytest.raises(CapabilityError):
        make_provider("unknown_engine")


def test_http_renderer_payloads():
    seen = []

    def handler(method, url, kwargs):
        seen.append(kwargs["json"])
        return _FakeResponse(body=b"PNGBYTES")

    renderer = HttpRenderer("https://shots.test/render",
                            session=_FakeSession(handler))
    assert renderer.render("https://a.test/", width=1024, height=1024) \
        == b"PNGBYTES"
    assert renderer.render("https://a.test/", width=512, height=None) \
        == b"PNGBYTES"
    assert seen == [
        {"url": "https://a.test/", "width": 1024, "height": 1024},
        {"url": "https://a.test/", "width": 512, "full_page": True},
    ]


def test_http_renderer_error_status():
    session = _FakeSession(lambda m, u, kw: _FakeResponse(status=500))
    with pytest.raises(TransportError):
        HttpRenderer("https://shots.test/", session=session).render(
            "https://a.test/", width=512, height=None)


# ---------------------------------------------------------------------------
# WebClient: replay

def test_client_requires_store_outside_live_mode():
    with pytest.raises(PreconditionError):
        WebClient(mode=FixtureMode.REPLAY, store=None)
    with pytest.raises(PreconditionError):
        WebClient(mode="record", store=None)
    with pytest.raises(ValueError):
        WebClient(mode="bogus", store=None)
    WebClient(mode="live")  # no store needed


def test_replay_text_search(replay_client, corpus):
    record = corpus.by_id["q01"]
    briefs = replay_client.text_search(record.gt_requery)
    assert [b.rank for b in briefs] == list(range(1, 9))
    assert [b.url for b in briefs] == [w.url for w in record.websites]
    assert briefs[0].title == record.websites[0].title
    for brief in briefs:
        shot = brief.top_screenshot
        assert (shot.width, shot.height) == corpus.config.top_section_size
        assert shot.kind is ImageKind.TOP_SECTION_SCREENSHOT


def test_replay_text_search_k_validation(replay_client):
    with pytest.raises(PreconditionError):
        replay_client.text_search("whatever", 0)


def test_replay_miss_raises(replay_client):
    with pytest.raises(FixtureMissError):
        replay_client.text_search("never recorded query")
    with pytest.raises(FixtureMissError):
        replay_client.fetch_page("https://example.org/never/recorded")


def test_replay_fetch_page(replay_client, corpus):
    record = corpus.by_id["q01"]
    url = record.websites[0].url
    result = replay_client.fetch_page(url)
    assert result.final_url == url
    assert result.truncated is False
    assert record.gt_answer.encode() in result.body


def test_fetch_page_rejects_malformed_urls(replay_client):
    for bad in ("notaurl", "ftp://host/x", "http://", ""):
        with pytest.raises(PreconditionError):
            replay_client.fetch_page(bad)


def test_replay_render_screenshot(replay_client, corpus):
    url = corpus.by_id["q01"].websites[0].url
    top = replay_client.render_screenshot(url, CaptureMode.TOP_SECTION)
    assert top.kind is ImageKind.TOP_SECTION_SCREENSHOT
    assert (top.width, top.height) == corpus.config.top_section_size
    full = replay_client.render_screenshot(url, "full_page")
    assert full.kind is ImageKind.FULLPAGE_RAW
    assert full.width == corpus.config.fullpage_width
    assert full.height == sum(h for h, _ in synth.FULLPAGE_BANDS)


def test_build_full_content(replay_client, corpus):
    record = corpus.by_id["q01"]
    site = record.websites[0]
    content = replay_client.build_full_content(
        site.url, site.title, site.snippet, record.gt_requery)
    assert content.url == site.url
    assert record.gt_answer in content.retrieved_text
    assert "trackPage" not in content.retrieved_text
    assert "Home | Topics" not in content.retrieved_text
    assert "illustrative photo" in content.retrieved_text
    # 1536 raw rows slim to just over 576 content rows -> two segments
    assert len(content.fullpage_segments) == 2
    assert all(s.kind is ImageKind.FULLPAGE_SEGMENT
               for s in content.fullpage_segments)


def test_build_full_content_tags_failing_step(replay_client):
    with pytest.raises(StageError) as info:
        replay_client.build_full_content(
            "https://example.org/never/recorded", "t", "s", "q")
    assert info.value.stage == "fetch_page"
    assert isinstance(info.value.cause, FixtureMissError)


# ---------------------------------------------------------------------------
# WebClient: record and live (faked transports)

class _FakeProvider:
    name = "fake"

    def __init__(self, rows):
        self.rows = rows
        self.calls = 0

    def search(self, query, k):
        self.calls += 1
        return self.rows[:k]


class _FakeRenderer:
    def __init__(self, top_png, full_png):
        self.top_png = top_png
        self.full_png = full_png

    def render(self, url, *, width, height):
        return self.full_png if height is None else self.top_png


class _ExplodingSession:
    def get(self, *a, **kw):
        raise AssertionError("network touched in replay mode")

    post = get


def _page_session(body):
    return _FakeSession(
        lambda m, url, kw: _FakeResponse(body=body, url=url))


def _recording_client(tmp_path, body=b"<p>hello</p>", top_size=(800, 600)):
    rows = [{"url": f"https://site{i}.test/", "title": f"T{i}",
             "snippet": f"S{i}"} for i in range(8)]
    store = FixtureStore(tmp_path)
    # deliberately off-size top captures: both paths must resize identically
    renderer = _FakeRenderer(synth.checker_png(*top_size, cell=16),
                             synth.banded_png(512, [(64, True), (36, False)]))
    client = WebClient(
        mode=FixtureMode.RECORD, store=store, provider=_FakeProvider(rows),
        renderer=renderer, session=_page_session(body), host_interval_s=0.0)
    return client, store


def test_record_then_replay_is_equivalent(tmp_path):
    client, store = _recording_client(tmp_path)
    url = "https://site0.test/"
    recorded = (client.text_search("some query"),
                client.fetch_page(url),
                client.render_screenshot(url, CaptureMode.FULL_PAGE),
                client.build_full_content(url, "T0", "S0", "some query"))

    replayer = WebClient(mode=FixtureMode.REPLAY, store=store,
                         session=_ExplodingSession())
    replayed = (replayer.text_search("some query"),
                replayer.fetch_page(url),
                replayer.render_screenshot(url, CaptureMode.FULL_PAGE),
                replayer.build_full_content(url, "T0", "S0", "some query"))
    assert recorded == replayed


def test_record_mode_persists_fixtures(tmp_path):
    client, store = _recording_client(tmp_path)
    client.text_search("q")
    key = fixture_key("text_search", {"query": "q", "k": 8})
    rows = store.load_json("text_search", key)
    assert rows[0]["url"] == "https://site0.test/"
    shot_key = fixture_key("render_screenshot", {
        "url": "https://site0.test/", "mode": "top_section",
        "width": 1024, "height": 1024})
    assert store.exists("render_screenshot", shot_key, "png")


def test_live_mode_does_not_touch_store(tmp_path):
    rows = [{"url": "https://a.test/", "title": "t", "snippet": "s"}]
    renderer = _FakeRenderer(synth.checker_png(1024, 1024),
                             synth.checker_png(512, 64))
    client = WebClient(
        PipelineConfig(k_websites=1), mode=FixtureMode.LIVE,
        provider=_FakeProvider(rows), renderer=renderer,
        session=_page_session(b"x"), host_interval_s=0.0)
    briefs = client.text_search("q", 1)
    assert len(briefs) == 1
    assert client.store is None


def test_search_without_provider_fails_fast(tmp_path):
    client = WebClient(mode=FixtureMode.RECORD, store=FixtureStore(tmp_path),
                       host_interval_s=0.0)
    with pytest.raises(CapabilityError):
        client.text_search("q")


def test_render_without_renderer_fails_fast(tmp_path):
    client = WebClient(mode=FixtureMode.RECORD, store=FixtureStore(tmp_path),
                       host_interval_s=0.0)
    with pytest.raises(CapabilityError):
        client.render_screenshot("https://a.test/", CaptureMode.TOP_SECTION)


def test_fetch_truncates_at_cap(tmp_path, caplog):
    body = b"x" * 100_000
    client = WebClient(mode=FixtureMode.LIVE, session=_page_session(body),
                       fetch_cap=16_384, host_interval_s=0.0)
    with caplog.at_level("WARNING"):
        result = client.fetch_page("https://big.test/page")
    assert result.truncated is True
    assert len(result.body) == 16_384
    assert any("truncated" in m for m in caplog.messages)


def test_fetch_http_error_maps_to_transport(tmp_path):
    session = _FakeSession(
        lambda m, url, kw: _FakeResponse(status=404, url=url))
    client = WebClient(mode=FixtureMode.LIVE, session=session,
                       host_interval_s=0.0)
    with pytest.raises(TransportError) as info:
        client.fetch_page("https://gone.test/x")
    assert info.value.status == 404
    assert info.value.attempts == 1  # HTTP statuses are not retried
    assert len(session.calls) == 1


def test_fetch_retries_connection_errors(monkeypatch):
    sleeps = []
    monkeypatch.setattr(time, "sleep", sleeps.append)
    attempts = {"n": 0}

    def flaky(method, url, kwargs):
        attempts["n"] += 1
        if attempts["n"] < 3:
            raise requests.ConnectionError("transient")
        return _FakeResponse(body=b"ok", url=url)

    client = WebClient(mode=FixtureMode.LIVE, session=_FakeSession(flaky),
                       retries=2, host_interval_s=0.0)
    result = client.fetch_page("https://flaky.test/")
    assert result.body == b"ok"
    assert attempts["n"] == 3
    assert sleeps == [0.5, 1.0]  # exponential backoff


def test_fetch_exhausted_retries_raise_transport(monkeypatch):
    monkeypatch.setattr(time, "sleep", lambda s: None)

    def always_down(method, url, kwargs):
        raise requests.ConnectionError("down")

    client = WebClient(mode=FixtureMode.LIVE,
                       session=_FakeSession(always_down),
                       retries=2, host_interval_s=0.0)
    with pytest.raises(TransportError) as info:
        client.fetch_page("https://down.test/")
    assert info.value.attempts == 3


def test_throttle_spaces_same_host_requests(monkeypatch):
    sleeps = []
    monkeypatch.setattr(time, "sleep", sleeps.append)
    client = WebClient(mode=FixtureMode.LIVE, host_interval_s=5.0)
    client._throttle("https://same.test/a")
    client._throttle("https://same.test/b")
    client._throttle("https://other.test/c")
    assert len(sleeps) == 1
    assert 4.0 < sleeps[0] <= 5.0
