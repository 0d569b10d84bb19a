"""Search provider client, page fetching, text extraction, and rendering.

All network-facing calls go through :class:`WebClient`, which layers the
fixture store on top: ``replay`` answers from fixtures only, ``record``
performs live calls and persists every response, ``live`` skips the store.
"""

from __future__ import annotations

import io
import logging
import threading
import time
from dataclasses import dataclass
from enum import Enum
from html.parser import HTMLParser
from typing import Callable, Protocol, runtime_checkable
from urllib.parse import parse_qs, unquote, urlsplit

import requests
from PIL import Image

from .errors import (CapabilityError, PreconditionError, SearchPipeError,
                     StageError, TransportError)
from .fixtures import FixtureMode, FixtureStore, fixture_key
from .imaging import segment_fullpage, slim_screenshot
from .model import (BriefResult, FullWebsiteContent, ImageAsset, ImageKind,
                    PipelineConfig)
from .retrieval import retrieve_relevant

log = logging.getLogger(__name__)

USER_AGENT = "searchpipe/0.1 (research pipeline; see repository for contact)"
FETCH_CAP_BYTES = 5 * 1024 * 1024


# ---------------------------------------------------------------------------
# HTML to text

_SKIP_TAGS = frozenset({
    "script", "style", "nav", "noscript", "head", "template", "iframe",
    "svg", "canvas",
})
_BLOCK_TAGS = frozenset({
    "address", "article", "aside", "blockquote", "br", "dd", "div", "dl",
    "dt", "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2",
    "h3", "h4", "h5", "h6", "header", "hr", "li", "main", "ol", "p", "pre",
    "section", "table", "tbody", "td", "tfoot", "th", "thead", "tr", "ul",
})


class _TextExtractor(HTMLParser):
    """Boilerplate-stripping visitor; tolerant of arbitrarily broken markup."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self._skip_depth = 0
        self._paragraphs: list[str] = []
        self._buffer: list[str] = []

    def handle_starttag(self, tag, attrs):
        if tag in _SKIP_TAGS:
            self._skip_depth += 1
            return
        if self._skip_depth:
            return
        if tag == "img":
            alt = dict(attrs).get("alt")
            if alt:
                self._buffer.append(f" {alt} ")
        if tag in _BLOCK_TAGS:
            self._flush()

    def handle_endtag(self, tag):
        if tag in _SKIP_TAGS:
            # floor at zero so stray close tags cannot unskip real content
            self._skip_depth = max(0, self._skip_depth - 1)
        elif not self._skip_depth and tag in _BLOCK_TAGS:
            self._flush()

    def handle_data(self, data):
        if not self._skip_depth:
            self._buffer.append(data)

    def _flush(self):
        text = " ".join("".join(self._buffer).split())
        if text:
            self._paragraphs.append(text)
        self._buffer.clear()

    def text(self) -> str:
        self._flush()
        return "\n\n".join(self._paragraphs)


def extract_text(html: bytes | str) -> str:
    """Visible text of a page: scripts, styles, and nav chrome removed,
    image alt text kept, paragraph boundaries preserved as blank lines."""
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    extractor = _TextExtractor()
    extractor.feed(html)
    extractor.close()
    return extractor.text()


# ---------------------------------------------------------------------------
# Provider and renderer contracts

@runtime_checkable
class SearchProvider(Protocol):
    """Text search backend: returns rank-ordered result rows."""

    name: str

    def search(self, query: str, k: int) -> list[dict[str, str]]:
        """Return up to ``k`` dicts with ``url``, ``title``, ``snippet``."""
        ...


@runtime_checkable
class Renderer(Protocol):
    """Screenshot backend: headless browser behind an HTTP contract."""

    def render(self, url: str, *, width: int, height: int | None) -> bytes:
        """Return PNG bytes; ``height=None`` asks for a full-page capture."""
        ...


def _decode_ddg_href(href: str) -> str:
    # DuckDuckGo's HTML endpoint wraps result links in a redirect with the
    # target URL-encoded in the "uddg" parameter
    if href.startswith("//"):
        href = "https:" + href
    query = urlsplit(href).query
    wrapped = parse_qs(query).get("uddg")
    if wrapped:
        return unquote(wrapped[0])
    return href


class _DdgResultParser(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.results: list[dict[str, str]] = []
        self._title_parts: list[str] | None = None
        self._snippet_parts: list[str] | None = None
        self._current: dict[str, str] | None = None

    @staticmethod
    def _classes(attrs) -> set[str]:
        return set((dict(attrs).get("class") or "").split())

    def handle_starttag(self, tag, attrs):
        classes = self._classes(attrs)
        if tag == "a" and "result__a" in classes:
            self._finish()
            href = dict(attrs).get("href") or ""
            self._current = {"url": _decode_ddg_href(href), "title": "",
                             "snippet": ""}
            self._title_parts = []
        elif "result__snippet" in classes and self._current is not None:
            self._snippet_parts = []

    def handle_endtag(self, tag):
        if tag == "a" and self._title_parts is not None:
            assert self._current is not None
            self._current["title"] = " ".join(
                "".join(self._title_parts).split())
            self._title_parts = None
        elif tag in ("a", "div", "td", "span") and self._snippet_parts is not None:
            assert self._current is not None
            self._current["snippet"] = " ".join(
                "".join(self._snippet_parts).split())
            self._snippet_parts = None

    def handle_data(self, data):
        if self._title_parts is not None:
            self._title_parts.append(data)
        elif self._snippet_parts is not None:
            self._snippet_parts.append(data)

    def _finish(self):
        if self._current is not None and self._current["url"]:
            self.results.append(self._current)
        self._current = None

    def close(self):
        super().close()
        self._finish()


class DuckDuckGoProvider:
    """Live search against DuckDuckGo's HTML endpoint (no API key)."""

    name = "duckduckgo"
    endpoint = "https://html.duckduckgo.com/html/"

    def __init__(self, *, timeout: float = 30.0,
                 session: requests.Session | None = None):
        self.timeout = timeout
        self._session = session or requests.Session()

    def search(self, query: str, k: int) -> list[dict[str, str]]:
        resp = self._session.post(
            self.endpoint, data={"q": query},
            headers={"User-Agent": USER_AGENT}, timeout=self.timeout)
        if resp.status_code >= 400:
            raise TransportError(
                f"search provider returned HTTP {resp.status_code}",
                status=resp.status_code, url=self.endpoint)
        parser = _DdgResultParser()
        parser.feed(resp.text)
        parser.close()
        return parser.results[:k]


PROVIDERS: dict[str, Callable[[], SearchProvider]] = {
    "duckduckgo": DuckDuckGoProvider,
}


def make_provider(name: str) -> SearchProvider:
    try:
        factory = PROVIDERS[name]
    except KeyError:
        known = ", ".join(sorted(PROVIDERS))
        raise CapabilityError(
            f"unknown search provider {name!r} (known: {known})") from None
    return factory()


class HttpRenderer:
    """Client for the screenshot service: POST {url, width, height|full_page}
    returns PNG bytes."""

    def __init__(self, endpoint: str, *, timeout: float = 60.0,
                 session: requests.Session | None = None):
        self.endpoint = endpoint
        self.timeout = timeout
        self._session = session or requests.Session()

    def render(self, url: str, *, width: int, height: int | None) -> bytes:
        payload: dict = {"url": url, "width": width}
        if height is None:
            payload["full_page"] = True
        else:
            payload["height"] = height
        resp = self._session.post(self.endpoint, json=payload,
                                  headers={"User-Agent": USER_AGENT},
                                  timeout=self.timeout)
        if resp.status_code >= 400:
            raise TransportError(
                f"renderer returned HTTP {resp.status_code}",
                status=resp.status_code, url=self.endpoint)
        return resp.content


# ---------------------------------------------------------------------------
# The client

class CaptureMode(str, Enum):
    TOP_SECTION = "top_section"
    FULL_PAGE = "full_page"


@dataclass(frozen=True)
class FetchResult:
    """Body of a fetched page plus where redirects actually landed."""

    body: bytes
    final_url: str
    truncated: bool = False


def _exact_size(asset: ImageAsset, size: tuple[int, int]) -> ImageAsset:
    if (asset.width, asset.height) == size:
        return asset
    with asset.open() as im:
        resized = im.convert("RGB").resize(size, Image.LANCZOS)
    buf = io.BytesIO()
    resized.save(buf, format="PNG")
    return ImageAsset.from_bytes(buf.getvalue(), asset.kind)


class WebClient:
    """Search + fetch + render facade with politeness and fixtures.

    Shareable across threads: network calls are bounded by a semaphore
    (``max_in_flight``) and spaced at least ``host_interval_s`` apart per
    host. Transient network failures are retried with exponential backoff;
    HTTP error statuses are not retried.
    """

    def __init__(self, config: PipelineConfig | None = None, *,
                 mode: FixtureMode | str = FixtureMode.REPLAY,
                 store: FixtureStore | None = None,
                 provider: SearchProvider | None = None,
                 renderer: Renderer | None = None,
                 max_in_flight: int = 4,
                 host_interval_s: float = 1.0,
                 retries: int = 2,
                 fetch_cap: int = FETCH_CAP_BYTES,
                 session: requests.Session | None = None):
        self.config = config or PipelineConfig()
        self.mode = FixtureMode(mode)
        if self.mode is not FixtureMode.LIVE and store is None:
            raise PreconditionError(
                f"{self.mode.value} mode requires a fixture store")
        self.store = store
        self.provider = provider
        self.renderer = renderer
        self.host_interval_s = host_interval_s
        self.retries = retries
        self.fetch_cap = fetch_cap
        self._session = session or requests.Session()
        self._gate = threading.Semaphore(max_in_flight)
        self._host_lock = threading.Lock()
        self._next_slot: dict[str, float] = {}

    # -- plumbing ----------------------------------------------------------

    def _throttle(self, url: str) -> None:
        host = urlsplit(url).netloc
        if not host:
            return
        with self._host_lock:
            now = time.monotonic()
            slot = max(now, self._next_slot.get(host, 0.0))
            self._next_slot[host] = slot + self.host_interval_s
        wait = slot - now
        if wait > 0:
            time.sleep(wait)

    def _with_retries(self, what: str, url: str, call):
        delay = 0.5
        attempts = self.retries + 1
        last: Exception | None = None
        for attempt in range(1, attempts + 1):
            try:
                with self._gate:
                    return call()
            except requests.RequestException as exc:
                last = exc
                if attempt < attempts:
                    time.sleep(delay)
                    delay *= 2
            except TransportError as exc:
                exc.attempts = attempt
                raise
        raise TransportError(f"{what} failed after {attempts} attempts: {last}",
                             url=url, attempts=attempts)

    # -- operations --------------------------------------------------------

    def text_search(self, requery: str, k: int | None = None) -> list[BriefResult]:
        """Search for ``requery`` and return ≤ k brief results, each with a
        top-section screenshot at the configured size."""
        k = self.config.k_websites if k is None else k
        if k < 1:
            raise PreconditionError("k must be >= 1")
        key = fixture_key("text_search", {"query": requery, "k": k})
        if self.mode is FixtureMode.REPLAY:
            assert self.store is not None
            rows = self.store.load_json("text_search", key)
        else:
            if self.provider is None:
                raise CapabilityError(
                    "no search provider configured; set SEARCH_PROVIDER or "
                    "run in replay mode")
            self._throttle(DuckDuckGoProvider.endpoint)
            rows = self._with_retries(
                "text_search", requery,
                lambda: self.provider.search(requery, k))
            if self.mode is FixtureMode.RECORD:
                assert self.store is not None
                self.store.save_json("text_search", key, rows)
        briefs = []
        for rank, row in enumerate(rows[:k], start=1):
            shot = self.render_screenshot(row["url"], CaptureMode.TOP_SECTION)
            shot = _exact_size(shot, self.config.top_section_size)
            briefs.append(BriefResult(rank=rank, url=row["url"],
                                      title=row.get("title", ""),
                                      snippet=row.get("snippet", ""),
                                      top_screenshot=shot))
        return briefs

    def fetch_page(self, url: str) -> FetchResult:
        """Download one page, following redirects, capped at ``fetch_cap``
        bytes (a longer body is truncated, not an error)."""
        parts = urlsplit(url)
        if parts.scheme not in ("http", "https") or not parts.netloc:
            raise PreconditionError(f"malformed url: {url!r}")
        key = fixture_key("fetch_page", {"url": url})
        if self.mode is FixtureMode.REPLAY:
            assert self.store is not None
            body = self.store.load_bytes("fetch_page", key, "bin")
            meta = self.store.load_json("fetch_page", key)
            return FetchResult(body, meta["final_url"],
                               bool(meta.get("truncated", False)))
        result = self._live_fetch(url)
        if self.mode is FixtureMode.RECORD:
            assert self.store is not None
            self.store.save_bytes("fetch_page", key, result.body, ext="bin")
            self.store.save_json("fetch_page", key, {
                "url": url, "final_url": result.final_url,
                "truncated": result.truncated,
            })
        return result

    def _live_fetch(self, url: str) -> FetchResult:
        self._throttle(url)

        def attempt() -> FetchResult:
            resp = self._session.get(
                url, headers={"User-Agent": USER_AGENT}, timeout=30,
                stream=True, allow_redirects=True)
            try:
                if resp.status_code >= 400:
                    raise TransportError(
                        f"GET {url} returned HTTP {resp.status_code}",
                        status=resp.status_code, url=url)
                chunks: list[bytes] = []
                size = 0
                truncated = False
                for chunk in resp.iter_content(chunk_size=65536):
                    chunks.append(chunk)
                    size += len(chunk)
                    if size >= self.fetch_cap:
                        truncated = True
                        break
                body = b"".join(chunks)[:self.fetch_cap]
                if truncated:
                    log.warning("fetch_page truncated %s at %d bytes",
                                url, self.fetch_cap)
                return FetchResult(body, resp.url, truncated)
            finally:
                resp.close()

        return self._with_retries("fetch_page", url, attempt)

    def render_screenshot(self, url: str,
                          capture: CaptureMode | str,
                          config: PipelineConfig | None = None) -> ImageAsset:
        """Capture ``url`` as a PNG: either the top viewport at
        ``top_section_size`` or the full scroll height at ``fullpage_width``.

        Returns the raw capture; slimming and segmentation are applied by
        :meth:`build_full_content`, never here, so fixtures replay verbatim.
        """
        cfg = config or self.config
        capture = CaptureMode(capture)
        if capture is CaptureMode.TOP_SECTION:
            width, height = cfg.top_section_size
            kind = ImageKind.TOP_SECTION_SCREENSHOT
        else:
            width, height = cfg.fullpage_width, None
            kind = ImageKind.FULLPAGE_RAW
        key = fixture_key("render_screenshot", {
            "url": url, "mode": capture.value, "width": width, "height": height,
        })
        if self.mode is FixtureMode.REPLAY:
            assert self.store is not None
            data = self.store.load_bytes("render_screenshot", key, "png")
            return ImageAsset.from_bytes(data, kind)
        if self.renderer is None:
            raise CapabilityError(
                "no renderer registered; set RENDERER_ENDPOINT or run in "
                "replay mode")
        self._throttle(url)
        data = self._with_retries(
            "render_screenshot", url,
            lambda: self.renderer.render(url, width=width, height=height))
        if self.mode is FixtureMode.RECORD:
            assert self.store is not None
            self.store.save_bytes("render_screenshot", key, data, ext="png")
        return ImageAsset.from_bytes(data, kind)

    def build_full_content(self, url: str, title: str, snippet: str,
                           requery: str,
                           config: PipelineConfig | None = None) -> FullWebsiteContent:
        """Assemble the summarization inputs for one selected website:
        budget-limited relevant text plus the slimmed, segmented full-page
        screenshot. Constituent failures are tagged with the failing step."""
        cfg = config or self.config
        try:
            fetched = self.fetch_page(url)
        except SearchPipeError as exc:
            raise StageError("fetch_page", exc) from exc
        text = extract_text(fetched.body)
        try:
            retrieved = retrieve_relevant(text, requery, cfg.token_budget)
        except SearchPipeError as exc:
            raise StageError("retrieve_relevant", exc) from exc
        try:
            raw = self.render_screenshot(url, CaptureMode.FULL_PAGE, cfg)
        except SearchPipeError as exc:
            raise StageError("render_screenshot", exc) from exc
        slimmed = slim_screenshot(raw, threshold=cfg.slim_threshold,
                                  min_band=cfg.min_blank_band)
        segments = segment_fullpage(slimmed, cfg.segment_height,
                                    cfg.max_segments)
        return FullWebsiteContent(url=url, title=title, snippet=snippet,
                                  retrieved_text=retrieved,
                                  fullpage_segments=tuple(segments))
