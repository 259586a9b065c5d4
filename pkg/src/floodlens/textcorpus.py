"""Geography text per grid cell, fetched from a MediaWiki-style API and cached.

For every grid the most common event location name is looked up. Lookup
order is: Geography section of the exact page, Geography section of a
synonym page, Summary (lead) of the exact page, Summary of a synonym page.
Grids with none of these get the literal text ``"missing"``.

The client talks to the MediaWiki action API (``action=query``) with plain
text extracts. The base URL comes from ``FLOODLENS_WIKI_BASE``; the test suite
points it at :class:`floodlens.mockwiki.MockWikiServer`.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from collections import Counter
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable

import requests

from floodlens.ingest import EventTable

logger = logging.getLogger(__name__)

DEFAULT_WIKI_BASE = "https://en.wikipedia.org/w/api.php"
MISSING_TEXT = "missing"
USER_AGENT = "floodlens/0.1 (flood risk research)"


class TextSource(str, Enum):
    GEOGRAPHY = "geography_section"
    SUMMARY = "summary_section"
    MISSING = "missing"


class TransientFetchError(RuntimeError):
    """Network failure that persisted through all retries."""


class ProtocolError(RuntimeError):
    """The API answered with something that is not a valid response."""


@dataclass(frozen=True)
class LocationText:
    grid: int | None
    location_name: str
    text: str
    source: TextSource
    fetched_at: str

    def __post_init__(self):
        if not self.text:
            raise ValueError("LocationText.text must be non-empty")
        if (self.source is TextSource.MISSING) != (self.text == MISSING_TEXT):
            raise ValueError("source=missing must coincide with text='missing'")

    def with_grid(self, grid: int) -> "LocationText":
        return LocationText(grid, self.location_name, self.text, self.source, self.fetched_at)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source"] = self.source.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LocationText":
        return cls(d["grid"], d["location_name"], d["text"], TextSource(d["source"]), d["fetched_at"])


# ---------------------------------------------------------------- text utils

_HEADING = re.compile(r"^(={2,6})\s*(.*?)\s*\1\s*$", re.MULTILINE)


def normalize_text(text: str) -> str:
    """Strip wiki/HTML markup and collapse whitespace. Case is preserved."""
    text = re.sub(r"<ref[^>]*/>|<ref[^>]*>.*?</ref>", " ", text, flags=re.DOTALL)
    text = re.sub(r"<[^>]+>", " ", text)
    prev = None
    while prev != text:
        prev = text
        text = re.sub(r"\{\{[^{}]*\}\}", " ", text)
    text = re.sub(r"\[\[(?:[^\[\]|]*\|)?([^\[\]]*)\]\]", r"\1", text)
    text = re.sub(r"\[https?://\S+\s*([^\]]*)\]", r"\1", text)
    text = re.sub(r"'{2,}", "", text)
    text = re.sub(r"^=+|=+$", "", text.strip())
    return re.sub(r"\s+", " ", text).strip()


def split_sections(extract: str) -> tuple[str, list[tuple[int, str, str]]]:
    """Split a plain-text extract into (lead, [(level, heading, body), ...])."""
    matches = list(_HEADING.finditer(extract))
    lead = extract[: matches[0].start()] if matches else extract
    sections = []
    for i, m in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(extract)
        sections.append((len(m.group(1)), m.group(2), extract[m.end() : end]))
    return lead, sections


def geography_block(extract: str) -> str | None:
    """Leading block of the first ``Geography`` section, before any subsection.

    Falls back to the first subsection when the section has no text of its own.
    """
    _, sections = split_sections(extract)
    for i, (level, heading, body) in enumerate(sections):
        if not heading.lower().startswith("geography"):
            continue
        if body.strip():
            return body
        for sub_level, _, sub_body in sections[i + 1 :]:
            if sub_level <= level:
                break
            if sub_body.strip():
                return sub_body
        return None
    return None


def summary_block(extract: str) -> str | None:
    lead, _ = split_sections(extract)
    return lead if lead.strip() else None


def synonym_candidates(name: str, country: str | None = None) -> list[str]:
    """Alternative page titles tried after the exact name (search hit comes last)."""
    out: list[str] = []
    if country and country.lower() not in name.lower():
        out += [f"{name}, {country}", f"{name} ({country})"]
    return [c for c in dict.fromkeys(out) if c != name]


# -------------------------------------------------------------------- client


class RateLimiter:
    def __init__(self, per_second: float | None):
        self.interval = 1.0 / per_second if per_second else 0.0
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        if not self.interval:
            return
        with self._lock:
            now = time.monotonic()
            delay = self._next - now
            self._next = max(now, self._next) + self.interval
        if delay > 0:
            time.sleep(delay)


class WikiClient:
    """Minimal MediaWiki action-API client with rate limiting and retries."""

    def __init__(
        self,
        base_url: str | None = None,
        rate_limit: float | None = 2.0,
        retries: int = 3,
        backoff: float = 0.5,
        timeout: float = 10.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url or os.environ.get("FLOODLENS_WIKI_BASE") or DEFAULT_WIKI_BASE
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self.session = session or requests.Session()
        self.session.headers.setdefault("User-Agent", USER_AGENT)
        self.limiter = RateLimiter(rate_limit)
        self.n_requests = 0

    def _get(self, params: dict) -> dict:
        params = {"format": "json", "formatversion": 1, **params}
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            self.limiter.wait()
            self.n_requests += 1
            try:
                resp = self.session.get(self.base_url, params=params, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last = exc
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                last = RuntimeError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(f"HTTP {resp.status_code} for {params}")
            try:
                data = resp.json()
            except ValueError as exc:
                raise ProtocolError(f"non-JSON response for {params}") from exc
            if not isinstance(data, dict) or "query" not in data:
                raise ProtocolError(f"response without 'query' for {params}: {str(data)[:200]}")
            return data["query"]
        raise TransientFetchError(f"giving up after {self.retries + 1} attempts: {last}")

    def extract(self, title: str) -> str | None:
        """Plain-text page extract, or None when the page does not exist."""
        q = self._get(
            {"action": "query", "prop": "extracts", "explaintext": 1, "redirects": 1, "titles": title}
        )
        pages = q.get("pages")
        if not isinstance(pages, dict):
            raise ProtocolError(f"missing 'pages' for {title!r}")
        for page in pages.values():
            if "missing" in page or "invalid" in page:
                continue
            text = page.get("extract")
            if isinstance(text, str):
                return text
        return None

    def search(self, query: str) -> str | None:
        """Title of the top full-text search hit."""
        q = self._get({"action": "query", "list": "search", "srsearch": query, "srlimit": 1})
        hits = q.get("search")
        if not isinstance(hits, list):
            raise ProtocolError(f"missing 'search' for {query!r}")
        return hits[0]["title"] if hits else None


def _now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


def fetch_text(
    name: str,
    client: WikiClient,
    country: str | None = None,
    clock: Callable[[], str] = _now,
) -> LocationText:
    """Look up geography text for a location name (``grid`` left unset)."""
    extracts: dict[str, str | None] = {}

    def get(title: str) -> str | None:
        if title not in extracts:
            extracts[title] = client.extract(title)
        return extracts[title]

    def found(text: str, source: TextSource) -> LocationText | None:
        text = normalize_text(text)
        return LocationText(None, name, text, source, clock()) if text else None

    if not name.strip():
        return LocationText(None, name, MISSING_TEXT, TextSource.MISSING, clock())

    synonyms = synonym_candidates(name, country)
    searched = False

    def all_synonyms() -> Iterable[str]:
        nonlocal searched
        yield from synonyms
        if not searched:
            searched = True
            hit = client.search(name)
            if hit and hit != name and hit not in synonyms:
                synonyms.append(hit)
                yield hit

    exact = get(name)
    if exact and (block := geography_block(exact)) and (res := found(block, TextSource.GEOGRAPHY)):
        return res
    for title in all_synonyms():
        page = get(title)
        if page and (block := geography_block(page)) and (res := found(block, TextSource.GEOGRAPHY)):
            return res
    for title in [name, *synonyms]:
        page = get(title)
        if page and (block := summary_block(page)) and (res := found(block, TextSource.SUMMARY)):
            return res
    return LocationText(None, name, MISSING_TEXT, TextSource.MISSING, clock())


# --------------------------------------------------------------------- cache


@dataclass
class CorpusCache:
    """Grid -> LocationText, persisted as JSONL. At most one entry per grid."""

    entries: dict[int, LocationText] = field(default_factory=dict)
    manifest: list[dict] = field(default_factory=list)
    path: Path | None = None
    transient: set[int] = field(default_factory=set)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __contains__(self, grid: int) -> bool:
        return grid in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def put(self, entry: LocationText) -> None:
        if entry.grid is None:
            raise ValueError("cache entries need a grid id")
        with self._lock:
            self.entries[entry.grid] = entry
            self.transient.discard(entry.grid)
            if self.path is not None:
                with open(self.path, "a", encoding="utf-8", newline="\n") as fh:
                    fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")

    def texts(self) -> dict[int, str]:
        return {g: e.text for g, e in sorted(self.entries.items())}

    def save(self, path: str | Path | None = None) -> None:
        """Rewrite the cache file sorted by grid (compacts appended lines)."""
        path = Path(path or self.path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
            for g in sorted(set(self.entries) - self.transient):
                fh.write(json.dumps(self.entries[g].to_dict(), sort_keys=True) + "\n")
        os.replace(tmp, path)
        with open(path.with_suffix(".manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "CorpusCache":
        path = Path(path)
        entries: dict[int, LocationText] = {}
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        e = LocationText.from_dict(json.loads(line))
                        entries[e.grid] = e  # later lines win
        manifest_path = path.with_suffix(".manifest.json")
        manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else []
        return cls(entries, manifest, path)


def resolve_location(table: EventTable, grid: int) -> str:
    """Most frequent location name among a grid's events; ties -> lexicographic."""
    names = Counter(ev.location_name for ev in table.events if ev.grid == grid)
    if not names:
        raise LookupError(f"grid {grid} has no events")
    return min(names.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def _grid_country(table: EventTable, grid: int) -> str | None:
    countries = Counter(ev.country for ev in table.events if ev.grid == grid and ev.country)
    return min(countries.items(), key=lambda kv: (-kv[1], kv[0]))[0] if countries else None


def build_corpus(
    table: EventTable,
    grids: Iterable[int],
    client: WikiClient,
    cache: CorpusCache | None = None,
    clock: Callable[[], str] = _now,
) -> CorpusCache:
    """Fill ``cache`` with one entry per grid, fetching only uncached grids.

    Grids whose lookup fails transiently get a ``missing`` entry in the
    returned cache but are not persisted, so the next run retries them.
    """
    grids = sorted(set(grids))
    if not grids:
        raise ValueError("build_corpus needs at least one grid")
    cache = cache if cache is not None else CorpusCache()
    requests_before = client.n_requests
    fetched, failed = [], []
    for g in grids:
        if g in cache and g not in cache.transient:
            continue
        name = resolve_location(table, g)
        try:
            entry = fetch_text(name, client, _grid_country(table, g), clock).with_grid(g)
        except TransientFetchError as exc:
            logger.warning("grid %d (%s): %s", g, name, exc)
            failed.append(g)
            cache.transient.add(g)
            cache.entries[g] = LocationText(g, name, MISSING_TEXT, TextSource.MISSING, clock())
            continue
        cache.put(entry)
        fetched.append(g)
    cache.manifest.append(
        {
            "fetches": len(fetched),
            "requests": client.n_requests - requests_before,
            "failed": failed,
            "requested": len(grids),
        }
    )
    return cache
