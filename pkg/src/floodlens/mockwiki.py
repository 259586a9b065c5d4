"""In-process stand-in for the MediaWiki action API.

Serves the two routes :class:`floodlens.textcorpus.WikiClient` uses
(``prop=extracts`` page text and ``list=search``) from a dict of page
extracts. Used by the tests, the demos and the synthetic pipeline run.

>>> with MockWikiServer({"Boston": "Lead.\\n\\n== Geography ==\\nHarbor."}) as srv:
...     srv.url  # doctest: +ELLIPSIS
'http://127.0.0.1:.../w/api.php'
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse


class MockWikiServer:
    def __init__(
        self,
        pages: dict[str, str],
        redirects: dict[str, str] | None = None,
        fail_first: int = 0,
        fail_status: int = 503,
    ):
        self.pages = dict(pages)
        self.redirects = dict(redirects or {})
        self.fail_remaining = fail_first
        self.fail_status = fail_status
        self.requests: list[dict[str, str]] = []
        self._lock = threading.Lock()
        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/w/api.php"

    def _resolve(self, title: str) -> str:
        return self.redirects.get(title, title)

    def _search(self, query: str) -> list[dict]:
        words = [w for w in query.lower().replace(",", " ").split() if w]
        if not words:
            return []
        hits = [t for t in sorted(self.pages) if words[0] in t.lower()]
        return [{"ns": 0, "title": t} for t in hits]

    def respond(self, params: dict[str, str]) -> tuple[int, object]:
        with self._lock:
            self.requests.append(params)
            if self.fail_remaining > 0:
                self.fail_remaining -= 1
                return self.fail_status, {"error": "injected failure"}
        if params.get("action") != "query":
            return 200, {"error": {"code": "badvalue", "info": "unsupported action"}}
        if params.get("list") == "search":
            limit = int(params.get("srlimit", 10))
            return 200, {"query": {"search": self._search(params.get("srsearch", ""))[:limit]}}
        if params.get("prop") == "extracts":
            title = params.get("titles", "")
            target = self._resolve(title)
            if target in self.pages:
                pid = str(1 + sorted(self.pages).index(target))
                page = {"pageid": int(pid), "ns": 0, "title": target, "extract": self.pages[target]}
                q: dict = {"pages": {pid: page}}
                if target != title:
                    q["redirects"] = [{"from": title, "to": target}]
            else:
                q = {"pages": {"-1": {"ns": 0, "title": title, "missing": ""}}}
            return 200, {"batchcomplete": "", "query": q}
        return 200, {"error": {"code": "badvalue", "info": "unsupported query"}}

    def start(self) -> "MockWikiServer":
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_GET(self):  # noqa: N802
                parsed = urlparse(self.path)
                if parsed.path != "/w/api.php":
                    status, body = 404, {"error": "not found"}
                else:
                    params = {k: v[-1] for k, v in parse_qs(parsed.query).items()}
                    status, body = server.respond(params)
                raw = json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(raw)))
                self.end_headers()
                self.wfile.write(raw)

            def log_message(self, *args):
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "MockWikiServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
