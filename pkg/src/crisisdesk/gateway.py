"""Reverse proxy putting every service behind one origin.

The route table is static: ordered (path prefix, upstream address) pairs,
longest prefix wins, no discovery. Requests are forwarded byte-transparently
with the method, query string, body, and auth header intact; the only thing
the gateway adds is an ``X-Request-Id`` on both legs. An optional static
root serves the dashboard bundle for GETs that match no route.

Implemented as a bare ASGI app over one shared httpx client, so any ASGI
server can host it and tests can drive it in-process.
"""

from __future__ import annotations

import json
import logging
import mimetypes
import uuid
from pathlib import Path

import httpx

logger = logging.getLogger(__name__)

# Never forwarded: connection-scoped, or recomputed on our side.
_DROP_REQUEST = {b"host", b"content-length", b"connection", b"accept-encoding"}
_DROP_RESPONSE = {b"content-length", b"transfer-encoding", b"connection",
                  b"content-encoding"}

DEFAULT_PREFIXES = {
    "/events": "eventsvc",
    "/tweets": "tweetsvc",
    "/filter": "querysvc",
    "/mentions": "analysissvc",
    "/workflows": "analysissvc",
    "/auth": "authsvc",
    "/users": "authsvc",
}


def default_routes(addresses: dict[str, str]) -> list[dict]:
    """The standard route table, given service name -> base URL."""
    return [
        {"prefix": prefix, "upstream": addresses[name], "name": name}
        for prefix, name in DEFAULT_PREFIXES.items()
    ]


def load_routes(path: str | Path) -> list[dict]:
    routes = json.loads(Path(path).read_text())
    for route in routes:
        if "prefix" not in route or "upstream" not in route:
            raise ValueError(f"route needs prefix and upstream: {route}")
    return routes


class Gateway:
    def __init__(self, routes: list[dict], static_root: str | Path | None = None,
                 client: httpx.AsyncClient | None = None):
        prepared = [
            (r["prefix"].rstrip("/"), r["upstream"].rstrip("/"),
             r.get("name", r["upstream"]))
            for r in routes
        ]
        # Longest prefix first so the linear scan is longest-match.
        self.routes = sorted(prepared, key=lambda r: len(r[0]), reverse=True)
        self.static_root = Path(static_root).resolve() if static_root else None
        self._client = client
        self._owns_client = client is None

    def _match(self, path: str) -> tuple[str, str] | None:
        for prefix, upstream, name in self.routes:
            if path == prefix or path.startswith(prefix + "/"):
                return upstream, name
        return None

    async def __call__(self, scope, receive, send):
        if scope["type"] == "lifespan":
            await self._lifespan(receive, send)
            return
        if scope["type"] != "http":
            return

        request_id = uuid.uuid4().hex
        for key, value in scope.get("headers", []):
            if key == b"x-request-id":
                request_id = value.decode("latin-1")
                break

        match = self._match(scope["path"])
        if match is None:
            if self.static_root and scope["method"] in ("GET", "HEAD"):
                await self._serve_static(scope, send, request_id)
            else:
                await self._send_json(
                    send, 404, {"error": "not_found", "path": scope["path"]},
                    request_id)
            return

        upstream, name = match
        body = b""
        more = True
        while more:
            message = await receive()
            if message["type"] != "http.request":
                return
            body += message.get("body", b"")
            more = message.get("more_body", False)

        headers = [
            (k, v) for k, v in scope.get("headers", [])
            if k not in _DROP_REQUEST and k != b"x-request-id"
        ]
        headers.append((b"x-request-id", request_id.encode("latin-1")))

        url = upstream + scope["path"]
        query = scope.get("query_string", b"")
        if query:
            url += "?" + query.decode("latin-1")

        if self._client is None:
            self._client = httpx.AsyncClient(timeout=30.0)
        try:
            response = await self._client.request(
                scope["method"], url, content=body, headers=headers)
        except httpx.RequestError as exc:
            logger.warning("upstream %s unreachable: %s", name, exc)
            await self._send_json(
                send, 502, {"error": "bad_gateway", "service": name}, request_id)
            return

        out = [
            (k.encode("latin-1"), v.encode("latin-1"))
            for k, v in response.headers.multi_items()
            if k.lower().encode() not in _DROP_RESPONSE
               and k.lower() != "x-request-id"
        ]
        content = response.content
        out.append((b"content-length", str(len(content)).encode()))
        out.append((b"x-request-id", request_id.encode("latin-1")))
        await send({"type": "http.response.start",
                    "status": response.status_code, "headers": out})
        await send({"type": "http.response.body", "body": content})

    async def _lifespan(self, receive, send):
        while True:
            message = await receive()
            if message["type"] == "lifespan.startup":
                if self._client is None:
                    self._client = httpx.AsyncClient(timeout=30.0)
                await send({"type": "lifespan.startup.complete"})
            elif message["type"] == "lifespan.shutdown":
                if self._client is not None and self._owns_client:
                    await self._client.aclose()
                    self._client = None
                await send({"type": "lifespan.shutdown.complete"})
                return

    async def _send_json(self, send, status: int, doc: dict, request_id: str):
        body = json.dumps(doc).encode("utf-8")
        await send({
            "type": "http.response.start",
            "status": status,
            "headers": [
                (b"content-type", b"application/json"),
                (b"content-length", str(len(body)).encode()),
                (b"x-request-id", request_id.encode("latin-1")),
            ],
        })
        await send({"type": "http.response.body", "body": body})

    async def _serve_static(self, scope, send, request_id: str):
        rel = scope["path"].lstrip("/") or "index.html"
        target = (self.static_root / rel).resolve()
        try:
            inside = target.is_relative_to(self.static_root)
        except AttributeError:  # pragma: no cover - 3.9 fallback, unused
            inside = str(target).startswith(str(self.static_root))
        if not inside or not target.is_file():
            await self._send_json(
                send, 404, {"error": "not_found", "path": scope["path"]},
                request_id)
            return
        content = target.read_bytes()
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        await send({
            "type": "http.response.start",
            "status": 200,
            "headers": [
                (b"content-type", ctype.encode("latin-1")),
                (b"content-length", str(len(content)).encode()),
                (b"x-request-id", request_id.encode("latin-1")),
            ],
        })
        body = b"" if scope["method"] == "HEAD" else content
        await send({"type": "http.response.body", "body": body})
