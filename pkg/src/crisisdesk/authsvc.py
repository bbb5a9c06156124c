"""Token auth: HMAC-signed access tokens, user registry, claim guard.

Tokens are JWT-shaped (header.payload.signature, base64url, HMAC-SHA256 over
a shared secret) and carry an ``epic_access`` claim embedding the user's
authorized flag at issue time. Verification is stateless, so revocation
takes effect on the next sign-in, not on outstanding tokens.

A single ``auth_disabled`` switch turns every guard into a pass-through for
local development; the acting user then comes from an ``X-User`` header.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from fastapi import FastAPI, HTTPException, Request
from pydantic import BaseModel

logger = logging.getLogger(__name__)

ACCESS_CLAIM = "epic_access"
SECRET_ENV = "EPIC_AUTH_SECRET"
ADMINS_ENV = "EPIC_AUTH_ADMINS"
TOKEN_TTL = 86400.0  # 24h


class TokenError(Exception):
    """Token failed verification; str(err) says why."""


def _b64url(data: bytes) -> str:
    return base64.urlsafe_b64encode(data).rstrip(b"=").decode("ascii")


def _unb64url(text: str) -> bytes:
    padding = "=" * (-len(text) % 4)
    return base64.urlsafe_b64decode(text + padding)


def _sign(secret: str, message: bytes) -> bytes:
    return hmac.new(secret.encode("utf-8"), message, hashlib.sha256).digest()


def sign_token(secret: str, subject: str, claims: dict | None = None,
               ttl: float = TOKEN_TTL, now: float | None = None) -> str:
    now = time.time() if now is None else now
    header = {"alg": "HS256", "typ": "JWT"}
    payload = {"sub": subject, "iat": int(now), "exp": int(now + ttl)}
    payload.update(claims or {})
    head = _b64url(json.dumps(header, separators=(",", ":")).encode())
    body = _b64url(json.dumps(payload, separators=(",", ":")).encode())
    signing_input = f"{head}.{body}".encode("ascii")
    return f"{head}.{body}.{_b64url(_sign(secret, signing_input))}"


def verify_token(secret: str, token: str, now: float | None = None) -> dict:
    """Payload of a well-formed, correctly signed, unexpired token."""
    now = time.time() if now is None else now
    parts = token.split(".")
    if len(parts) != 3:
        raise TokenError("malformed token")
    head, body, sig = parts
    try:
        expected = _sign(secret, f"{head}.{body}".encode("ascii"))
        if not hmac.compare_digest(expected, _unb64url(sig)):
            raise TokenError("bad signature")
        payload = json.loads(_unb64url(body))
    except TokenError:
        raise
    except Exception as exc:
        raise TokenError(f"undecodable token: {exc}") from exc
    if not isinstance(payload, dict) or "sub" not in payload:
        raise TokenError("missing subject")
    if now >= payload.get("exp", 0):
        raise TokenError("expired")
    return payload


@dataclass(frozen=True)
class Principal:
    subject: str
    claims: dict


@dataclass
class AuthSettings:
    secret: str = ""
    disabled: bool = False
    token_ttl: float = TOKEN_TTL

    @classmethod
    def from_env(cls, disabled: bool = False) -> "AuthSettings":
        secret = os.environ.get(SECRET_ENV, "")
        if not secret and not disabled:
            secret = "dev-secret"
            logger.warning("%s unset, using a development secret", SECRET_ENV)
        return cls(secret=secret, disabled=disabled)


def make_guard(settings: AuthSettings):
    """A FastAPI dependency enforcing the access claim on a route."""

    async def guard(request: Request) -> Principal:
        if settings.disabled:
            return Principal(request.headers.get("X-User", "anonymous"), {})
        header = request.headers.get("Authorization", "")
        if not header.startswith("Bearer "):
            raise HTTPException(status_code=401, detail="missing bearer token")
        try:
            payload = verify_token(settings.secret, header[len("Bearer "):])
        except TokenError as exc:
            raise HTTPException(status_code=401, detail=str(exc))
        if payload.get(ACCESS_CLAIM) is not True:
            raise HTTPException(status_code=403, detail="non-authorized")
        return Principal(payload["sub"], payload)

    return guard


class UserStore:
    """users.json registry; anyone who signs in gets a row, access is a flag.

    ``admins`` pre-authorizes listed user ids on first sign-in so a fresh
    deployment has a way to reach the admin endpoints.
    """

    def __init__(self, path: str | Path, admins: tuple[str, ...] = ()):
        self.path = Path(path)
        self.admins = tuple(admins)
        self._lock = threading.Lock()
        self._users: dict[str, dict] = {}
        if self.path.exists():
            self._users = json.loads(self.path.read_text())

    def _save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(self._users, indent=1))
        os.replace(tmp, self.path)

    def ensure_user(self, user_id: str, email: str | None = None) -> dict:
        with self._lock:
            record = self._users.get(user_id)
            if record is None:
                record = {
                    "id": user_id,
                    "email": email or f"{user_id}@example.invalid",
                    "authorized": user_id in self.admins,
                    "first_seen": datetime.now(timezone.utc).isoformat(),
                }
                self._users[user_id] = record
                self._save()
            return dict(record)

    def get(self, user_id: str) -> dict | None:
        with self._lock:
            record = self._users.get(user_id)
            return dict(record) if record else None

    def set_access(self, user_id: str, authorized: bool) -> dict:
        with self._lock:
            if user_id not in self._users:
                raise KeyError(user_id)
            self._users[user_id]["authorized"] = bool(authorized)
            self._save()
            return dict(self._users[user_id])

    def list(self) -> list[dict]:
        with self._lock:
            return sorted(
                (dict(r) for r in self._users.values()),
                key=lambda r: (r["first_seen"], r["id"]),
            )


class _LoginBody(BaseModel):
    user: str
    email: str | None = None


class _AccessBody(BaseModel):
    authorized: bool


def create_app(users_path: str | Path,
               settings: AuthSettings | None = None) -> FastAPI:
    settings = settings or AuthSettings.from_env()
    admins = tuple(
        a.strip() for a in os.environ.get(ADMINS_ENV, "").split(",") if a.strip()
    )
    store = UserStore(users_path, admins=admins)
    guard = make_guard(settings)
    app = FastAPI(title="authsvc")
    app.state.users = store
    app.state.auth_settings = settings

    @app.post("/auth/token")
    async def dev_login(body: _LoginBody):
        # Bootstrap endpoint: any caller can sign in; authorization rides
        # along as a claim and is checked by the guards, not here.
        record = store.ensure_user(body.user, body.email)
        token = sign_token(
            settings.secret, body.user,
            {ACCESS_CLAIM: record["authorized"]},
            ttl=settings.token_ttl,
        )
        return {"token": token, "user": record}

    @app.get("/users/")
    async def list_users(request: Request):
        await guard(request)
        return {"users": store.list()}

    @app.patch("/users/{user_id}")
    async def set_access(user_id: str, body: _AccessBody, request: Request):
        await guard(request)
        try:
            return store.set_access(user_id, body.authorized)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown user")

    return app
