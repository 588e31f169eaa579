"""Server-side cookie session tracking.

Sessions replace per-request credential replay: one login exchange
mints a random token, everything after rides on the cookie.  The table
is server-side so deactivating a user revokes instantly.
"""

from __future__ import annotations

import secrets
import threading
from dataclasses import dataclass, replace
from datetime import datetime, timedelta

COOKIE_NAME = "fedgate_session"


@dataclass(frozen=True)
class Session:
    token: str
    user_id: int
    auth_method: str  # "saml" | "pki"
    created_at: datetime
    last_used: datetime


@dataclass
class SessionPolicy:
    idle_timeout: timedelta = timedelta(minutes=30)
    max_lifetime: timedelta = timedelta(hours=12)


class SessionStore:
    def __init__(self, policy: SessionPolicy | None = None):
        self.policy = policy or SessionPolicy()
        self._sessions: dict[str, Session] = {}
        self._lock = threading.Lock()

    def create(self, user_id: int, auth_method: str, now: datetime) -> tuple[Session, str]:
        """Mint a session; returns it plus the Set-Cookie header value."""
        token = secrets.token_urlsafe(32)  # 256 bits
        session = Session(
            token=token,
            user_id=user_id,
            auth_method=auth_method,
            created_at=now,
            last_used=now,
        )
        with self._lock:
            self._sessions[token] = session
        cookie = f"{COOKIE_NAME}={token}; Path=/; Secure; HttpOnly; SameSite=Lax"
        return session, cookie

    def validate(self, token: str, now: datetime) -> int | None:
        """Return the owning user_id for a live token, touching last_used."""
        with self._lock:
            session = self._sessions.get(token)
            if session is None:
                return None
            if now - session.last_used > self.policy.idle_timeout:
                del self._sessions[token]
                return None
            if now - session.created_at > self.policy.max_lifetime:
                del self._sessions[token]
                return None
            if now > session.last_used:
                self._sessions[token] = replace(session, last_used=now)
            return session.user_id

    def destroy(self, token: str) -> None:
        with self._lock:
            self._sessions.pop(token, None)

    def destroy_all_for_user(self, user_id: int) -> int:
        with self._lock:
            doomed = [t for t, s in self._sessions.items() if s.user_id == user_id]
            for token in doomed:
                del self._sessions[token]
            return len(doomed)

    def purge_expired(self, now: datetime) -> None:
        with self._lock:
            self._sessions = {
                t: s
                for t, s in self._sessions.items()
                if now - s.last_used <= self.policy.idle_timeout
                and now - s.created_at <= self.policy.max_lifetime
            }

    def count_for_user(self, user_id: int) -> int:
        with self._lock:
            return sum(1 for s in self._sessions.values() if s.user_id == user_id)

    def __len__(self) -> int:
        return len(self._sessions)
