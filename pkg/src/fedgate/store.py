"""Local account store: users, credential mappings, pending queue.

External identities map to local accounts two ways: a federated eppn
stored on the user (``ts_principal``) or a certificate subject DN
stored as a mapping row.  Logins that present an unknown identifier
land in the pending queue for privileged review and approval.

Persistence is a single human-readable JSON document written with the
write-temp / fsync / atomic-rename discipline, versioned so the format
can evolve.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

STORE_FORMAT_VERSION = 1
PENDING_EXPIRY = timedelta(days=30)


class StoreError(Exception):
    pass


class UnknownUser(StoreError):
    pass


class UnknownPending(StoreError):
    pass


class UnknownMapping(StoreError):
    pass


class ConflictingMapping(StoreError):
    pass


class DuplicateUser(StoreError):
    pass


@dataclass
class UserRecord:
    user_id: int
    username: str
    email: str
    active: bool = True
    ts_principal: str | None = None


@dataclass
class CredentialMapping:
    cert_id: int
    user_id: int
    subject_dn: str
    not_after: datetime | None = None


@dataclass
class PendingCredential:
    pending_id: int
    kind: str  # "saml" | "pki"
    identifier: str
    context: str
    first_seen: datetime
    last_seen: datetime
    attempt_count: int = 1


@dataclass
class LookupResult:
    user: UserRecord

    @property
    def authenticatable(self) -> bool:
        return self.user.active


def _dt_out(value: datetime | None) -> str | None:
    return value.astimezone(timezone.utc).isoformat() if value else None


def _dt_in(value: str | None) -> datetime | None:
    return datetime.fromisoformat(value) if value else None


class IdentityStore:
    """All mutations are serialized through one lock and persisted atomically."""

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path else None
        self._lock = threading.RLock()
        self._users: dict[int, UserRecord] = {}
        self._mappings: dict[int, CredentialMapping] = {}
        self._pending: dict[int, PendingCredential] = {}
        self._next_user_id = 1
        self._next_cert_id = 1
        self._next_pending_id = 1
        self.on_deactivate = None  # hook: session teardown
        if self._path is not None and self._path.exists():
            self._load()

    # -- persistence ---------------------------------------------------

    def _snapshot(self) -> dict:
        return {
            "format_version": STORE_FORMAT_VERSION,
            "next_ids": {
                "user": self._next_user_id,
                "cert": self._next_cert_id,
                "pending": self._next_pending_id,
            },
            "users": [asdict(u) for u in self._users.values()],
            "mappings": [
                {**asdict(m), "not_after": _dt_out(m.not_after)}
                for m in self._mappings.values()
            ],
            "pending": [
                {
                    **asdict(p),
                    "first_seen": _dt_out(p.first_seen),
                    "last_seen": _dt_out(p.last_seen),
                }
                for p in self._pending.values()
            ],
        }

    def _save(self) -> None:
        if self._path is None:
            return
        data = json.dumps(self._snapshot(), indent=2, sort_keys=True)
        tmp = self._path.with_suffix(self._path.suffix + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self._path)

    def _load(self) -> None:
        with open(self._path, encoding="utf-8") as fh:
            data = json.load(fh)
        if data.get("format_version") != STORE_FORMAT_VERSION:
            raise StoreError(f"unsupported store format: {data.get('format_version')}")
        self._users = {u["user_id"]: UserRecord(**u) for u in data["users"]}
        self._mappings = {
            m["cert_id"]: CredentialMapping(
                cert_id=m["cert_id"],
                user_id=m["user_id"],
                subject_dn=m["subject_dn"],
                not_after=_dt_in(m["not_after"]),
            )
            for m in data["mappings"]
        }
        self._pending = {
            p["pending_id"]: PendingCredential(
                pending_id=p["pending_id"],
                kind=p["kind"],
                identifier=p["identifier"],
                context=p["context"],
                first_seen=_dt_in(p["first_seen"]),
                last_seen=_dt_in(p["last_seen"]),
                attempt_count=p["attempt_count"],
            )
            for p in data["pending"]
        }
        ids = data["next_ids"]
        self._next_user_id = ids["user"]
        self._next_cert_id = ids["cert"]
        self._next_pending_id = ids["pending"]

    # -- lookups -------------------------------------------------------

    def find_user_by_principal(self, eppn: str) -> LookupResult | None:
        """Exact, case-sensitive match on ts_principal (scope included)."""
        with self._lock:
            for user in self._users.values():
                if user.ts_principal is not None and user.ts_principal == eppn:
                    return LookupResult(user=user)
        return None

    def find_user_by_sdn(self, sdn: str) -> LookupResult | None:
        """Exact string match against mapping subject DNs.

        Mapping expiry is not checked here; certificate lifetime is the
        path validator's job.
        """
        with self._lock:
            for mapping in self._mappings.values():
                if mapping.subject_dn == sdn:
                    user = self._users.get(mapping.user_id)
                    if user is not None:
                        return LookupResult(user=user)
        return None

    def get_user(self, user_id: int) -> UserRecord:
        with self._lock:
            user = self._users.get(user_id)
            if user is None:
                raise UnknownUser(str(user_id))
            return user

    def list_users(self) -> list[UserRecord]:
        with self._lock:
            return sorted(self._users.values(), key=lambda u: u.user_id)

    def list_mappings(self, user_id: int | None = None) -> list[CredentialMapping]:
        with self._lock:
            rows = [
                m
                for m in self._mappings.values()
                if user_id is None or m.user_id == user_id
            ]
            return sorted(rows, key=lambda m: m.cert_id)

    def list_pending(self) -> list[PendingCredential]:
        with self._lock:
            return sorted(self._pending.values(), key=lambda p: p.pending_id)

    def get_pending(self, pending_id: int) -> PendingCredential:
        with self._lock:
            pending = self._pending.get(pending_id)
            if pending is None:
                raise UnknownPending(str(pending_id))
            return pending

    # -- onboarding ----------------------------------------------------

    def record_failed_credential(
        self, kind: str, identifier: str, context: str, now: datetime
    ) -> PendingCredential:
        """Create or bump the (kind, identifier) pending record."""
        if not identifier:
            raise ValueError("identifier must be non-empty")
        with self._lock:
            for pending in self._pending.values():
                if pending.kind == kind and pending.identifier == identifier:
                    pending.last_seen = now
                    pending.attempt_count += 1
                    pending.context = context
                    self._save()
                    return pending
            pending = PendingCredential(
                pending_id=self._next_pending_id,
                kind=kind,
                identifier=identifier,
                context=context,
                first_seen=now,
                last_seen=now,
            )
            self._next_pending_id += 1
            self._pending[pending.pending_id] = pending
            self._save()
            return pending

    def approve_pending(
        self, pending_id: int, user_id: int, now: datetime, not_after: datetime | None = None
    ) -> CredentialMapping | UserRecord:
        """Turn a pending record into a mapping (pki) or ts_principal (saml)."""
        with self._lock:
            pending = self._pending.get(pending_id)
            if pending is None:
                raise UnknownPending(str(pending_id))
            user = self._users.get(user_id)
            if user is None or not user.active:
                raise UnknownUser(f"{user_id} (missing or deactivated)")
            if pending.kind == "pki":
                result = self._map_certificate(user_id, pending.identifier, not_after)
            else:
                result = self._set_principal(user_id, pending.identifier)
            del self._pending[pending_id]
            self._save()
            return result

    def reject_pending(self, pending_id: int) -> None:
        with self._lock:
            if pending_id not in self._pending:
                raise UnknownPending(str(pending_id))
            del self._pending[pending_id]
            self._save()

    def purge_stale_pending(self, now: datetime) -> int:
        with self._lock:
            stale = [
                pid
                for pid, p in self._pending.items()
                if now - p.last_seen > PENDING_EXPIRY
            ]
            for pid in stale:
                del self._pending[pid]
            if stale:
                self._save()
            return len(stale)

    # -- admin CRUD ----------------------------------------------------

    def create_user(self, username: str, email: str) -> UserRecord:
        with self._lock:
            if any(u.username == username for u in self._users.values()):
                raise DuplicateUser(username)
            user = UserRecord(user_id=self._next_user_id, username=username, email=email)
            self._next_user_id += 1
            self._users[user.user_id] = user
            self._save()
            return user

    def update_user(self, user_id: int, email: str | None = None) -> UserRecord:
        with self._lock:
            user = self.get_user(user_id)
            if email is not None:
                user.email = email
            self._save()
            return user

    def deactivate_user(self, user_id: int) -> UserRecord:
        with self._lock:
            user = self.get_user(user_id)
            user.active = False
            self._save()
        if self.on_deactivate is not None:
            self.on_deactivate(user_id)
        return user

    def reactivate_user(self, user_id: int) -> UserRecord:
        with self._lock:
            user = self.get_user(user_id)
            user.active = True
            self._save()
            return user

    def delete_user(self, user_id: int) -> None:
        """Removes the user and cascades its mappings and pendings."""
        with self._lock:
            user = self.get_user(user_id)
            del self._users[user_id]
            self._mappings = {
                cid: m for cid, m in self._mappings.items() if m.user_id != user_id
            }
            self._pending = {
                pid: p
                for pid, p in self._pending.items()
                if not (p.kind == "saml" and p.identifier == user.ts_principal)
            }
            self._save()
        if self.on_deactivate is not None:
            self.on_deactivate(user_id)

    def set_principal(self, user_id: int, eppn: str | None) -> UserRecord:
        with self._lock:
            result = self._set_principal(user_id, eppn)
            self._save()
            return result

    def _set_principal(self, user_id: int, eppn: str | None) -> UserRecord:
        user = self.get_user(user_id)
        if eppn:
            for other in self._users.values():
                if other.user_id != user_id and other.ts_principal == eppn:
                    raise ConflictingMapping(f"eppn already mapped to user {other.user_id}")
        user.ts_principal = eppn or None
        return user

    def map_certificate(
        self, user_id: int, subject_dn: str, not_after: datetime | None = None
    ) -> CredentialMapping:
        with self._lock:
            mapping = self._map_certificate(user_id, subject_dn, not_after)
            self._save()
            return mapping

    def _map_certificate(
        self, user_id: int, subject_dn: str, not_after: datetime | None
    ) -> CredentialMapping:
        if user_id not in self._users:
            raise UnknownUser(str(user_id))
        for mapping in self._mappings.values():
            if mapping.subject_dn == subject_dn:
                raise ConflictingMapping(
                    f"SDN already mapped to user {mapping.user_id}"
                )
        mapping = CredentialMapping(
            cert_id=self._next_cert_id,
            user_id=user_id,
            subject_dn=subject_dn,
            not_after=not_after,
        )
        self._next_cert_id += 1
        self._mappings[mapping.cert_id] = mapping
        return mapping

    def remove_certificate(self, cert_id: int) -> None:
        with self._lock:
            if cert_id not in self._mappings:
                raise UnknownMapping(str(cert_id))
            del self._mappings[cert_id]
            self._save()
