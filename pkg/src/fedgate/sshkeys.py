"""SSH public key parsing and policy vetting.

Parses ``authorized_keys`` lines into structured keys, checks them for
cryptographic strength and known generation weaknesses (the 2008 Debian
PRNG defect via fingerprint blacklist, the Infineon factorable-modulus
pattern), and rewrites the user's file atomically when every entry
passes.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import os
import shlex
import struct
import threading
from dataclasses import dataclass, field
from pathlib import Path

from .roca import roca_check

_KEY_TYPE_PREFIXES = ("ssh-", "ecdsa-sha2-", "sk-ssh-", "sk-ecdsa-")

_ECDSA_BITS = {
    "ecdsa-sha2-nistp256": 256,
    "ecdsa-sha2-nistp384": 384,
    "ecdsa-sha2-nistp521": 521,
}


class RejectionReason(enum.Enum):
    WEAK_LENGTH = "WeakLength"
    FORBIDDEN_ALGORITHM = "ForbiddenAlgorithm"
    DEBIAN_BLACKLISTED = "DebianBlacklisted"
    ROCA_SUSPECT = "RocaSuspect"
    MALFORMED = "Malformed"


@dataclass(frozen=True)
class SshPublicKey:
    algorithm: str
    blob: bytes
    bit_length: int
    comment: str = ""
    options: str = ""
    rsa_modulus: int | None = None

    @property
    def fingerprint(self) -> str:
        """OpenSSH-style SHA-256 fingerprint of the key blob."""
        digest = hashlib.sha256(self.blob).digest()
        return "SHA256:" + base64.b64encode(digest).decode().rstrip("=")

    def to_line(self) -> str:
        parts = []
        if self.options:
            parts.append(self.options)
        parts.append(self.algorithm)
        parts.append(base64.b64encode(self.blob).decode())
        if self.comment:
            parts.append(self.comment)
        return " ".join(parts)


@dataclass(frozen=True)
class ParseError:
    line_number: int
    detail: str


@dataclass(frozen=True)
class KeyPolicyVerdict:
    reasons: tuple[RejectionReason, ...]

    @property
    def accepted(self) -> bool:
        return not self.reasons


@dataclass
class KeyPolicy:
    min_rsa_bits: int = 2048
    forbidden_algorithms: frozenset[str] = frozenset({"ssh-dss"})
    roca_check_enabled: bool = True


class MalformedKey(ValueError):
    pass


def _read_string(blob: bytes, offset: int) -> tuple[bytes, int]:
    if offset + 4 > len(blob):
        raise MalformedKey("truncated key blob")
    (length,) = struct.unpack(">I", blob[offset : offset + 4])
    offset += 4
    if offset + length > len(blob):
        raise MalformedKey("truncated key blob field")
    return blob[offset : offset + length], offset + length


def _read_mpint(blob: bytes, offset: int) -> tuple[int, int]:
    raw, offset = _read_string(blob, offset)
    return int.from_bytes(raw, "big"), offset


def parse_public_key(algorithm: str, blob: bytes, comment: str = "", options: str = "") -> SshPublicKey:
    """Decode an SSH wire-format public key blob."""
    inner_name, offset = _read_string(blob, 0)
    if inner_name.decode("ascii", errors="replace") != algorithm:
        raise MalformedKey(
            f"blob algorithm {inner_name!r} does not match declared {algorithm!r}"
        )
    rsa_modulus = None
    if algorithm == "ssh-rsa":
        _, offset = _read_mpint(blob, offset)  # public exponent
        rsa_modulus, offset = _read_mpint(blob, offset)
        bit_length = rsa_modulus.bit_length()
    elif algorithm == "ssh-ed25519":
        point, offset = _read_string(blob, offset)
        if len(point) != 32:
            raise MalformedKey("ed25519 key must be 32 bytes")
        bit_length = 256
    elif algorithm in _ECDSA_BITS:
        curve, offset = _read_string(blob, offset)
        expected = algorithm.removeprefix("ecdsa-sha2-")
        if curve.decode("ascii", errors="replace") != expected:
            raise MalformedKey(f"curve {curve!r} does not match {algorithm}")
        _, offset = _read_string(blob, offset)
        bit_length = _ECDSA_BITS[algorithm]
    elif algorithm == "ssh-dss":
        p, offset = _read_mpint(blob, offset)
        bit_length = p.bit_length()
    else:
        # Unknown algorithm: keep the blob opaque, policy decides later.
        bit_length = 0
    return SshPublicKey(
        algorithm=algorithm,
        blob=blob,
        bit_length=bit_length,
        comment=comment,
        options=options,
        rsa_modulus=rsa_modulus,
    )


def _split_line(line: str) -> tuple[str, str, str, str]:
    """Split an authorized_keys line into (options, algorithm, b64, comment).

    Options may contain quoted commas, so splitting is token-based: the
    first token starting with a known key-type prefix is the algorithm.
    """
    try:
        tokens = shlex.split(line, posix=False)
    except ValueError as exc:
        raise MalformedKey(f"unbalanced quoting: {exc}") from exc
    for index, token in enumerate(tokens):
        if token.startswith(_KEY_TYPE_PREFIXES):
            if index + 1 >= len(tokens):
                raise MalformedKey("missing key data after algorithm")
            options = " ".join(tokens[:index])
            comment = " ".join(tokens[index + 2 :])
            return options, token, tokens[index + 1], comment
    raise MalformedKey("no recognizable key type on line")


def parse_authorized_keys(text: str) -> tuple[list[SshPublicKey], list[ParseError]]:
    """Parse authorized_keys text; errors are collected per line, not fatal."""
    keys: list[SshPublicKey] = []
    errors: list[ParseError] = []
    for line_number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            options, algorithm, b64, comment = _split_line(stripped)
            try:
                blob = base64.b64decode(b64, validate=True)
            except Exception as exc:
                raise MalformedKey(f"bad base64: {exc}") from exc
            keys.append(parse_public_key(algorithm, blob, comment, options))
        except MalformedKey as exc:
            errors.append(ParseError(line_number=line_number, detail=str(exc)))
    return keys, errors


def serialize_authorized_keys(keys: list[SshPublicKey]) -> str:
    return "".join(key.to_line() + "\n" for key in keys)


def load_blacklist(path: str | Path) -> frozenset[str]:
    """One fingerprint per line; blank lines and # comments ignored."""
    entries = set()
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.add(line)
    return frozenset(entries)


def evaluate_key(
    key: SshPublicKey,
    policy: KeyPolicy,
    debian_blacklist: frozenset[str] = frozenset(),
) -> KeyPolicyVerdict:
    """Accumulate every applicable rejection reason for one key."""
    reasons: list[RejectionReason] = []
    if key.algorithm in policy.forbidden_algorithms:
        reasons.append(RejectionReason.FORBIDDEN_ALGORITHM)
    if key.algorithm == "ssh-rsa" and key.bit_length < policy.min_rsa_bits:
        reasons.append(RejectionReason.WEAK_LENGTH)
    if key.fingerprint in debian_blacklist:
        reasons.append(RejectionReason.DEBIAN_BLACKLISTED)
    if (
        policy.roca_check_enabled
        and key.rsa_modulus is not None
        and key.rsa_modulus > 2**16
        and key.rsa_modulus % 2 == 1
        and roca_check(key.rsa_modulus)
    ):
        reasons.append(RejectionReason.ROCA_SUSPECT)
    return KeyPolicyVerdict(reasons=tuple(reasons))


class VetoedKey(Exception):
    def __init__(self, verdicts: list[tuple[SshPublicKey, KeyPolicyVerdict]]):
        rejected = [
            (k.fingerprint, [r.value for r in v.reasons])
            for k, v in verdicts
            if not v.accepted
        ]
        super().__init__(f"rejected keys: {rejected}")
        self.verdicts = verdicts


class UserFileAuthority:
    """Per-user authorized_keys storage under a configured root.

    Stands in for the production mechanism that writes as the target
    user; the contract is that writes happen under that user's own
    directory, never a shared privileged location.  One backup
    generation is retained.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, username: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(username, threading.Lock())

    def path_for(self, username: str) -> Path:
        return self.root / username / "authorized_keys"

    def read(self, username: str) -> str:
        path = self.path_for(username)
        return path.read_text() if path.exists() else ""

    def write(self, username: str, content: str) -> None:
        path = self.path_for(username)
        with self._lock_for(username):
            path.parent.mkdir(parents=True, exist_ok=True)
            if path.exists():
                backup = path.with_suffix(".bak")
                backup.write_bytes(path.read_bytes())
            tmp = path.with_suffix(".tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                fh.write(content)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)

    def restore_backup(self, username: str) -> None:
        path = self.path_for(username)
        backup = path.with_suffix(".bak")
        if backup.exists():
            os.replace(backup, path)


def write_authorized_keys(
    authority: UserFileAuthority,
    username: str,
    entries: list[SshPublicKey],
    policy: KeyPolicy,
    debian_blacklist: frozenset[str] = frozenset(),
) -> list[tuple[SshPublicKey, KeyPolicyVerdict]]:
    """All-or-nothing rewrite: one rejected entry aborts the whole write."""
    verdicts = [(key, evaluate_key(key, policy, debian_blacklist)) for key in entries]
    if any(not verdict.accepted for _, verdict in verdicts):
        raise VetoedKey(verdicts)
    authority.write(username, serialize_authorized_keys(entries))
    return verdicts
