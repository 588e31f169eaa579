"""Session lifetime boundaries and revocation."""

from __future__ import annotations

from datetime import datetime, timedelta, timezone

from fedgate.sessions import COOKIE_NAME, SessionPolicy, SessionStore

NOW = datetime(2026, 8, 1, 12, 0, 0, tzinfo=timezone.utc)


def test_token_is_long_and_cookie_is_hardened():
    store = SessionStore()
    session, cookie = store.create(1, "saml", NOW)
    assert len(session.token) >= 43  # 256 bits of urlsafe base64
    assert cookie.startswith(f"{COOKIE_NAME}={session.token}; ")
    for attribute in ("Secure", "HttpOnly", "SameSite=Lax", "Path=/"):
        assert attribute in cookie


def test_tokens_are_unique():
    store = SessionStore()
    tokens = {store.create(1, "pki", NOW)[0].token for _ in range(100)}
    assert len(tokens) == 100


def test_idle_timeout_boundary():
    store = SessionStore()
    session, _ = store.create(7, "saml", NOW)
    assert store.validate(session.token, NOW + timedelta(minutes=30)) == 7
    # The validation above refreshed last_used, so idle expiry is
    # measured from the most recent activity.
    assert store.validate(session.token, NOW + timedelta(minutes=60)) == 7
    assert store.validate(session.token, NOW + timedelta(minutes=90, seconds=1)) is None
    assert len(store) == 0


def test_max_lifetime_boundary_despite_activity():
    store = SessionStore()
    session, _ = store.create(7, "saml", NOW)
    t = NOW
    while t < NOW + timedelta(hours=12):
        t += timedelta(minutes=20)
        expected = 7 if t - NOW <= timedelta(hours=12) else None
        assert store.validate(session.token, t) == expected
    assert store.validate(session.token, NOW + timedelta(hours=12, minutes=1)) is None


def test_unknown_and_destroyed_tokens_rejected():
    store = SessionStore()
    session, _ = store.create(7, "pki", NOW)
    assert store.validate("no-such-token", NOW) is None
    store.destroy(session.token)
    assert store.validate(session.token, NOW) is None
    store.destroy(session.token)  # idempotent


def test_destroy_all_for_user():
    store = SessionStore()
    mine = [store.create(7, "saml", NOW)[0] for _ in range(3)]
    other, _ = store.create(8, "saml", NOW)
    assert store.destroy_all_for_user(7) == 3
    assert store.count_for_user(7) == 0
    assert all(store.validate(s.token, NOW) is None for s in mine)
    assert store.validate(other.token, NOW) == 8


def test_purge_expired_sweeps_both_limits():
    policy = SessionPolicy(idle_timeout=timedelta(minutes=5), max_lifetime=timedelta(hours=1))
    store = SessionStore(policy)
    idle, _ = store.create(1, "saml", NOW)
    old, _ = store.create(2, "saml", NOW - timedelta(hours=2))
    fresh, _ = store.create(3, "saml", NOW)
    store.validate(fresh.token, NOW + timedelta(minutes=4))
    store.purge_expired(NOW + timedelta(minutes=6))
    assert len(store) == 1
    assert store.count_for_user(3) == 1


def test_deactivation_hook_revokes_sessions(tmp_path):
    from fedgate.store import IdentityStore

    store = IdentityStore(tmp_path / "store.json")
    sessions = SessionStore()
    store.on_deactivate = sessions.destroy_all_for_user

    user = store.create_user("jdoe", "jdoe@example.edu")
    session, _ = sessions.create(user.user_id, "saml", NOW)
    assert sessions.validate(session.token, NOW) == user.user_id

    store.deactivate_user(user.user_id)
    assert sessions.validate(session.token, NOW) is None
