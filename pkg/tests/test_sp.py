"""Service-provider protocol behavior: bindings, ordered checks, skew."""

from __future__ import annotations

import base64
from datetime import datetime, timedelta, timezone
from urllib.parse import parse_qs, urlparse

import pytest
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import padding
from hypothesis import given, strategies as st

from fedgate.saml import sp
from fedgate.saml.xmlutil import q

NOW = datetime(2026, 8, 1, 12, 0, 0, tzinfo=timezone.utc)
IDP1 = "https://idp1.test.example/idp"


@given(st.binary(min_size=0, max_size=4096))
def test_redirect_payload_codec_round_trip(document):
    assert sp.decode_redirect_payload(sp.encode_redirect_payload(document)) == document


def test_redirect_payload_is_raw_deflate():
    # No zlib header: the first byte of a zlib stream would be 0x78.
    encoded = sp.encode_redirect_payload(b"<AuthnRequest/>")
    assert base64.b64decode(encoded)[0] != 0x78


class TestBuildAuthnRequest:
    def test_url_layout_and_record(self, ctx):
        cache = ctx.gateway.metadata_cache
        config = ctx.gateway.config.saml
        url, record = sp.build_authn_request(IDP1, cache, config, "/next", NOW)

        parsed = urlparse(url)
        assert url.startswith("https://idp1.test.example/sso?")
        params = {k: v[0] for k, v in parse_qs(parsed.query).items()}
        assert set(params) == {"SAMLRequest", "RelayState", "SigAlg", "Signature"}
        assert params["SigAlg"] == sp.SIG_ALG_RSA_SHA256
        assert params["RelayState"] == "/next"

        # Canonical ordering of the signed portion.
        names = [pair.split("=")[0] for pair in parsed.query.split("&")]
        assert names == ["SAMLRequest", "RelayState", "SigAlg", "Signature"]

        document, _ = sp.decode_redirect_request(url)
        assert document.get("ID") == record.request_id
        assert document.get("Destination") == "https://idp1.test.example/sso"
        assert document.get("AssertionConsumerServiceURL") == config.acs_url
        assert document.findtext(q("saml", "Issuer")) == config.sp_entity_id
        assert record.idp_entity_id == IDP1
        assert record.relay_state == "/next"

    def test_detached_signature_verifies_over_signed_query(self, ctx):
        cache = ctx.gateway.metadata_cache
        config = ctx.gateway.config.saml
        url, _ = sp.build_authn_request(IDP1, cache, config, "/x", NOW)
        query = urlparse(url).query
        signed_part, _, signature_part = query.rpartition("&")
        signature = base64.b64decode(
            parse_qs(signature_part)["Signature"][0]
        )
        config.sp_key.public_key().verify(
            signature, signed_part.encode("ascii"), padding.PKCS1v15(), hashes.SHA256()
        )

    def test_unknown_idp(self, ctx):
        with pytest.raises(sp.UnknownIdp):
            sp.build_authn_request(
                "https://nowhere.example/idp",
                ctx.gateway.metadata_cache,
                ctx.gateway.config.saml,
                "/",
                NOW,
            )


class TestPendingRequestStore:
    def test_consume_once(self):
        store = sp.PendingRequestStore()
        record = sp.AuthnRequestRecord("_r1", IDP1, NOW, "/")
        store.add(record)
        assert store.consume("_r1", NOW) == record
        assert store.consume("_r1", NOW) is None

    def test_aged_out_record_unusable(self):
        store = sp.PendingRequestStore(max_age=timedelta(minutes=10))
        store.add(sp.AuthnRequestRecord("_r1", IDP1, NOW, "/"))
        assert store.consume("_r1", NOW + timedelta(minutes=11)) is None


class TestReplayStore:
    def test_first_time_accepted_then_rejected(self):
        store = sp.ReplayStore()
        assert store.check_and_add("_a1", NOW + timedelta(minutes=5))
        assert not store.check_and_add("_a1", NOW + timedelta(minutes=5))

    def test_purge_forgets_expired_windows(self):
        store = sp.ReplayStore()
        store.check_and_add("_a1", NOW + timedelta(minutes=5))
        store.purge(NOW + timedelta(minutes=6))
        assert store.check_and_add("_a1", NOW + timedelta(minutes=10))


class TestConsumeChecks:
    """Each verifier check fails with its own type, in a fixed order."""

    def _exchange(self, ctx, now=None, principal="jdoe@example.edu", **mutations):
        cache = ctx.gateway.metadata_cache
        config = ctx.gateway.config.saml
        pending = sp.PendingRequestStore()
        replay = sp.ReplayStore()
        url, record = sp.build_authn_request(IDP1, cache, config, "/", NOW)
        pending.add(record)
        params = ctx.mock_idp(0).respond_to_url(url, principal, NOW, **mutations)
        return sp.consume_response(params, cache, config, pending, replay, now or NOW)

    def test_happy_path(self, ctx):
        principal = self._exchange(ctx)
        assert principal.eppn == "jdoe@example.edu"
        assert principal.idp_entity_id == IDP1

    def test_skew_tolerates_two_minutes(self, ctx):
        # Window is [NOW-1m, NOW+5m]; with 120 s skew the response is
        # still acceptable at NOW+7m-1s but not at NOW+7m.
        principal = self._exchange(
            ctx, now=NOW + timedelta(minutes=7) - timedelta(seconds=1)
        )
        assert principal.eppn == "jdoe@example.edu"
        with pytest.raises(sp.OutsideTimeWindow):
            self._exchange(ctx, now=NOW + timedelta(minutes=7))

    def test_skew_before_window(self, ctx):
        window = (NOW + timedelta(minutes=3), NOW + timedelta(minutes=8))
        with pytest.raises(sp.OutsideTimeWindow):
            self._exchange(ctx, window_override=window)
        # Within skew of the early bound: accepted.
        window = (NOW + timedelta(seconds=119), NOW + timedelta(minutes=8))
        assert self._exchange(ctx, window_override=window).eppn == "jdoe@example.edu"

    def test_unknown_issuer(self, ctx):
        with pytest.raises(sp.UnknownIssuer):
            self._exchange(ctx, issuer_override="https://rogue.example/idp")

    def test_tampered_signature(self, ctx):
        from fedgate.saml.xmlsig import SignatureInvalid

        with pytest.raises(SignatureInvalid):
            self._exchange(ctx, tamper_after_signing=True)

    def test_wrong_destination(self, ctx):
        with pytest.raises(sp.DestinationMismatch):
            self._exchange(ctx, destination_override="https://evil.example/acs")

    def test_unsolicited(self, ctx):
        with pytest.raises(sp.StaleOrUnsolicited):
            self._exchange(ctx, unsolicited=True)

    def test_audience(self, ctx):
        with pytest.raises(sp.AudienceMismatch):
            self._exchange(ctx, audience_override="https://other.example/sp")

    def test_replay(self, ctx):
        cache = ctx.gateway.metadata_cache
        config = ctx.gateway.config.saml
        pending = sp.PendingRequestStore()
        replay = sp.ReplayStore()

        def once(assertion_id):
            url, record = sp.build_authn_request(IDP1, cache, config, "/", NOW)
            pending.add(record)
            params = ctx.mock_idp(0).respond_to_url(
                url, "jdoe@example.edu", NOW, assertion_id=assertion_id
            )
            return sp.consume_response(params, cache, config, pending, replay, NOW)

        assert once("_a" + "ab" * 16).eppn == "jdoe@example.edu"
        with pytest.raises(sp.ReplayDetected):
            once("_a" + "ab" * 16)

    def test_encrypted_assertion(self, ctx):
        principal = self._exchange(
            ctx, encrypt_for=ctx.gateway.config.saml.sp_key.public_key()
        )
        assert principal.eppn == "jdoe@example.edu"

    def test_attribute_free_assertion_yields_no_eppn(self, ctx):
        principal = self._exchange(ctx, principal=None, empty_attributes=True)
        assert principal.eppn is None
        assert principal.attributes == {}

    def test_eppn_accepted_under_oid_name(self, ctx):
        principal = self._exchange(
            ctx,
            principal=None,
            attributes={"urn:oid:1.3.6.1.4.1.5923.1.1.1.6": ["oid@example.edu"]},
        )
        assert principal.eppn == "oid@example.edu"

    def test_undecodable_response(self, ctx):
        cache = ctx.gateway.metadata_cache
        config = ctx.gateway.config.saml
        with pytest.raises(sp.MalformedResponse):
            sp.consume_response(
                {"SAMLResponse": "!!!"},
                cache,
                config,
                sp.PendingRequestStore(),
                sp.ReplayStore(),
                NOW,
            )
