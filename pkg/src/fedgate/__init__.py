"""Federated authentication gateway.

SAML 2.0 service provider, bridge-PKI client certificate validation,
local account mapping with failed-login onboarding, cookie sessions and
self-service SSH key registration.
"""

__version__ = "0.1.0"
