"""Seed-deterministic RSA key generation for fixtures.

Regenerating a fixture with the same seed must reproduce the same keys
(and therefore the same signatures, since signing is RSA PKCS#1 v1.5,
which is deterministic).  Keys are 2048-bit, fixture-only material.
"""

from __future__ import annotations

import random

import gmpy2
from cryptography.hazmat.primitives.asymmetric import rsa

PUBLIC_EXPONENT = 65537


def _prime(rng: random.Random, bits: int) -> int:
    while True:
        candidate = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        prime = int(gmpy2.next_prime(candidate))
        if prime.bit_length() == bits and (prime - 1) % PUBLIC_EXPONENT != 0:
            return prime


def deterministic_rsa_key(rng: random.Random, bits: int = 2048) -> rsa.RSAPrivateKey:
    half = bits // 2
    p = _prime(rng, half)
    q = _prime(rng, half)
    while q == p:
        q = _prime(rng, half)
    if p < q:
        p, q = q, p
    n = p * q
    d = int(gmpy2.invert(PUBLIC_EXPONENT, gmpy2.lcm(p - 1, q - 1)))
    numbers = rsa.RSAPrivateNumbers(
        p=p,
        q=q,
        d=d,
        dmp1=d % (p - 1),
        dmq1=d % (q - 1),
        iqmp=int(gmpy2.invert(q, p)),
        public_numbers=rsa.RSAPublicNumbers(e=PUBLIC_EXPONENT, n=n),
    )
    return numbers.private_key()
