"""Detector for RSA moduli produced by the flawed Infineon generator.

Affected moduli have the telltale property that their residue modulo
every small prime p lies in the multiplicative subgroup generated by
65537 mod p.  We test against all odd primes up to 167; a random
modulus passes all 38 membership tests with probability far below
1e-6, so a positive is an overwhelming signal.

Membership tables are precomputed once at import.
"""

from __future__ import annotations

SMALL_PRIMES = (
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67,
    71, 73, 79, 83, 89, 97, 101, 103, 107, 109, 113, 127, 131, 137, 139,
    149, 151, 157, 163, 167,
)

GENERATOR = 65537


def _subgroup(prime: int) -> frozenset[int]:
    members = set()
    value = 1
    while value not in members:
        members.add(value)
        value = value * GENERATOR % prime
    return frozenset(members)


SUBGROUPS: dict[int, frozenset[int]] = {p: _subgroup(p) for p in SMALL_PRIMES}


def roca_check(n: int) -> bool:
    """True when every small-prime residue of ``n`` is a power of 65537."""
    for prime in SMALL_PRIMES:
        if n % prime not in SUBGROUPS[prime]:
            return False
    return True
