"""Deterministic blinded ordering of report slots.

The permutation is decoded from a keyed SHA-256 digest through the
factorial number system, so it is stable for a given (seed, case,
reviewer) triple and uniform over all n! orderings across keys (the
modulo bias at 2^256 over n! <= 24 is immeasurably small).
"""

import hashlib
import math
import string


def _lehmer_decode(value, n):
    digits = []
    for radix in range(1, n + 1):
        value, rem = divmod(value, radix)
        digits.append(rem)
    digits.reverse()
    pool = list(range(n))
    return [pool.pop(d) for d in digits]


def blinding_permutation(case_id, reviewer_id, seed, n):
    """Order in which the n registered frameworks fill slots A, B, ...

    Returns a list p where slot i shows framework index p[i].
    """
    if n < 2:
        raise ValueError(f"need at least 2 report frameworks, got {n}")
    key = f"{seed}|{case_id}|{reviewer_id}".encode()
    value = int.from_bytes(hashlib.sha256(key).digest(), "big")
    return _lehmer_decode(value % math.factorial(n), n)


def slot_names(n):
    if n > 26:
        raise ValueError("more report slots than letters")
    return list(string.ascii_uppercase[:n])
