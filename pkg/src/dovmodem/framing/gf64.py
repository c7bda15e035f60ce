"""Arithmetic in GF(64) = GF(2)[x] / (x^6 + x + 1)."""

from __future__ import annotations

PRIMITIVE_POLY = 0b1000011
ORDER = 64
Q1 = ORDER - 1

EXP = [0] * (2 * Q1)
LOG = [0] * ORDER

_v = 1
for _i in range(Q1):
    EXP[_i] = EXP[_i + Q1] = _v
    LOG[_v] = _i
    _v <<= 1
    if _v & ORDER:
        _v ^= PRIMITIVE_POLY
del _v, _i


def mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return EXP[LOG[a] + LOG[b]]


def div(a: int, b: int) -> int:
    if b == 0:
        raise ZeroDivisionError("division by zero in GF(64)")
    if a == 0:
        return 0
    return EXP[(LOG[a] - LOG[b]) % Q1]


def inv(a: int) -> int:
    return div(1, a)


def power(i: int) -> int:
    """alpha**i for any integer i."""
    return EXP[i % Q1]


def poly_eval(p, x: int) -> int:
    """Evaluate a polynomial given lowest-degree coefficient first (Horner)."""
    acc = 0
    for c in reversed(p):
        acc = mul(acc, x) ^ c
    return acc


def poly_mul(p, q):
    out = [0] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a:
            for j, b in enumerate(q):
                out[i + j] ^= mul(a, b)
    return out


def poly_scale(p, c: int):
    return [mul(a, c) for a in p]


def poly_add(p, q):
    n = max(len(p), len(q))
    return [(p[i] if i < len(p) else 0) ^ (q[i] if i < len(q) else 0) for i in range(n)]
