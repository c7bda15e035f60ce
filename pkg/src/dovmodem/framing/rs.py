"""Shortened systematic Reed-Solomon codes over GF(64) with erasures.

Codeword arrays are transmitted in index order: ``k`` message symbols
followed by ``n - k`` parity symbols. Index ``i`` holds the coefficient
of ``x**(n-1-i)``. The generator has roots ``alpha**1 .. alpha**(n-k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from ..errors import InvalidArgument
from . import gf64
from .gf64 import EXP, LOG, Q1, mul


@lru_cache(maxsize=None)
def generator_poly(nsym: int) -> tuple:
    """Lowest-degree-first coefficients of prod_{i=1..nsym} (x - alpha**i)."""
    g = [1]
    for i in range(1, nsym + 1):
        g = gf64.poly_mul(g, [gf64.power(i), 1])
    return tuple(g)


@dataclass
class RsResult:
    ok: bool
    message: Optional[np.ndarray] = None
    codeword: Optional[np.ndarray] = None
    errors: int = 0
    erasures: int = 0
    reason: str = ""

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class ReedSolomon:
    n: int
    k: int
    _gen_hi: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (0 < self.k < self.n <= Q1):
            raise InvalidArgument(f"RS({self.n},{self.k}) not valid over GF(64)")
        # Highest-degree-first generator, leading 1 dropped, for the LFSR.
        object.__setattr__(self, "_gen_hi", tuple(reversed(generator_poly(self.nsym)))[1:])

    @property
    def nsym(self) -> int:
        return self.n - self.k

    def _symbols(self, data, length: int, what: str) -> list:
        a = np.asarray(data).ravel()
        if a.size != length:
            raise InvalidArgument(f"{what} must have {length} symbols, got {a.size}")
        if a.size and (a.min() < 0 or a.max() > Q1):
            raise InvalidArgument(f"{what} symbols must be in 0..{Q1}")
        return [int(v) for v in a]

    def encode(self, message) -> np.ndarray:
        msg = self._symbols(message, self.k, "message")
        reg = [0] * self.nsym
        g = self._gen_hi
        for m in msg:
            fb = m ^ reg[0]
            reg = reg[1:] + [0]
            if fb:
                lf = LOG[fb]
                for j, gj in enumerate(g):
                    if gj:
                        reg[j] ^= EXP[lf + LOG[gj]]
        return np.array(msg + reg, dtype=np.uint8)

    def syndromes(self, word) -> list:
        r = [int(v) for v in np.asarray(word).ravel()]
        out = []
        for j in range(1, self.nsym + 1):
            x = EXP[j % Q1]
            acc = 0
            for c in r:
                acc = mul(acc, x) ^ c
            out.append(acc)
        return out

    def decode(self, received, erasures=()) -> RsResult:
        """Errors-and-erasures decoding; failure is reported in the result.

        Succeeds whenever ``2*errors + len(erasures) <= n - k``.
        """
        r = self._symbols(received, self.n, "received word")
        eras = sorted({int(e) for e in erasures})
        if len(eras) != len(list(erasures)):
            raise InvalidArgument("erasure positions must be distinct")
        if eras and (eras[0] < 0 or eras[-1] >= self.n):
            raise InvalidArgument(f"erasure positions must be in 0..{self.n - 1}")
        f = len(eras)
        if f > self.nsym:
            return RsResult(False, erasures=f, reason="too many erasures")
        for p in eras:
            r[p] = 0
        S = self.syndromes(r)
        if not any(S):
            return RsResult(True, np.array(r[:self.k], np.uint8), np.array(r, np.uint8),
                            erasures=f)
        n = self.n
        # Erasure locator Gamma(x) = prod (1 - X_i x), X_i = alpha**(n-1-pos).
        gamma = [1]
        for p in eras:
            gamma = gf64.poly_mul(gamma, [1, EXP[(n - 1 - p) % Q1]])
        lam, B, L = list(gamma), list(gamma), f
        for step in range(f, self.nsym):
            delta = 0
            for i in range(min(L, len(lam) - 1) + 1):
                delta ^= mul(lam[i], S[step - i])
            xB = [0] + B
            if delta == 0:
                B = xB
                continue
            new = gf64.poly_add(lam, gf64.poly_scale(xB, delta))
            if 2 * L <= step + f:
                B = gf64.poly_scale(lam, gf64.inv(delta))
                L = step + 1 + f - L
            else:
                B = xB
            lam = new
        while len(lam) > 1 and lam[-1] == 0:
            lam.pop()
        deg = len(lam) - 1
        if deg != L or L > self.nsym:
            return RsResult(False, erasures=f, reason="locator degree mismatch")
        # Chien search restricted to the positions of the shortened code.
        positions = []
        for pos in range(n):
            xinv = EXP[(-(n - 1 - pos)) % Q1]
            if gf64.poly_eval(lam, xinv) == 0:
                positions.append(pos)
        if len(positions) != deg:
            return RsResult(False, erasures=f, reason="locator roots outside code")
        omega = gf64.poly_mul(S, lam)[:self.nsym]
        dlam = [lam[i] if i % 2 else 0 for i in range(1, len(lam))]
        for pos in positions:
            xinv = EXP[(-(n - 1 - pos)) % Q1]
            den = gf64.poly_eval(dlam, xinv)
            if den == 0:
                return RsResult(False, erasures=f, reason="Forney denominator vanished")
            r[pos] ^= gf64.div(gf64.poly_eval(omega, xinv), den)
        if any(self.syndromes(r)):
            return RsResult(False, erasures=f, reason="residual syndrome")
        n_err = len([p for p in positions if p not in set(eras)])
        return RsResult(True, np.array(r[:self.k], np.uint8), np.array(r, np.uint8),
                        errors=n_err, erasures=f)
