"""Quaternary codebooks over Z4 with a certified minimum Lee distance.

Words are stored as ``uint8`` rows of a 2-D array, one digit per harmonic.
A digit ``d`` stands for the carrier phase ``2*pi*d/4``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .errors import ConstructionFailure, InvalidArgument

# Lee weight of a digit difference taken mod 4.
_LEE = np.array([0, 1, 2, 1], dtype=np.int16)

FULL_POOL_MAX_LENGTH = 10
RANDOM_POOL_SIZE = 1 << 20


def _as_words(words, n: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(words)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InvalidArgument("words must be a 1-D word or a 2-D array of words")
    if arr.size and (arr.min() < 0 or arr.max() > 3):
        raise InvalidArgument("quaternary digits must be in {0,1,2,3}")
    if n is not None and arr.shape[1] != n:
        raise InvalidArgument(f"expected words of length {n}, got {arr.shape[1]}")
    return arr.astype(np.uint8)


def antipode(words) -> np.ndarray:
    """Add 2 to every digit: the word whose PSK sequence is the negation."""
    w = np.asarray(words, dtype=np.uint8)
    return ((w + 2) % 4).astype(np.uint8)


def lee_distance(a, b) -> int:
    a = np.asarray(a, dtype=np.int16).ravel()
    b = np.asarray(b, dtype=np.int16).ravel()
    if a.shape != b.shape:
        raise InvalidArgument(f"length mismatch: {a.size} vs {b.size}")
    if a.size and (min(a.min(), b.min()) < 0 or max(a.max(), b.max()) > 3):
        raise InvalidArgument("quaternary digits must be in {0,1,2,3}")
    return int(_LEE[(a - b) % 4].sum())


def lee_distances_to(pool: np.ndarray, word: np.ndarray) -> np.ndarray:
    """Lee distance from every row of ``pool`` to a single ``word``."""
    diff = (pool.astype(np.int16) - word.astype(np.int16)) & 3
    return _LEE[diff].sum(axis=1)


# Gray image of a Z4 digit; Lee weight equals its Hamming weight.
_GRAY = np.array([0b00, 0b01, 0b11, 0b10], dtype=np.int64)


def gray_pack(words: np.ndarray) -> np.ndarray:
    """Pack each word's Gray image into one integer (2 bits per digit).

    Lee distance between words equals the popcount of the XOR of their
    packed images.
    """
    w = np.atleast_2d(words).astype(np.intp)
    if w.shape[1] > 31:
        raise InvalidArgument("gray packing supports words of length <= 31")
    shifts = 2 * np.arange(w.shape[1] - 1, -1, -1, dtype=np.int64)
    return (_GRAY[w] << shifts).sum(axis=1)


def pairwise_lee(words: np.ndarray) -> np.ndarray:
    w = words.astype(np.int16)
    return _LEE[(w[:, None, :] - w[None, :, :]) & 3].sum(axis=2)


def _exhaustive_min_distance(words: np.ndarray, chunk: int = 256) -> int:
    w = words.astype(np.int16)
    m = len(w)
    best = np.iinfo(np.int32).max
    for start in range(0, m, chunk):
        block = w[start:start + chunk]
        d = _LEE[(block[:, None, :] - w[None, :, :]) & 3].sum(axis=2)
        rows = np.arange(len(block))
        d[rows, rows + start] = np.iinfo(np.int16).max
        best = min(best, int(d.min()))
    return best


@dataclass(frozen=True)
class QuaternaryCodebook:
    """An ordered set of distinct words over Z4^n.

    ``min_lee_distance`` is always the exhaustively computed pairwise
    minimum, never a value carried over from a search.
    """

    words: np.ndarray
    n: int
    min_lee_distance: int
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_words(cls, words, seed: Optional[int] = None, meta: Optional[dict] = None):
        arr = _as_words(words).copy()
        if len(arr) < 1:
            raise InvalidArgument("codebook needs at least one word")
        if len(np.unique(arr, axis=0)) != len(arr):
            raise InvalidArgument("codebook words must be distinct")
        arr.setflags(write=False)
        dmin = _exhaustive_min_distance(arr) if len(arr) >= 2 else 0
        return cls(words=arr, n=arr.shape[1], min_lee_distance=dmin, seed=seed,
                   meta=dict(meta or {}))

    @property
    def size(self) -> int:
        return len(self.words)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def is_reflection_symmetric(self) -> bool:
        if len(self.words) % 2:
            return False
        return bool(np.array_equal(self.words[1::2], antipode(self.words[0::2])))

    def __eq__(self, other):
        if not isinstance(other, QuaternaryCodebook):
            return NotImplemented
        return (self.n == other.n and self.seed == other.seed
                and np.array_equal(self.words, other.words))

    def __hash__(self):
        return hash((self.n, self.seed, self.words.tobytes()))


def min_lee_distance(cb) -> int:
    words = cb.words if isinstance(cb, QuaternaryCodebook) else _as_words(cb)
    if len(words) < 2:
        raise InvalidArgument("minimum distance needs at least 2 words")
    return _exhaustive_min_distance(words)


def phase_histogram(cb) -> np.ndarray:
    """Return a ``(4, n)`` table: ``counts[d, k]`` words with digit ``d`` at ``k``."""
    words = cb.words if isinstance(cb, QuaternaryCodebook) else _as_words(cb)
    n = words.shape[1]
    counts = np.zeros((4, n), dtype=np.int64)
    for d in range(4):
        counts[d] = (words == d).sum(axis=0)
    return counts


def enumerate_words(n: int) -> np.ndarray:
    """All of Z4^n in lexicographic order (first digit most significant)."""
    if n > FULL_POOL_MAX_LENGTH:
        raise InvalidArgument(f"full enumeration is capped at n={FULL_POOL_MAX_LENGTH}")
    idx = np.arange(4 ** n, dtype=np.int64)
    shifts = 2 * np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 3).astype(np.uint8)


def _lexsorted_unique(words: np.ndarray) -> np.ndarray:
    # np.unique on axis=0 sorts rows lexicographically.
    return np.unique(words, axis=0)


def even_parity(words: np.ndarray) -> np.ndarray:
    """Mask of words whose digit sum is even.

    Lee weight has the parity of the digit sum, so all pairwise Lee
    distances inside this additive subgroup of Z4^n are even.
    """
    return (words.astype(np.int64).sum(axis=1) % 2) == 0


def default_pool(n: int, seed: Optional[int], kind: str = "full") -> np.ndarray:
    if kind not in ("even", "full"):
        raise InvalidArgument(f"unknown pool kind {kind!r}")
    if n <= FULL_POOL_MAX_LENGTH:
        pool = enumerate_words(n)
    else:
        rng = np.random.default_rng(seed)
        sample = rng.integers(0, 4, size=(RANDOM_POOL_SIZE, n), dtype=np.uint8)
        pool = _lexsorted_unique(sample)
    if kind == "even":
        pool = pool[even_parity(pool)]
    return pool


def _chi_table(hist: np.ndarray, new_size: int) -> np.ndarray:
    """Per-position, per-digit cost of inserting the pair {c, c+2}.

    The cost is sum_d (4*count - M')**2, which orders candidates exactly
    like the chi-square statistic against a uniform phase distribution.
    """
    n = hist.shape[1]
    table = np.empty((n, 4), dtype=np.int64)
    for d in range(4):
        bump = np.zeros(4, dtype=np.int64)
        bump[d] += 1
        bump[(d + 2) % 4] += 1
        col = hist + bump[:, None]
        table[:, d] = ((4 * col - new_size) ** 2).sum(axis=0)
    return table


def codebook_search(
    n: int,
    M: int,
    seed: int = 0,
    candidate_pool=None,
    peak_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> QuaternaryCodebook:
    """Greedy construction of an antipodal code with large Lee distance.

    Starting from a seeded random word ``c0`` and its antipode, each step
    keeps the pool words at maximal Lee distance from the current code,
    narrows them to those whose insertion keeps the per-position phase
    histogram closest to uniform, optionally to those with the smallest
    waveform peak (``peak_fn``), and finally takes the lexicographically
    smallest. The chosen word enters together with its antipode, so the
    result satisfies ``words[2m+1] == antipode(words[2m])`` and the
    synthesized waveforms satisfy ``s[2m+1] == -s[2m]``.

    ``candidate_pool`` is ``"full"`` (default: all of Z4^n), ``"even"``
    (words with even digit sum) or an explicit array of words. For
    ``n > 10`` the named pools start from a seeded random sample of 2**20
    words instead of the full space.
    """
    if n < 1:
        raise InvalidArgument("word length must be positive")
    if M % 2 or M < 2:
        raise InvalidArgument(f"codebook size must be even and >= 2, got {M}")
    if M > 4 ** n:
        raise InvalidArgument(f"codebook size {M} exceeds 4^{n}")

    if candidate_pool is None or isinstance(candidate_pool, str):
        pool_kind = candidate_pool or "full"
        pool = default_pool(n, seed, pool_kind)
        if n > FULL_POOL_MAX_LENGTH:
            pool_kind += "-random"
    else:
        pool = _lexsorted_unique(_as_words(np.asarray(candidate_pool), n))
        pool_kind = "explicit"
    if len(pool) == 0:
        raise ConstructionFailure("empty candidate pool", partial_size=0)

    rng = np.random.default_rng(seed)
    first = int(rng.integers(len(pool)))

    packed = gray_pack(pool)
    # The antipode flips both Gray bits of every digit.
    flip = np.int64((1 << (2 * n)) - 1)
    dist = np.full(len(pool), 2 * n + 1, dtype=np.uint8)
    hist = np.zeros((4, n), dtype=np.int64)
    chosen: list[np.ndarray] = []
    positions = np.arange(n)

    def insert(idx: int) -> None:
        c = pool[idx]
        anti = antipode(c)
        chosen.extend([c, anti])
        np.minimum(dist, np.bitwise_count(packed ^ packed[idx]), out=dist)
        np.minimum(dist, np.bitwise_count(packed ^ (packed[idx] ^ flip)), out=dist)
        hist[c, positions] += 1
        hist[anti, positions] += 1

    insert(first)
    for _ in range(M // 2 - 1):
        open_ = dist > 0
        if not open_.any():
            raise ConstructionFailure(
                f"candidate pool exhausted after {len(chosen)} of {M} words",
                partial_size=len(chosen))
        best = dist[open_].max()
        cand = np.flatnonzero(open_ & (dist == best))
        cost = _chi_table(hist, len(chosen) + 2)[positions, pool[cand]].sum(axis=1)
        cand = cand[cost == cost.min()]
        if peak_fn is not None and len(cand) > 1:
            peaks = np.asarray(peak_fn(pool[cand]), dtype=float)
            cand = cand[[int(np.argmin(peaks))]]
        insert(int(cand[0]))

    meta = {"pool": pool_kind, "pool_size": int(len(pool)), "peak_pruning": peak_fn is not None}
    return QuaternaryCodebook.from_words(np.array(chosen), seed=seed, meta=meta)


def best_codebook_search(n: int, M: int, seed: int = 0, retries: int = 10,
                         **kwargs) -> QuaternaryCodebook:
    """Run :func:`codebook_search` for seeds ``seed .. seed+retries-1``.

    Returns the first codebook reaching the largest certified distance.
    """
    best = None
    for s in range(seed, seed + max(1, retries)):
        cb = codebook_search(n, M, seed=s, **kwargs)
        if best is None or cb.min_lee_distance > best.min_lee_distance:
            best = cb
    return best


_HEADER_RE = re.compile(r"^DOVQ4 v1 n=(\d+) M=(\d+) d=(\d+) seed=(-?\d+|none)$")


def format_codebook(cb: QuaternaryCodebook) -> str:
    seed = "none" if cb.seed is None else str(cb.seed)
    lines = [f"DOVQ4 v1 n={cb.n} M={cb.size} d={cb.min_lee_distance} seed={seed}"]
    lines.extend("".join(str(int(d)) for d in w) for w in cb.words)
    return "\n".join(lines) + "\n"


def parse_codebook(text: str) -> QuaternaryCodebook:
    lines = [ln.strip() for ln in text.strip().splitlines()]
    if not lines:
        raise InvalidArgument("empty codebook file")
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise InvalidArgument(f"bad codebook header: {lines[0]!r}")
    n, size, d = int(m.group(1)), int(m.group(2)), int(m.group(3))
    seed = None if m.group(4) == "none" else int(m.group(4))
    body = lines[1:]
    if len(body) != size:
        raise InvalidArgument(f"header declares M={size} but file has {len(body)} words")
    for i, ln in enumerate(body):
        if len(ln) != n or not set(ln) <= set("0123"):
            raise InvalidArgument(f"word {i} is not {n} digits over {{0,1,2,3}}: {ln!r}")
    words = np.array([[int(ch) for ch in ln] for ln in body], dtype=np.uint8)
    cb = QuaternaryCodebook.from_words(words, seed=seed)
    if size >= 2 and cb.min_lee_distance != d:
        raise InvalidArgument(
            f"declared d={d} but certified minimum Lee distance is {cb.min_lee_distance}")
    return cb


def save_codebook(cb: QuaternaryCodebook, path) -> None:
    Path(path).write_text(format_codebook(cb))


def load_codebook(path) -> QuaternaryCodebook:
    return parse_codebook(Path(path).read_text())
