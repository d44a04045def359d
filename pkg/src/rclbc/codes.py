"""Rate-compatible code families, puncturing, BCH baselines and alist I/O."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .gf2 import (
    BitMatrix,
    RankError,
    StructureError,
    generator_with_perm,
    matmul_gf2,
    mul_vec,
    rank_gf2,
)

LOWER_TRIANGULAR = "lower-triangular"
SYSTEMATIC = "systematic"
GENERIC = "generic"
STRUCTURES = (LOWER_TRIANGULAR, SYSTEMATIC, GENERIC)


class ConfigError(ValueError):
    pass


class RateError(ValueError):
    pass


@dataclass(frozen=True)
class RateLadder:
    """Codeword lengths sharing one message length, longest (lowest rate) first."""

    k: int
    lengths: tuple[int, ...]

    def __post_init__(self):
        if not self.lengths:
            raise ConfigError("empty rate ladder")
        if any(b >= a for a, b in zip(self.lengths, self.lengths[1:])):
            raise ConfigError(f"ladder must be strictly decreasing: {self.lengths}")
        if self.lengths[-1] <= self.k:
            raise ConfigError(f"every length must exceed k={self.k}: {self.lengths}")

    @property
    def n0(self) -> int:
        return self.lengths[0]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return [(self.k, n) for n in self.lengths]

    def rate(self, n_c: int) -> Fraction:
        return Fraction(self.k, n_c)


def rate_ladder_from_pairs(pairs) -> RateLadder:
    pairs = [(int(k), int(n)) for k, n in pairs]
    if not pairs:
        raise ConfigError("no (k, n) pairs given")
    ks = {k for k, _ in pairs}
    if len(ks) != 1:
        raise ConfigError(f"all pairs must share k, got {sorted(ks)}")
    lengths = [n for _, n in pairs]
    if len(set(lengths)) != len(lengths):
        raise ConfigError(f"duplicate code lengths in {lengths}")
    return RateLadder(ks.pop(), tuple(sorted(lengths, reverse=True)))


def puncture(c, n_c: int, k: int) -> np.ndarray:
    """Keep the first ``n_c`` positions (drops trailing parity bits)."""
    c = np.asarray(c)
    n0 = c.shape[-1]
    if not k < n_c <= n0:
        raise RateError(f"n_c={n_c} outside ({k}, {n0}]")
    return c[..., :n_c]


def check_structure(h: BitMatrix, k: int) -> str:
    """Classify ``h`` as lower-triangular (Eq.-3 form), systematic or generic."""
    m = h.rows
    if h.cols != m + k:
        raise StructureError(f"H is {h.shape}, expected {m}x{m + k}")
    h2 = h.bits[:, k:]
    if (np.diag(h2) == 1).all() and not np.triu(h2, 1).any():
        if not np.tril(h2, -1).any():
            return SYSTEMATIC
        return LOWER_TRIANGULAR
    return GENERIC


def subcode_matrices(h: BitMatrix, n_c: int, k: int) -> BitMatrix:
    """Parity checks that survive puncturing to length ``n_c``.

    Takes the first ``n_c - k`` rows and first ``n_c`` columns. With a
    lower-triangular trailing block those rows never touch a punctured
    column, so every punctured codeword still satisfies them.
    """
    n0 = h.cols
    if not k < n_c <= n0:
        raise RateError(f"n_c={n_c} outside ({k}, {n0}]")
    m_c = n_c - k
    if h.bits[:m_c, n_c:].any():
        raise StructureError(f"rows 0..{m_c - 1} reference punctured columns >= {n_c}")
    return h.submatrix(m_c, n_c)


@dataclass(frozen=True, eq=False)
class RCCodeFamily:
    ladder: RateLadder
    H: BitMatrix
    G: BitMatrix
    structure: str
    info_positions: np.ndarray = field(default=None)
    code_id: str = "code"

    def __post_init__(self):
        k, n0 = self.ladder.k, self.ladder.n0
        if self.H.shape != (n0 - k, n0):
            raise ConfigError(f"H is {self.H.shape}, ladder needs {(n0 - k, n0)}")
        if self.G.shape != (k, n0):
            raise ConfigError(f"G is {self.G.shape}, ladder needs {(k, n0)}")
        if self.structure not in STRUCTURES:
            raise ConfigError(f"unknown structure {self.structure!r}")
        if not matmul_gf2(self.G, self.H.T).is_zero():
            raise ConfigError("G H^T != 0")
        info = np.arange(k) if self.info_positions is None else np.asarray(self.info_positions)
        if len(self.ladder.lengths) > 1 and not np.array_equal(np.sort(info), np.arange(k)):
            raise ConfigError("puncturing needs the message in the leading positions")
        info = info.copy()
        info.setflags(write=False)
        object.__setattr__(self, "info_positions", info)
        for n_c in self.ladder.lengths:
            subcode_matrices(self.H, n_c, k)

    @classmethod
    def from_H(cls, h: BitMatrix, ladder: RateLadder | None = None, code_id: str = "code") -> RCCodeFamily:
        """Family from a parity-check matrix; rejects rank-deficient ``h``."""
        m, n0 = h.shape
        k = n0 - m
        if ladder is None:
            ladder = RateLadder(k, (n0,))
        r = rank_gf2(h)
        if r < m:
            raise RankError(m - r, m)
        structure = check_structure(h, k)
        g, info = generator_with_perm(h)
        return cls(ladder, h, g, structure, info, code_id)

    @property
    def k(self) -> int:
        return self.ladder.k

    @property
    def n0(self) -> int:
        return self.ladder.n0

    def encode(self, x) -> np.ndarray:
        return mul_vec(x, self.G)

    def subcode(self, n_c: int) -> BitMatrix:
        if n_c not in self.ladder.lengths:
            raise RateError(f"n_c={n_c} not in ladder {self.ladder.lengths}")
        return subcode_matrices(self.H, n_c, self.k)


# --- BCH baselines -------------------------------------------------------

_GF32_POLY = 0b100101  # x^5 + x^2 + 1
_BCH_T = {(31, 21): 2, (31, 16): 3, (31, 11): 5}


def _gf32_tables():
    exp = [0] * 62
    v = 1
    for i in range(31):
        exp[i] = exp[i + 31] = v
        v <<= 1
        if v & 0b100000:
            v ^= _GF32_POLY
    log = [0] * 32
    for i in range(31):
        log[exp[i]] = i
    return exp, log


def _minimal_poly(i: int, exp, log) -> tuple[int, ...]:
    """Coefficients (low degree first) of the minimal polynomial of alpha^i."""
    coset = []
    j = i % 31
    while j not in coset:
        coset.append(j)
        j = (2 * j) % 31
    poly = [1]  # over GF(32), as field elements
    for j in coset:
        root = exp[j]
        nxt = [0] * (len(poly) + 1)
        for d, c in enumerate(poly):
            nxt[d + 1] ^= c
            if c:
                nxt[d] ^= exp[log[c] + log[root]]
        poly = nxt
    if any(c not in (0, 1) for c in poly):
        raise AssertionError("minimal polynomial not binary")
    return tuple(poly)


def _polymul2(a, b):
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] ^= y
    return out


def _polydiv2(num, den):
    num = list(num)
    q = [0] * (len(num) - len(den) + 1)
    for s in range(len(q) - 1, -1, -1):
        if num[s + len(den) - 1]:
            q[s] = 1
            for j, d in enumerate(den):
                num[s + j] ^= d
    if any(num):
        raise AssertionError("nonzero remainder")
    return q


def bch_generator_poly(n: int, k: int) -> list[int]:
    if (n, k) not in _BCH_T:
        raise ConfigError(f"unsupported BCH code ({n},{k}); have {sorted(_BCH_T)}")
    exp, log = _gf32_tables()
    seen = set()
    g = [1]
    for i in range(1, 2 * _BCH_T[n, k] + 1):
        mp = _minimal_poly(i, exp, log)
        if mp not in seen:
            seen.add(mp)
            g = _polymul2(g, mp)
    if len(g) - 1 != n - k:
        raise AssertionError(f"deg g = {len(g) - 1}, expected {n - k}")
    return g


def bch_parity_check(n: int, k: int) -> BitMatrix:
    """Cyclic parity-check matrix from shifts of the reciprocal check polynomial.

    Row ``i`` holds ``h_k, ..., h_0`` starting at column ``i``, which puts a
    unit lower-triangular block in the trailing ``n - k`` columns.
    """
    g = bch_generator_poly(n, k)
    h = _polydiv2([1] + [0] * (n - 1) + [1], g)
    rev = np.array(h[::-1], dtype=np.uint8)
    out = np.zeros((n - k, n), dtype=np.uint8)
    for i in range(n - k):
        out[i, i:i + k + 1] = rev
    return BitMatrix(out)


def bch_generator(n: int, k: int) -> BitMatrix:
    """Non-systematic cyclic generator (shifts of g)."""
    g = np.array(bch_generator_poly(n, k), dtype=np.uint8)
    out = np.zeros((k, n), dtype=np.uint8)
    for i in range(k):
        out[i, i:i + n - k + 1] = g
    return BitMatrix(out)


def bch_family(n: int, k: int) -> RCCodeFamily:
    return RCCodeFamily.from_H(bch_parity_check(n, k), code_id=f"bch{n}_{k}")


# --- alist ---------------------------------------------------------------

class AlistError(ValueError):
    def __init__(self, msg: str, line: int | None = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


def dumps_alist(m: BitMatrix) -> str:
    rows, cols = m.shape
    col_idx = [np.flatnonzero(m.bits[:, i]) + 1 for i in range(cols)]
    row_idx = [np.flatnonzero(m.bits[j]) + 1 for j in range(rows)]
    dv = max(len(c) for c in col_idx)
    dc = max(len(r) for r in row_idx)

    def pad(ix, width):
        # an all-zero matrix still gets one placeholder per line
        return " ".join(str(v) for v in list(ix) + [0] * (max(width, 1) - len(ix)))

    lines = [
        f"{cols} {rows}",
        f"{dv} {dc}",
        " ".join(str(len(c)) for c in col_idx),
        " ".join(str(len(r)) for r in row_idx),
    ]
    lines += [pad(c, dv) for c in col_idx]
    lines += [pad(r, dc) for r in row_idx]
    return "\n".join(lines) + "\n"


def loads_alist(text: str) -> BitMatrix:
    """Parse alist text; zero padding in index lists is accepted but optional."""
    lines = [(no, ln.split()) for no, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    pos = 0

    def ints(count=None):
        nonlocal pos
        if pos >= len(lines):
            raise AlistError("unexpected end of file")
        no, toks = lines[pos]
        pos += 1
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise AlistError(f"non-integer token in {' '.join(toks)!r}", no) from None
        if count is not None and len(vals) != count:
            raise AlistError(f"expected {count} integers, got {len(vals)}", no)
        return no, vals

    no, (n, m) = ints(2)
    if n < 1 or m < 1:
        raise AlistError(f"bad dimensions {n} {m}", no)
    no, (dv, dc) = ints(2)
    no_cd, col_deg = ints(n)
    no_rd, row_deg = ints(m)
    if max(col_deg) > dv or max(row_deg) > dc:
        raise AlistError("degree exceeds declared maximum", no)
    if sum(col_deg) != sum(row_deg):
        raise AlistError("column and row degree sums differ", no_rd)
    bits = np.zeros((m, n), dtype=np.uint8)
    for i in range(n):
        no, vals = ints()
        idx = [v for v in vals if v != 0]
        if len(idx) != col_deg[i]:
            raise AlistError(f"column {i + 1} lists {len(idx)} entries, degree is {col_deg[i]}", no)
        for v in idx:
            if not 1 <= v <= m:
                raise AlistError(f"row index {v} outside 1..{m}", no)
            bits[v - 1, i] = 1
    for j in range(m):
        no, vals = ints()
        idx = sorted(v for v in vals if v != 0)
        if len(idx) != row_deg[j]:
            raise AlistError(f"row {j + 1} lists {len(idx)} entries, degree is {row_deg[j]}", no)
        for v in idx:
            if not 1 <= v <= n:
                raise AlistError(f"column index {v} outside 1..{n}", no)
        if idx != list(np.flatnonzero(bits[j]) + 1):
            raise AlistError(f"row {j + 1} disagrees with the column lists", no)
    if pos != len(lines):
        raise AlistError("trailing content", lines[pos][0])
    return BitMatrix(bits)


def save_alist(m: BitMatrix, path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(dumps_alist(m))
    os.replace(tmp, path)


def load_alist(path) -> BitMatrix:
    return loads_alist(Path(path).read_text())
