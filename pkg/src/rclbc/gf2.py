"""Dense binary linear algebra over GF(2).

Matrices are stored as read-only ``uint8`` numpy arrays. Products are done
with integer matmul followed by ``& 1``, which is fast enough for the code
sizes used here (n <= 128) even when encoding millions of messages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GF2Error(ValueError):
    pass


class ShapeError(GF2Error):
    pass


class StructureError(GF2Error):
    pass


class RankError(GF2Error):
    def __init__(self, deficiency: int, rows: int):
        super().__init__(f"matrix is rank deficient by {deficiency} of {rows} rows")
        self.deficiency = deficiency


def _as_bits(a) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype == np.bool_:
        return arr.astype(np.uint8)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise GF2Error("entries must be 0 or 1")
    return arr.astype(np.uint8)


@dataclass(frozen=True, eq=False)
class BitMatrix:
    bits: np.ndarray

    def __post_init__(self):
        bits = _as_bits(self.bits)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ShapeError(f"BitMatrix needs a nonempty 2-D array, got shape {bits.shape}")
        bits = np.ascontiguousarray(bits)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def identity(cls, n: int) -> BitMatrix:
        return cls(np.eye(n, dtype=np.uint8))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> BitMatrix:
        return cls(np.zeros((rows, cols), dtype=np.uint8))

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    @property
    def T(self) -> BitMatrix:
        return BitMatrix(self.bits.T)

    def submatrix(self, rows: int, cols: int) -> BitMatrix:
        """Leading ``rows x cols`` block."""
        return BitMatrix(self.bits[:rows, :cols])

    def is_zero(self) -> bool:
        return not self.bits.any()

    def __eq__(self, other):
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self.bits, other.bits)

    def __repr__(self):
        body = "\n".join(" " + "".join(map(str, r)) for r in self.bits)
        return f"BitMatrix({self.rows}x{self.cols}\n{body})"


def hstack(*mats: BitMatrix) -> BitMatrix:
    return BitMatrix(np.hstack([m.bits for m in mats]))


def matmul_gf2(a: BitMatrix, b: BitMatrix) -> BitMatrix:
    if a.cols != b.rows:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    prod = a.bits.astype(np.int64) @ b.bits.astype(np.int64)
    return BitMatrix(prod & 1)


def mul_vec(x: np.ndarray, m: BitMatrix) -> np.ndarray:
    """Row vector(s) times matrix, ``x`` of shape (..., m.rows)."""
    x = np.asarray(x)
    if x.shape[-1] != m.rows:
        raise ShapeError(f"vector length {x.shape[-1]} != {m.rows}")
    return ((x.astype(np.int64) @ m.bits.astype(np.int64)) & 1).astype(np.uint8)


def _row_reduce(a: np.ndarray) -> tuple[np.ndarray, list[int]]:
    a = a.astype(np.uint8).copy()
    pivots = []
    r = 0
    for c in range(a.shape[1]):
        if r == a.shape[0]:
            break
        nz = np.flatnonzero(a[r:, c])
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        hit = np.flatnonzero(a[:, c])
        hit = hit[hit != r]
        a[hit] ^= a[r]
        pivots.append(c)
        r += 1
    return a, pivots


def rank_gf2(m: BitMatrix) -> int:
    return len(_row_reduce(m.bits)[1])


def solve_parity_lower_triangular(h1: BitMatrix, h2: BitMatrix, x) -> np.ndarray:
    """Parity bits ``p`` with ``H1 x^T + H2 p^T = 0`` by forward substitution.

    ``x`` may be a single message of length k or a batch of shape (B, k).
    """
    m = h2.rows
    if h2.cols != m or h1.rows != m:
        raise ShapeError(f"H1 {h1.shape} and H2 {h2.shape} do not fit together")
    if not (np.diag(h2.bits) == 1).all():
        raise StructureError("H2 must have a unit diagonal")
    if np.triu(h2.bits, 1).any():
        raise StructureError("H2 must be lower-triangular")
    x = _as_bits(x)
    if x.shape[-1] != h1.cols:
        raise ShapeError(f"message length {x.shape[-1]} != k={h1.cols}")
    batch = x.reshape(-1, h1.cols).astype(np.int64)
    acc = batch @ h1.bits.T.astype(np.int64)  # (B, m)
    p = np.zeros_like(acc)
    h2i = h2.bits.astype(np.int64)
    for j in range(m):
        p[:, j] = (acc[:, j] + p[:, :j] @ h2i[j, :j]) & 1
    return p.astype(np.uint8).reshape(x.shape[:-1] + (m,))


def systematic_form(h: BitMatrix) -> tuple[BitMatrix, np.ndarray]:
    """Reduce ``h`` to ``[P | I]`` over GF(2), permuting columns only if needed.

    Returns ``(P, perm)`` where row operations applied to ``h.bits[:, perm]``
    give ``[P | I]``. The identity block is built on the trailing columns;
    a trailing column without a pivot is swapped with the rightmost usable
    leading column.
    """
    m, n = h.shape
    k = n - m
    if k < 0:
        raise RankError(m - n, m)
    a = h.bits.copy()
    perm = np.arange(n)
    for r in range(m):
        c = k + r
        nz = np.flatnonzero(a[r:, c])
        if nz.size == 0:
            # columns not yet used as pivots: leading block plus later trailing ones
            candidates = [j for j in list(range(k - 1, -1, -1)) + list(range(c + 1, n))
                          if a[r:, j].any()]
            if not candidates:
                raise RankError(m - r, m)
            j = candidates[0]
            a[:, [c, j]] = a[:, [j, c]]
            perm[[c, j]] = perm[[j, c]]
            nz = np.flatnonzero(a[r:, c])
        p = r + nz[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        hit = np.flatnonzero(a[:, c])
        hit = hit[hit != r]
        a[hit] ^= a[r]
    if k == 0:
        raise GF2Error("code dimension is zero")
    return BitMatrix(a[:, :k]), perm


def generator_with_perm(h: BitMatrix) -> tuple[BitMatrix, np.ndarray]:
    """Generator in the original column order plus information positions.

    Works for any full-rank ``h``; ``info_positions`` are the columns that
    carry the message bits verbatim.
    """
    p, perm = systematic_form(h)
    k = p.cols
    g_perm = np.hstack([np.eye(k, dtype=np.uint8), p.bits.T])
    g = np.empty_like(g_perm)
    g[:, perm] = g_perm
    return BitMatrix(g), perm[:k].copy()


def generator_from_H(h: BitMatrix) -> BitMatrix:
    """``G = [I | P^T]`` for an ``h`` whose trailing block is invertible."""
    p, perm = systematic_form(h)
    if not np.array_equal(perm, np.arange(h.cols)):
        raise StructureError("trailing square block of H is singular; columns would be permuted")
    return BitMatrix(np.hstack([np.eye(p.cols, dtype=np.uint8), p.bits.T]))

