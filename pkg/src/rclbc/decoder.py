"""Unrolled weighted belief propagation with rate-dependent neuron masking.

Messages live on the edges of the Tanner graph, ordered row-major by
(check, variable). Leave-one-out sums and products are taken with
prefix/suffix scans over padded adjacency lists, so a node of degree one
gets an exact empty sum (0) or product (1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gf2 import BitMatrix

CLIP_EPS = 1e-7
LLR_CLIP = 30.0
# largest magnitude a single check can emit with unit weight
C2V_CAP = 2.0 * math.atanh(1.0 - CLIP_EPS)


def _padded_adjacency(owner: np.ndarray, count: int) -> np.ndarray:
    """Rows of edge indices grouped by ``owner``, padded with -1."""
    deg = np.bincount(owner, minlength=count)
    width = max(int(deg.max()) if deg.size else 0, 1)
    adj = np.full((count, width), -1, dtype=np.int64)
    order = np.argsort(owner, kind="stable")
    slot = np.arange(len(owner)) - np.repeat(np.cumsum(deg) - deg, deg)
    adj[owner[order], slot] = order
    return adj


@dataclass(frozen=True, eq=False)
class TannerGraph:
    n_vars: int
    n_checks: int
    edge_check: np.ndarray
    edge_var: np.ndarray
    var_adj: np.ndarray = field(repr=False)
    check_adj: np.ndarray = field(repr=False)

    @property
    def n_edges(self) -> int:
        return len(self.edge_var)

    def var_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_var, minlength=self.n_vars)

    def check_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_check, minlength=self.n_checks)

    def edge_mask(self, n_checks: int, n_vars: int) -> np.ndarray:
        """Edges that stay active when only the leading checks/variables are on."""
        return (self.edge_check < n_checks) & (self.edge_var < n_vars)

    def subgraph(self, n_checks: int, n_vars: int) -> TannerGraph:
        keep = self.edge_mask(n_checks, n_vars)
        return _from_edges(n_vars, n_checks, self.edge_check[keep], self.edge_var[keep])


def _from_edges(n_vars, n_checks, edge_check, edge_var) -> TannerGraph:
    edge_check = np.asarray(edge_check, dtype=np.int64)
    edge_var = np.asarray(edge_var, dtype=np.int64)
    return TannerGraph(
        n_vars, n_checks, edge_check, edge_var,
        _padded_adjacency(edge_var, n_vars),
        _padded_adjacency(edge_check, n_checks),
    )


def build_tanner(h_sub: BitMatrix) -> TannerGraph:
    chk, var = np.nonzero(h_sub.bits)
    return _from_edges(h_sub.cols, h_sub.rows, chk, var)


@dataclass
class DecoderParams:
    """Per-cell weights and biases over the full ``m0 x n0`` edge grid."""

    alpha: np.ndarray
    beta: np.ndarray | None = None
    enable_bias: bool = False

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.float64)
        if self.alpha.ndim != 3:
            raise ValueError(f"alpha must be (l_max, m0, n0), got {self.alpha.shape}")
        if self.beta is None:
            self.beta = np.zeros_like(self.alpha)
        self.beta = np.asarray(self.beta, dtype=np.float64)
        if self.beta.shape != self.alpha.shape:
            raise ValueError("beta and alpha shapes differ")

    @classmethod
    def plain(cls, l_max: int, m0: int, n0: int) -> DecoderParams:
        return cls(np.ones((l_max, m0, n0)))

    @property
    def l_max(self) -> int:
        return self.alpha.shape[0]

    @property
    def grid(self) -> tuple[int, int]:
        return self.alpha.shape[1:]

    def on_edges(self, graph: TannerGraph) -> tuple[np.ndarray, np.ndarray | None]:
        a = self.alpha[:, graph.edge_check, graph.edge_var]
        b = self.beta[:, graph.edge_check, graph.edge_var] if self.enable_bias else None
        return a, b


def _gather(msgs: np.ndarray, adj: np.ndarray, fill: float) -> np.ndarray:
    padded = np.concatenate([msgs, np.full(msgs.shape[:-1] + (1,), fill)], axis=-1)
    return padded[..., adj]  # index -1 hits the fill column


def _scatter(vals: np.ndarray, adj: np.ndarray, n_edges: int) -> np.ndarray:
    out = np.empty(vals.shape[:-2] + (n_edges + 1,))
    out[..., adj] = vals
    return out[..., :n_edges]


def _exclusive(g: np.ndarray, op) -> np.ndarray:
    """Leave-one-out reduction along the last axis via prefix/suffix scans."""
    acc = op.accumulate
    ident = 0.0 if op is np.add else 1.0
    pad = np.full(g.shape[:-1] + (1,), ident)
    pre = np.concatenate([pad, acc(g, axis=-1)[..., :-1]], axis=-1)
    suf = np.concatenate([acc(g[..., ::-1], axis=-1)[..., ::-1][..., 1:], pad], axis=-1)
    return op(pre, suf)


def v2c_messages(llr: np.ndarray, c_prev: np.ndarray, graph: TannerGraph) -> np.ndarray:
    """V_e = L_i + sum of incoming check messages at i other than along e."""
    g = _gather(c_prev, graph.var_adj, 0.0)
    ext = _scatter(_exclusive(g, np.add), graph.var_adj, graph.n_edges)
    return llr[..., graph.edge_var] + ext


def phi(x: np.ndarray) -> np.ndarray:
    """-log tanh(x/2) for x >= 0. Its own inverse; phi(0) = inf, phi(inf) = 0."""
    e = np.exp(-x)
    with np.errstate(divide="ignore", invalid="ignore"):
        # log(1 - e^-x), switching form at ln 2 to keep full precision
        log1m = np.where(x > math.log(2.0), np.log1p(-e), np.log(-np.expm1(-x)))
    return np.log1p(e) - log1m


def c2v_messages(v: np.ndarray, alpha: np.ndarray, graph: TannerGraph,
                 beta: np.ndarray | None = None) -> np.ndarray:
    """C_e = alpha_e * 2 atanh(prod of tanh(V/2) over the other edges) + beta_e.

    Evaluated as sign * phi(sum of phi|V|): the direct tanh product loses
    about log10(1/(1-|prod|)) digits as it approaches +-1, the phi form does not.
    The magnitude is capped where |prod| would reach 1 - CLIP_EPS.
    """
    sign = _gather(np.where(v < 0, -1.0, 1.0), graph.check_adj, 1.0)
    mag = _gather(phi(np.abs(v)), graph.check_adj, 0.0)
    sign = _scatter(_exclusive(sign, np.multiply), graph.check_adj, graph.n_edges)
    total = _scatter(_exclusive(mag, np.add), graph.check_adj, graph.n_edges)
    c = alpha * (sign * np.minimum(phi(total), C2V_CAP))
    if beta is not None:
        c = c + beta
    return c


def decode(llr, graph: TannerGraph, alpha: np.ndarray, beta: np.ndarray | None = None,
           edge_mask: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Run ``alpha.shape[0]`` cells; returns output LLRs and hard decisions.

    ``alpha``/``beta`` are per-edge arrays of shape (l_max, n_edges). With
    ``edge_mask`` the inactive edges carry zero messages and contribute a
    unit factor to check products, which switches their neurons off.
    """
    llr = np.clip(np.asarray(llr, dtype=np.float64), -LLR_CLIP, LLR_CLIP)
    c = np.zeros(llr.shape[:-1] + (graph.n_edges,))
    for l in range(alpha.shape[0]):
        v = v2c_messages(llr, c, graph)
        if edge_mask is not None:
            v = np.where(edge_mask, v, np.inf)  # tanh(inf) = 1: neutral in the product
        c = c2v_messages(v, alpha[l], graph, None if beta is None else beta[l])
        if edge_mask is not None:
            c = np.where(edge_mask, c, 0.0)
    out = llr + _gather(c, graph.var_adj, 0.0).sum(-1)
    return out, (out < 0).astype(np.uint8)


class RCDecoder:
    """Decoder for every rate of a family, sharing one parameter set.

    ``h`` is the precode parity-check matrix; rate ``n_c`` decodes on the
    subgraph of the first ``n_c - k`` checks and ``n_c`` variables.
    """

    def __init__(self, h: BitMatrix, k: int, params: DecoderParams):
        if params.grid != h.shape:
            raise ValueError(f"decoder grid {params.grid} does not match H {h.shape}")
        self.h = h
        self.k = k
        self.params = params
        self.full_graph = build_tanner(h)
        self._cache: dict[int, tuple] = {}

    @property
    def l_max(self) -> int:
        return self.params.l_max

    def graph(self, n_c: int) -> TannerGraph:
        return self._prepare(n_c)[0]

    def _prepare(self, n_c: int):
        if n_c not in self._cache:
            g = self.full_graph.subgraph(n_c - self.k, n_c)
            a, b = self.params.on_edges(g)
            self._cache[n_c] = (g, a, b)
        return self._cache[n_c]

    def decode(self, llr, n_c: int | None = None):
        llr = np.asarray(llr)
        n_c = llr.shape[-1] if n_c is None else n_c
        g, a, b = self._prepare(n_c)
        return decode(llr, g, a, b)

    def decode_masked(self, llr):
        """Same result via the full precode graph with inactive neurons masked."""
        llr = np.asarray(llr, dtype=np.float64)
        n_c = llr.shape[-1]
        g = self.full_graph
        pad = np.zeros(llr.shape[:-1] + (g.n_vars - n_c,))
        a, b = self.params.on_edges(g)
        out, hard = decode(np.concatenate([llr, pad], -1), g, a, b,
                           edge_mask=g.edge_mask(n_c - self.k, n_c))
        return out[..., :n_c], hard[..., :n_c]
