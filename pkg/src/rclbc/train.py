"""End-to-end code design: parity-check generation, soft encoding, neural BP, BCE, Adam.

Reverse-mode gradients come from torch autograd over an unrolled, fixed
graph. The only custom backward is the step-function binarizer, which
passes gradients through the sigmoid derivative. All arithmetic is float64.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from .channel import noise_variance
from .codes import LOWER_TRIANGULAR, SYSTEMATIC, ConfigError
from .decoder import CLIP_EPS, LLR_CLIP, DecoderParams
from .gf2 import BitMatrix

DTYPE = torch.float64
PROB_CLAMP = 1e-7


class TrainingDiverged(RuntimeError):
    def __init__(self, state, msg):
        super().__init__(msg)
        self.state = state


# --- parity-check generation ----------------------------------------------

def w_shape(structure: str, k: int, n0: int) -> tuple[int, int]:
    m = n0 - k
    if structure == LOWER_TRIANGULAR:
        return (m, n0)
    if structure == SYSTEMATIC:
        return (m, k)
    raise ConfigError(f"cannot learn a {structure!r} parity-check matrix")


def learnable_mask(structure: str, k: int, n0: int) -> np.ndarray:
    """Positions of W that are real parameters; the rest stay at zero."""
    mask = np.ones(w_shape(structure, k, n0), dtype=bool)
    if structure == LOWER_TRIANGULAR:
        m = n0 - k
        mask[:, k:] = np.tril(np.ones((m, m), dtype=bool), -1)
    return mask


def init_coding_params(structure: str, k: int, n0: int, rng: np.random.Generator) -> np.ndarray:
    w = rng.uniform(-0.01, 0.01, size=w_shape(structure, k, n0))
    return np.where(learnable_mask(structure, k, n0), w, 0.0)


class StepSigmoid(torch.autograd.Function):
    """Hard 0/1 threshold forward (w >= 0 -> 1), sigmoid-derivative backward."""

    @staticmethod
    def forward(ctx, w):
        ctx.save_for_backward(w)
        return (w >= 0).to(w.dtype)

    @staticmethod
    def backward(ctx, grad):
        (w,) = ctx.saved_tensors
        s = torch.sigmoid(w)
        return grad * s * (1.0 - s)


dsf = StepSigmoid.apply


def assemble_H(w: torch.Tensor, structure: str, k: int, n0: int,
               binarize: Callable = dsf) -> torch.Tensor:
    m = n0 - k
    eye = torch.eye(m, dtype=w.dtype)
    mask = torch.as_tensor(learnable_mask(structure, k, n0))
    hb = binarize(w) * mask
    if structure == LOWER_TRIANGULAR:
        return hb + torch.cat([torch.zeros(m, k, dtype=w.dtype), eye], dim=1)
    return torch.cat([hb, eye], dim=1)


def assemble_H_bits(w: np.ndarray, structure: str, k: int, n0: int) -> BitMatrix:
    with torch.no_grad():
        h = assemble_H(torch.as_tensor(w, dtype=DTYPE), structure, k, n0)
    return BitMatrix(h.numpy().astype(np.uint8))


# --- differentiable encoder and decoder -----------------------------------

def soft_encode(h: torch.Tensor, x: torch.Tensor, k: int) -> torch.Tensor:
    """Codewords ``[x | p]`` with each parity bit built as a bipolar product.

    p_j = (1 - prod_i (1 - 2 h_ji c_i)) / 2 over the message and the earlier
    parity bits; exact XOR when ``h`` is binary, polynomial in ``h``.
    """
    m = h.shape[0]
    h2 = h[:, k:].detach()
    if not (torch.all(torch.diagonal(h2) == 1) and not torch.triu(h2, 1).any()):
        raise ConfigError("trailing block of H is not unit lower-triangular")
    bits = [x[:, i] for i in range(k)]
    for j in range(m):
        c = torch.stack(bits, dim=1)
        s = torch.prod(1.0 - 2.0 * h[j, :k + j] * c, dim=1)
        bits.append((1.0 - s) / 2.0)
    return torch.stack(bits, dim=1)


def _exclusive_prod(f: torch.Tensor) -> torch.Tensor:
    ones = torch.ones_like(f[..., :1])
    pre = torch.cat([ones, torch.cumprod(f, -1)[..., :-1]], -1)
    suf = torch.cat([torch.flip(torch.cumprod(torch.flip(f, [-1]), -1), [-1])[..., 1:], ones], -1)
    return pre * suf


def nbp_forward(llr: torch.Tensor, h: torch.Tensor, alpha: torch.Tensor,
                beta: torch.Tensor | None = None) -> torch.Tensor:
    """Dense neural BP on the grid of ``h`` (m_c x n_c); returns output LLRs.

    Non-edges (h = 0) contribute a unit factor to check products and a zero
    message to variable sums; h enters polynomially so gradients reach it.
    """
    llr = torch.clamp(llr, -LLR_CLIP, LLR_CLIP)
    c = torch.zeros(llr.shape[0], *h.shape, dtype=llr.dtype)
    for l in range(alpha.shape[0]):
        hc = h * c
        v = llr[:, None, :] + hc.sum(1, keepdim=True) - hc
        f = 1.0 - h + h * torch.tanh(v / 2.0)
        prod = torch.clamp(_exclusive_prod(f), -1.0 + CLIP_EPS, 1.0 - CLIP_EPS)
        c = alpha[l] * 2.0 * torch.atanh(prod)
        if beta is not None:
            c = c + beta[l]
    return llr + (h * c).sum(1)


def bce_loss(out_llr: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    """Mean BCE of P(bit = 1) = sigmoid(-O) against the message bits."""
    if out_llr.shape != x.shape:
        raise ValueError(f"shape mismatch {tuple(out_llr.shape)} vs {tuple(x.shape)}")
    p = torch.clamp(torch.sigmoid(-out_llr), PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(x * torch.log(p) + (1.0 - x) * torch.log(1.0 - p)).mean()


@dataclass
class Batch:
    n_c: int
    ebn0_db: float
    x: np.ndarray
    noise: np.ndarray


def draw_batch(rng: np.random.Generator, k: int, n_c: int, ebn0_db: float, size: int) -> Batch:
    x = rng.integers(0, 2, size=(size, k)).astype(np.float64)
    return Batch(n_c, ebn0_db, x, rng.standard_normal((size, n_c)))


def batch_loss(w: torch.Tensor, alpha: torch.Tensor, batch: Batch, structure: str,
               k: int, n0: int, binarize: Callable = dsf) -> torch.Tensor:
    """One rate's forward pass: H from W, encode, puncture, channel, decode, BCE."""
    h = assemble_H(w, structure, k, n0, binarize)
    x = torch.as_tensor(batch.x, dtype=DTYPE)
    c = soft_encode(h, x, k)[:, :batch.n_c]
    var = noise_variance(k, batch.n_c, batch.ebn0_db)
    y = (1.0 - 2.0 * c) + math.sqrt(var) * torch.as_tensor(batch.noise, dtype=DTYPE)
    m_c = batch.n_c - k
    out = nbp_forward(2.0 * y / var, h[:m_c, :batch.n_c], alpha[:, :m_c, :batch.n_c])
    return bce_loss(out[:, :k], x)


def gradients(w: np.ndarray, alpha: np.ndarray, batches: list[Batch], structure: str,
              k: int, n0: int, train_alpha: bool = True):
    """Summed loss over the per-rate batches and its gradients."""
    wt = torch.tensor(w, dtype=DTYPE, requires_grad=True)
    at = torch.tensor(alpha, dtype=DTYPE, requires_grad=train_alpha)
    losses = [batch_loss(wt, at, b, structure, k, n0) for b in batches]
    total = torch.stack(losses).sum()
    total.backward()
    gw = wt.grad.numpy() * learnable_mask(structure, k, n0)
    ga = at.grad.numpy() if train_alpha else None
    return [l.item() for l in losses], gw, ga


# --- optimizer ------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> dict:
    state.t += 1
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = p
            continue
        m = beta1 * state.m.get(name, np.zeros_like(p)) + (1 - beta1) * g
        v = beta2 * state.v.get(name, np.zeros_like(p)) + (1 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - beta1 ** state.t)
        v_hat = v / (1 - beta2 ** state.t)
        out[name] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out


# --- training loops -------------------------------------------------------

PRECODE, RC = "precode", "rc"


@dataclass(frozen=True)
class TrainConfig:
    stage: str
    epochs: int
    rate_snr_pairs: tuple[tuple[int, float], ...]
    batch_size: int = 256
    vectors_per_epoch: int = 2048
    learning_rate: float = 1e-3
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.stage not in (PRECODE, RC):
            raise ConfigError(f"unknown stage {self.stage!r}")
        if self.batch_size < 1 or self.vectors_per_epoch % self.batch_size:
            raise ConfigError("batch_size must divide vectors_per_epoch")
        if self.stage == PRECODE and len(self.rate_snr_pairs) != 1:
            raise ConfigError("precode stage trains exactly one rate")

    @property
    def steps_per_epoch(self) -> int:
        return self.vectors_per_epoch // self.batch_size


@dataclass
class TrainState:
    """Everything needed to resume a run bit-exactly."""

    structure: str
    k: int
    n0: int
    w: np.ndarray
    alpha: np.ndarray
    rng: np.random.Generator
    adam: AdamState = field(default_factory=AdamState)
    stage: str = PRECODE
    epoch: int = 0
    history: list = field(default_factory=list)

    @classmethod
    def fresh(cls, structure: str, k: int, n0: int, seed: int, l_max: int = 5) -> TrainState:
        rng = np.random.default_rng(seed)
        w = init_coding_params(structure, k, n0, rng)
        return cls(structure, k, n0, w, np.ones((l_max, n0 - k, n0)), rng)

    def H(self) -> BitMatrix:
        return assemble_H_bits(self.w, self.structure, self.k, self.n0)

    def decoder_params(self) -> DecoderParams:
        return DecoderParams(self.alpha.copy())

    def copy(self) -> TrainState:
        return copy.deepcopy(self)


def run_stage(state: TrainState, cfg: TrainConfig,
              on_epoch: Callable[[TrainState, dict], None] | None = None) -> TrainState:
    """Continue ``state`` through ``cfg.epochs`` epochs of ``cfg.stage``.

    Each optimizer step draws one batch per rate (independent messages and
    noise), sums the per-rate losses and takes a single Adam step, so a
    coordinate only gets gradient from rates whose puncture keeps it.
    """
    if state.stage != cfg.stage:
        if cfg.stage == RC and state.stage == PRECODE:
            state.stage, state.epoch, state.adam = RC, 0, AdamState()
        else:
            raise ConfigError(f"state is in stage {state.stage!r}, config wants {cfg.stage!r}")
    for n_c, _ in cfg.rate_snr_pairs:
        if not state.k < n_c <= state.n0:
            raise ConfigError(f"n_c={n_c} outside ({state.k}, {state.n0}]")
    train_alpha = cfg.stage == RC
    b1, b2 = cfg.adam_betas
    while state.epoch < cfg.epochs:
        sums = np.zeros(len(cfg.rate_snr_pairs))
        for _ in range(cfg.steps_per_epoch):
            batches = [draw_batch(state.rng, state.k, n_c, snr, cfg.batch_size)
                       for n_c, snr in cfg.rate_snr_pairs]
            losses, gw, ga = gradients(state.w, state.alpha, batches, state.structure,
                                       state.k, state.n0, train_alpha)
            if not np.all(np.isfinite(losses)):
                raise TrainingDiverged(state, f"non-finite loss {losses} at epoch {state.epoch}")
            grads = {"w": gw}
            if train_alpha:
                grads["alpha"] = ga
            new = adam_step({"w": state.w, "alpha": state.alpha}, grads, state.adam,
                            cfg.learning_rate, b1, b2, cfg.adam_eps)
            state.w, state.alpha = new["w"], new["alpha"]
            sums += losses
        state.epoch += 1
        record = {"stage": cfg.stage, "epoch": state.epoch,
                  "loss": {n_c: float(s / cfg.steps_per_epoch)
                           for (n_c, _), s in zip(cfg.rate_snr_pairs, sums)}}
        state.history.append(record)
        if on_epoch is not None:
            on_epoch(state, record)
    return state


def train_precode(cfg: TrainConfig, structure: str, k: int, l_max: int = 5,
                  on_epoch=None) -> TrainState:
    """Single-rate training of W with the decoder fixed to plain BP."""
    if cfg.stage != PRECODE:
        raise ConfigError("train_precode needs a precode-stage config")
    n0 = cfg.rate_snr_pairs[0][0]
    state = TrainState.fresh(structure, k, n0, cfg.seed, l_max)
    return run_stage(state, cfg, on_epoch)


def train_rc(cfg: TrainConfig, warm: TrainState, on_epoch=None) -> TrainState:
    """Mixed-rate training of W and the decoder weights from a precode."""
    if cfg.stage != RC:
        raise ConfigError("train_rc needs an rc-stage config")
    if len(cfg.rate_snr_pairs) < 2:
        raise ConfigError("rate-compatible training needs at least two rates")
    return run_stage(warm, cfg, on_epoch)
