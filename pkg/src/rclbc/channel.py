"""BPSK over AWGN, channel LLRs and Monte Carlo BER estimation."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .codes import ConfigError, RCCodeFamily, RateError

NOISELESS_VARIANCE = 1e-6
CHUNK_FRAMES = 1000


def noise_variance(k: int, n_c: int, ebn0_db: float) -> float:
    """Per-dimension AWGN variance for unit-energy BPSK at the given Eb/N0."""
    if math.isinf(ebn0_db) and ebn0_db > 0:
        return NOISELESS_VARIANCE
    return 1.0 / (2.0 * (k / n_c) * 10.0 ** (ebn0_db / 10.0))


@dataclass(frozen=True)
class ChannelConfig:
    ebn0_db: float
    k: int
    n_c: int

    @property
    def noise_variance(self) -> float:
        return noise_variance(self.k, self.n_c, self.ebn0_db)


def bpsk_modulate(bits) -> np.ndarray:
    bits = np.asarray(bits)
    if bits.size and not np.isin(bits, (0, 1)).all():
        raise ValueError("BPSK input must be binary")
    return 1.0 - 2.0 * bits.astype(np.float64)


def awgn(symbols, variance: float, rng: np.random.Generator) -> np.ndarray:
    if not variance > 0:
        raise ValueError(f"noise variance must be positive, got {variance}")
    symbols = np.asarray(symbols, dtype=np.float64)
    return symbols + math.sqrt(variance) * rng.standard_normal(symbols.shape)


def llr_awgn(y, variance: float) -> np.ndarray:
    if not variance > 0:
        raise ValueError(f"noise variance must be positive, got {variance}")
    return 2.0 * np.asarray(y, dtype=np.float64) / variance


def q_function(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


@dataclass(frozen=True)
class StopRule:
    max_frames: int = 100_000
    min_bit_errors: int = 100

    def __post_init__(self):
        if self.max_frames < 1:
            raise ConfigError("max_frames must be >= 1")


@dataclass(frozen=True)
class BERReport:
    code_id: str
    k: int
    n_c: int
    ebn0_db: float
    frames: int
    bit_errors: int
    frame_errors: int
    wall_time: float = 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.k) if self.frames else float("nan")

    @property
    def ci95(self) -> float:
        """Normal-approximation half-width of the 95% binomial interval."""
        nbits = self.frames * self.k
        p = self.ber
        return 1.96 * math.sqrt(p * (1.0 - p) / nbits) if nbits else float("nan")

    def same_counts(self, other: BERReport) -> bool:
        return (self.frames, self.bit_errors, self.frame_errors) == (
            other.frames, other.bit_errors, other.frame_errors)


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, chunk]))


def _run_chunk(family: RCCodeFamily, n_c: int, decoder, variance: float,
               frames: int, seed: int, chunk: int) -> tuple[int, int]:
    rng = _chunk_rng(seed, chunk)
    x = rng.integers(0, 2, size=(frames, family.k), dtype=np.uint8)
    c = family.encode(x)[:, :n_c]
    y = awgn(bpsk_modulate(c), variance, rng)
    _, hard = decoder.decode(llr_awgn(y, variance), n_c)
    errs = hard[:, family.info_positions] != x
    return int(errs.sum()), int(errs.any(axis=1).sum())


def ber_monte_carlo(family: RCCodeFamily, n_c: int, decoder, ebn0_db: float,
                    stop: StopRule = StopRule(), seed: int = 0, workers: int = 1,
                    chunk_frames: int = CHUNK_FRAMES) -> BERReport:
    """Information-bit BER of ``family`` punctured to ``n_c`` under ``decoder``.

    Frames are simulated in fixed-size chunks, chunk ``i`` drawing from the
    substream ``(seed, i)``. Chunks are folded in index order and the run
    stops after the first chunk that reaches ``min_bit_errors``, so the
    result does not depend on ``workers``.
    """
    if n_c not in family.ladder.lengths:
        raise RateError(f"n_c={n_c} not in ladder {family.ladder.lengths}")
    if getattr(decoder, "h", None) is not None and decoder.h != family.H:
        raise ConfigError("decoder was built for a different parity-check matrix")
    variance = noise_variance(family.k, n_c, ebn0_db)
    sizes = []
    left = stop.max_frames
    while left > 0:
        sizes.append(min(chunk_frames, left))
        left -= sizes[-1]

    t0 = time.perf_counter()
    frames = bit_err = frame_err = 0
    pool = ProcessPoolExecutor(workers) if workers > 1 else None
    try:
        step = max(workers, 1)
        for start in range(0, len(sizes), step):
            idx = range(start, min(start + step, len(sizes)))
            args = [(family, n_c, decoder, variance, sizes[i], seed, i) for i in idx]
            results = (pool.map(_run_chunk, *zip(*args)) if pool
                       else (_run_chunk(*a) for a in args))
            done = False
            for i, (be, fe) in zip(idx, results):
                frames += sizes[i]
                bit_err += be
                frame_err += fe
                if bit_err >= stop.min_bit_errors:
                    done = True
                    break
            if done:
                break
    finally:
        if pool:
            pool.shutdown()
    return BERReport(family.code_id, family.k, n_c, float(ebn0_db), frames, bit_err,
                     frame_err, time.perf_counter() - t0)


class HardDecision:
    """Stand-in decoder that slices the channel LLRs (uncoded reference)."""

    h = None
    l_max = 0

    def decode(self, llr, n_c=None):
        llr = np.asarray(llr)
        return llr, (llr < 0).astype(np.uint8)


def ber_uncoded(ebn0_db: float, n_bits: int, seed: int = 0) -> float:
    """Measured BER of uncoded BPSK, for calibration against Q(sqrt(2 Eb/N0))."""
    rng = np.random.default_rng(seed)
    variance = noise_variance(1, 1, ebn0_db)
    bits = rng.integers(0, 2, size=n_bits, dtype=np.uint8)
    _, hard = HardDecision().decode(llr_awgn(awgn(bpsk_modulate(bits), variance, rng), variance))
    return float((hard != bits).mean())
