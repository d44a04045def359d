"""Experiment configuration in INI syntax (configparser).

    [experiment]   seed, out, workers
    [code]         structure + k + ladder, or baseline = bch(31,16) | alist:PATH
    [train]        precode_epochs, rc_epochs, batch_size, vectors_per_epoch,
                   learning_rate, adam_beta1, adam_beta2, adam_eps,
                   snrs (one per ladder entry, lowest rate first),
                   precode_snr, l_max, checkpoint_every
    [eval]         snrs = list  or  snr_start/snr_stop/snr_step;
                   max_frames, min_bit_errors, decoder = neural | plain-bp, model
    [compare]      models, baselines (comma lists), targets

``config_version = 1`` under [experiment] is the only accepted version.
"""

from __future__ import annotations

import configparser
import hashlib
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import StopRule
from .codes import (
    LOWER_TRIANGULAR,
    SYSTEMATIC,
    ConfigError,
    RateLadder,
    RCCodeFamily,
    bch_family,
    load_alist,
    rate_ladder_from_pairs,
)
from .train import PRECODE, RC, TrainConfig

CONFIG_VERSION = 1
_BCH_RE = re.compile(r"bch\(\s*(\d+)\s*,\s*(\d+)\s*\)$")


def _floats(s: str) -> list[float]:
    return [float(t) for t in s.replace(",", " ").split()]


def _ints(s: str) -> list[int]:
    return [int(t) for t in s.replace(",", " ").split()]


def _list(s: str) -> list[str]:
    # commas inside parentheses belong to the item, as in bch(31,16)
    return [t.strip() for t in re.split(r",(?![^()]*\))", s) if t.strip()]


def resolve_baseline(spec: str, base_dir: Path = Path(".")) -> RCCodeFamily:
    """``bch(n,k)`` or ``alist:path`` to a single-rate family."""
    spec = spec.strip()
    m = _BCH_RE.match(spec)
    if m:
        return bch_family(int(m.group(1)), int(m.group(2)))
    if spec.startswith("alist:"):
        path = Path(spec[len("alist:"):])
        if not path.is_absolute():
            path = base_dir / path
        return RCCodeFamily.from_H(load_alist(path), code_id=path.stem)
    raise ConfigError(f"unknown baseline {spec!r}")


@dataclass
class TrainSection:
    precode_epochs: int = 5000
    rc_epochs: int = 5000
    batch_size: int = 256
    vectors_per_epoch: int = 2048
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    snrs: list[float] = field(default_factory=list)
    precode_snr: float | None = None
    l_max: int = 5
    checkpoint_every: int = 250


@dataclass
class EvalSection:
    snrs: list[float] = field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    max_frames: int = 100_000
    min_bit_errors: int = 100
    decoder: str = "neural"
    model: str | None = None

    @property
    def stop(self) -> StopRule:
        return StopRule(self.max_frames, self.min_bit_errors)


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: Path = Path("runs/default")
    workers: int = 1
    structure: str | None = None
    ladder: RateLadder | None = None
    baseline: str | None = None
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)
    models: list[str] = field(default_factory=list)
    baselines: list[str] = field(default_factory=list)
    targets: list[float] = field(default_factory=lambda: [1e-3, 1e-4])
    base_dir: Path = Path(".")
    digest: str = ""

    @property
    def learnable(self) -> bool:
        return self.ladder is not None

    def baseline_family(self) -> RCCodeFamily:
        return resolve_baseline(self.baseline, self.base_dir)

    def train_configs(self) -> tuple[TrainConfig, TrainConfig | None]:
        """Precode config and (if the ladder has >1 rate) the mixed-rate config."""
        if not self.learnable:
            raise ConfigError("[code] has no learnable ladder")
        t = self.train
        lengths = self.ladder.lengths
        if len(t.snrs) != len(lengths):
            raise ConfigError(f"[train] snrs needs {len(lengths)} values (lowest rate first)")
        pairs = tuple(zip(lengths, t.snrs))
        common = dict(batch_size=t.batch_size, vectors_per_epoch=t.vectors_per_epoch,
                      learning_rate=t.learning_rate, adam_betas=(t.adam_beta1, t.adam_beta2),
                      adam_eps=t.adam_eps, seed=self.seed)
        pre_snr = t.snrs[0] if t.precode_snr is None else t.precode_snr
        pre = TrainConfig(PRECODE, t.precode_epochs, ((lengths[0], pre_snr),), **common)
        rc = TrainConfig(RC, t.rc_epochs, pairs, **common) if len(lengths) > 1 else None
        return pre, rc


def _get(sec, key, conv, default):
    if sec is None or key not in sec:
        return default
    raw = sec[key]
    try:
        return conv(raw)
    except ValueError as e:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r}: {e}") from None


def parse_config(text: str, base_dir: Path = Path(".")) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    sec = {name: cp[name] for name in cp.sections()}
    unknown = set(sec) - {"experiment", "code", "train", "eval", "compare"}
    if unknown:
        raise ConfigError(f"unknown sections {sorted(unknown)}")

    exp = sec.get("experiment")
    version = _get(exp, "config_version", int, CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config_version {version} unsupported")
    cfg = ExperimentConfig(
        seed=_get(exp, "seed", int, 0),
        out=Path(_get(exp, "out", str, "runs/default")),
        workers=_get(exp, "workers", int, 1),
        base_dir=base_dir,
        digest=hashlib.sha256(text.encode()).hexdigest()[:16],
    )
    if not cfg.out.is_absolute():
        cfg.out = base_dir / cfg.out

    code = sec.get("code")
    if code is not None:
        has_ladder = "ladder" in code or "k" in code
        if has_ladder == ("baseline" in code):
            raise ConfigError("[code] needs exactly one of (k + ladder) or baseline")
        if has_ladder:
            k = _get(code, "k", int, None)
            lengths = _get(code, "ladder", _ints, None)
            if k is None or not lengths:
                raise ConfigError("[code] needs both k and ladder")
            cfg.ladder = rate_ladder_from_pairs([(k, n) for n in lengths])
            cfg.structure = _get(code, "structure", str, LOWER_TRIANGULAR)
            if cfg.structure not in (LOWER_TRIANGULAR, SYSTEMATIC):
                raise ConfigError(f"[code] structure {cfg.structure!r} is not learnable")
        else:
            cfg.baseline = code["baseline"]

    tr = sec.get("train")
    d = TrainSection()
    cfg.train = TrainSection(
        precode_epochs=_get(tr, "precode_epochs", int, d.precode_epochs),
        rc_epochs=_get(tr, "rc_epochs", int, d.rc_epochs),
        batch_size=_get(tr, "batch_size", int, d.batch_size),
        vectors_per_epoch=_get(tr, "vectors_per_epoch", int, d.vectors_per_epoch),
        learning_rate=_get(tr, "learning_rate", float, d.learning_rate),
        adam_beta1=_get(tr, "adam_beta1", float, d.adam_beta1),
        adam_beta2=_get(tr, "adam_beta2", float, d.adam_beta2),
        adam_eps=_get(tr, "adam_eps", float, d.adam_eps),
        snrs=_get(tr, "snrs", _floats, []),
        precode_snr=_get(tr, "precode_snr", float, None),
        l_max=_get(tr, "l_max", int, d.l_max),
        checkpoint_every=_get(tr, "checkpoint_every", int, d.checkpoint_every),
    )

    ev = sec.get("eval")
    e = EvalSection()
    if ev is not None and "snrs" in ev:
        snrs = _get(ev, "snrs", _floats, None)
    elif ev is not None and "snr_start" in ev:
        start = _get(ev, "snr_start", float, None)
        stop = _get(ev, "snr_stop", float, None)
        step = _get(ev, "snr_step", float, 1.0)
        if stop is None or step <= 0:
            raise ConfigError("[eval] sweep needs snr_stop and snr_step > 0")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        snrs = [round(start + i * step, 10) for i in range(count)]
    else:
        snrs = e.snrs
    if not snrs:
        raise ConfigError("[eval] SNR sweep is empty")
    cfg.eval = EvalSection(
        snrs=snrs,
        max_frames=_get(ev, "max_frames", int, e.max_frames),
        min_bit_errors=_get(ev, "min_bit_errors", int, e.min_bit_errors),
        decoder=_get(ev, "decoder", str, e.decoder),
        model=_get(ev, "model", str, None),
    )
    if cfg.eval.decoder not in ("neural", "plain-bp"):
        raise ConfigError(f"[eval] decoder must be neural or plain-bp, got {cfg.eval.decoder!r}")

    cmp_ = sec.get("compare")
    cfg.models = _get(cmp_, "models", _list, [])
    cfg.baselines = _get(cmp_, "baselines", _list, [])
    cfg.targets = _get(cmp_, "targets", _floats, cfg.targets)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(text, path.parent)
