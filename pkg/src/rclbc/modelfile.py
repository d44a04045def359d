"""Versioned, self-describing model files (JSON text).

One file holds a whole rate-compatible family: the code manifest, H as an
embedded alist block, the coding parameters W, the decoder weights and the
training provenance. Checkpoints are model files with an extra
``train_state`` block (Adam moments, RNG state, epoch counters).
Floats are written with ``repr`` precision so loading is bit-exact.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codes import RateLadder, RCCodeFamily, dumps_alist, loads_alist
from .decoder import DecoderParams, RCDecoder
from .gf2 import BitMatrix
from .train import AdamState, TrainState, assemble_H_bits

FORMAT = "rclbc-model"
VERSION = 1


class CorruptModel(ValueError):
    pass


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _array(a):
    if a is None:
        return None
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unarray(d):
    if d is None:
        return None
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


@dataclass
class ModelFile:
    k: int
    ladder: tuple[int, ...]
    structure: str
    H: BitMatrix
    w: np.ndarray | None = None
    alpha: np.ndarray | None = None
    beta: np.ndarray | None = None
    enable_bias: bool = False
    l_max: int = 5
    code_id: str = "model"
    provenance: dict = field(default_factory=dict)
    train_state: dict | None = None

    @classmethod
    def from_state(cls, state: TrainState, ladder, code_id="model", provenance=None,
                   checkpoint=False) -> ModelFile:
        m = cls(state.k, tuple(ladder), state.structure, state.H(), state.w.copy(),
                state.alpha.copy(), None, False, state.alpha.shape[0], code_id,
                dict(provenance or {}))
        if checkpoint:
            m.train_state = {
                "stage": state.stage,
                "epoch": state.epoch,
                "adam": {"t": state.adam.t,
                         "m": {n: _array(a) for n, a in state.adam.m.items()},
                         "v": {n: _array(a) for n, a in state.adam.v.items()}},
                "rng": state.rng.bit_generator.state,
                "history": [{"stage": h["stage"], "epoch": h["epoch"],
                             "loss": [[n, l] for n, l in h["loss"].items()]}
                            for h in state.history],
            }
        return m

    def to_state(self) -> TrainState:
        if self.train_state is None or self.w is None:
            raise CorruptModel("model file carries no training state")
        ts = self.train_state
        rng = np.random.default_rng()
        rng.bit_generator.state = ts["rng"]
        adam = AdamState({n: _unarray(a) for n, a in ts["adam"]["m"].items()},
                         {n: _unarray(a) for n, a in ts["adam"]["v"].items()},
                         ts["adam"]["t"])
        history = [{"stage": h["stage"], "epoch": h["epoch"],
                    "loss": {int(n): l for n, l in h["loss"]}} for h in ts["history"]]
        return TrainState(self.structure, self.k, self.ladder[0], self.w.copy(),
                          self.alpha.copy(), rng, adam, ts["stage"], ts["epoch"], history)

    @classmethod
    def baseline(cls, family: RCCodeFamily, l_max: int = 5) -> ModelFile:
        return cls(family.k, family.ladder.lengths, family.structure, family.H,
                   l_max=l_max, code_id=family.code_id)

    def family(self) -> RCCodeFamily:
        return RCCodeFamily.from_H(self.H, RateLadder(self.k, tuple(self.ladder)), self.code_id)

    def decoder_params(self, neural: bool = True) -> DecoderParams:
        if neural and self.alpha is not None:
            return DecoderParams(self.alpha, self.beta, self.enable_bias)
        return DecoderParams.plain(self.l_max, *self.H.shape)

    def decoder(self, neural: bool = True) -> RCDecoder:
        return RCDecoder(self.H, self.k, self.decoder_params(neural))

    # --- text round trip

    def dumps(self) -> str:
        doc = {
            "format": FORMAT,
            "version": VERSION,
            "code": {"id": self.code_id, "k": self.k, "n0": self.ladder[0],
                     "ladder": list(self.ladder), "structure": self.structure},
            "H_alist": dumps_alist(self.H),
            "W": _array(self.w),
            "decoder": {"l_max": self.l_max, "alpha": _array(self.alpha),
                        "beta": _array(self.beta), "enable_bias": self.enable_bias},
            "provenance": self.provenance,
        }
        if self.train_state is not None:
            doc["train_state"] = self.train_state
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> ModelFile:
        try:
            doc = json.loads(text)
            if doc.get("format") != FORMAT:
                raise CorruptModel(f"not a model file (format={doc.get('format')!r})")
            if doc.get("version") != VERSION:
                raise CorruptModel(f"unsupported model version {doc.get('version')!r}")
            code, dec = doc["code"], doc["decoder"]
            m = cls(int(code["k"]), tuple(int(n) for n in code["ladder"]), code["structure"],
                    loads_alist(doc["H_alist"]), _unarray(doc["W"]), _unarray(dec["alpha"]),
                    _unarray(dec["beta"]), bool(dec["enable_bias"]), int(dec["l_max"]),
                    code["id"], doc.get("provenance", {}), doc.get("train_state"))
        except CorruptModel:
            raise
        except (KeyError, TypeError, ValueError) as e:
            raise CorruptModel(f"cannot parse model file: {e}") from e
        m.validate()
        return m

    def validate(self) -> None:
        k, n0 = self.k, self.ladder[0]
        if self.H.shape != (n0 - k, n0):
            raise CorruptModel(f"H is {self.H.shape}, manifest says {(n0 - k, n0)}")
        if self.w is not None:
            try:
                rebuilt = assemble_H_bits(self.w, self.structure, k, n0)
            except ValueError as e:
                raise CorruptModel(str(e)) from e
            if rebuilt != self.H:
                raise CorruptModel("H does not match the binarized coding parameters")
        if self.alpha is not None and self.alpha.shape != (self.l_max, n0 - k, n0):
            raise CorruptModel(f"alpha shape {self.alpha.shape} does not fit the code")

    def save(self, path) -> None:
        write_atomic(path, self.dumps())

    @classmethod
    def load(cls, path) -> ModelFile:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise CorruptModel(f"cannot read {path}: {e}") from e
        return cls.loads(text)
