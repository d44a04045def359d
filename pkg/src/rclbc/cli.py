"""Command-line harness: train, eval, compare, export."""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from .channel import BERReport, ber_monte_carlo
from .codes import AlistError, ConfigError, RateError, save_alist
from .config import ExperimentConfig, load_config, resolve_baseline
from .gf2 import GF2Error, matmul_gf2, rank_gf2
from .modelfile import CorruptModel, ModelFile, write_atomic
from .train import PRECODE, RC, TrainingDiverged, TrainState, run_stage

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_CORRUPT, EXIT_EXPORT = 0, 2, 3, 4, 5
CSV_COLUMNS = ["code_id", "k", "n_c", "snr_db", "frames", "bit_errors", "frame_errors", "ber", "ci95"]


class ExportError(ValueError):
    pass


# --- train ----------------------------------------------------------------

def _provenance(cfg: ExperimentConfig, state: TrainState, pre_epochs: int) -> dict:
    done_pre = state.epoch if state.stage == PRECODE else pre_epochs
    done_rc = state.epoch if state.stage == RC else 0
    return {"config_digest": cfg.digest, "seed": cfg.seed,
            "epochs": {"precode": done_pre, "rc": done_rc}}


def cmd_train(cfg: ExperimentConfig, resume: bool = False, log=print) -> Path:
    pre, rc = cfg.train_configs()
    ladder = cfg.ladder.lengths
    ckpt_path = cfg.out / "checkpoint.json"
    model_path = cfg.out / "model.json"

    if resume and ckpt_path.exists():
        state = ModelFile.load(ckpt_path).to_state()
        log(f"resuming from {ckpt_path} at stage {state.stage} epoch {state.epoch}")
    else:
        state = TrainState.fresh(cfg.structure, cfg.ladder.k, cfg.ladder.n0, cfg.seed, cfg.train.l_max)

    def checkpoint(st):
        ModelFile.from_state(st, ladder, cfg.out.name, _provenance(cfg, st, pre.epochs),
                             checkpoint=True).save(ckpt_path)

    def on_epoch(st, rec):
        losses = " ".join(f"loss[{n}]={l:.6f}" for n, l in rec["loss"].items())
        log(f"{rec['stage']:8s} epoch {rec['epoch']:5d} {losses}")
        if cfg.train.checkpoint_every and rec["epoch"] % cfg.train.checkpoint_every == 0:
            checkpoint(st)

    try:
        if state.stage == PRECODE:
            run_stage(state, pre, on_epoch)
            checkpoint(state)
        if rc is not None:
            run_stage(state, rc, on_epoch)
    except TrainingDiverged as e:
        bad = cfg.out / "diverged.json"
        ModelFile.from_state(e.state, ladder, cfg.out.name, _provenance(cfg, e.state, pre.epochs),
                             checkpoint=True).save(bad)
        raise TrainingDiverged(e.state, f"{e} (state written to {bad})") from None

    model = ModelFile.from_state(state, ladder, cfg.out.name, _provenance(cfg, state, pre.epochs))
    model.validate()
    model.save(model_path)
    checkpoint(state)
    log(f"wrote {model_path}")
    return model_path


# --- eval / compare -------------------------------------------------------

def point_seed(seed: int, n_c: int, snr_index: int) -> int:
    return int(np.random.SeedSequence([seed, n_c, snr_index]).generate_state(1)[0])


def evaluate(model: ModelFile, snrs, cfg: ExperimentConfig, neural: bool, log=print) -> list[BERReport]:
    family = model.family()
    decoder = model.decoder(neural)
    reports = []
    for n_c in family.ladder.lengths:
        for i, snr in enumerate(snrs):
            r = ber_monte_carlo(family, n_c, decoder, snr, cfg.eval.stop,
                                point_seed(cfg.seed, n_c, i), cfg.workers)
            log(f"{family.code_id} n_c={n_c} snr={snr} frames={r.frames} "
                f"bit_errors={r.bit_errors} ber={r.ber:.3e}")
            reports.append(r)
    return reports


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow([r.code_id, r.k, r.n_c, repr(float(r.ebn0_db)), r.frames, r.bit_errors,
                    r.frame_errors, repr(float(r.ber)), repr(float(r.ci95))])
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _load_model(path) -> ModelFile:
    return ModelFile.load(path)


def _eval_source(cfg: ExperimentConfig, model_path=None) -> ModelFile:
    if model_path is None and cfg.eval.model:
        model_path = cfg.base_dir / cfg.eval.model
    if model_path is not None:
        return _load_model(model_path)
    if cfg.baseline:
        return ModelFile.baseline(cfg.baseline_family(), cfg.train.l_max)
    if cfg.learnable:
        return _load_model(cfg.out / "model.json")
    raise ConfigError("nothing to evaluate: give a model path or a [code] baseline")


def cmd_eval(cfg: ExperimentConfig, model_path=None, log=print) -> tuple[Path, list[BERReport]]:
    model = _eval_source(cfg, model_path)
    reports = evaluate(model, cfg.eval.snrs, cfg, cfg.eval.decoder == "neural", log)
    out = cfg.out / "ber.csv"
    write_atomic(out, reports_to_csv(reports))
    log(f"wrote {out}")
    return out, reports


def snr_at_ber(points, target: float) -> float | None:
    """SNR where the curve crosses ``target``, by linear interpolation of log10(BER).

    ``points`` are (snr, ber) pairs; only consecutive points with positive
    BER bracketing the target are used. Returns None when not bracketed.
    """
    pts = sorted((s, b) for s, b in points if math.isfinite(s))
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b0 > 0 and b1 > 0 and b0 >= target >= b1:
            if b0 == b1:
                return s0
            t = (math.log10(b0) - math.log10(target)) / (math.log10(b0) - math.log10(b1))
            return s0 + t * (s1 - s0)
    return None


def summarize(reports: list[BERReport], targets) -> list[dict]:
    """Required SNR per curve and gain against the first curve, at each target."""
    curves: dict[tuple[str, int], list] = {}
    for r in reports:
        curves.setdefault((r.code_id, r.n_c), []).append((r.ebn0_db, r.ber))
    keys = list(curves)
    ref = keys[0]
    rows = []
    for key in keys:
        for t in targets:
            s = snr_at_ber(curves[key], t)
            s_ref = snr_at_ber(curves[ref], t)
            gain = None if s is None or s_ref is None else s_ref - s
            rows.append({"code_id": key[0], "n_c": key[1], "target": t, "snr_db": s,
                         "reference": f"{ref[0]}/n{ref[1]}", "gain_db": gain})
    return rows


def format_summary(rows) -> str:
    def f(v):
        return "n/a" if v is None else f"{v:.2f}"
    lines = [f"{'code':24s} {'n_c':>4s} {'target':>8s} {'snr_db':>7s} {'gain_db':>8s}  reference"]
    for r in rows:
        lines.append(f"{r['code_id']:24s} {r['n_c']:4d} {r['target']:8.0e} {f(r['snr_db']):>7s} "
                     f"{f(r['gain_db']):>8s}  {r['reference']}")
    return "\n".join(lines) + "\n"


def cmd_compare(cfg: ExperimentConfig, log=print) -> tuple[Path, list[dict]]:
    models = []
    for spec in cfg.baselines:
        models.append(ModelFile.baseline(resolve_baseline(spec, cfg.base_dir), cfg.train.l_max))
    for p in cfg.models:
        models.append(_load_model(cfg.base_dir / p))
    if not models:
        raise ConfigError("[compare] lists no models or baselines")
    ks = {m.k for m in models}
    if len(ks) != 1:
        raise ConfigError(f"compared codes must share k, got {sorted(ks)}")
    seen: dict[str, int] = {}
    reports = []
    for m in models:
        seen[m.code_id] = seen.get(m.code_id, 0) + 1
        if seen[m.code_id] > 1:
            m.code_id = f"{m.code_id}#{seen[m.code_id]}"
        reports += evaluate(m, cfg.eval.snrs, cfg, cfg.eval.decoder == "neural", log)
    out = cfg.out / "compare.csv"
    write_atomic(out, reports_to_csv(reports))
    rows = summarize(reports, cfg.targets)
    text = format_summary(rows)
    write_atomic(cfg.out / "summary.txt", text)
    log(text)
    return out, rows


# --- export ---------------------------------------------------------------

def cmd_export(cfg: ExperimentConfig, model_path=None, what=("alist", "gmatrix", "weights"),
               log=print) -> list[Path]:
    model = _eval_source(cfg, model_path)
    m = model.H.rows
    r = rank_gf2(model.H)
    if r < m:
        raise ExportError(f"H has rank {r} < {m}; refusing to export")
    family = model.family()
    if not matmul_gf2(family.G, family.H.T).is_zero():
        raise ExportError("G H^T != 0")
    dest = cfg.out / "export"
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    if "alist" in what:
        for n_c in family.ladder.lengths:
            p = dest / f"{model.code_id}_H_n{n_c}.alist"
            save_alist(family.subcode(n_c), p)
            written.append(p)
    if "gmatrix" in what:
        p = dest / f"{model.code_id}_G.txt"
        write_atomic(p, "\n".join("".join(map(str, row)) for row in family.G.bits) + "\n")
        written.append(p)
    if "weights" in what:
        params = model.decoder_params(neural=True)
        lines = [f"# alpha shape {' '.join(map(str, params.alpha.shape))}"]
        lines += [" ".join(repr(float(v)) for v in row)
                  for row in params.alpha.reshape(-1, params.alpha.shape[-1])]
        p = dest / f"{model.code_id}_weights.txt"
        write_atomic(p, "\n".join(lines) + "\n")
        written.append(p)
    for p in written:
        log(f"wrote {p}")
    return written


def read_weights(path) -> np.ndarray:
    text = Path(path).read_text().splitlines()
    shape = tuple(int(t) for t in text[0].split()[3:])
    return np.array([[float(v) for v in ln.split()] for ln in text[1:]]).reshape(shape)


def read_gmatrix(path) -> np.ndarray:
    return np.array([[int(ch) for ch in ln.strip()] for ln in Path(path).read_text().splitlines()
                     if ln.strip()], dtype=np.uint8)


# --- entry point ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rclbc", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("train", "eval", "compare", "export"):
        p = sub.add_parser(name)
        p.add_argument("config", type=Path)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path)
        p.add_argument("--workers", type=int)
        if name == "train":
            p.add_argument("--resume", action="store_true", help="continue from out/checkpoint.json")
        if name in ("eval", "export"):
            p.add_argument("--model", type=Path)
        if name == "export":
            p.add_argument("--what", default="alist,gmatrix,weights",
                           help="comma list of alist, gmatrix, weights")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.workers is not None:
            cfg.workers = args.workers
        if args.command == "train":
            cmd_train(cfg, resume=args.resume)
        elif args.command == "eval":
            cmd_eval(cfg, args.model)
        elif args.command == "compare":
            cmd_compare(cfg)
        else:
            cmd_export(cfg, args.model, tuple(args.what.split(",")))
    except (ConfigError, RateError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDiverged as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except CorruptModel as e:
        print(f"corrupt model: {e}", file=sys.stderr)
        return EXIT_CORRUPT
    except ExportError as e:
        print(f"export failed: {e}", file=sys.stderr)
        return EXIT_EXPORT
    except (GF2Error, AlistError) as e:
        print(f"invalid code: {e}", file=sys.stderr)
        return EXIT_EXPORT if args.command == "export" else EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
