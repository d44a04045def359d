"""Two ablations on the k=11 family.

rc_vs_punctured
    The (21,11) member of a mixed-rate trained family against a (31,11)
    code trained at a single rate for the same number of epochs and then
    punctured to 21 bits.
triangular_vs_systematic
    The same mixed-rate recipe with H2 lower-triangular and with H2 = I.

Each comparison reports BER with 95% intervals per SNR and whether the first
curve beats the second with non-overlapping intervals at some point.

    python scripts/ablations.py --epochs 5000          # full budget, hours
    python scripts/ablations.py --epochs 50 --out /tmp/abl
"""

import argparse
import json
import logging
from pathlib import Path

from rclbc.channel import StopRule, ber_monte_carlo
from rclbc.codes import LOWER_TRIANGULAR, SYSTEMATIC
from rclbc.modelfile import ModelFile
from rclbc.train import PRECODE, RC, TrainConfig, run_stage, train_precode

log = logging.getLogger("ablations")

K, LADDER, TRAIN_SNRS = 11, (31, 21, 16), (3.0, 4.0, 5.0)


def train(structure, ladder, snrs, pre_epochs, rc_epochs, seed):
    common = dict(batch_size=256, vectors_per_epoch=2048, seed=seed)
    state = train_precode(TrainConfig(PRECODE, pre_epochs, ((ladder[0], snrs[0]),), **common), structure, K)
    pairs = tuple(zip(ladder, snrs))
    return run_stage(state, TrainConfig(RC, rc_epochs, pairs, **common))


def sweep(model, n_c, snrs, stop, seed):
    fam, dec = model.family(), model.decoder(neural=True)
    out = []
    for i, snr in enumerate(snrs):
        r = ber_monte_carlo(fam, n_c, dec, snr, stop, seed=seed + 1000 * i)
        log.info("%s n_c=%d snr=%.1f ber=%.3e +- %.1e", model.code_id, n_c, snr, r.ber, r.ci95)
        out.append({"snr_db": snr, "ber": r.ber, "ci95": r.ci95, "bit_errors": r.bit_errors})
    return out


def separated(better, worse):
    """True if ``better`` is below ``worse`` with disjoint 95% intervals somewhere."""
    return any(a["ber"] + a["ci95"] < b["ber"] - b["ci95"] for a, b in zip(better, worse))


def run_all(out: Path, epochs: int = 5000, snrs=(2.0, 3.0, 4.0, 5.0, 6.0), seed: int = 1,
            stop: StopRule = StopRule(1_000_000, 200)) -> dict:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    lt = train(LOWER_TRIANGULAR, LADDER, TRAIN_SNRS, epochs, epochs, seed)
    sys_ = train(SYSTEMATIC, LADDER, TRAIN_SNRS, epochs, epochs, seed)
    # single rate for the whole budget: precode stage, then the weights at (31,11) only
    single = train(LOWER_TRIANGULAR, LADDER[:1], TRAIN_SNRS[:1], epochs, epochs, seed)

    models = {
        "rc_lt": ModelFile.from_state(lt, LADDER, "rc_lower_triangular"),
        "rc_sys": ModelFile.from_state(sys_, LADDER, "rc_systematic"),
        "single": ModelFile.from_state(single, (31, 21), "single_rate_punctured"),
    }
    for name, m in models.items():
        m.save(out / f"{name}.json")

    res = {"epochs": epochs, "seed": seed}
    rc21 = sweep(models["rc_lt"], 21, snrs, stop, seed)
    single21 = sweep(models["single"], 21, snrs, stop, seed)
    res["rc_vs_punctured"] = {"rc": rc21, "punctured": single21, "separated": separated(rc21, single21)}

    per_rate = {}
    for n_c in LADDER:
        a = rc21 if n_c == 21 else sweep(models["rc_lt"], n_c, snrs, stop, seed)
        b = sweep(models["rc_sys"], n_c, snrs, stop, seed)
        per_rate[n_c] = {"lower_triangular": a, "systematic": b, "separated": separated(a, b)}
    res["triangular_vs_systematic"] = {"per_rate": per_rate,
                                       "separated": any(v["separated"] for v in per_rate.values())}

    (out / "ablations.json").write_text(json.dumps(res, indent=1))
    return res


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--epochs", type=int, default=5000, help="per stage")
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "runs" / "ablations")
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--snrs", type=lambda s: [float(v) for v in s.split(",")], default=[2.0, 3.0, 4.0, 5.0, 6.0])
    ap.add_argument("--max-frames", type=int, default=1_000_000)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    res = run_all(args.out, args.epochs, args.snrs, args.seed, StopRule(args.max_frames, 200))
    print("rc beats punctured single-rate:", res["rc_vs_punctured"]["separated"])
    for n_c, v in res["triangular_vs_systematic"]["per_rate"].items():
        print(f"lower-triangular beats systematic at n_c={n_c}:", v["separated"])
    print("results in", args.out / "ablations.json")


if __name__ == "__main__":
    main()
