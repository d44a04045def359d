"""Train a config, sweep its BER curves and compare against BCH baselines.

    python scripts/reproduce.py configs/k11_paper.ini
    python scripts/reproduce.py configs/smoke.ini --skip-train

Writes model.json, ber.csv, ber_plain.csv, compare.csv and summary.txt under
the config's out directory. The full k=11 budget takes hours on one core.
"""

import argparse
import logging
from pathlib import Path

from rclbc.cli import cmd_compare, cmd_eval, cmd_train, evaluate, reports_to_csv
from rclbc.config import load_config
from rclbc.modelfile import ModelFile, write_atomic

log = logging.getLogger("reproduce")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("config", type=Path)
    ap.add_argument("--skip-train", action="store_true", help="reuse out/model.json")
    ap.add_argument("--resume", action="store_true")
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    cfg = load_config(args.config)
    if args.workers:
        cfg.workers = args.workers
    if not args.skip_train:
        cmd_train(cfg, resume=args.resume, log=log.info)
    cmd_eval(cfg, log=log.info)

    # the learned code under plain BP isolates the code from the learned decoder
    model = ModelFile.load(cfg.out / "model.json")
    plain = evaluate(model, cfg.eval.snrs, cfg, neural=False, log=log.info)
    write_atomic(cfg.out / "ber_plain.csv", reports_to_csv(plain))

    if cfg.baselines or cfg.models:
        cmd_compare(cfg, log=log.info)


if __name__ == "__main__":
    main()
