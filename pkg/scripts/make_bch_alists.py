"""Write the BCH(31,k) parity-check matrices shipped in baselines/ as alist files."""

import argparse
from pathlib import Path

from rclbc.codes import bch_parity_check, save_alist


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "baselines")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for k in (11, 16, 21):
        path = args.out / f"bch31_{k}.alist"
        save_alist(bch_parity_check(31, k), path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
