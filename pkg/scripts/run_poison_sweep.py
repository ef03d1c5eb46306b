"""Sweep the poison budget on the 32x32 objects-into-faces pair.

Trains the camouflager once, then one victim per budget point, and prints
the utility/ASR table (also persisted as sweep.csv in the out directory).
"""

import argparse
from pathlib import Path

from hijacklab import harness
from hijacklab.config import load_config

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/poison_sweep")
    ap.add_argument("--weights-dir", default="weights")
    args = ap.parse_args()

    cfg = load_config(ROOT / "configs" / "sweep_poison_objects_to_faces_32.yaml")
    rows = harness.run_sweep(cfg, args.out, args.weights_dir)
    print(f"{'poison_count':>12} {'utility':>8} {'asr':>8} {'status':>10}")
    for row in rows:
        utility = "-" if row["utility"] is None else f"{row['utility']:.4f}"
        asr = "-" if row["asr"] is None else f"{row['asr']:.4f}"
        print(f"{row['value']:>12} {utility:>8} {asr:>8} {row['status']:>10}")


if __name__ == "__main__":
    main()
