"""Run the 32x32 attack-variant comparison and print one table.

Covers two orderings: naive vs chameleon vs adverse-chameleon on the
similar-domain pair (objects into faces), and flat vs hierarchical mapping
for a hijacking task with more classes than the victim (digits into faces).
All five presets share datasets, seeds, and budgets.
"""

import argparse
import json
from pathlib import Path

from hijacklab import harness
from hijacklab.config import load_config

ROOT = Path(__file__).resolve().parent.parent

PRESETS = [
    "naive_objects_to_faces_32",
    "chameleon_objects_to_faces_32",
    "adverse_objects_to_faces_32",
    "chameleon_digits8_to_faces_32",
    "hierarchical_digits_to_faces_32",
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs", help="parent directory for run dirs")
    ap.add_argument("--weights-dir", default="weights")
    args = ap.parse_args()

    print(f"{'variant':<34} {'utility':>8} {'asr':>8} {'non-camo':>9}")
    for name in PRESETS:
        cfg = load_config(ROOT / "configs" / f"{name}.yaml")
        rd = harness.run_hijack(cfg, Path(args.out) / name, args.weights_dir)
        rep = json.loads(Path(rd.report_json).read_text())
        non_camo = rep["non_camouflaged_acc"]
        non_camo = "-" if non_camo is None else f"{non_camo:9.4f}"
        print(f"{name:<34} {rep['utility']:8.4f} {rep['asr']:8.4f} {non_camo}")


if __name__ == "__main__":
    main()
