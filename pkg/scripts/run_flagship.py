"""Run the flagship 64x64 hijack end to end: attack, defense, plots.

Reproduces the headline numbers (utility, ASR, stealth distances) and then
shows what the denoiser defense does to them. Roughly 25 minutes on one CPU
core. Seeds are fixed in the preset, so rerunning rewrites the same bytes.
"""

import argparse
import json
from pathlib import Path

from hijacklab import harness
from hijacklab.config import load_config

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/flagship", help="run directory to create")
    ap.add_argument("--weights-dir", default="weights",
                    help="extractor cache, reused across runs")
    ap.add_argument("--skip-defense", action="store_true")
    args = ap.parse_args()

    cfg = load_config(ROOT / "configs" / "chameleon_digits_to_objects_64.yaml")
    rd = harness.run_hijack(cfg, args.out, args.weights_dir)
    report = json.loads(Path(rd.report_json).read_text())
    print(f"utility            {report['utility']:.4f}")
    print(f"clean utility      {report['clean_utility']:.4f}")
    print(f"asr                {report['asr']:.4f}")
    print(f"non-camouflaged    {report['non_camouflaged_acc']:.4f}")
    print(f"stealth camo       {report['stealth_distance_camouflaged']:.2f}")
    print(f"stealth hijacking  {report['stealth_distance_hijacking']:.2f}")

    if not args.skip_defense:
        defense = harness.run_defend(rd.root, args.weights_dir)
        den = defense["denoiser"]
        print(f"denoiser utility delta {den['utility_delta']:+.4f}")
        print(f"denoiser asr delta     {den['asr_delta']:+.4f}")

    for path in harness.run_visualize(rd.root, args.weights_dir):
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
