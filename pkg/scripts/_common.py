"""Shared argument handling for the preset scripts."""

import argparse
import json

from tracedist.experiments import ExperimentConfig, run_preset


def run(preset: str, description: str, **defaults):
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--replications", type=int, default=defaults.pop("replications", None))
    parser.add_argument("--threads", type=int, default=1, help="0 = auto")
    parser.add_argument("--out", default=f"results/{preset}")
    args = parser.parse_args()
    cfg = ExperimentConfig(preset, seed=args.seed, replications=args.replications,
                           threads=args.threads, out_dir=args.out, **defaults)
    report = run_preset(cfg)
    print(json.dumps(report.aggregate, indent=2))
    print(f"wrote {args.out}/report.json, summary.csv, chains/")
    return report
