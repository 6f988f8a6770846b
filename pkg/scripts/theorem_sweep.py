"""Optimality-gap sweep of FQI+ASG over (n, m, seed) with trend checks.

    python scripts/theorem_sweep.py --config configs/theorem_sweep.yaml --jobs 4

Rerunning with the same output directory resumes from completed cells.
"""
import argparse

from mixedrl.cli import cmd_sweep, load_config, read_csv
from mixedrl.evaluation import sweep_trend_checks


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", default="configs/theorem_sweep.yaml")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    args = p.parse_args()
    cfg = load_config(args.config, args.seed, args.out)
    path = cmd_sweep(cfg, args.jobs)
    summary = read_csv(path.with_name("sweep_summary.csv"))
    print(f"{'n':>6} {'m':>4} {'mean gap':>10} {'std':>8}")
    for r in summary:
        print(f"{r['n']:>6} {r['m']:>4} {float(r['mean_gap']):>10.4f} {float(r['std_gap']):>8.4f}")
    rows = [{"n": int(r["n"]), "m": int(r["m"]), "mean_gap": float(r["mean_gap"]), "std_gap": float(r["std_gap"])}
            for r in summary]
    for key, ok in sweep_trend_checks(rows).items():
        print(f"trend ({key}): {'holds' if ok else 'violated'}")


if __name__ == "__main__":
    main()
