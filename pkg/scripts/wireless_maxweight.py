"""Average queue length of Max-Weight and of an FQI+ASG policy on the downlink.

Runs each arrival-rate setting of the comparison table; both policies see the
same evaluation seeds.

    python scripts/wireless_maxweight.py --seeds 3
"""
import argparse

import numpy as np

from mixedrl import FqiConfig, MaxWeightPolicy, OccupancyBehavior, batch_fqi_asg, collect_dataset, make_env
from mixedrl.asg import truncated_geometric
from mixedrl.evaluation import avg_queue_length
from mixedrl.seeding import derive_rng

SETTINGS = [(2, 3, 4), (1, 7, 2), (2, 2, 6), (3, 1, 5)]
REPORTED_MAX_WEIGHT = {(2, 3, 4): 10.979, (1, 7, 2): 13.677, (2, 2, 6): 13.774, (3, 1, 5): 10.895}


def learned_policy(env, seed, master, n=2000, m=32, K=40, box=(15, 15, 15), rate=0.1):
    data = collect_dataset(env, OccupancyBehavior(lambda s, x: 0, 0.95, 1.0), n, derive_rng(master, "data", seed))
    cfg = FqiConfig(K=K, m=m, gamma=0.95, box=box, beta=truncated_geometric(rate, box))
    policy, _ = batch_fqi_asg(data, cfg, env, derive_rng(master, "fqi", seed))
    return policy


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--steps", type=int, default=120_000)
    p.add_argument("--warmup", type=int, default=20_000)
    p.add_argument("--master-seed", type=int, default=0)
    args = p.parse_args()
    print(f"{'arrivals':>10} {'MW (table)':>10} {'MW':>8} {'FQI+ASG':>8} {'ratio':>6}")
    for lam in SETTINGS:
        env = make_env("wireless", {"lam": list(lam), "channel": [12, 12, 12]})
        mw, learned = [], []
        for seed in range(args.seeds):
            rng = derive_rng(args.master_seed, "queue", seed)
            mw.append(avg_queue_length(env, MaxWeightPolicy(env), args.steps, args.warmup, rng))
            rng = derive_rng(args.master_seed, "queue", seed)
            pol = learned_policy(env, seed, args.master_seed)
            learned.append(avg_queue_length(env, pol, args.steps, args.warmup, rng))
        a, b = np.mean(mw), np.mean(learned)
        print(f"{str(lam):>10} {REPORTED_MAX_WEIGHT[lam]:>10.3f} {a:>8.3f} {b:>8.3f} {b / a:>6.3f}")


if __name__ == "__main__":
    main()
