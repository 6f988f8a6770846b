"""Q-learning with augmented samples on the two-phase and general-job networks.

Compares Monte Carlo discounted cost of the learned greedy policy against
plain Q-learning, static priority and a uniformly random policy.

    python scripts/queue_variants.py --seeds 3
"""
import argparse

import numpy as np

from mixedrl import QLearnConfig, make_env, mc_policy_value, q_learning
from mixedrl.asg import truncated_geometric
from mixedrl.baselines import PriorityPolicy, RandomPolicy
from mixedrl.envs import GENERAL_JOB_CASES
from mixedrl.seeding import derive_rng

CASES = [("crisscross2p", {"p": 0.8}, (15, 15, 1, 1))] + [
    ("crisscross-gen", {"lam": list(r["lam"]), "mu": list(r["mu"]), "job_size_range": r["job_size_range"]},
     (12, 12, 12, r["job_size_range"], r["job_size_range"])) for r in GENERAL_JOB_CASES.values()]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--steps", type=int, default=8000)
    p.add_argument("--m", type=int, default=16)
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--master-seed", type=int, default=0)
    args = p.parse_args()
    gamma = 0.95
    for name, params, box in CASES:
        env = make_env(name, params)
        evaluate = lambda pol, k: mc_policy_value(env, pol, gamma, args.episodes, None,
                                                  derive_rng(args.master_seed, "eval", name, k), box).v_hat
        res = {"priority": evaluate(PriorityPolicy(), 0),
               "random": evaluate(RandomPolicy(env.n_actions, derive_rng(args.master_seed, "rand")), 0)}
        for m in (0, args.m):
            cfg = QLearnConfig(steps=args.steps, m=m, gamma=gamma, box=box)
            vals = []
            for seed in range(args.seeds):
                q, _ = q_learning(env, cfg, truncated_geometric(0.3, box),
                                  derive_rng(args.master_seed, "qlearn", name, m, seed))
                vals.append(evaluate(q.greedy_policy(), 0))
            res[f"q-learning m={m}"] = float(np.mean(vals))
        print(name, params)
        for k, v in res.items():
            print(f"    {k:<18} {v:8.3f}")


if __name__ == "__main__":
    main()
