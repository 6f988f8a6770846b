"""Command line harness: ``mixedrl {collect,train,eval,sweep,vi}``.

Every command reads one YAML config, takes its master seed from the config
(or ``--seed``) and writes into ``--out`` (or ``config.out``). Outputs are
deterministic functions of (config, seed).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import RandomPolicy, build_truncated_mdp, policy_value, project_to_table, value_iteration
from .config import ExperimentConfig, behavior_from_dict, named_policy
from .core import ContractError, Dataset, DatasetValidationError, MixedEnvironment, PolicyTable, collect_dataset
from .evaluation import (GapSweepSettings, avg_queue_length, gap_sweep, make_context, mc_policy_value,
                         summarize_sweep)
from .learners import batch_fqi_asg, q_learning
from .seeding import derive_rng

REPORT_FORMAT = "mixedrl.eval/1"
CURVE_FORMAT = "mixedrl.curve/1"
SWEEP_FORMAT = "mixedrl.sweep/1"
CELL_FORMAT = "mixedrl.sweep-cell/1"
VI_FORMAT = "mixedrl.vi/1"
BUILTIN_POLICIES = ("maxweight", "priority", "random", "optimal")


# ---------------------------------------------------------------------------
# io helpers


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")
    os.replace(tmp, path)


def _write_csv(path: Path, fmt: str, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# format: {fmt}\n")
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in columns})


def read_csv(path: str | Path) -> list[dict]:
    """Read a CSV written by this module, skipping the format line."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.dumps())
    return out


def _exact_feasible(env: MixedEnvironment, box) -> bool:
    n_x = int(np.prod([b + 1 for b in box]))
    return env.n_codes * env.n_codes * n_x * env.n_actions <= 5_000_000


# ---------------------------------------------------------------------------
# commands


def cmd_collect(cfg: ExperimentConfig) -> Path:
    """Write ``dataset.jsonl`` (n lines) plus its ``.meta.json`` sidecar."""
    out = _out_dir(cfg)
    env = cfg.make_env()
    rng = derive_rng(cfg.seed, "collect")
    data = collect_dataset(env, cfg.make_behavior(env), cfg.data.n, rng,
                           meta={"seed": cfg.seed, "behavior": cfg.data.behavior})
    path = out / "dataset.jsonl"
    data.to_jsonl(path)
    return path


def _load_policy(env: MixedEnvironment, path: Path) -> PolicyTable:
    d = json.loads(Path(path).read_text())
    policy = PolicyTable.from_dict(d, env)
    if len(policy.box) != env.x_dim or policy.actions.shape[0] != env.n_table_codes:
        raise ContractError(f"policy grid {policy.actions.shape} does not match {env.name} "
                            f"({env.n_table_codes} table rows, {env.x_dim} pseudo-state dims)")
    if int(policy.actions.max(initial=0)) >= env.n_actions or int(policy.actions.min(initial=0)) < 0:
        raise ContractError("policy contains actions outside the environment's action set")
    return policy


def _evaluator(cfg: ExperimentConfig, env: MixedEnvironment):
    """Scalar score of a greedy policy for learning curves."""
    if cfg.eval.mode in ("exact", "both") and _exact_feasible(env, cfg.box):
        mdp = build_truncated_mdp(env, cfg.box, cfg.gamma)
        return lambda policy: policy_value(mdp, policy)
    calls = iter(range(1 << 30))

    def score(policy):
        rng = derive_rng(cfg.seed, "train-eval", next(calls))
        return mc_policy_value(env, policy, cfg.gamma, cfg.eval.episodes, cfg.eval.horizon, rng, cfg.box).v_hat

    return score


def cmd_train(cfg: ExperimentConfig, dataset_path: str | Path | None = None) -> Path:
    """Train FQI+ASG on a dataset (or online Q-learning); write policy, Q table and curve."""
    out = _out_dir(cfg)
    env = cfg.make_env()
    rng = derive_rng(cfg.seed, "train")
    if cfg.learner.kind == "fqi":
        path = Path(dataset_path) if dataset_path is not None else out / "dataset.jsonl"
        data = Dataset.from_jsonl(path, env)
        policy, diag = batch_fqi_asg(data, cfg.fqi_config(cfg.make_beta(data)), env, rng)
        q = diag.final
        rows = diag.rows()
        columns = ["episode", "sup_change", "covered_cells", "dataset_size"]
    else:
        q, curve = q_learning(env, cfg.qlearn_config(), cfg.make_beta(), rng, _evaluator(cfg, env))
        policy = q.greedy_policy()
        rows = [{"step": t, "value": v} for t, v in curve]
        columns = ["step", "value"]
    _write_json(out / "policy.json", policy.to_dict())
    _write_json(out / "qtable.json", q.to_dict())
    _write_csv(out / "curve.csv", CURVE_FORMAT, rows, columns)
    return out / "policy.json"


def _resolve_policy(cfg: ExperimentConfig, env: MixedEnvironment, policy: str | Path):
    name = str(policy)
    if name == "optimal":
        mdp = build_truncated_mdp(env, cfg.box, cfg.gamma)
        vi = value_iteration(mdp, cfg.eval.vi_tol)
        return project_to_table(env, vi.q, cfg.box, cfg.gamma).greedy_policy()
    if name == "random":
        return RandomPolicy(env.n_actions, derive_rng(cfg.seed, "eval-policy"))
    if name in BUILTIN_POLICIES:
        return named_policy(name, env)
    return _load_policy(env, Path(policy))


def cmd_eval(cfg: ExperimentConfig, policy: str | Path | None = None) -> Path:
    """Evaluate a policy file or a built-in policy; write ``report.json``."""
    out = _out_dir(cfg)
    env = cfg.make_env()
    pol = _resolve_policy(cfg, env, policy if policy is not None else out / "policy.json")
    ev = cfg.eval
    report: dict = {"format": REPORT_FORMAT, "env": env.name, "env_signature": env.signature(),
                    "policy": str(policy) if policy is not None else "policy.json", "seed": cfg.seed}
    v_star = None
    if ev.mode in ("exact", "both"):
        if not _exact_feasible(env, cfg.box):
            raise ContractError(f"exact evaluation of {env.name} on box {cfg.box} is too large")
        mdp = build_truncated_mdp(env, cfg.box, cfg.gamma)
        v_star = value_iteration(mdp, ev.vi_tol).v_star
        report["exact"] = {"v_pi": policy_value(mdp, pol), "v_star": v_star}
        report["exact"]["gap"] = report["exact"]["v_pi"] - v_star
    if ev.mode in ("mc", "both"):
        mc = mc_policy_value(env, pol, cfg.gamma, ev.episodes, ev.horizon, derive_rng(cfg.seed, "eval"),
                             cfg.box, v_star)
        report["mc"] = {k: v for k, v in mc.to_dict().items() if k != "format"}
    if ev.steps is not None:
        report["avg_queue"] = {"steps": ev.steps, "warmup": ev.warmup,
                               "value": avg_queue_length(env, pol, ev.steps, ev.warmup,
                                                         derive_rng(cfg.seed, "eval-queue"))}
    _write_json(out / "report.json", report)
    return out / "report.json"


def _cell_path(cells: Path, n: int, m: int, seed: int) -> Path:
    return cells / f"n{n}-m{m}-seed{seed}.json"


SWEEP_COLUMNS = ["n", "m", "seed", "v_pi", "v_star", "gap", "no_augmentation", "final_sup_change"]
SUMMARY_COLUMNS = ["n", "m", "seeds", "mean_gap", "std_gap", "no_augmentation"]


def sweep_settings(cfg: ExperimentConfig) -> GapSweepSettings:
    behavior, box, gamma = dict(cfg.data.behavior), list(cfg.box), cfg.gamma
    return GapSweepSettings(
        box=tuple(cfg.box), gamma=cfg.gamma, K=cfg.learner.K,
        make_behavior=lambda env: behavior_from_dict(behavior, env, box, gamma),
        make_beta=lambda env, data: cfg.make_beta(data),
        master_seed=cfg.seed, vi_tol=cfg.eval.vi_tol)


def cmd_sweep(cfg: ExperimentConfig, jobs: int = 1) -> Path:
    """Run the (n, m, seed) grid with one file per cell; completed cells are skipped."""
    out = _out_dir(cfg)
    cells = out / "cells"
    cells.mkdir(exist_ok=True)
    env = cfg.make_env()
    sw = cfg.sweep
    keys = [(int(n), int(m), int(s)) for n in sw.n_grid for m in sw.m_grid for s in sw.seeds]
    done = {k for k in keys if _cell_path(cells, *k).exists()}
    todo = [k for k in keys if k not in done]
    if todo:
        settings = sweep_settings(cfg)

        def save(row):
            _write_json(_cell_path(cells, row["n"], row["m"], row["seed"]), {"format": CELL_FORMAT, **row})

        gap_sweep(env, sw.n_grid, sw.m_grid, sw.seeds, settings, make_context(env, settings), jobs,
                  skip=done, on_row=save)
    rows = []
    for k in keys:
        row = json.loads(_cell_path(cells, *k).read_text())
        row.pop("format")
        rows.append(row)
    _write_csv(out / "sweep.csv", SWEEP_FORMAT, rows, SWEEP_COLUMNS)
    _write_csv(out / "sweep_summary.csv", SWEEP_FORMAT, summarize_sweep(rows), SUMMARY_COLUMNS)
    return out / "sweep.csv"


def cmd_vi(cfg: ExperimentConfig) -> Path:
    """Solve the truncated model; write Q*, its greedy policy and v*."""
    out = _out_dir(cfg)
    env = cfg.make_env()
    mdp = build_truncated_mdp(env, cfg.box, cfg.gamma)
    vi = value_iteration(mdp, cfg.eval.vi_tol)
    q = project_to_table(env, vi.q, cfg.box, cfg.gamma)
    _write_json(out / "qstar.json", q.to_dict())
    _write_json(out / "policy.json", q.greedy_policy().to_dict())
    _write_json(out / "vi.json", {"format": VI_FORMAT, "v_star": vi.v_star, "iterations": vi.iterations,
                                  "final_residual": vi.residuals[-1], "box": list(cfg.box), "gamma": cfg.gamma})
    return out / "vi.json"


# ---------------------------------------------------------------------------
# entry point


def load_config(path: str | None, seed: int | None = None, out: str | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig.load(path) if path else ExperimentConfig()
    if seed is not None:
        cfg.seed = int(seed)
    if out is not None:
        cfg.out = str(out)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p = argparse.ArgumentParser(prog="mixedrl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("collect", parents=[common], help="collect a dataset with the behaviour policy")
    tr = sub.add_parser("train", parents=[common], help="train FQI+ASG or Q-learning")
    tr.add_argument("--dataset", help="dataset file (default OUT/dataset.jsonl)")
    ev = sub.add_parser("eval", parents=[common], help="evaluate a policy")
    ev.add_argument("--policy", help=f"policy file or one of {', '.join(BUILTIN_POLICIES)}")
    sub.add_parser("sweep", parents=[common], help="optimality-gap sweep over (n, m, seed)")
    sub.add_parser("vi", parents=[common], help="value iteration on the truncated model")
    sub.add_parser("show-config", parents=[common], help="print the canonical config")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        if args.command == "collect":
            path = cmd_collect(cfg)
        elif args.command == "train":
            path = cmd_train(cfg, args.dataset)
        elif args.command == "eval":
            path = cmd_eval(cfg, args.policy)
        elif args.command == "sweep":
            path = cmd_sweep(cfg, args.jobs)
        elif args.command == "vi":
            path = cmd_vi(cfg)
        else:
            sys.stdout.write(cfg.dumps())
            return 0
    except (ContractError, DatasetValidationError, OSError) as exc:
        print(f"mixedrl {args.command}: error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
