"""Policy evaluation, queue metrics, augmented-data mixture check, gap sweeps."""
from __future__ import annotations

import concurrent.futures as cf
import math
import multiprocessing as mp
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .asg import PseudoStateSampler
from .baselines import TruncatedMdp, build_truncated_mdp, policy_value, value_iteration
from .core import ContractError, Dataset, MixedEnvironment, collect_dataset
from .learners import FqiConfig, batch_fqi_asg
from .seeding import derive_rng


@dataclass
class EvalReport:
    v_hat: float
    ci_halfwidth: float
    episodes: int
    horizon: int
    avg_queue: float
    gap: float | None = None
    v_star: float | None = None

    def to_dict(self) -> dict:
        return {"format": "mixedrl.eval/1", **asdict(self)}


def horizon_for(gamma: float, r_max: float, tol: float = 0.01) -> int:
    """Smallest H with truncation bias ``gamma**H * r_max / (1 - gamma) <= tol``."""
    if gamma == 0 or r_max <= 0:
        return 1
    return max(1, math.ceil(math.log(tol * (1 - gamma) / r_max) / math.log(gamma)))


def act_batch(policy, codes, xs) -> np.ndarray:
    if hasattr(policy, "act_batch"):
        return np.asarray(policy.act_batch(codes, xs), dtype=np.int64)
    return np.array([policy(int(s), x) for s, x in zip(codes, xs)], dtype=np.int64)


def mc_policy_value(env: MixedEnvironment, policy, gamma: float, episodes: int, horizon: int | None = None,
                    rng: np.random.Generator | None = None, box: Sequence[int] | None = None,
                    v_star: float | None = None, start=None) -> EvalReport:
    """Monte Carlo discounted cost with a 95% t-interval.

    Episodes run side by side; ``horizon`` defaults to the truncation rule of
    ``horizon_for`` with ``r_max`` taken over ``box``. ``avg_queue`` is the
    mean total queue over all simulated steps.
    """
    if episodes < 2:
        raise ContractError("need at least 2 episodes for a confidence interval")
    if not 0 <= gamma < 1:
        raise ContractError("gamma must lie in [0, 1)")
    rng = rng if rng is not None else np.random.default_rng()
    if horizon is None:
        if box is None:
            raise ContractError("pass horizon or box")
        horizon = horizon_for(gamma, env.cost_bound(box))
    if start is None:
        init = [env.sample_s0_x0(rng) for _ in range(episodes)]
        s = np.array([c for c, _ in init], dtype=np.int64)
        x = np.stack([v for _, v in init]).astype(np.int64)
    else:
        s = np.full(episodes, int(start[0]), dtype=np.int64)
        x = np.tile(np.asarray(start[1], dtype=np.int64), (episodes, 1))
    totals = np.zeros(episodes)
    queue = 0.0
    disc = 1.0
    for _ in range(horizon):
        a = act_batch(policy, s, x)
        totals += disc * env.costs(s, x, a)
        queue += float(np.sum(env.total_queue(x)))
        s_next = env.kernel_sample_batch(s, a, rng)
        x = env.next_x(s, x, a, s_next)
        s = s_next
        disc *= gamma
    mean = float(totals.mean())
    sd = float(totals.std(ddof=1))
    half = float(stats.t.ppf(0.975, episodes - 1) * sd / math.sqrt(episodes)) if sd > 0 else 0.0
    gap = mean - v_star if v_star is not None else None
    return EvalReport(mean, half, episodes, horizon, queue / (episodes * horizon), gap, v_star)


def avg_queue_length(env: MixedEnvironment, policy, steps: int, warmup: int, rng: np.random.Generator,
                     start=None) -> float:
    """Time-average total queue of one trajectory after ``warmup`` steps."""
    if steps <= warmup:
        raise ContractError("steps must exceed warmup")
    s, x = start if start is not None else env.sample_s0_x0(rng)
    x = np.asarray(x, dtype=np.int64)
    total = 0
    for t in range(steps):
        if t >= warmup:
            total += int(env.total_queue(x))
        a = policy(s, x)
        s_next = env.kernel_sample(s, a, rng)
        x = np.asarray(env.g(s, x, a, s_next), dtype=np.int64)
        s = s_next
    return total / (steps - warmup)


# ---------------------------------------------------------------------------
# mixture law of augmented data


def mixture_distribution(mu: np.ndarray, beta_pmf: np.ndarray, m: int) -> np.ndarray:
    """``mu(s,x,a)/(m+1) + mu(s,a) beta(x) m/(m+1)`` on the grid of ``mu``.

    ``mu`` has shape ``(n_codes, *x_shape, n_actions)``; ``beta_pmf`` has
    shape ``x_shape``.
    """
    mu = np.asarray(mu, float)
    x_axes = tuple(range(1, mu.ndim - 1))
    mu_sa = mu.sum(axis=x_axes)
    expand = (slice(None),) + (None,) * len(x_axes) + (slice(None),)
    virtual = mu_sa[expand] * np.asarray(beta_pmf, float)[(None, ...) + (None,)]
    return mu / (m + 1) + virtual * m / (m + 1)


def empirical_distribution(dataset: Dataset, shape: Sequence[int]) -> np.ndarray:
    x_shape = tuple(shape[1:-1])
    if np.any(dataset.x < 0) or np.any(dataset.x >= np.asarray(x_shape)):
        raise ContractError("dataset has pseudo-states outside the distribution grid")
    idx = np.ravel_multi_index((dataset.s, *dataset.x.T, dataset.a), tuple(shape))
    counts = np.bincount(idx, minlength=int(np.prod(shape)))
    return (counts / len(dataset)).reshape(shape)


def mixture_check(d_hat: Dataset, mu: np.ndarray, beta, m: int) -> float:
    """Total variation between the augmented data and the exact mixture law."""
    mu = np.asarray(mu, float)
    x_box = tuple(n - 1 for n in mu.shape[1:-1])
    beta_pmf = beta.pmf_grid(x_box) if isinstance(beta, PseudoStateSampler) else np.asarray(beta, float)
    target = mixture_distribution(mu, beta_pmf, m)
    emp = empirical_distribution(d_hat, mu.shape)
    return 0.5 * float(np.abs(emp - target).sum())


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p, float) - np.asarray(q, float)).sum())


# ---------------------------------------------------------------------------
# optimality-gap sweep


@dataclass
class GapSweepSettings:
    """Everything a sweep cell needs besides (n, m, seed).

    ``behavior`` and ``beta`` are built inside each cell by the supplied
    factories so cells stay picklable and independent.
    """

    box: tuple[int, ...]
    gamma: float
    K: int
    make_behavior: Callable[[MixedEnvironment], object]
    make_beta: Callable[[MixedEnvironment, Dataset], object]
    master_seed: int = 0
    vi_tol: float = 1e-6


@dataclass
class SweepContext:
    env: MixedEnvironment
    mdp: TruncatedMdp
    v_star: float
    settings: GapSweepSettings


def make_context(env: MixedEnvironment, settings: GapSweepSettings) -> SweepContext:
    mdp = build_truncated_mdp(env, settings.box, settings.gamma)
    vi = value_iteration(mdp, settings.vi_tol)
    return SweepContext(env, mdp, vi.v_star, settings)


def gap_cell(ctx: SweepContext, n: int, m: int, seed: int) -> dict:
    """Collect ``n`` samples, run batch FQI with ASG, return the exact gap.

    The dataset stream depends on (n, seed) only, so cells that differ only
    in ``m`` share their real data.
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    st = ctx.settings
    data_rng = derive_rng(st.master_seed, "sweep-data", n, seed)
    learn_rng = derive_rng(st.master_seed, "sweep-learn", n, m, seed)
    data = collect_dataset(ctx.env, st.make_behavior(ctx.env), n, data_rng)
    cfg = FqiConfig(K=st.K, m=m, gamma=st.gamma, box=st.box, beta=st.make_beta(ctx.env, data))
    policy, diag = batch_fqi_asg(data, cfg, ctx.env, learn_rng)
    value = policy_value(ctx.mdp, policy)
    return {"n": n, "m": m, "seed": seed, "v_pi": value, "v_star": ctx.v_star, "gap": value - ctx.v_star,
            "no_augmentation": m == 0, "final_sup_change": diag.sup_change[-1]}


_CTX: SweepContext | None = None


def _init_worker(ctx: SweepContext) -> None:
    global _CTX
    _CTX = ctx


def _run_cell(key: tuple[int, int, int]) -> dict:
    return gap_cell(_CTX, *key)


def gap_sweep(env: MixedEnvironment, n_grid: Iterable[int], m_grid: Iterable[int], seeds: Iterable[int],
              settings: GapSweepSettings, ctx: SweepContext | None = None, jobs: int = 1,
              skip: set | None = None, on_row: Callable[[dict], None] | None = None) -> list[dict]:
    """Run every (n, m, seed) cell; rows come back in grid order.

    Keys in ``skip`` are not recomputed (for resuming). ``on_row`` is called
    as each cell finishes.
    """
    n_grid, m_grid, seeds = list(n_grid), list(m_grid), list(seeds)
    if any(n < 1 for n in n_grid):
        raise ContractError("every n must be >= 1")
    ctx = ctx or make_context(env, settings)
    keys = [(n, m, s) for n in n_grid for m in m_grid for s in seeds if (n, m, s) not in (skip or set())]
    rows: dict = {}
    if jobs <= 1:
        for key in keys:
            rows[key] = gap_cell(ctx, *key)
            if on_row:
                on_row(rows[key])
    else:
        with cf.ProcessPoolExecutor(jobs, mp_context=mp.get_context("fork"), initializer=_init_worker,
                                    initargs=(ctx,)) as pool:
            futures = {pool.submit(_run_cell, key): key for key in keys}
            for fut in cf.as_completed(futures):
                rows[futures[fut]] = fut.result()
                if on_row:
                    on_row(rows[futures[fut]])
    return [rows[k] for k in keys]


def summarize_sweep(rows: Iterable[dict]) -> list[dict]:
    """Mean and sample std of the gap per (n, m) cell."""
    cells: dict = {}
    for r in rows:
        cells.setdefault((r["n"], r["m"]), []).append(r["gap"])
    out = []
    for (n, m), gaps in sorted(cells.items()):
        g = np.asarray(gaps)
        out.append({"n": n, "m": m, "seeds": len(g), "mean_gap": float(g.mean()),
                    "std_gap": float(g.std(ddof=1)) if len(g) > 1 else 0.0, "no_augmentation": m == 0})
    return out


def _pooled(a: dict, b: dict) -> float:
    return math.sqrt((a["std_gap"] ** 2 + b["std_gap"] ** 2) / 2)


def sweep_trend_checks(summary: Iterable[dict]) -> dict[str, bool]:
    """Trend checks on ``summarize_sweep`` output.

    ``a``: at every n the m=0 mean gap exceeds the largest-m mean gap.
    ``b``: at fixed n the mean gap does not increase by more than one pooled
    std between consecutive m values. ``c``: the same along n at the largest m.
    """
    cells = {(r["n"], r["m"]): r for r in summary}
    ns = sorted({n for n, _ in cells})
    ms = sorted({m for _, m in cells})
    top = ms[-1]
    a = all(cells[(n, 0)]["mean_gap"] > cells[(n, top)]["mean_gap"] for n in ns) if 0 in ms else False
    b = all(cells[(n, m2)]["mean_gap"] <= cells[(n, m1)]["mean_gap"] + _pooled(cells[(n, m1)], cells[(n, m2)])
            for n in ns for m1, m2 in zip(ms, ms[1:]))
    c = all(cells[(n2, top)]["mean_gap"] <= cells[(n1, top)]["mean_gap"] + _pooled(cells[(n1, top)], cells[(n2, top)])
            for n1, n2 in zip(ns, ns[1:]))
    return {"a": a, "b": b, "c": c}
