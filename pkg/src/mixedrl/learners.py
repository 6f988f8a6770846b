"""Tabular learners: batch FQI with augmented samples and online Q-learning."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .asg import asg, beta_for_episode, uniform_box
from .core import ContractError, Dataset, MixedEnvironment, PolicyTable, flat_x_index

TABLE_FORMAT = "mixedrl.qtable/1"


@dataclass
class TabularQ:
    """Dense Q table over ``table codes x [0, box] x actions``.

    Values are costs-to-go, so greedy actions are argmins; ties go to the
    lowest action index. Pseudo-states outside the box are looked up at the
    clamped boundary cell.
    """

    values: np.ndarray
    box: tuple[int, ...]
    v_max: float
    table_code: Callable | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.box = tuple(int(b) for b in self.box)
        if self.values.shape[1:-1] != tuple(b + 1 for b in self.box):
            raise ContractError("value table does not match box")

    @classmethod
    def zeros(cls, env: MixedEnvironment, box: Sequence[int], gamma: float, init: str = "zero",
              rng: np.random.Generator | None = None) -> "TabularQ":
        if not 0 <= gamma < 1:
            raise ContractError("gamma must lie in [0, 1)")
        box = tuple(int(b) for b in box)
        if len(box) != env.x_dim:
            raise ContractError(f"box has {len(box)} dims, environment has {env.x_dim}")
        shape = (env.n_table_codes, *(b + 1 for b in box), env.n_actions)
        v_max = env.cost_bound(box) / (1.0 - gamma)
        if init == "zero":
            values = np.zeros(shape)
        elif init == "random":
            if rng is None:
                raise ContractError("random init needs an rng")
            values = rng.uniform(0.0, v_max, size=shape)
        else:
            raise ContractError(f"unknown init {init!r}")
        return cls(values, box, v_max, env.table_code)

    @property
    def n_actions(self) -> int:
        return self.values.shape[-1]

    @property
    def n_x(self) -> int:
        return int(np.prod([b + 1 for b in self.box]))

    def flat(self) -> np.ndarray:
        """View with shape ``(rows, n_x, n_actions)``."""
        return self.values.reshape(self.values.shape[0], self.n_x, self.n_actions)

    def rows(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        return codes if self.table_code is None else np.asarray(self.table_code(codes), dtype=np.int64)

    def cells(self, codes, xs) -> np.ndarray:
        """Flat ``(row, x)`` index for each sample."""
        return self.rows(codes) * self.n_x + flat_x_index(xs, self.box)

    def q(self, codes, xs) -> np.ndarray:
        return self.flat().reshape(-1, self.n_actions)[self.cells(codes, xs)]

    def v(self, codes, xs) -> np.ndarray:
        return self.q(codes, xs).min(axis=1)

    def greedy_policy(self) -> PolicyTable:
        return PolicyTable(np.argmin(self.values, axis=-1), self.box, self.table_code)

    def copy(self) -> "TabularQ":
        return TabularQ(self.values.copy(), self.box, self.v_max, self.table_code)

    def to_dict(self) -> dict:
        return {
            "format": TABLE_FORMAT,
            "box": list(self.box),
            "shape": list(self.values.shape),
            "order": "row-major over (table_code, x_1..x_d, action)",
            "v_max": self.v_max,
            "values": self.values.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, env: MixedEnvironment | None = None) -> "TabularQ":
        values = np.asarray(d["values"], dtype=np.float64).reshape(d["shape"])
        return cls(values, d["box"], d["v_max"], env.table_code if env is not None else None)


def fqi_fit(f_prev: TabularQ, d_hat: Dataset, gamma: float) -> TabularQ:
    """Exact least-squares fit of the one-step targets ``r + gamma * V_prev(s', x')``.

    For a tabular class the minimiser is the per-cell mean of the targets.
    Cells without samples keep their previous value; fitted values are
    clipped to ``[0, v_max]``.
    """
    if len(d_hat) == 0:
        raise ContractError("cannot fit on an empty dataset")
    y = d_hat.r + gamma * f_prev.v(d_hat.s_next, d_hat.x_next)
    cell = f_prev.cells(d_hat.s, d_hat.x) * f_prev.n_actions + d_hat.a
    size = f_prev.values.size
    sums = np.bincount(cell, weights=y, minlength=size)
    counts = np.bincount(cell, minlength=size)
    new = f_prev.values.ravel().copy()
    hit = counts > 0
    new[hit] = np.clip(sums[hit] / counts[hit], 0.0, f_prev.v_max)
    return TabularQ(new.reshape(f_prev.values.shape), f_prev.box, f_prev.v_max, f_prev.table_code)


def squared_loss(f: TabularQ, f_prev: TabularQ, d_hat: Dataset, gamma: float) -> float:
    y = d_hat.r + gamma * f_prev.v(d_hat.s_next, d_hat.x_next)
    pred = f.q(d_hat.s, d_hat.x)[np.arange(len(d_hat)), d_hat.a]
    return float(np.mean((pred - y) ** 2))


@dataclass
class FqiConfig:
    """Inputs of batch FQI with augmentation.

    ``beta`` is a sampler, a schedule ``k -> sampler`` (k = 1..K), or None
    for a uniform sampler over the learner's box.
    """

    K: int = 30
    m: int = 32
    gamma: float = 0.95
    box: tuple[int, ...] = (20, 20, 20)
    beta: object = None
    init: str = "zero"
    keep_tables: bool = False

    def __post_init__(self):
        if self.K < 1:
            raise ContractError("K must be >= 1")
        if self.m < 0:
            raise ContractError("m must be >= 0")
        if not 0 <= self.gamma < 1:
            raise ContractError("gamma must lie in [0, 1)")
        self.box = tuple(int(b) for b in self.box)


@dataclass
class FqiDiagnostics:
    sup_change: list[float] = field(default_factory=list)
    covered_cells: list[int] = field(default_factory=list)
    dataset_size: list[int] = field(default_factory=list)
    tables: list[TabularQ] = field(default_factory=list)
    init: TabularQ | None = None
    final: TabularQ | None = None

    def rows(self) -> list[dict]:
        return [{"episode": k + 1, "sup_change": self.sup_change[k], "covered_cells": self.covered_cells[k],
                 "dataset_size": self.dataset_size[k]} for k in range(len(self.sup_change))]


def batch_fqi_asg(dataset: Dataset, cfg: FqiConfig, env: MixedEnvironment | None = None,
                  rng: np.random.Generator | None = None) -> tuple[PolicyTable, FqiDiagnostics]:
    """Run K episodes of ``D_k = ASG(D, m, beta_k)``, ``f_k = fit(f_{k-1}, D_k)``.

    Returns the greedy policy of ``f_K`` and per-episode diagnostics.
    """
    env = env or dataset.env
    rng = rng if rng is not None else np.random.default_rng()
    dataset.validate(env)
    beta = cfg.beta if cfg.beta is not None else uniform_box(cfg.box)
    f = TabularQ.zeros(env, cfg.box, cfg.gamma, cfg.init, rng)
    diag = FqiDiagnostics(init=f.copy())
    for k in range(1, cfg.K + 1):
        d_k = asg(dataset, cfg.m, beta_for_episode(beta, k), env, rng, validate=False)
        f_new = fqi_fit(f, d_k, cfg.gamma)
        changed = np.abs(f_new.values - f.values)
        diag.sup_change.append(float(changed.max()))
        cell = f.cells(d_k.s, d_k.x) * f.n_actions + d_k.a
        diag.covered_cells.append(int(np.count_nonzero(np.bincount(cell, minlength=f.values.size))))
        diag.dataset_size.append(len(d_k))
        if cfg.keep_tables:
            diag.tables.append(f_new)
        f = f_new
    diag.final = f
    return f.greedy_policy(), diag


# ---------------------------------------------------------------------------
# online Q-learning


@dataclass
class QLearnConfig:
    """Online tabular Q-learning, optionally with ``m`` virtual updates per step.

    Step size is ``alpha0 / (1 + visits(cell)) ** alpha_power`` unless
    ``alpha`` is given as a constant. Episodes restart from eta_0 every
    ``episode_length`` real steps.
    """

    steps: int = 4000
    m: int = 0
    gamma: float = 0.95
    epsilon: float = 0.1
    alpha0: float = 1.0
    alpha_power: float = 0.8
    alpha: float | None = None
    episode_length: int = 1000
    box: tuple[int, ...] = (20, 20, 20)
    init: str = "zero"
    eval_every: int = 1000

    def __post_init__(self):
        if self.steps < 1:
            raise ContractError("steps must be >= 1")
        if self.m < 0:
            raise ContractError("m must be >= 0")
        if not 0 <= self.epsilon <= 1:
            raise ContractError("epsilon must lie in [0, 1]")
        if self.alpha is not None and not 0 <= self.alpha <= 1:
            raise ContractError("alpha must lie in [0, 1]")
        if not 0 < self.alpha0 <= 1:
            raise ContractError("alpha0 must lie in (0, 1]")
        if not 0 <= self.gamma < 1:
            raise ContractError("gamma must lie in [0, 1)")
        self.box = tuple(int(b) for b in self.box)


def q_learning(env: MixedEnvironment, cfg: QLearnConfig, beta, rng: np.random.Generator,
               evaluate: Callable[[PolicyTable], float] | None = None,
               start: tuple[int, np.ndarray] | None = None) -> tuple[TabularQ, list[tuple[int, float]]]:
    """Epsilon-greedy Q-learning; each real step is followed by ``m`` virtual updates.

    ``evaluate`` maps a greedy policy to a scalar and is called every
    ``eval_every`` real steps to build the learning curve.
    """
    beta = beta if beta is not None else uniform_box(cfg.box)
    Q = TabularQ.zeros(env, cfg.box, cfg.gamma, cfg.init, rng)
    table = Q.flat().reshape(-1, Q.n_actions)
    visits = np.zeros(table.shape, dtype=np.int64)
    n_actions = Q.n_actions
    gamma, m = cfg.gamma, cfg.m
    cdfs: dict = {}
    block = 1024

    def update(cell, a, r, next_cell):
        target = r + gamma * table[next_cell].min()
        if cfg.alpha is not None:
            step = cfg.alpha
        else:
            step = cfg.alpha0 / (1.0 + visits[cell, a]) ** cfg.alpha_power
        table[cell, a] += step * (target - table[cell, a])
        visits[cell, a] += 1

    curve: list[tuple[int, float]] = []
    s = x = None
    virtual = None
    for t in range(cfg.steps):
        if t % cfg.episode_length == 0:
            s, x = start if start is not None else env.sample_s0_x0(rng)
            x = np.asarray(x, dtype=np.int64)
        if m > 0 and t % block == 0:
            virtual = np.asarray(beta.sample(rng, block * m), dtype=np.int64).reshape(block, m, -1)
        cell = int(Q.cells([s], x[None, :])[0])
        if rng.random() < cfg.epsilon:
            a = int(rng.integers(n_actions))
        else:
            a = int(np.argmin(table[cell]))
        cdf = cdfs.get((s, a))
        if cdf is None:
            cdf = cdfs[(s, a)] = np.cumsum(env.kernel_pmf(s, a))
        s_next = int(min(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"), len(cdf) - 1))
        # row 0 is the real sample, rows 1..m its virtual copies
        xs = x[None, :] if m == 0 else np.concatenate([x[None, :], env.canonical_x(virtual[t % block])])
        k = len(xs)
        ss, aa, sn = np.full(k, s), np.full(k, a), np.full(k, s_next)
        rs = env.costs(ss, xs, aa)
        xn = env.next_x(ss, xs, aa, sn)
        cells = Q.cells(ss, xs)
        next_cells = Q.cells(sn, xn)
        for i in range(k):
            update(int(cells[i]), a, float(rs[i]), int(next_cells[i]))
        s, x = s_next, xn[0]
        if evaluate is not None and (t + 1) % cfg.eval_every == 0:
            curve.append((t + 1, float(evaluate(Q.greedy_policy()))))
    return Q, curve
