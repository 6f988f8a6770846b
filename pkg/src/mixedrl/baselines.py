"""Reference policies: value-iteration optimum, Max-Weight, priority, random."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .core import ContractError, MixedEnvironment, PolicyTable, flat_x_index, grid_points
from .envs import SERVE1, SERVE3
from .learners import TabularQ


@dataclass
class TruncatedMdp:
    """Explicit model on ``codes x [0, box] x actions``.

    ``next_index[s, x, a, s']`` is the flat index of ``g(s, x, a, s')``
    clamped to the box, so each ``(s, x, a)`` row keeps total mass
    ``sum_s' kernel[s, a, s'] = 1``.
    """

    env: MixedEnvironment
    box: tuple[int, ...]
    gamma: float
    kernel: np.ndarray  # (n_codes, A, n_codes)
    next_index: np.ndarray  # (n_codes, n_x, A, n_codes)
    cost: np.ndarray  # (n_codes, n_x, A)
    init: np.ndarray  # (n_codes, n_x)
    r_max: float = field(init=False)

    def __post_init__(self):
        if not 0 <= self.gamma < 1:
            raise ContractError("gamma must lie in [0, 1)")
        self.r_max = float(self.cost.max()) if self.cost.size else 0.0

    @property
    def n_codes(self) -> int:
        return self.kernel.shape[0]

    @property
    def n_x(self) -> int:
        return self.cost.shape[1]

    @property
    def n_actions(self) -> int:
        return self.kernel.shape[1]

    @property
    def v_max(self) -> float:
        return self.r_max / (1.0 - self.gamma)

    def row_sums(self) -> np.ndarray:
        """Total transition mass of every ``(s, x, a)`` row."""
        return np.broadcast_to(self.kernel.sum(axis=2)[:, None, :], self.cost.shape)

    def bellman(self, q: np.ndarray) -> np.ndarray:
        """``(T q)(s,x,a) = c(s,x,a) + gamma * E_{s'}[min_a' q(s', x', a')]`` on flat arrays."""
        v = q.min(axis=2)
        v_next = v[np.arange(self.n_codes), self.next_index]
        return self.cost + self.gamma * np.einsum("sxat,sat->sxa", v_next, self.kernel)

    def full_shape(self) -> tuple[int, ...]:
        return (self.n_codes, *(b + 1 for b in self.box), self.n_actions)


def build_truncated_mdp(env: MixedEnvironment, box: Sequence[int], gamma: float) -> TruncatedMdp:
    if not 0 <= gamma < 1:
        raise ContractError("gamma must lie in [0, 1)")
    box = tuple(int(b) for b in box)
    grid = env.canonical_x(grid_points(box))
    n_x, S, A = len(grid), env.n_codes, env.n_actions
    kernel = np.zeros((S, A, S))
    next_index = np.zeros((S, n_x, A, S), dtype=np.int64)
    cost = np.zeros((S, n_x, A))
    ones = np.ones(n_x, dtype=np.int64)
    for s in range(S):
        for a in range(A):
            kernel[s, a] = env.kernel_pmf(s, a)
            cost[s, :, a] = env.costs(s * ones, grid, a * ones)
            for t in np.flatnonzero(kernel[s, a] > 0):
                nxt = env.next_x(s * ones, grid, a * ones, t * ones)
                next_index[s, :, a, t] = flat_x_index(nxt, box)
    init = np.zeros((S, n_x))
    init[:, int(flat_x_index(env.initial_x()[None, :], box)[0])] = env.initial_pmf()
    return TruncatedMdp(env, box, gamma, kernel, next_index, cost, init)


@dataclass
class ValueIterationResult:
    q: np.ndarray  # (n_codes, *box+1, A)
    v_star: float
    iterations: int
    residuals: list[float]

    def greedy_actions(self) -> np.ndarray:
        return np.argmin(self.q, axis=-1)


def value_iteration(mdp: TruncatedMdp, tol: float = 1e-8, max_iter: int | None = None,
                    q0: np.ndarray | None = None) -> ValueIterationResult:
    """Iterate ``Q <- T Q`` from ``q0`` (default 0) until ``||TQ - Q||_inf <= tol``."""
    if tol <= 0:
        raise ContractError("tol must be positive")
    if not 0 <= mdp.gamma < 1:
        raise ContractError("gamma must lie in [0, 1)")
    q = np.zeros(mdp.cost.shape) if q0 is None else np.asarray(q0, float).reshape(mdp.cost.shape).copy()
    if max_iter is None:
        bound = max(mdp.v_max, tol) / tol
        max_iter = int(math.ceil(math.log(bound) / math.log(1 / mdp.gamma))) + 1 if mdp.gamma > 0 else 1
    residuals = []
    it = 0
    while True:
        tq = mdp.bellman(q)
        res = float(np.abs(tq - q).max())
        q = tq
        it += 1
        residuals.append(res)
        if res <= tol or it >= max_iter:
            break
    v_star = float((mdp.init * q.min(axis=2)).sum())
    return ValueIterationResult(q.reshape(mdp.full_shape()), v_star, it, residuals)


def project_to_table(env: MixedEnvironment, q_full: np.ndarray, box: Sequence[int], gamma: float,
                     atol: float = 1e-8) -> TabularQ:
    """Collapse a full-code Q array onto the environment's table rows.

    Codes sharing a table row must carry the same values; otherwise the
    projection would change the problem and a ContractError is raised.
    """
    rows = env.table_code(np.arange(env.n_codes))
    out = np.zeros((env.n_table_codes, *q_full.shape[1:]))
    seen = np.zeros(env.n_table_codes, bool)
    for code, row in enumerate(rows):
        if not seen[row]:
            out[row] = q_full[code]
            seen[row] = True
        elif not np.allclose(out[row], q_full[code], atol=atol, rtol=0):
            raise ContractError(f"code {code} differs from other codes in table row {row}")
    v_max = env.cost_bound(box) / (1.0 - gamma)
    return TabularQ(out, box, v_max, env.table_code)


def policy_matrix(mdp: TruncatedMdp, policy) -> np.ndarray:
    """Action probabilities ``(n_codes, n_x, A)`` for a table, callable, or array."""
    S, n_x, A = mdp.n_codes, mdp.n_x, mdp.n_actions
    if hasattr(policy, "matrix"):
        return np.asarray(policy.matrix(mdp), float)
    if isinstance(policy, np.ndarray):
        arr = policy.reshape(S, n_x, -1)
        if arr.shape[-1] == A:
            return arr.astype(float)
        acts = arr.reshape(S, n_x)
    elif isinstance(policy, PolicyTable):
        codes = np.repeat(np.arange(S), n_x)
        grid = np.tile(grid_points(mdp.box), (S, 1))
        acts = policy.act_batch(codes, grid).reshape(S, n_x)
    else:
        grid = mdp.env.canonical_x(grid_points(mdp.box))
        acts = np.array([[policy(s, x) for x in grid] for s in range(S)])
    return np.eye(A)[acts]


def policy_values(mdp: TruncatedMdp, policy) -> np.ndarray:
    """Exact discounted cost ``V^pi`` on the truncated model, shape ``(n_codes, n_x)``."""
    pi = policy_matrix(mdp, policy)
    S, n_x, A = mdp.n_codes, mdp.n_x, mdp.n_actions
    N = S * n_x
    c = (pi * mdp.cost).sum(axis=2).ravel()
    # P_pi[(s,x), (s',x')] = sum_a pi(a|s,x) kernel[s,a,s'] 1{x' = next(s,x,a,s')}
    w = pi[:, :, :, None] * mdp.kernel[:, None, :, :]
    rows = np.broadcast_to(np.arange(N).reshape(S, n_x, 1, 1), w.shape).ravel()
    cols = (np.arange(S)[None, None, None, :] * n_x + mdp.next_index).ravel()
    keep = w.ravel() > 0
    P = sp.csr_matrix((w.ravel()[keep], (rows[keep], cols[keep])), shape=(N, N))
    M = sp.identity(N, format="csc") - mdp.gamma * P.tocsc()
    return spsolve(M, c).reshape(S, n_x)


def policy_value(mdp: TruncatedMdp, policy) -> float:
    """``v^pi = E_{eta_0}[V^pi]`` on the truncated model."""
    return float((mdp.init * policy_values(mdp, policy)).sum())


# ---------------------------------------------------------------------------
# heuristic policies


def max_weight(q, capacities) -> int:
    """Serve ``argmax_i q(i) * O(i)``; ties go to the lowest index."""
    q = np.asarray(q)
    capacities = np.asarray(capacities)
    if q.shape != capacities.shape:
        raise ContractError("queue and channel vectors differ in length")
    return int(np.argmax(q * capacities))


def priority_policy(q) -> int:
    """Serve class 1 whenever it has jobs, class 3 otherwise."""
    return SERVE1 if q[0] > 0 else SERVE3


def random_policy(rng: np.random.Generator, n_actions: int = 2) -> int:
    return int(rng.integers(n_actions))


class MaxWeightPolicy:
    def __init__(self, env):
        self.env = env

    def __call__(self, s: int, x) -> int:
        return max_weight(x, self.env.capacities[s])

    def act_batch(self, codes, xs):
        w = np.asarray(xs) * self.env.capacities[np.asarray(codes)]
        return np.argmax(w, axis=1)


class PriorityPolicy:
    def __call__(self, s: int, x) -> int:
        return priority_policy(x)

    def act_batch(self, codes, xs):
        return np.where(np.asarray(xs)[:, 0] > 0, SERVE1, SERVE3)


class RandomPolicy:
    def __init__(self, n_actions: int, rng: np.random.Generator):
        self.n_actions = n_actions
        self.rng = rng

    def __call__(self, s: int, x) -> int:
        return random_policy(self.rng, self.n_actions)

    def act_batch(self, codes, xs):
        return self.rng.integers(self.n_actions, size=len(np.asarray(codes)))

    def matrix(self, mdp: TruncatedMdp) -> np.ndarray:
        return np.full((mdp.n_codes, mdp.n_x, mdp.n_actions), 1.0 / mdp.n_actions)
