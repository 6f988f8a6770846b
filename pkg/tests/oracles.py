"""Reference computations written independently of the library internals.

They only touch the public environment interface (``kernel_pmf``, scalar
``g`` and ``cost``) and use explicit loops or dense linear algebra.
"""
import itertools

import numpy as np


def box_points(box):
    return list(itertools.product(*(range(b + 1) for b in box)))


def clamp(x, box):
    return tuple(min(max(int(v), 0), b) for v, b in zip(x, box))


def bellman_backup(env, q: dict, box, gamma) -> dict:
    """``(T q)(s,x,a) = R + gamma * sum_s' P(s'|s,a) min_a' q(s', clamp(g), a')``.

    ``q`` maps (s, x, a) -> value over all codes and box points.
    """
    out = {}
    for s in range(env.n_codes):
        for x in box_points(box):
            for a in range(env.n_actions):
                pmf = env.kernel_pmf(s, a)
                total = env.cost(s, np.array(x), a)
                for s2 in range(env.n_codes):
                    if pmf[s2] == 0:
                        continue
                    x2 = clamp(env.g(s, np.array(x), a, s2), box)
                    total += gamma * pmf[s2] * min(q[(s2, x2, b)] for b in range(env.n_actions))
                out[(s, x, a)] = total
    return out


def zero_q(env, box) -> dict:
    return {(s, x, a): 0.0 for s in range(env.n_codes) for x in box_points(box) for a in range(env.n_actions)}


def q_dict_to_array(env, q: dict, box) -> np.ndarray:
    arr = np.zeros((env.n_codes, *(b + 1 for b in box), env.n_actions))
    for (s, x, a), v in q.items():
        arr[(s, *x, a)] = v
    return arr


def enumerate_policy_values(env, box, gamma):
    """Exact ``V^pi`` of every deterministic stationary policy by dense solve.

    Returns a dict ``actions tuple -> V`` with ``V`` over ``(s, x)`` states in
    ``itertools.product`` order.
    """
    states = [(s, x) for s in range(env.n_codes) for x in box_points(box)]
    index = {st: i for i, st in enumerate(states)}
    N = len(states)
    out = {}
    for acts in itertools.product(range(env.n_actions), repeat=N):
        P = np.zeros((N, N))
        c = np.zeros(N)
        for i, (s, x) in enumerate(states):
            a = acts[i]
            c[i] = env.cost(s, np.array(x), a)
            pmf = env.kernel_pmf(s, a)
            for s2 in range(env.n_codes):
                x2 = clamp(env.g(s, np.array(x), a, s2), box)
                P[i, index[(s2, x2)]] += pmf[s2]
        out[acts] = np.linalg.solve(np.eye(N) - gamma * P, c)
    return states, out


def mixture_enumeration(mu: np.ndarray, beta: np.ndarray, m: int) -> np.ndarray:
    """``mu/(m+1) + mu(s,a) beta(x) m/(m+1)`` for ``mu`` of shape (S, X, A)."""
    S, X, A = mu.shape
    out = np.zeros_like(mu)
    for s in range(S):
        for a in range(A):
            marg = sum(mu[s, x, a] for x in range(X))
            for x in range(X):
                out[s, x, a] = mu[s, x, a] / (m + 1) + marg * beta[x] * m / (m + 1)
    return out


def mm1_mean_number(rho: float) -> float:
    """Stationary mean number in system of a birth-death queue with ratio ``rho``."""
    return rho / (1 - rho)


def quarter_kernel_env(rng, S=2, L=3, A=2, max_cost=4.0):
    """Finite env whose kernel probabilities are multiples of 1/4."""
    from mixedrl import FiniteMixedEnv
    kernel = np.stack([[rng.multinomial(4, np.ones(S) / S) / 4 for _ in range(A)] for _ in range(S)])
    g_table = rng.integers(0, L, size=(S, L, A, S))
    cost = rng.uniform(0, max_cost, size=(S, L, A))
    return FiniteMixedEnv(kernel, g_table, cost)


def exact_frequency_dataset(env, reps=4):
    """Every (s, x, a) cell with next codes at exactly their kernel frequencies."""
    from mixedrl import Dataset
    s, x, a, s2 = [], [], [], []
    for code in range(env.n_codes):
        for level in range(env.n_levels):
            for act in range(env.n_actions):
                counts = np.rint(env.kernel_pmf(code, act) * reps).astype(int)
                assert counts.sum() == reps
                for nxt, c in enumerate(counts):
                    s += [code] * c
                    x += [level] * c
                    a += [act] * c
                    s2 += [nxt] * c
    s, a, s2 = np.array(s), np.array(a), np.array(s2)
    x = np.array(x)[:, None]
    return Dataset(env, s, x, a, env.costs(s, x, a), s2, env.next_x(s, x, a, s2))
