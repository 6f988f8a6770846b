"""Queueing environments: wireless downlink and criss-cross variants.

Criss-cross networks are continuous-time chains converted to discrete time by
uniformization at the constant rate ``lambda1 + lambda3 + mu1 + mu2 + mu3``.
The stochastic state is the *potential* event of the slot; whether a service
event actually removes a job is decided by ``g`` from the queue lengths, so a
virtual sample with any queue vector is still a true transition.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import stats

from .core import ContractError, MixedEnvironment

log = logging.getLogger(__name__)

# criss-cross event kinds
ARRIVAL1, ARRIVAL3, SERVICE1, SERVICE2, NULL = range(5)
EVENT_NAMES = ("arrival-1", "arrival-3", "potential-completion-server1", "potential-completion-2", "null")
# criss-cross actions
SERVE1, SERVE3 = 0, 1


# ---------------------------------------------------------------------------
# wireless downlink


def wireless_g(arrivals, channel, q, a) -> np.ndarray:
    """Queue update ``q'(i) = max(q(i) + arrivals(i) - channel(i) * 1{a == i}, 0)``.

    Works on single vectors or on batches (leading axis).
    """
    q = np.asarray(q, dtype=np.int64)
    arrivals = np.asarray(arrivals, dtype=np.int64)
    channel = np.asarray(channel, dtype=np.int64)
    a = np.asarray(a, dtype=np.int64)
    served = channel * (np.arange(q.shape[-1]) == a[..., None])
    return np.maximum(q + arrivals - served, 0)


def _poisson_cap(lam: float, tail: float = 1e-9) -> int:
    k = int(lam)
    while stats.poisson.sf(k, lam) >= tail:
        k += 1
    return k


def _channel_pmf(entry) -> tuple[tuple[int, float], ...]:
    if isinstance(entry, (int, np.integer)):
        return ((int(entry), 1.0),)
    pairs = tuple((int(v), float(p)) for v, p in entry)
    if not pairs or any(v < 0 or p < 0 for v, p in pairs) or abs(sum(p for _, p in pairs) - 1) > 1e-9:
        raise ContractError(f"invalid channel distribution {entry!r}")
    return pairs


@dataclass(frozen=True)
class WirelessDownlinkConfig:
    """Downlink with Poisson arrivals and per-mobile channel capacities.

    ``channel`` entries are either a fixed capacity or a list of
    ``(capacity, probability)`` pairs. ``observe="queues"`` makes value tables
    and policies depend on the queue vector only; ``"full"`` adds the
    stochastic code.
    """

    lam: tuple[float, ...] = (2.0, 4.0, 3.0)
    channel: tuple = (12, 12, 12)
    arrival_cap: int | None = None
    observe: str = "queues"

    def __post_init__(self):
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        chan = tuple(_channel_pmf(c) for c in self.channel)
        object.__setattr__(self, "channel", tuple(
            c[0][0] if len(c) == 1 else tuple(list(p) for p in c) for c in chan))
        if len(self.lam) != len(self.channel):
            raise ContractError("lam and channel must have the same length")
        if any(v <= 0 for v in self.lam):
            raise ContractError("arrival rates must be positive")
        if self.arrival_cap is None:
            object.__setattr__(self, "arrival_cap", max(_poisson_cap(v) for v in self.lam))
        if self.arrival_cap < 0:
            raise ContractError("arrival_cap must be >= 0")
        if self.observe not in ("queues", "full"):
            raise ContractError("observe must be 'queues' or 'full'")


class WirelessDownlink(MixedEnvironment):
    """Stochastic state: (arrivals, channel capacities); pseudo-state: queues.

    Actions are 0-based mobile indices. Arrivals ``Lambda_t`` and capacities
    ``O_t`` are part of ``s_t`` and are applied by ``g`` in the same slot.
    """

    name = "wireless"

    def __init__(self, config: WirelessDownlinkConfig | None = None, **kw):
        self.config = config or WirelessDownlinkConfig(**kw)
        cfg = self.config
        self.n_mobiles = len(cfg.lam)
        self.n_actions = self.n_mobiles
        self.x_dim = self.n_mobiles
        cap = cfg.arrival_cap
        ks = np.arange(cap + 1)
        self._arr_pmf = []
        for lam in cfg.lam:
            p = stats.poisson.pmf(ks, lam)
            self._arr_pmf.append(p / p.sum())
        self._chan = [_channel_pmf(c) for c in cfg.channel]
        self._dims = (cap + 1,) * self.n_mobiles + tuple(len(c) for c in self._chan)
        self.n_codes = int(np.prod(self._dims))
        digits = np.stack(np.unravel_index(np.arange(self.n_codes), self._dims), axis=1)
        self.arrivals = digits[:, :self.n_mobiles].astype(np.int64)
        self.capacities = np.stack(
            [np.array([v for v, _ in self._chan[i]])[digits[:, self.n_mobiles + i]]
             for i in range(self.n_mobiles)], axis=1).astype(np.int64)
        margins = self._arr_pmf + [np.array([p for _, p in c]) for c in self._chan]
        pmf = margins[0]
        for m in margins[1:]:
            pmf = np.multiply.outer(pmf, m)
        self._pmf = pmf.ravel()
        self._margin_cdfs = [np.cumsum(m) for m in margins]

    def params(self) -> dict:
        d = asdict(self.config)
        d["lam"] = list(d["lam"])
        d["channel"] = list(d["channel"])
        return d

    @property
    def n_table_codes(self) -> int:
        return 1 if self.config.observe == "queues" else self.n_codes

    def table_code(self, codes):
        codes = np.asarray(codes, dtype=np.int64)
        return np.zeros_like(codes) if self.config.observe == "queues" else codes

    def encode(self, arrivals: Sequence[int], capacities: Sequence[int]) -> int:
        """Stochastic code for given arrival counts and channel capacities."""
        idx = list(arrivals)
        for i, c in enumerate(capacities):
            values = [v for v, _ in self._chan[i]]
            if c not in values:
                raise ContractError(f"capacity {c} not in support of mobile {i}")
            idx.append(values.index(c))
        return int(np.ravel_multi_index(tuple(idx), self._dims))

    def payload(self, code: int) -> tuple[int, ...]:
        return tuple(int(v) for v in self.arrivals[code]) + tuple(int(v) for v in self.capacities[code])

    def kernel_pmf(self, code: int, a: int) -> np.ndarray:
        return self._pmf

    def kernel_sample_batch(self, codes, actions, rng):
        n = len(np.asarray(codes))
        u = rng.random((n, len(self._dims)))
        digits = [np.searchsorted(cdf, u[:, i] * cdf[-1], side="right").clip(0, len(cdf) - 1)
                  for i, cdf in enumerate(self._margin_cdfs)]
        return np.ravel_multi_index(tuple(digits), self._dims).astype(np.int64)

    def kernel_sample(self, code, a, rng) -> int:
        return int(self.kernel_sample_batch([code], [a], rng)[0])

    def initial_pmf(self) -> np.ndarray:
        return self._pmf

    def sample_s0_x0(self, rng):
        return self.kernel_sample(0, 0, rng), self.initial_x()

    def next_x(self, s, x, a, s_next) -> np.ndarray:
        s = np.asarray(s, dtype=np.int64)
        return wireless_g(self.arrivals[s], self.capacities[s], x, a)

    def costs(self, s, x, a) -> np.ndarray:
        return np.asarray(x, dtype=np.int64).reshape(len(np.atleast_1d(s)), -1).sum(axis=1).astype(float)

    def cost_bound(self, box) -> float:
        return float(sum(box))


# ---------------------------------------------------------------------------
# criss-cross


@dataclass(frozen=True)
class CrissCrossConfig:
    lambda1: float = 0.6
    lambda3: float = 0.6
    mu1: float = 2.0
    mu2: float = 1.5
    mu3: float = 2.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ContractError(f"{k} must be non-negative")
        if self.mu1 <= 0 or self.mu3 <= 0:
            raise ContractError("server 1 rates must be positive")
        # supportable load, as stated with mean service times m_i = 1/mu_i
        if self.lambda1 / self.mu1 + self.lambda3 / self.mu3 >= 1:
            raise ContractError("server 1 overloaded: lambda1/mu1 + lambda3/mu3 >= 1")
        if self.mu2 > 0 and self.lambda1 / self.mu2 >= 1:
            raise ContractError("server 2 overloaded: lambda1/mu2 >= 1")

    @property
    def uniformization_rate(self) -> float:
        return self.lambda1 + self.lambda3 + self.mu1 + self.mu2 + self.mu3


def crisscross_event_pmf(cfg: CrissCrossConfig, a: int) -> np.ndarray:
    """Uniformized event distribution under action ``a`` (serve class 1 or 3)."""
    if a not in (SERVE1, SERVE3):
        raise ContractError(f"criss-cross action must be 0 or 1, got {a}")
    rate = cfg.uniformization_rate
    p = np.zeros(5)
    p[ARRIVAL1] = cfg.lambda1 / rate
    p[ARRIVAL3] = cfg.lambda3 / rate
    p[SERVICE1] = (cfg.mu1 if a == SERVE1 else cfg.mu3) / rate
    p[SERVICE2] = cfg.mu2 / rate
    p[NULL] = 1.0 - p[:NULL].sum()
    return p


def crisscross_g(kind, x, a) -> np.ndarray:
    """Apply potential events ``kind`` to queues ``x = (q1, q2, q3)``.

    Service events only act on non-empty queues; a class-3 completion moves
    the job to class 2.
    """
    x = np.asarray(x, dtype=np.int64)
    single = x.ndim == 1
    xb = np.atleast_2d(x).copy()
    kind = np.broadcast_to(np.asarray(kind), xb.shape[:1])
    a = np.broadcast_to(np.asarray(a), xb.shape[:1])
    old = xb.copy()
    xb[kind == ARRIVAL1, 0] += 1
    xb[kind == ARRIVAL3, 2] += 1
    m = (kind == SERVICE1) & (a == SERVE1) & (old[:, 0] > 0)
    xb[m, 0] -= 1
    m = (kind == SERVICE1) & (a == SERVE3) & (old[:, 2] > 0)
    xb[m, 2] -= 1
    xb[m, 1] += 1
    m = (kind == SERVICE2) & (old[:, 1] > 0)
    xb[m, 1] -= 1
    return xb[0] if single else xb


class CrissCross(MixedEnvironment):
    """Criss-cross network; stochastic code = event kind of the slot.

    The event drawn for slot ``t`` is ``s_{t+1}`` and ``g`` applies it to
    ``x_t``. Neither the kernel nor ``g`` read the current code, so tables
    and policies use a single row.
    """

    name = "crisscross"
    n_actions = 2
    x_dim = 3

    def __init__(self, config: CrissCrossConfig | None = None, **kw):
        self.config = config or CrissCrossConfig(**kw)
        self.n_codes = 5
        self._pmf = np.stack([crisscross_event_pmf(self.config, a) for a in (SERVE1, SERVE3)])

    def params(self) -> dict:
        return asdict(self.config)

    @property
    def n_table_codes(self) -> int:
        return 1

    def table_code(self, codes):
        return np.zeros_like(np.asarray(codes, dtype=np.int64))

    def payload(self, code: int) -> tuple[int, ...]:
        return (int(code),)

    def kind_of(self, codes):
        return np.asarray(codes, dtype=np.int64)

    def kernel_pmf(self, code: int, a: int) -> np.ndarray:
        return self._pmf[self.check_action(a)]

    def kernel_sample_batch(self, codes, actions, rng):
        actions = np.asarray(actions, dtype=np.int64)
        cdf = np.cumsum(self._pmf, axis=1)
        u = rng.random(len(actions))
        return (u[:, None] * cdf[actions, -1:] >= cdf[actions]).sum(axis=1).clip(0, self.n_codes - 1)

    def kernel_sample(self, code, a, rng) -> int:
        return int(self.kernel_sample_batch([code], [self.check_action(a)], rng)[0])

    def initial_pmf(self) -> np.ndarray:
        p = np.zeros(self.n_codes)
        p[self.null_code] = 1.0
        return p

    @property
    def null_code(self) -> int:
        return NULL

    def next_x(self, s, x, a, s_next) -> np.ndarray:
        return crisscross_g(np.asarray(s_next), np.asarray(x, dtype=np.int64), np.asarray(a))

    def costs(self, s, x, a) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        return x.sum(axis=1).astype(float)

    def cost_bound(self, box) -> float:
        return float(sum(box))


@dataclass(frozen=True)
class TwoPhaseConfig:
    base: CrissCrossConfig = field(default_factory=CrissCrossConfig)
    p: float = 0.8

    def __post_init__(self):
        if isinstance(self.base, dict):
            object.__setattr__(self, "base", CrissCrossConfig(**self.base))
        if not 0 <= self.p <= 1:
            raise ContractError("p must lie in [0, 1]")


class TwoPhaseCrissCross(CrissCross):
    """Class-3 service at server 1 has one or two phases.

    Pseudo-state ``(q1, q2, q3_phase1, q3_phase2)``. The code carries the
    event kind and a routing coin (``1`` w.p. ``p``): a finished phase-1 job
    leaves server 1 when the coin is 1 and enters phase 2 otherwise. Jobs that
    leave server 1 join class 2, as in the one-phase network.
    """

    name = "crisscross2p"
    x_dim = 4

    def __init__(self, config: TwoPhaseConfig | None = None, **kw):
        if config is None:
            base = kw.pop("base", None)
            base = CrissCrossConfig(**base) if isinstance(base, dict) else (base or CrissCrossConfig())
            config = TwoPhaseConfig(base=base, **kw)
        self.config = config
        self.n_codes = 10
        coin = np.array([1 - config.p, config.p])
        self._pmf = np.stack([np.outer(crisscross_event_pmf(config.base, a), coin).ravel()
                              for a in (SERVE1, SERVE3)])

    def params(self) -> dict:
        return {"base": asdict(self.config.base), "p": self.config.p}

    def payload(self, code: int) -> tuple[int, ...]:
        return (int(code) // 2, int(code) % 2)

    def kind_of(self, codes):
        return np.asarray(codes, dtype=np.int64) // 2

    @property
    def null_code(self) -> int:
        return 2 * NULL

    def next_x(self, s, x, a, s_next) -> np.ndarray:
        xb = np.atleast_2d(np.asarray(x, dtype=np.int64)).copy()
        n = len(xb)
        code = np.broadcast_to(np.asarray(s_next, dtype=np.int64), (n,))
        a = np.broadcast_to(np.asarray(a, dtype=np.int64), (n,))
        kind, coin = code // 2, code % 2
        old = xb.copy()
        xb[kind == ARRIVAL1, 0] += 1
        xb[kind == ARRIVAL3, 2] += 1
        m = (kind == SERVICE1) & (a == SERVE1) & (old[:, 0] > 0)
        xb[m, 0] -= 1
        serve3 = (kind == SERVICE1) & (a == SERVE3)
        # head-of-line class-3 job is the phase-2 job when one exists
        m2 = serve3 & (old[:, 3] > 0)
        xb[m2, 3] -= 1
        xb[m2, 1] += 1
        m1 = serve3 & (old[:, 3] == 0) & (old[:, 2] > 0)
        xb[m1, 2] -= 1
        xb[m1 & (coin == 1), 1] += 1
        xb[m1 & (coin == 0), 3] += 1
        m = (kind == SERVICE2) & (old[:, 1] > 0)
        xb[m, 1] -= 1
        return xb


GENERAL_JOB_CASES = {
    "a": {"lam": (0.6, 0.6), "mu": (2.0, 1.5, 1.5), "job_size_range": 2},
    "b": {"lam": (0.6, 0.6), "mu": (7.0, 3.5, 7.0), "job_size_range": 5},
    "c": {"lam": (0.6, 0.6), "mu": (2.5, 4.5, 2.5), "job_size_range": 5},
}


@dataclass(frozen=True)
class GeneralJobConfig:
    """Criss-cross with class-1/class-3 job sizes uniform on ``1..job_size_range``.

    Each potential completion at server 1 removes one unit of work from the
    head-of-line job of the served class.
    """

    lam: tuple[float, float] = (0.6, 0.6)
    mu: tuple[float, float, float] = (2.0, 1.5, 1.5)
    job_size_range: int = 2

    def __post_init__(self):
        object.__setattr__(self, "lam", tuple(float(v) for v in self.lam))
        object.__setattr__(self, "mu", tuple(float(v) for v in self.mu))
        if len(self.lam) != 2 or len(self.mu) != 3:
            raise ContractError("lam needs 2 rates and mu needs 3")
        if int(self.job_size_range) < 1:
            raise ContractError("job_size_range must be >= 1")
        object.__setattr__(self, "job_size_range", int(self.job_size_range))
        base = self.as_crisscross()  # unit-size load condition
        mean = (self.job_size_range + 1) / 2
        load = mean * (base.lambda1 / base.mu1 + base.lambda3 / base.mu3)
        if load >= 1:
            log.warning("size-adjusted server-1 load %.3f >= 1; queues will drift", load)

    def as_crisscross(self) -> CrissCrossConfig:
        return CrissCrossConfig(self.lam[0], self.lam[1], *self.mu)


class GeneralJobCrissCross(MixedEnvironment):
    """Pseudo-state ``(q1, q2, q3, w1, w3)`` with ``w`` the head-of-line remaining work.

    The code is ``kind * R + (size - 1)``: the size draw is used whenever a
    job enters service (arrival to an empty class or a departure that leaves
    the class non-empty). With ``R = 1`` the queue part evolves exactly as in
    ``CrissCross``.
    """

    name = "crisscross-gen"
    n_actions = 2
    x_dim = 5

    def __init__(self, config: GeneralJobConfig | None = None, **kw):
        self.config = config or GeneralJobConfig(**kw)
        R = self.config.job_size_range
        self.n_codes = 5 * R
        base = self.config.as_crisscross()
        sizes = np.full(R, 1.0 / R)
        self._pmf = np.stack([np.outer(crisscross_event_pmf(base, a), sizes).ravel()
                              for a in (SERVE1, SERVE3)])

    def params(self) -> dict:
        return {"lam": list(self.config.lam), "mu": list(self.config.mu),
                "job_size_range": self.config.job_size_range}

    @property
    def n_table_codes(self) -> int:
        return 1

    def table_code(self, codes):
        return np.zeros_like(np.asarray(codes, dtype=np.int64))

    def payload(self, code: int) -> tuple[int, ...]:
        R = self.config.job_size_range
        return (int(code) // R, int(code) % R + 1)

    def encode(self, kind: int, size: int = 1) -> int:
        return kind * self.config.job_size_range + size - 1

    def kernel_pmf(self, code: int, a: int) -> np.ndarray:
        return self._pmf[self.check_action(a)]

    def kernel_sample_batch(self, codes, actions, rng):
        actions = np.asarray(actions, dtype=np.int64)
        cdf = np.cumsum(self._pmf, axis=1)
        u = rng.random(len(actions))
        return (u[:, None] * cdf[actions, -1:] >= cdf[actions]).sum(axis=1).clip(0, self.n_codes - 1)

    def kernel_sample(self, code, a, rng) -> int:
        return int(self.kernel_sample_batch([code], [self.check_action(a)], rng)[0])

    def initial_pmf(self) -> np.ndarray:
        p = np.zeros(self.n_codes)
        p[self.encode(NULL, 1)] = 1.0
        return p

    def canonical_x(self, x: np.ndarray) -> np.ndarray:
        x = np.array(x, dtype=np.int64, copy=True)
        for q, w in ((0, 3), (2, 4)):
            empty = x[..., q] == 0
            x[..., w] = np.where(empty, 0, np.clip(x[..., w], 1, self.config.job_size_range))
        return x

    def next_x(self, s, x, a, s_next) -> np.ndarray:
        R = self.config.job_size_range
        xb = np.atleast_2d(np.asarray(x, dtype=np.int64)).copy()
        n = len(xb)
        code = np.broadcast_to(np.asarray(s_next, dtype=np.int64), (n,))
        a = np.broadcast_to(np.asarray(a, dtype=np.int64), (n,))
        kind, size = code // R, code % R + 1
        old = xb.copy()
        for ev, q, w in ((ARRIVAL1, 0, 3), (ARRIVAL3, 2, 4)):
            m = kind == ev
            xb[m, q] += 1
            start = m & (old[:, q] == 0)
            xb[start, w] = size[start]
        for act, q, w in ((SERVE1, 0, 3), (SERVE3, 2, 4)):
            m = (kind == SERVICE1) & (a == act) & (old[:, q] > 0)
            xb[m, w] = np.maximum(old[m, w], 1) - 1
            done = m & (xb[:, w] == 0)
            xb[done, q] -= 1
            if q == 2:
                xb[done, 1] += 1
            nxt = done & (xb[:, q] > 0)
            xb[nxt, w] = size[nxt]
        m = (kind == SERVICE2) & (old[:, 1] > 0)
        xb[m, 1] -= 1
        return xb

    def costs(self, s, x, a) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        return x[:, :3].sum(axis=1).astype(float)

    def total_queue(self, x):
        x = np.asarray(x, dtype=np.int64)
        return x[..., :3].sum(axis=-1)

    def cost_bound(self, box) -> float:
        return float(sum(box[:3]))


def generaljob_step(env: GeneralJobCrissCross, s: int, x, a: int, rng):
    """One real step of the general-job-size network."""
    from .core import env_step

    return env_step(env, s, x, a, rng)


class FiniteMixedEnv(MixedEnvironment):
    """Mixed system given by tables on a one-dimensional pseudo-state ``0..L-1``.

    ``kernel[s, a, s']``, ``g_table[s, x, a, s'] -> x'`` and ``cost[s, x, a]``.
    Used for small synthetic problems where everything can be enumerated.
    """

    name = "finite"

    def __init__(self, kernel, g_table, cost, init=None):
        self.kernel = np.asarray(kernel, dtype=float)
        self.g_table = np.asarray(g_table, dtype=np.int64)
        self.cost_table = np.asarray(cost, dtype=float)
        S, A, S2 = self.kernel.shape
        L = self.g_table.shape[1]
        if S2 != S or self.g_table.shape != (S, L, A, S) or self.cost_table.shape != (S, L, A):
            raise ContractError("kernel (S,A,S), g_table (S,L,A,S) and cost (S,L,A) shapes disagree")
        if np.any(np.abs(self.kernel.sum(axis=2) - 1) > 1e-12) or np.any(self.kernel < 0):
            raise ContractError("kernel rows must be probability vectors")
        if self.g_table.min() < 0 or self.g_table.max() >= L:
            raise ContractError("g_table values must lie in 0..L-1")
        if np.any(self.cost_table < 0):
            raise ContractError("costs must be non-negative")
        self.n_codes, self.n_actions, self.x_dim, self.n_levels = S, A, 1, L
        self.init = np.full(S, 1.0 / S) if init is None else np.asarray(init, dtype=float)

    def params(self) -> dict:
        return {"kernel": self.kernel.tolist(), "g_table": self.g_table.tolist(),
                "cost": self.cost_table.tolist(), "init": self.init.tolist()}

    def payload(self, code: int) -> tuple[int, ...]:
        return (int(code),)

    def kernel_pmf(self, code: int, a: int) -> np.ndarray:
        return self.kernel[int(code), self.check_action(a)]

    def next_x(self, s, x, a, s_next) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        return self.g_table[np.asarray(s), x[:, 0], np.asarray(a), np.asarray(s_next)][:, None]

    def costs(self, s, x, a) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.int64))
        return self.cost_table[np.asarray(s), x[:, 0], np.asarray(a)]

    def initial_pmf(self) -> np.ndarray:
        return self.init

    def cost_bound(self, box) -> float:
        return float(self.cost_table[:, : int(box[0]) + 1].max())


ENVIRONMENTS = {
    "wireless": (WirelessDownlink, WirelessDownlinkConfig),
    "crisscross": (CrissCross, CrissCrossConfig),
    "crisscross2p": (TwoPhaseCrissCross, TwoPhaseConfig),
    "crisscross-gen": (GeneralJobCrissCross, GeneralJobConfig),
}


def make_env(name: str, params: dict | None = None) -> MixedEnvironment:
    try:
        cls, cfg_cls = ENVIRONMENTS[name]
    except KeyError:
        raise ContractError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    params = dict(params or {})
    if cls is TwoPhaseCrissCross and isinstance(params.get("base"), dict):
        params["base"] = CrissCrossConfig(**params["base"])
    return cls(cfg_cls(**params))
