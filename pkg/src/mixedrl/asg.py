"""Augmented sample generation for mixed systems.

Every real transition ``(s, x, a, r, s', x')`` is expanded with ``m`` virtual
ones ``(s, x_hat, a, R(s, x_hat, a), s', g(s, x_hat, a, s'))`` where the
pseudo-states ``x_hat`` are drawn i.i.d. from a sampler ``beta``. The
stochastic triple ``(s, a, s')`` is copied from the parent, so each virtual
sample is a genuine transition of the system.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .core import ContractError, Dataset, MixedEnvironment

VARIANTS = ("uniform-box", "truncated-geometric", "gaussian-fit")


@dataclass
class PseudoStateSampler:
    """Product distribution over the integer box ``[low, high]``.

    variants
        ``uniform-box``: every box point has mass ``1/|B|``.
        ``truncated-geometric``: per coordinate ``P(k) ∝ (1 - rate)**(k - low)``.
        ``gaussian-fit``: per coordinate, a normal with fitted mean/std rounded
        to integers and conditioned on the box.
    """

    variant: str
    low: tuple[int, ...]
    high: tuple[int, ...]
    rate: float | None = None
    mean: tuple[float, ...] | None = None
    std: tuple[float, ...] | None = None
    _margins: list = field(init=False, repr=False)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ContractError(f"unknown sampler variant {self.variant!r}")
        self.low = tuple(int(v) for v in self.low)
        self.high = tuple(int(v) for v in self.high)
        if len(self.low) != len(self.high) or not self.low:
            raise ContractError("low/high must be non-empty and the same length")
        if any(h < lo for lo, h in zip(self.low, self.high)) or any(lo < 0 for lo in self.low):
            raise ContractError(f"empty or negative box {self.low}..{self.high}")
        self._margins = [self._margin(i) for i in range(self.dim)]

    @property
    def dim(self) -> int:
        return len(self.low)

    def _margin(self, i: int) -> np.ndarray:
        k = np.arange(self.low[i], self.high[i] + 1)
        if self.variant == "uniform-box":
            p = np.ones(len(k))
        elif self.variant == "truncated-geometric":
            if self.rate is None or not 0 < self.rate <= 1:
                raise ContractError("truncated-geometric needs rate in (0, 1]")
            p = (1.0 - self.rate) ** (k - self.low[i]) if self.rate < 1 else (k == self.low[i]).astype(float)
        else:
            mu, sd = self.mean[i], self.std[i]
            # upper tail via sf to avoid 1 - 1 cancellation
            p = np.where(k > mu, stats.norm.sf(k - 0.5, mu, sd) - stats.norm.sf(k + 0.5, mu, sd),
                         stats.norm.cdf(k + 0.5, mu, sd) - stats.norm.cdf(k - 0.5, mu, sd))
            if p.sum() <= 0:
                p = np.ones(len(k))
        return p / p.sum()

    def margin(self, i: int) -> np.ndarray:
        """pmf of coordinate ``i`` over ``low[i]..high[i]``."""
        return self._margins[i]

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        out = np.empty((size, self.dim), dtype=np.int64)
        for i, p in enumerate(self._margins):
            cdf = np.cumsum(p)
            idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right").clip(0, len(p) - 1)
            out[:, i] = self.low[i] + idx
        return out

    def pmf_grid(self, box: Sequence[int] | None = None) -> np.ndarray:
        """Joint pmf on the grid ``[0, box]`` (default ``[0, high]``)."""
        box = tuple(box) if box is not None else self.high
        out = np.ones(())
        for i, p in enumerate(self._margins):
            full = np.zeros(box[i] + 1)
            lo, hi = self.low[i], min(self.high[i], box[i])
            full[lo:hi + 1] = p[: hi - lo + 1]
            out = np.multiply.outer(out, full)
        return out

    def pmf(self, x) -> float:
        x = np.asarray(x)
        val = 1.0
        for i, p in enumerate(self._margins):
            if not self.low[i] <= x[i] <= self.high[i]:
                return 0.0
            val *= p[x[i] - self.low[i]]
        return val

    @property
    def min_mass(self) -> float:
        """Smallest probability of any box point (sigma_1 over the box)."""
        return float(np.prod([p.min() for p in self._margins]))

    def to_dict(self) -> dict:
        d = {"kind": self.variant, "low": list(self.low), "high": list(self.high)}
        if self.rate is not None:
            d["rate"] = self.rate
        if self.mean is not None:
            d["mean"] = list(self.mean)
            d["std"] = list(self.std)
        return d


def uniform_box(high: Sequence[int], low: Sequence[int] | None = None) -> PseudoStateSampler:
    return PseudoStateSampler("uniform-box", tuple(low or [0] * len(high)), tuple(high))


def truncated_geometric(rate: float, high: Sequence[int], low: Sequence[int] | None = None) -> PseudoStateSampler:
    return PseudoStateSampler("truncated-geometric", tuple(low or [0] * len(high)), tuple(high), rate=rate)


def gaussian_fit(x: np.ndarray, high: Sequence[int], low: Sequence[int] | None = None,
                 min_std: float = 1.0) -> PseudoStateSampler:
    """Fit a diagonal normal to observed pseudo-states.

    ``min_std`` keeps every box point at positive probability even when the
    data sit on a single value.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise ContractError("gaussian_fit needs a non-empty (n, d) array")
    mean = tuple(float(v) for v in x.mean(axis=0))
    std = tuple(float(max(v, min_std)) for v in x.std(axis=0))
    return PseudoStateSampler("gaussian-fit", tuple(low or [0] * len(high)), tuple(high), mean=mean, std=std)


def beta_sample(beta: PseudoStateSampler, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(v) for v in beta.sample(rng, 1)[0])


def sampler_from_dict(d: dict, dataset: Dataset | None = None) -> PseudoStateSampler:
    kind = d["kind"]
    high = d["high"]
    low = d.get("low")
    if kind == "uniform-box":
        return uniform_box(high, low)
    if kind == "truncated-geometric":
        return truncated_geometric(float(d["rate"]), high, low)
    if kind == "gaussian-fit":
        if "mean" in d:
            return PseudoStateSampler("gaussian-fit", tuple(low or [0] * len(high)), tuple(high),
                                      mean=tuple(d["mean"]), std=tuple(d["std"]))
        if dataset is None:
            raise ContractError("gaussian-fit sampler needs a dataset to fit")
        return gaussian_fit(dataset.real().x, high, low, d.get("min_std", 1.0))
    raise ContractError(f"unknown sampler kind {kind!r}")


def asg(dataset: Dataset, m: int, beta, env: MixedEnvironment | None = None,
        rng: np.random.Generator | None = None, validate: bool = True) -> Dataset:
    """Return ``D ∪ D'`` with every real sample followed by its ``m`` virtual children.

    ``beta`` is any object with ``sample(rng, size) -> (size, d)`` integer
    array. Input rows are checked against ``env`` first; the first
    inconsistent row is reported by its 1-based line number.
    """
    env = env or dataset.env
    if m < 0:
        raise ContractError("m must be >= 0")
    if validate:
        dataset.validate(env)
    if m == 0:
        return dataset
    if rng is None:
        raise ContractError("asg needs an rng when m > 0")
    n = len(dataset)
    x_hat = env.canonical_x(np.asarray(beta.sample(rng, n * m), dtype=np.int64))
    parent = np.repeat(np.arange(n), m)
    s, a, s_next = dataset.s[parent], dataset.a[parent], dataset.s_next[parent]
    r_hat = env.costs(s, x_hat, a)
    x_next_hat = env.next_x(s, x_hat, a, s_next)

    total = n * (m + 1)
    real_pos = np.arange(n) * (m + 1)
    virt_pos = np.setdiff1d(np.arange(total), real_pos, assume_unique=True)

    def merge(real, virt):
        out = np.empty((total,) + real.shape[1:], dtype=real.dtype)
        out[real_pos] = real
        out[virt_pos] = virt
        return out

    return Dataset(
        env,
        merge(dataset.s, s), merge(dataset.x, x_hat), merge(dataset.a, a),
        merge(dataset.r, r_hat), merge(dataset.s_next, s_next), merge(dataset.x_next, x_next_hat),
        merge(dataset.virtual, np.ones(n * m, bool)),
        merge(dataset.parent, real_pos[parent]),
        meta=dataset.meta,
    )


BetaSchedule = Callable[[int], PseudoStateSampler]


def beta_for_episode(beta, k: int):
    """Resolve a fixed sampler or a per-episode schedule ``k -> sampler``."""
    if hasattr(beta, "sample"):
        return beta
    return beta(k)
