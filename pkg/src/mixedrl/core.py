"""Mixed-system MDP primitives: environments, transitions, datasets, rollouts.

A mixed system has a stochastic state ``s`` that evolves through a kernel
``P(s' | s, a)`` which never looks at the pseudo-stochastic state ``x``, and a
pseudo-stochastic state that moves deterministically, ``x' = g(s, x, a, s')``.
Stochastic states are enumerated as integer codes so every kernel has an
explicit pmf.
"""
from __future__ import annotations

import abc
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Sequence

import numpy as np

DATASET_FORMAT = "mixedrl.dataset/1"


class ContractError(ValueError):
    """An argument violates an operation's precondition."""


class DatasetValidationError(ValueError):
    """A stored transition does not agree with its environment."""


@dataclass(frozen=True)
class StochasticState:
    code: int
    payload: tuple[int, ...]


@dataclass(frozen=True)
class Transition:
    s: StochasticState
    x: tuple[int, ...]
    a: int
    r: float
    s_next: StochasticState
    x_next: tuple[int, ...]
    virtual: bool = False
    parent: int = field(default=-1, compare=False)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _as_batch(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.int64)
    if arr.ndim == 1:
        return arr[None, :], True
    return arr, False


class MixedEnvironment(abc.ABC):
    """Base class for mixed systems.

    Subclasses implement the vectorised hooks ``next_x`` and ``costs``
    (leading axis = batch) plus ``kernel_pmf``; the scalar ``g``/``cost`` and
    sampling helpers are derived from them.

    ``table_code`` maps a stochastic code to the row used by value tables and
    policies. It defaults to the identity. Environments whose future does not
    depend on the current stochastic state collapse it to a single row.
    """

    name: str = "abstract"
    n_codes: int
    n_actions: int
    x_dim: int

    @property
    def n_table_codes(self) -> int:
        return self.n_codes

    def table_code(self, codes):
        return np.asarray(codes, dtype=np.int64)

    @abc.abstractmethod
    def params(self) -> dict:
        """JSON-serialisable parameters that fully determine the dynamics."""

    @abc.abstractmethod
    def payload(self, code: int) -> tuple[int, ...]:
        ...

    @abc.abstractmethod
    def kernel_pmf(self, code: int, a: int) -> np.ndarray:
        """Distribution of the next stochastic code; shape ``(n_codes,)``."""

    @abc.abstractmethod
    def next_x(self, s, x, a, s_next) -> np.ndarray:
        """Vectorised ``g``: arrays of codes/actions of length N, x of shape (N, d)."""

    @abc.abstractmethod
    def costs(self, s, x, a) -> np.ndarray:
        """Vectorised cost ``R(s, x, a)``."""

    @abc.abstractmethod
    def initial_pmf(self) -> np.ndarray:
        """Distribution of the initial stochastic code."""

    def initial_x(self) -> np.ndarray:
        return np.zeros(self.x_dim, dtype=np.int64)

    def canonical_x(self, x: np.ndarray) -> np.ndarray:
        """Project arbitrary box points onto reachable pseudo-states."""
        return x

    def total_queue(self, x) -> np.ndarray:
        xb, single = _as_batch(x)
        out = xb.sum(axis=1)
        return out[0] if single else out

    def cost_bound(self, box: Sequence[int]) -> float:
        """Largest cost over the truncated grid ``[0, box]``."""
        grid = grid_points(box)
        best = 0.0
        for code in range(self.n_codes):
            for a in range(self.n_actions):
                n = len(grid)
                c = self.costs(np.full(n, code), grid, np.full(n, a))
                best = max(best, float(c.max()))
        return best

    # derived API -----------------------------------------------------------

    def signature(self) -> str:
        blob = canonical_json({"name": self.name, "params": self.params()})
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def state(self, code: int) -> StochasticState:
        return StochasticState(int(code), tuple(int(v) for v in self.payload(code)))

    def check_action(self, a) -> int:
        a = int(a)
        if not 0 <= a < self.n_actions:
            raise ContractError(f"action {a} outside [0, {self.n_actions})")
        return a

    def g(self, s: int, x, a: int, s_next: int) -> tuple[int, ...]:
        out = self.next_x(np.array([s]), np.asarray(x, dtype=np.int64)[None, :],
                          np.array([a]), np.array([s_next]))
        return tuple(int(v) for v in out[0])

    def cost(self, s: int, x, a: int) -> float:
        out = self.costs(np.array([s]), np.asarray(x, dtype=np.int64)[None, :], np.array([a]))
        return float(out[0])

    def kernel_sample(self, code: int, a: int, rng: np.random.Generator) -> int:
        p = self.kernel_pmf(code, a)
        return int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right").clip(0, len(p) - 1))

    def kernel_sample_batch(self, codes, actions, rng: np.random.Generator) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        actions = np.asarray(actions, dtype=np.int64)
        out = np.empty(len(codes), dtype=np.int64)
        u = rng.random(len(codes))
        for key in set(zip(codes.tolist(), actions.tolist())):
            sel = (codes == key[0]) & (actions == key[1])
            cdf = np.cumsum(self.kernel_pmf(*key))
            out[sel] = np.searchsorted(cdf, u[sel] * cdf[-1], side="right").clip(0, len(cdf) - 1)
        return out

    def sample_s0_x0(self, rng: np.random.Generator) -> tuple[int, np.ndarray]:
        p = self.initial_pmf()
        code = int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right").clip(0, len(p) - 1))
        return code, self.initial_x().copy()


def grid_points(box: Sequence[int]) -> np.ndarray:
    """All integer points of ``[0, box[0]] x ... x [0, box[-1]]`` in C order."""
    axes = [np.arange(b + 1) for b in box]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1).astype(np.int64)


def clamp_to_box(x, box: Sequence[int]) -> np.ndarray:
    return np.clip(np.asarray(x, dtype=np.int64), 0, np.asarray(box, dtype=np.int64))


def flat_x_index(x, box: Sequence[int]) -> np.ndarray:
    """Row-major index of (clamped) pseudo-states inside the box."""
    xb = clamp_to_box(x, box)
    shape = tuple(b + 1 for b in box)
    return np.ravel_multi_index(tuple(xb[..., i] for i in range(len(box))), shape)


# ---------------------------------------------------------------------------
# policies


class PolicyTable:
    """Deterministic action map over ``table codes x [0, box]``.

    Lookups clamp the pseudo-state to the box; the environment itself is
    never clamped.
    """

    def __init__(self, actions: np.ndarray, box: Sequence[int], table_code: Callable | None = None):
        self.actions = np.asarray(actions, dtype=np.int64)
        self.box = tuple(int(b) for b in box)
        expected = tuple(b + 1 for b in self.box)
        if self.actions.shape[1:] != expected:
            raise ContractError(f"policy grid {self.actions.shape[1:]} does not match box {expected}")
        self._table_code = table_code

    def rows(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        if self._table_code is None:
            return codes
        return np.asarray(self._table_code(codes), dtype=np.int64)

    def __call__(self, s: int, x) -> int:
        row = int(self.rows(np.array([s]))[0])
        idx = tuple(clamp_to_box(x, self.box).tolist())
        return int(self.actions[(row, *idx)])

    def act_batch(self, codes, xs) -> np.ndarray:
        rows = self.rows(codes)
        flat = flat_x_index(xs, self.box)
        return self.actions.reshape(self.actions.shape[0], -1)[rows, flat]

    @classmethod
    def from_callable(cls, env: MixedEnvironment, box: Sequence[int], fn: Callable) -> "PolicyTable":
        """Tabulate ``fn(s, x)`` using one representative code per table row."""
        grid = grid_points(box)
        reps = {}
        for code in range(env.n_codes):
            reps.setdefault(int(env.table_code(np.array([code]))[0]), code)
        acts = np.zeros((env.n_table_codes, len(grid)), dtype=np.int64)
        for row, code in reps.items():
            acts[row] = [fn(code, x) for x in grid]
        return cls(acts.reshape((env.n_table_codes, *(b + 1 for b in box))), box, env.table_code)

    def to_dict(self) -> dict:
        return {
            "format": "mixedrl.policy/1",
            "box": list(self.box),
            "shape": list(self.actions.shape),
            "order": "row-major over (table_code, x_1..x_d)",
            "actions": self.actions.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict, env: MixedEnvironment | None = None) -> "PolicyTable":
        acts = np.asarray(d["actions"], dtype=np.int64).reshape(d["shape"])
        return cls(acts, d["box"], env.table_code if env is not None else None)


# ---------------------------------------------------------------------------
# datasets


class Dataset:
    """Ordered transitions stored column-wise.

    ``parent`` holds the index of the real sample a virtual one was derived
    from (-1 for real samples); it is diagnostic and excluded from equality.
    """

    def __init__(self, env: MixedEnvironment, s, x, a, r, s_next, x_next, virtual=None,
                 parent=None, meta: dict | None = None):
        self.env = env
        self.s = np.asarray(s, dtype=np.int64)
        n = len(self.s)
        self.x = np.asarray(x, dtype=np.int64).reshape(n, env.x_dim)
        self.a = np.asarray(a, dtype=np.int64)
        self.r = np.asarray(r, dtype=np.float64)
        self.s_next = np.asarray(s_next, dtype=np.int64)
        self.x_next = np.asarray(x_next, dtype=np.int64).reshape(n, env.x_dim)
        self.virtual = np.zeros(n, bool) if virtual is None else np.asarray(virtual, dtype=bool)
        self.parent = np.full(n, -1, np.int64) if parent is None else np.asarray(parent, dtype=np.int64)
        self.meta = dict(meta or {})
        self.meta.setdefault("env_signature", env.signature())

    def __len__(self) -> int:
        return len(self.s)

    def __getitem__(self, i: int) -> Transition:
        env = self.env
        return Transition(
            env.state(self.s[i]), tuple(int(v) for v in self.x[i]), int(self.a[i]), float(self.r[i]),
            env.state(self.s_next[i]), tuple(int(v) for v in self.x_next[i]),
            bool(self.virtual[i]), int(self.parent[i]),
        )

    def __iter__(self) -> Iterator[Transition]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.meta["env_signature"] == other.meta["env_signature"] and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("s", "x", "a", "r", "s_next", "x_next", "virtual")))

    @classmethod
    def from_transitions(cls, env: MixedEnvironment, items: Iterable[Transition], meta=None) -> "Dataset":
        items = list(items)
        if not items:
            return cls(env, [], np.zeros((0, env.x_dim)), [], [], [], np.zeros((0, env.x_dim)), meta=meta)
        return cls(
            env,
            [t.s.code for t in items], [t.x for t in items], [t.a for t in items], [t.r for t in items],
            [t.s_next.code for t in items], [t.x_next for t in items],
            [t.virtual for t in items], [t.parent for t in items], meta=meta,
        )

    def real(self) -> "Dataset":
        return self.select(~self.virtual)

    def select(self, mask) -> "Dataset":
        return Dataset(self.env, self.s[mask], self.x[mask], self.a[mask], self.r[mask],
                       self.s_next[mask], self.x_next[mask], self.virtual[mask], self.parent[mask],
                       meta=self.meta)

    def validate(self, env: MixedEnvironment | None = None) -> None:
        """Recompute R and g for every row; raise on the first mismatch (1-based line)."""
        env = env or self.env
        if env.signature() != self.meta["env_signature"]:
            raise DatasetValidationError(
                f"dataset signature {self.meta['env_signature']} != environment {env.signature()}")
        if len(self) == 0:
            return
        r = env.costs(self.s, self.x, self.a)
        xn = env.next_x(self.s, self.x, self.a, self.s_next)
        bad = (r != self.r) | np.any(xn != self.x_next, axis=1)
        bad |= (self.a < 0) | (self.a >= env.n_actions)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DatasetValidationError(
                f"line {i + 1}: transition inconsistent with environment "
                f"(r={self.r[i]!r} vs {r[i]!r}, x_next={self.x_next[i].tolist()} vs {xn[i].tolist()})")

    # JSON lines -------------------------------------------------------------

    def iter_json_lines(self) -> Iterator[str]:
        env = self.env
        payloads = {}
        for i in range(len(self)):
            rec = {}
            for key, code in (("s", self.s[i]), ("s_next", self.s_next[i])):
                c = int(code)
                if c not in payloads:
                    payloads[c] = list(env.payload(c))
                rec[key] = {"code": c, "payload": payloads[c]}
            rec["x"] = {"q": self.x[i].tolist()}
            rec["a"] = {"index": int(self.a[i])}
            rec["r"] = float(self.r[i])
            rec["x_next"] = {"q": self.x_next[i].tolist()}
            rec["virtual_flag"] = bool(self.virtual[i])
            yield json.dumps(rec, sort_keys=True)

    def to_jsonl(self, path: str | Path, write_meta: bool = True) -> None:
        path = Path(path)
        with open(path, "w") as fh:
            for line in self.iter_json_lines():
                fh.write(line + "\n")
        if write_meta:
            meta = {"format": DATASET_FORMAT, "env": self.env.name, "env_params": self.env.params(),
                    "n": len(self), **self.meta}
            Path(str(path) + ".meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path, env: MixedEnvironment, validate: bool = True) -> "Dataset":
        rows = []
        with open(path) as fh:
            for line in fh:
                if line.strip():
                    rows.append(json.loads(line))
        meta_path = Path(str(path) + ".meta.json")
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        meta = {k: v for k, v in meta.items() if k not in ("format", "env", "env_params", "n")}
        meta.setdefault("env_signature", env.signature())
        ds = cls(
            env,
            [d["s"]["code"] for d in rows],
            np.array([d["x"]["q"] for d in rows], dtype=np.int64).reshape(len(rows), env.x_dim),
            [d["a"]["index"] for d in rows],
            [d["r"] for d in rows],
            [d["s_next"]["code"] for d in rows],
            np.array([d["x_next"]["q"] for d in rows], dtype=np.int64).reshape(len(rows), env.x_dim),
            [d["virtual_flag"] for d in rows],
            meta=meta,
        )
        if validate:
            ds.validate(env)
        return ds


# ---------------------------------------------------------------------------
# dynamics


def env_step(env: MixedEnvironment, s: int, x, a: int, rng: np.random.Generator) -> Transition:
    """One real transition ``(s, x, a, R(s,x,a), s' ~ P(.|s,a), g(s,x,a,s'))``."""
    a = env.check_action(a)
    x = np.asarray(x, dtype=np.int64)
    r = env.cost(s, x, a)
    s_next = env.kernel_sample(s, a, rng)
    x_next = env.g(s, x, a, s_next)
    return Transition(env.state(s), tuple(int(v) for v in x), a, r, env.state(s_next), x_next)


def as_policy(policy) -> Callable[[int, np.ndarray], int]:
    return policy if callable(policy) else (lambda s, x: int(policy))


def rollout(env: MixedEnvironment, policy, horizon: int, gamma: float, rng: np.random.Generator,
            start: tuple[int, Any] | None = None) -> tuple[list[Transition], float]:
    """Simulate ``horizon`` steps from ``start`` (default: a draw from eta_0).

    Returns the trajectory and ``sum_h gamma**h * R(s_h, x_h, a_h)``.
    """
    if horizon < 1:
        raise ContractError("horizon must be >= 1")
    if not 0 <= gamma < 1:
        raise ContractError("gamma must lie in [0, 1)")
    if start is None:
        s, x = env.sample_s0_x0(rng)
    else:
        s, x = int(start[0]), np.asarray(start[1], dtype=np.int64)
    traj = []
    total, disc = 0.0, 1.0
    for _ in range(horizon):
        a = policy(s, x)
        t = env_step(env, s, x, a, rng)
        traj.append(t)
        total += disc * t.r
        disc *= gamma
        s, x = t.s_next.code, np.asarray(t.x_next, dtype=np.int64)
    return traj, total


# ---------------------------------------------------------------------------
# behaviour distributions for batch data


@dataclass
class ProductBehavior:
    """Explicit product distribution ``mu(s, x, a) = p_s(s) p_x(x) p_a(a)``.

    ``p_x`` is a pmf over the grid ``[0, x_box]`` (array of shape box+1).
    """

    p_s: np.ndarray
    p_x: np.ndarray
    p_a: np.ndarray

    def __post_init__(self):
        self.p_s = np.asarray(self.p_s, float)
        self.p_x = np.asarray(self.p_x, float)
        self.p_a = np.asarray(self.p_a, float)
        for name in ("p_s", "p_x", "p_a"):
            p = getattr(self, name)
            if np.any(p < 0) or not math.isclose(p.sum(), 1.0, abs_tol=1e-9):
                raise ContractError(f"{name} is not a probability vector")

    @property
    def x_box(self) -> tuple[int, ...]:
        return tuple(n - 1 for n in self.p_x.shape)

    def joint(self) -> np.ndarray:
        """Dense ``mu`` with shape ``(n_codes, *x_shape, n_actions)``."""
        out = np.multiply.outer(np.multiply.outer(self.p_s, self.p_x), self.p_a)
        return out

    def draw(self, env: MixedEnvironment, n: int, rng: np.random.Generator):
        s = rng.choice(len(self.p_s), size=n, p=self.p_s)
        flat = rng.choice(self.p_x.size, size=n, p=self.p_x.ravel())
        x = np.stack(np.unravel_index(flat, self.p_x.shape), axis=1).astype(np.int64)
        a = rng.choice(len(self.p_a), size=n, p=self.p_a)
        return s, x, a


@dataclass
class OccupancyBehavior:
    """I.i.d. draws from the discounted occupancy of ``policy`` started at eta_0.

    Each sample runs a fresh trajectory for ``h ~ Geometric(1 - gamma) - 1``
    steps and records the state reached, so draws are independent.
    ``epsilon`` mixes a uniformly random action into the behaviour policy.
    """

    policy: Callable[[int, np.ndarray], int]
    gamma: float = 0.95
    epsilon: float = 0.0

    def act(self, env, s, x, rng) -> np.ndarray:
        """Behaviour actions for a batch of states."""
        n = len(s)
        explore = rng.random(n) < self.epsilon
        out = rng.integers(env.n_actions, size=n)
        keep = np.flatnonzero(~explore)
        if len(keep):
            if hasattr(self.policy, "act_batch"):
                out[keep] = self.policy.act_batch(s[keep], x[keep])
            else:
                out[keep] = [self.policy(int(s[i]), x[i]) for i in keep]
        return out

    def draw(self, env: MixedEnvironment, n: int, rng: np.random.Generator):
        init = [env.sample_s0_x0(rng) for _ in range(n)]
        s = np.array([c for c, _ in init], dtype=np.int64)
        x = np.stack([v for _, v in init]).astype(np.int64)
        h = rng.geometric(1.0 - self.gamma, size=n) - 1
        t = 0
        while True:
            live = np.flatnonzero(h > t)
            if len(live) == 0:
                break
            a = self.act(env, s[live], x[live], rng)
            s_next = env.kernel_sample_batch(s[live], a, rng)
            x[live] = env.next_x(s[live], x[live], a, s_next)
            s[live] = s_next
            t += 1
        return s, x, self.act(env, s, x, rng)


def collect_dataset(env: MixedEnvironment, behavior, n: int, rng: np.random.Generator,
                    meta: dict | None = None) -> Dataset:
    """Draw ``n`` i.i.d. ``(s, x, a) ~ mu`` and complete each with a real step."""
    if n < 1:
        raise ContractError("n must be >= 1")
    s, x, a = behavior.draw(env, n, rng)
    s_next = env.kernel_sample_batch(s, a, rng)
    r = env.costs(s, x, a)
    x_next = env.next_x(s, x, a, s_next)
    return Dataset(env, s, x, a, r, s_next, x_next, meta=meta)


def enumerate_box(box: Sequence[int]) -> Iterator[tuple[int, ...]]:
    return itertools.product(*(range(b + 1) for b in box))
