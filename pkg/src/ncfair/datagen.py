"""Trajectory data for subgroup-blind learning: container, simulator, bias.

Observations are real scalars keyed by (subgroup, trajectory, period) with
periods positive integers.  The simulator draws from a linear-Gaussian state
space model; the bias step thins observations per subgroup by Bernoulli
retention while guaranteeing that every (subgroup, period) pair present in
the input keeps at least one observation, so the set of observed periods is
unchanged by thinning.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

__all__ = [
    "SystemMatrices",
    "TrajectorySet",
    "BiasConfig",
    "simulate_lds",
    "apply_bias",
    "generate_benchmark_dataset",
    "as_trajectory_set",
]

ObsKey = tuple[str, str, int]


@dataclass
class SystemMatrices:
    """Linear dynamical system m_t = G m_{t-1} + w_t, Y_t = F'm_t + v_t with
    w_t ~ N(0, W) and v_t ~ N(0, V)."""

    G: np.ndarray
    F: np.ndarray
    V: float
    W: np.ndarray
    m0: np.ndarray

    def __post_init__(self) -> None:
        self.G = np.asarray(self.G, dtype=float)
        self.F = np.asarray(self.F, dtype=float)
        self.W = np.asarray(self.W, dtype=float)
        self.m0 = np.asarray(self.m0, dtype=float)
        self.V = float(self.V)
        if self.G.ndim != 2 or self.G.shape[0] != self.G.shape[1]:
            raise ValueError(f"G must be square, got shape {self.G.shape}")
        n = self.G.shape[0]
        if self.F.shape != (n,):
            raise ValueError(f"F must have shape ({n},), got {self.F.shape}")
        if self.m0.shape != (n,):
            raise ValueError(f"m0 must have shape ({n},), got {self.m0.shape}")
        if self.W.shape != (n, n):
            raise ValueError(f"W must have shape ({n}, {n}), got {self.W.shape}")
        if not np.allclose(self.W, self.W.T):
            raise ValueError("W must be symmetric")
        eigs = np.linalg.eigvalsh(self.W)
        if eigs.size and eigs[0] < -1e-10 * max(1.0, abs(eigs[-1])):
            raise ValueError("W must be positive semidefinite")
        if not math.isfinite(self.V) or self.V < 0:
            raise ValueError(f"V must be a non-negative variance, got {self.V!r}")

    @property
    def hidden_dim(self) -> int:
        return self.G.shape[0]


class TrajectorySet:
    """Immutable map from (subgroup, trajectory, period) to an observation.

    Subgroup and trajectory identifiers are coerced to strings, periods to
    positive integers; iteration order is sorted, so equality and all derived
    listings are deterministic.
    """

    __slots__ = ("_data",)

    def __init__(self, observations: Mapping[ObsKey, float] | Iterable[tuple[ObsKey, float]]):
        items = observations.items() if isinstance(observations, Mapping) else observations
        data: dict[ObsKey, float] = {}
        for key, value in items:
            try:
                subgroup, trajectory, period = key
            except (TypeError, ValueError):
                raise ValueError(f"observation key must be (subgroup, trajectory, period), got {key!r}") from None
            subgroup, trajectory = str(subgroup), str(trajectory)
            if not subgroup or not trajectory:
                raise ValueError(f"empty subgroup or trajectory identifier in key {key!r}")
            if isinstance(period, bool) or not isinstance(period, (int, np.integer)):
                raise ValueError(f"period must be an integer, got {period!r}")
            period = int(period)
            if period < 1:
                raise ValueError(f"periods start at 1, got {period}")
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"observation value for {key!r} must be finite, got {value!r}")
            norm = (subgroup, trajectory, period)
            if norm in data:
                raise ValueError(f"duplicate observation for {norm}")
            data[norm] = value
        self._data = dict(sorted(data.items()))

    # -- access ---------------------------------------------------------

    def items(self):
        return self._data.items()

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, key: ObsKey) -> bool:
        return key in self._data

    def get(self, subgroup: str, trajectory: str, period: int) -> float:
        return self._data[(str(subgroup), str(trajectory), int(period))]

    @property
    def subgroups(self) -> list[str]:
        return sorted({s for (s, _, _) in self._data})

    def trajectories(self, subgroup: str) -> list[str]:
        subgroup = str(subgroup)
        out = sorted({i for (s, i, _) in self._data if s == subgroup})
        if not out:
            raise ValueError(f"unknown subgroup {subgroup!r}")
        return out

    def periods(self, subgroup: str | None = None, trajectory: str | None = None) -> list[int]:
        keys = self._data
        out = {
            t
            for (s, i, t) in keys
            if (subgroup is None or s == str(subgroup)) and (trajectory is None or i == str(trajectory))
        }
        return sorted(out)

    @property
    def observed_periods(self) -> tuple[int, ...]:
        """All periods carrying at least one observation, ascending."""
        return tuple(self.periods())

    def series(self, subgroup: str, trajectory: str) -> dict[int, float]:
        subgroup, trajectory = str(subgroup), str(trajectory)
        out = {t: v for (s, i, t), v in self._data.items() if s == subgroup and i == trajectory}
        if not out:
            raise ValueError(f"unknown trajectory {(subgroup, trajectory)!r}")
        return out

    def max_abs(self) -> float:
        return max((abs(v) for v in self._data.values()), default=0.0)

    def subset(self, keep: Callable[[str, str, int], bool]) -> "TrajectorySet":
        return TrajectorySet({k: v for k, v in self._data.items() if keep(*k)})

    def __eq__(self, other) -> bool:
        if not isinstance(other, TrajectorySet):
            return NotImplemented
        return self._data == other._data

    def __bool__(self) -> bool:
        return bool(self._data)

    def __repr__(self) -> str:
        if not self._data:
            return "TrajectorySet(empty)"
        return (
            f"TrajectorySet({len(self._data)} observations, "
            f"subgroups={self.subgroups}, periods 1..{max(self.periods())})"
        )


def as_trajectory_set(data) -> TrajectorySet:
    """Coerce a TrajectorySet, mapping, or (key, value) iterable."""
    if isinstance(data, TrajectorySet):
        return data
    return TrajectorySet(data)


def simulate_lds(system: SystemMatrices, horizon: int, seed) -> list[float]:
    """One observation trajectory of the system over periods 1..horizon.

    ``seed`` may be an integer or a Generator; passing a shared Generator
    chains several simulations deterministically.
    """
    if not isinstance(horizon, int) or horizon < 1:
        raise ValueError(f"horizon must be a positive integer, got {horizon!r}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = system.hidden_dim
    zero = np.zeros(n)
    sigma = math.sqrt(system.V)
    state = system.m0.copy()
    out: list[float] = []
    for _ in range(horizon):
        state = system.G @ state + rng.multivariate_normal(zero, system.W)
        out.append(float(system.F @ state + rng.normal(0.0, sigma)))
    return out


@dataclass
class BiasConfig:
    """Per-subgroup Bernoulli retention probabilities for thinning.

    With the guard on, a (subgroup, period) pair never loses its last
    observation, so thinning cannot shrink the set of observed periods.
    """

    beta: Mapping[str, float]
    seed: int = 0
    guard: bool = True

    def __post_init__(self) -> None:
        self.beta = {str(s): float(b) for s, b in dict(self.beta).items()}
        for s, b in self.beta.items():
            if not 0.0 <= b <= 1.0:
                raise ValueError(f"retention probability for subgroup {s!r} must lie in [0, 1], got {b}")


def apply_bias(data: TrajectorySet, config: BiasConfig) -> TrajectorySet:
    """Thin observations subgroup-wise; with the guard on, restore one
    uniformly chosen observation for every (subgroup, period) pair the
    thinning emptied."""
    unknown = sorted(set(config.beta) - set(data.subgroups))
    if unknown:
        raise ValueError(f"retention map names unknown subgroups: {unknown}")
    rng = np.random.default_rng(config.seed)
    kept: dict[ObsKey, float] = {}
    dropped: dict[tuple[str, int], list[ObsKey]] = {}
    for key, value in data.items():
        subgroup, _, period = key
        if rng.random() < config.beta.get(subgroup, 1.0):
            kept[key] = value
        else:
            dropped.setdefault((subgroup, period), []).append(key)
    if config.guard:
        kept_pairs = {(s, t) for (s, _, t) in kept}
        for pair in sorted(dropped):
            if pair in kept_pairs:
                continue
            candidates = sorted(dropped[pair])
            pick = candidates[int(rng.integers(len(candidates)))]
            kept[pick] = data.get(*pick)
    return TrajectorySet(kept)


def generate_benchmark_dataset(
    seed: int = 0,
    horizon: int = 20,
    advantaged: int = 3,
    disadvantaged: int = 2,
) -> TrajectorySet:
    """Two-subgroup ground set with shared dynamics and subgroup-specific
    noise levels and initial states.

    Both subgroups evolve under G = [[0.99, 0], [1.0, 0.2]], F = [1.1, 0.8];
    observation variance is drawn uniformly from [0, 1) and the diagonal
    state-noise covariance from [0, 0.1) per subgroup; initial states sit at
    5 (advantaged) and 7 (disadvantaged) in both coordinates.
    """
    if not isinstance(horizon, int) or horizon < 1:
        raise ValueError(f"horizon must be a positive integer, got {horizon!r}")
    if advantaged < 1 or disadvantaged < 1:
        raise ValueError("each subgroup needs at least one trajectory")
    rng = np.random.default_rng(seed)
    transition = np.array([[0.99, 0.0], [1.0, 0.2]])
    emission = np.array([1.1, 0.8])
    observations: dict[ObsKey, float] = {}
    for name, count, level in (
        ("advantaged", advantaged, 5.0),
        ("disadvantaged", disadvantaged, 7.0),
    ):
        system = SystemMatrices(
            G=transition,
            F=emission,
            V=rng.uniform(0.0, 1.0),
            W=np.diag(rng.uniform(0.0, 0.1, size=2)),
            m0=np.full(2, level),
        )
        for trajectory in range(count):
            values = simulate_lds(system, horizon, rng)
            for t, value in enumerate(values, start=1):
                observations[(name, str(trajectory), t)] = value
    return TrajectorySet(observations)
