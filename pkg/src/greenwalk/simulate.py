"""Exact compound Poisson path simulation and Monte Carlo estimators.

Paths are piecewise constant: unit-rate exponential holding times, i.i.d.
jumps drawn from the jump kernel.  All path functionals are computed from
that structure exactly, so the module has no time-discretization error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .green import CLFunction
from .kernels import JumpKernel

__all__ = [
    "CppPath",
    "McEstimate",
    "BinSpec",
    "OccupationHistogram",
    "sample_cpp_path",
    "mc_expectation",
    "mc_truncated_potential",
    "sample_random_potential",
    "empirical_random_green_measure",
    "average_random_green_measure",
]


@dataclass
class CppPath:
    """One compound Poisson trajectory on [0, T].

    positions[i] is the state on [jump_times[i], jump_times[i+1]); the state
    before the first jump is start.
    """

    start: np.ndarray
    jump_times: np.ndarray
    positions: np.ndarray
    horizon: float

    def state_at(self, t: float) -> np.ndarray:
        if t < 0 or t > self.horizon:
            raise ValueError("t outside [0, T]")
        i = int(np.searchsorted(self.jump_times, t, side="right"))
        return self.start if i == 0 else self.positions[i - 1]

    def holding_intervals(self):
        """(states, durations) covering [0, T] exactly."""
        times = np.concatenate(([0.0], self.jump_times, [self.horizon]))
        durations = np.diff(times)
        states = np.vstack([self.start[None, :], self.positions])
        return states, durations

    def time_integral(self, fn) -> float:
        """int_0^T fn(X(t)) dt, exact for the piecewise-constant path."""
        states, durations = self.holding_intervals()
        return float(np.dot(np.asarray(fn(states), dtype=float).ravel(), durations))


@dataclass
class McEstimate:
    mean: float
    stderr: float
    n_samples: int
    seed: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.stderr < 0:
            raise ValueError("stderr must be >= 0")


def sample_cpp_path(kernel: JumpKernel, x, T: float, rng: np.random.Generator) -> CppPath:
    """Exact path: Exp(1) holding times, jumps i.i.d. with density a.

    The generator Lf = a*f - f has unit jump intensity because the kernel
    integrates to one.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if kernel.sampler is None:
        raise ValueError("kernel has no jump sampler")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    times = []
    t = 0.0
    block = max(int(T) + 1, 16)
    while True:
        gaps = rng.exponential(size=block)
        cum = t + np.cumsum(gaps)
        inside = cum[cum < T]
        times.append(inside)
        if inside.size < block:
            break
        t = cum[-1]
    jump_times = np.concatenate(times)
    jumps = kernel.sampler(rng, jump_times.size)
    positions = x[None, :] + np.cumsum(jumps, axis=0) if jump_times.size else np.empty((0, x.size))
    return CppPath(x, jump_times, positions, T)


def _mc_reduce(samples: np.ndarray, seed: int, **extra) -> McEstimate:
    n = samples.size
    mean = float(samples.mean())
    stderr = float(samples.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return McEstimate(mean, stderr, n, seed, dict(extra))


def mc_expectation(
    kernel: JumpKernel, f: CLFunction, x, t: float, n: int, seed: int
) -> McEstimate:
    """Sample mean of f(X(t)) over n independent paths."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if n < 2:
        raise ValueError("need n >= 2 samples")
    if t == 0:
        return McEstimate(f.value_at(x), 0.0, n, seed)
    rng = np.random.default_rng(seed)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    # state at time t = x + sum of Poisson(t)-many jumps; exact in law
    counts = rng.poisson(t, size=n)
    total = int(counts.sum())
    jumps = kernel.sampler(rng, total)
    ends = np.cumsum(counts)
    sums = np.zeros((n, x.size))
    if total:
        cum = np.cumsum(jumps, axis=0)
        nz = counts > 0
        sums[nz] = cum[ends[nz] - 1]
        first = np.flatnonzero(nz)
        if first.size > 1:
            sums[first[1:]] -= cum[ends[first[:-1]] - 1]
    vals = f.values_at(x[None, :] + sums)
    return _mc_reduce(vals, seed)


def sample_random_potential(kernel: JumpKernel, f: CLFunction, x, T: float, rng) -> float:
    """One draw of the random potential Y^x(f) truncated at horizon T."""
    path = sample_cpp_path(kernel, x, T, rng)
    return path.time_integral(f.values_at)


def mc_truncated_potential(
    kernel: JumpKernel, f: CLFunction, x, T: float, n: int, seed: int
) -> McEstimate:
    """Mean/stderr of int_0^T f(X(t)) dt over n paths (exact per path)."""
    if T <= 0:
        raise ValueError("T must be positive")
    if n < 2:
        raise ValueError("need n >= 2 samples")
    rng = np.random.default_rng(seed)
    vals = np.fromiter(
        (sample_random_potential(kernel, f, x, T, rng) for _ in range(n)),
        dtype=float,
        count=n,
    )
    return _mc_reduce(vals, seed)


# ---------------------------------------------------------------------------
# occupation histograms (empirical random Green measures)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinSpec:
    """Rectangular binning of the box [lo, hi]^d with shape bins per axis."""

    lo: tuple
    hi: tuple
    shape: tuple

    @classmethod
    def cube(cls, half_width: float, bins_per_axis: int, dim: int) -> "BinSpec":
        return cls((-half_width,) * dim, (half_width,) * dim, (bins_per_axis,) * dim)

    @property
    def dim(self) -> int:
        return len(self.shape)

    def edges(self) -> list[np.ndarray]:
        return [
            np.linspace(self.lo[i], self.hi[i], self.shape[i] + 1) for i in range(self.dim)
        ]

    def centers(self) -> list[np.ndarray]:
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges()]

    def volume_per_bin(self) -> float:
        widths = [(self.hi[i] - self.lo[i]) / self.shape[i] for i in range(self.dim)]
        return float(np.prod(widths))

    def flat_index(self, points: np.ndarray):
        """Raveled bin index per point; -1 for points outside the box."""
        points = np.atleast_2d(points)
        idx = np.zeros(points.shape[0], dtype=np.int64)
        outside = np.zeros(points.shape[0], dtype=bool)
        for ax in range(self.dim):
            w = (self.hi[ax] - self.lo[ax]) / self.shape[ax]
            j = np.floor((points[:, ax] - self.lo[ax]) / w).astype(np.int64)
            outside |= (j < 0) | (j >= self.shape[ax])
            idx = idx * self.shape[ax] + np.clip(j, 0, self.shape[ax] - 1)
        idx[outside] = -1
        return idx


@dataclass
class OccupationHistogram:
    """Occupation time per bin plus the mass that escaped the binned box."""

    bins: BinSpec
    masses: np.ndarray
    escaped: float
    horizon: float

    def total_mass(self) -> float:
        return float(self.masses.sum() + self.escaped)

    def integrate(self, bin_values: np.ndarray) -> float:
        """Integral of a bin-constant function against the histogram."""
        return float(np.sum(self.masses * bin_values))


def _deposit(bins: BinSpec, states: np.ndarray, durations: np.ndarray):
    masses = np.zeros(bins.shape)
    idx = bins.flat_index(states)
    inside = idx >= 0
    flat = np.zeros(masses.size)
    np.add.at(flat, idx[inside], durations[inside])
    escaped = float(durations[~inside].sum())
    return flat.reshape(bins.shape), escaped


def empirical_random_green_measure(
    kernel: JumpKernel, x, T: float, bins: BinSpec, rng
) -> OccupationHistogram:
    """Occupation measure of a single path: durations deposited per bin."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < np.asarray(bins.lo)) or np.any(x >= np.asarray(bins.hi)):
        raise ValueError("start point outside the binned box")
    path = sample_cpp_path(kernel, x, T, rng)
    states, durations = path.holding_intervals()
    masses, escaped = _deposit(bins, states, durations)
    return OccupationHistogram(bins, masses, escaped, T)


def average_random_green_measure(
    kernel: JumpKernel, x, T: float, bins: BinSpec, n: int, seed: int
):
    """Mean and standard error per bin over n single-path histograms."""
    rng = np.random.default_rng(seed)
    acc = np.zeros(bins.shape)
    acc2 = np.zeros(bins.shape)
    escaped = 0.0
    for _ in range(n):
        h = empirical_random_green_measure(kernel, x, T, bins, rng)
        acc += h.masses
        acc2 += h.masses**2
        escaped += h.escaped
    mean = acc / n
    var = np.maximum(acc2 / n - mean**2, 0.0)
    stderr = np.sqrt(var / n)
    return OccupationHistogram(bins, mean, escaped / n, T), stderr
