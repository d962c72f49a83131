"""Green kernels, resolvents, the jump generator and potentials.

The jump generator is Lf = a*f - f.  Its resolvent kernel splits into a
singular delta part with weight 1/(1+lambda) and a regular part

    G_lambda(x) = sum_{n>=1} a_n(x) / (1+lambda)^n,

where a_n is the n-fold convolution of the jump kernel.  At lambda = 0 the
series converges pointwise iff d > alpha; the same kernel has the Fourier
representation (2 pi)^{-d} int e^{i(k,x)} a_hat / (1 + lambda - a_hat) dk.
Potentials of integrable bounded functions are V(x,f) = f(x) + (G_0 * f)(x).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate, special, stats

from .errors import (
    DivergentGreenMeasureError,
    MissingNormsError,
    TruncationError,
)
from .grids import FieldGrid, GridSpec, field_from_function, require_same_grid
from .kernels import JumpKernel, sample_density, spectral_density

# ---------------------------------------------------------------------------
# spectral helpers
# ---------------------------------------------------------------------------


def _to_spectral(field: FieldGrid) -> np.ndarray:
    """Continuous-FT approximation of a field (fftn layout)."""
    return np.fft.fftn(np.fft.ifftshift(field.values)) * field.grid.cell_volume


def _from_spectral(grid: GridSpec, spec_vals: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifftn(spec_vals).real) / grid.cell_volume


# ---------------------------------------------------------------------------
# CL(R^d) functions
# ---------------------------------------------------------------------------


@dataclass
class CLFunction:
    """Bounded continuous integrable function (member of CL(R^d)).

    Either an evaluator or grid samples must be present.  Declared norms
    take precedence over sample-based estimates in cl_norm.
    """

    evaluator: Optional[Callable] = None
    sup_norm: Optional[float] = None
    l1_norm: Optional[float] = None
    grid_samples: Optional[FieldGrid] = None
    name: str = "f"

    def value_at(self, x) -> float:
        if self.evaluator is not None:
            return float(np.asarray(self.evaluator(np.atleast_2d(np.asarray(x, float)))).ravel()[0])
        if self.grid_samples is not None:
            return self.grid_samples.value_at(x)
        raise MissingNormsError("CL function has neither evaluator nor samples")

    def values_at(self, points: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at an (m, d) array of points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.evaluator is not None:
            return np.asarray(self.evaluator(points), dtype=float).ravel()
        if self.grid_samples is not None:
            return np.array([self.grid_samples.value_at(p) for p in points])
        raise MissingNormsError("CL function has neither evaluator nor samples")

    def samples_on(self, grid: GridSpec) -> FieldGrid:
        if self.grid_samples is not None and self.grid_samples.grid == grid:
            return self.grid_samples
        if self.evaluator is None:
            raise MissingNormsError("cannot resample a table-only CL function")
        return field_from_function(grid, self.evaluator)


def cl_from_kernel(kernel: JumpKernel) -> CLFunction:
    """The jump density itself as a CL function (sup = a(0), L1 mass 1)."""
    a0 = float(np.asarray(kernel.density(np.zeros((1, kernel.dim)))).ravel()[0])
    return CLFunction(evaluator=kernel.density, sup_norm=a0, l1_norm=1.0, name="a")


def cl_from_grid(field: FieldGrid, name: str = "f") -> CLFunction:
    sup = float(np.max(np.abs(field.values)))
    l1 = float(np.sum(np.abs(field.values)) * field.grid.cell_volume)
    return CLFunction(grid_samples=field, sup_norm=sup, l1_norm=l1, name=name)


def cl_norm(f: CLFunction) -> float:
    """CL norm = sup norm + L1 norm."""
    if f.sup_norm is not None and f.l1_norm is not None:
        return float(f.sup_norm + f.l1_norm)
    if f.grid_samples is not None:
        g = f.grid_samples
        return float(np.max(np.abs(g.values)) + np.sum(np.abs(g.values)) * g.grid.cell_volume)
    raise MissingNormsError("CL function has no samples and no declared norms")


# ---------------------------------------------------------------------------
# generator and semigroup
# ---------------------------------------------------------------------------


def apply_generator(kernel: JumpKernel, f: FieldGrid) -> FieldGrid:
    """Lf = a*f - f via FFT convolution on the field's grid."""
    a_hat = spectral_density(kernel, f.grid)
    conv = _from_spectral(f.grid, a_hat * _to_spectral(f))
    return FieldGrid(f.grid, conv - f.values)


def evolve_semigroup(
    kernel: JumpKernel,
    f: FieldGrid,
    t: float,
    tol: float = 1e-12,
    max_terms: int = 100_000,
) -> FieldGrid:
    """u(t,.) = e^{-t} sum_n (t^n/n!) a_n * f, truncated at Poisson tail < tol."""
    if t < 0:
        raise ValueError("t must be >= 0")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if t == 0:
        return FieldGrid(f.grid, f.values.copy())
    n_terms = int(stats.poisson.isf(tol, t)) + 1
    if n_terms > max_terms:
        raise TruncationError(f"semigroup needs {n_terms} terms, cap is {max_terms}")
    a_hat = spectral_density(kernel, f.grid)
    log_t = np.log(t)
    log_w = -t + np.arange(n_terms + 1) * log_t - special.gammaln(np.arange(n_terms + 1) + 1)
    weights = np.exp(log_w)
    acc = np.full(f.grid.shape, weights[0], dtype=complex)
    power = np.ones(f.grid.shape, dtype=complex)
    for n in range(1, n_terms + 1):
        power = power * a_hat
        acc += weights[n] * power
    return FieldGrid(f.grid, _from_spectral(f.grid, acc * _to_spectral(f)))


def semigroup_point_values(kernel: JumpKernel, f: FieldGrid, x, taus) -> np.ndarray:
    """u(tau, x) for an array of times, via the exact Fourier exponential.

    Equals the fully summed Poisson series e^{tau (a_hat - 1)} applied to f;
    grid values of a_hat with identical symbol are grouped so the cost is
    (number of distinct symbol values) x len(taus).  Subject to the same
    box-periodization error as evolve_semigroup at large tau.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    grid = f.grid
    a_hat = spectral_density(kernel, grid)
    phase = np.zeros(grid.shape)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    for ax, kmesh in enumerate(grid.wavenumbers()):
        phase = phase + kmesh * x[ax]
    w = _to_spectral(f) * np.exp(1j * phase) / (2.0 * grid.half_width) ** grid.dim
    sym, inverse = np.unique(a_hat.ravel(), return_inverse=True)
    w_class = np.bincount(inverse, weights=w.ravel().real, minlength=sym.size)
    # decay rates 1 - a_hat >= 0 up to roundoff
    rates = np.maximum(1.0 - sym, 0.0)
    return (np.exp(-np.outer(taus, rates)) * w_class).sum(axis=1)


# ---------------------------------------------------------------------------
# Green kernels
# ---------------------------------------------------------------------------


class GreenExistence(enum.Enum):
    EXISTS = "Exists"
    DIVERGENT = "Divergent"
    UNKNOWN = "Unknown"


def check_green_existence(kernel: JumpKernel) -> GreenExistence:
    """Exists iff the tail exponent alpha is known and d > alpha (strict)."""
    if kernel.tail_params is None:
        return GreenExistence.UNKNOWN
    _, alpha = kernel.tail_params
    return GreenExistence.EXISTS if kernel.dim > alpha else GreenExistence.DIVERGENT


def _decay_exponent(kernel: JumpKernel, alpha: Optional[float]) -> float:
    """d / alpha, requiring d > alpha; raises when alpha is unknown."""
    if alpha is None:
        if kernel.tail_params is None:
            raise DivergentGreenMeasureError(
                "lambda = 0 requires a known tail exponent alpha; "
                "fit one with fit_small_k_expansion"
            )
        alpha = kernel.tail_params[1]
    if kernel.dim <= alpha:
        raise DivergentGreenMeasureError(
            f"Green measure diverges: d = {kernel.dim} <= alpha = {alpha}"
        )
    return kernel.dim / alpha


@dataclass
class ResolventKernel:
    """Regular part G_lambda of the resolvent kernel, plus its delta weight."""

    lam: float
    kernel_name: str
    regular_part: FieldGrid
    n_terms: int
    tail_exponent: Optional[float] = None

    @property
    def singular_weight(self) -> float:
        return 1.0 / (1.0 + self.lam)


def green_regular_series(
    kernel: JumpKernel,
    grid: GridSpec,
    lam: float,
    tol: float = 1e-10,
    max_terms: int = 48,
    alpha: Optional[float] = None,
) -> ResolventKernel:
    """Partial sums of a_n / (1+lambda)^n with a power-law tail estimate.

    For lambda = 0 the summation stops at max_terms (box periodization of
    a_n degrades beyond that) and the remaining tail is estimated from the
    n^{-d/alpha} decay via a Hurwitz-zeta weight on the last term.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    p = _decay_exponent(kernel, alpha) if lam == 0 else None
    a_hat = spectral_density(kernel, grid)
    ratio = a_hat / (1.0 + lam)
    power = np.ones(grid.shape)
    acc = np.zeros(grid.shape)
    n = 0
    while n < max_terms:
        n += 1
        power = power * ratio
        acc += power
        inc_sup = float(np.max(np.abs(np.fft.ifftn(power).real))) / grid.cell_volume
        if inc_sup < tol:
            break
    vals = _from_spectral(grid, acc.astype(complex))
    tail = None
    if lam == 0:
        # tail(x) ~ a_n(x) * sum_{m>n} (m/n)^{-p} = a_n(x) n^p zeta(p, n+1)
        last = _from_spectral(grid, power.astype(complex))
        vals = vals + last * (n**p) * special.zeta(p, n + 1)
        tail = p
    floor = float(vals.min())
    if floor < -1e-8:
        raise TruncationError(f"Green series produced negative values ({floor:.2e})")
    return ResolventKernel(lam, kernel.name, FieldGrid(grid, np.maximum(vals, 0.0)), n, tail)


def _fourier_cutoff(kernel: JumpKernel, lam: float) -> float:
    """Frequency beyond which a_hat/(1+lam-a_hat) is negligible."""
    k = 1.0
    while k < 1e6:
        if abs(float(np.asarray(kernel.fourier_radial(np.array([k]))).ravel()[0])) < 1e-14 * (
            1.0 + lam
        ):
            return k
        k *= 2.0
    return 1e6


def green_regular_fourier(
    kernel: JumpKernel,
    x,
    lam: float,
    alpha: Optional[float] = None,
) -> float:
    """Radial quadrature of (2 pi)^{-d} int e^{i(k,x)} a_hat/(1+lam-a_hat) dk.

    Supports d in {1, 2, 3}.  For lambda = 0 the integrand has an
    integrable |k|^{-alpha} singularity at the origin; the quadrature mesh
    is graded toward 0.  Below k = 1e-4 the denominator 1 - a_hat is
    evaluated through the small-k expansion A |k|^alpha to avoid
    catastrophic cancellation.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0:
        _decay_exponent(kernel, alpha)
    d = kernel.dim
    if d not in (1, 2, 3):
        raise NotImplementedError("Fourier quadrature supports d in {1, 2, 3}")
    r = float(np.linalg.norm(np.atleast_1d(np.asarray(x, dtype=float))))
    k_max = _fourier_cutoff(kernel, lam)

    if kernel.tail_params is not None:
        tail_A, tail_alpha = kernel.tail_params
    elif alpha is not None:
        from .kernels import fit_small_k_expansion

        tail_A, tail_alpha, _ = fit_small_k_expansion(kernel)
    else:
        tail_A = tail_alpha = None
    k_lo = 1e-4 if tail_A is not None else 0.0

    def phi(k):
        k = np.asarray(k, dtype=float)
        if tail_A is not None and np.all(k < k_lo):
            drop = tail_A * k**tail_alpha
            return (1.0 - drop) / (lam + drop)
        a = kernel.fourier_radial(k)
        return a / (1.0 + lam - a)

    if d == 1:
        integrand = lambda k: np.cos(k * r) * phi(k) / np.pi
    elif d == 2:
        integrand = lambda k: k * special.j0(k * r) * phi(k) / (2.0 * np.pi)
    elif r == 0.0:
        integrand = lambda k: k * k * phi(k) / (2.0 * np.pi**2)
    else:
        integrand = lambda k: k * np.sin(k * r) * phi(k) / (2.0 * np.pi**2 * r)

    # graded breakpoints toward the k=0 singularity
    val = 0.0
    err = 0.0
    if k_lo > 0.0:
        v, e = integrate.quad(integrand, 0.0, k_lo, limit=200, epsabs=1e-13)
        val += v
        err += e
    points = sorted(set(np.geomspace(max(k_lo, 1e-8), k_max, 24).tolist()))
    v, e = integrate.quad(
        integrand, k_lo, k_max, points=points, limit=400, epsabs=1e-12, epsrel=1e-9
    )
    val += v
    err += e
    if not np.isfinite(val) or err > 1e-4 * max(abs(val), 1.0):
        raise TruncationError(f"Fourier quadrature did not converge (err={err:.2e})")
    return float(val)


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------


def convolve_fields(a: FieldGrid, b: FieldGrid) -> FieldGrid:
    """Continuous convolution of two fields via FFT (periodic box)."""
    require_same_grid(a, b)
    return FieldGrid(a.grid, _from_spectral(a.grid, _to_spectral(a) * _to_spectral(b)))


def potential_field(
    kernel: JumpKernel,
    f: CLFunction,
    grid: GridSpec,
    tol: float = 1e-10,
    max_terms: int = 48,
    alpha: Optional[float] = None,
) -> FieldGrid:
    """V(., f) = f + G_0 * f on the grid."""
    if check_green_existence(kernel) is GreenExistence.DIVERGENT:
        raise DivergentGreenMeasureError(
            f"potential undefined: d = {kernel.dim} <= alpha = {kernel.tail_params[1]}"
        )
    if f.sup_norm is None or f.l1_norm is None:
        cl_norm(f)  # raises unless samples provide finite norms
    g0 = green_regular_series(kernel, grid, 0.0, tol=tol, max_terms=max_terms, alpha=alpha)
    fs = f.samples_on(grid)
    conv = convolve_fields(g0.regular_part, fs)
    return FieldGrid(grid, fs.values + conv.values)


def potential(
    kernel: JumpKernel,
    f: CLFunction,
    x,
    grid: GridSpec,
    tol: float = 1e-10,
    max_terms: int = 48,
    alpha: Optional[float] = None,
) -> float:
    """V(x, f) = f(x) + (G_0 * f)(x), the delta part plus the regular convolution."""
    field = potential_field(kernel, f, grid, tol=tol, max_terms=max_terms, alpha=alpha)
    fs = f.samples_on(grid)
    conv_at_x = field.value_at(x) - fs.value_at(x)
    return float(f.value_at(x) + conv_at_x)
