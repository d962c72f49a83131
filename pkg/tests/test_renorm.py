"""Subordination formula and renormalized Green measure tests.

Oracles for the 1/2-stable time change: N(T) = int_0^T k = 2 sqrt(T/pi),
so N(pi) = 2 exactly; E[exp(-r D(t))] = erfcx(r sqrt(t)); and the
occupation weight int_0^T rho_s(tau) ds has the closed form
2 sqrt(T/pi) e^{-tau^2/(4T)} - tau erfc(tau/(2 sqrt(T))).
"""

import numpy as np
import pytest
from scipy import integrate, special

from greenwalk.errors import ConfigError, DivergentGreenMeasureError
from greenwalk.grids import FieldGrid, GridSpec
from greenwalk.green import cl_from_grid, cl_from_kernel, potential
from greenwalk.kernels import convolve_power, make_gaussian_kernel
from greenwalk.renorm import (
    RenormCurve,
    fke_residual,
    mc_time_changed_expectation,
    normalization_N,
    renormalized_green_histogram,
    renormalized_potential_curve,
    subordinated_solution,
    unnormalized_potential_integral,
)
from greenwalk.simulate import BinSpec
from greenwalk.subordinate import make_gamma_subordinator, make_stable_subordinator

GRID1 = GridSpec(1, 1024, 40.0)
GRID3 = GridSpec(3, 64, 16.0)


@pytest.fixture(scope="module")
def stable():
    return make_stable_subordinator(0.5)


@pytest.fixture(scope="module")
def gamma():
    return make_gamma_subordinator(1.0, 1.0)


@pytest.fixture(scope="module")
def k1():
    return make_gaussian_kernel(1)


@pytest.fixture(scope="module")
def k3():
    return make_gaussian_kernel(3)


def const_cl(grid, value):
    return cl_from_grid(FieldGrid(grid, np.full(grid.shape, float(value))))


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------


def test_normalization_stable_closed_form(stable):
    assert normalization_N(stable, np.pi) == pytest.approx(2.0, rel=1e-12)


def test_normalization_gamma_closed_form(gamma):
    # int_0^1 E_1(s) ds = E_1(1) + 1 - e^{-1}
    expected = special.exp1(1.0) + 1.0 - np.exp(-1.0)
    assert normalization_N(gamma, 1.0) == pytest.approx(expected, rel=1e-10)


# ---------------------------------------------------------------------------
# subordination formula
# ---------------------------------------------------------------------------


def test_subordinated_constant_is_preserved(k1, stable, gamma):
    f = const_cl(GRID1, 1.0)
    for spec in (stable, gamma):
        assert subordinated_solution(k1, spec, f, [0.0], 1.0, grid=GRID1) == pytest.approx(
            1.0, abs=1e-6
        )


def test_subordinated_solution_matches_mc(k1, stable):
    f = cl_from_kernel(k1)
    v = subordinated_solution(k1, stable, f, [0.0], 1.0, grid=GRID1)
    est = mc_time_changed_expectation(k1, stable, f, [0.0], 1.0, n=200000, seed=17)
    assert abs(est.mean - v) < 3 * est.stderr


def test_subordinated_solution_small_time_limit(k1, stable):
    # v(t, x) -> f(x) as t -> 0; with f = a*a the relative gap at t = 1e-3
    # is ~0.7% (E[D(t)] = 2 sqrt(t/pi) times the logarithmic derivative of f)
    f = cl_from_grid(convolve_power(k1, 2, GRID1), name="a2")
    v = subordinated_solution(k1, stable, f, [0.0], 1e-3, grid=GRID1)
    assert v == pytest.approx(f.value_at([0.0]), rel=0.01)


def test_mc_time_changed_constant(k1, stable):
    est = mc_time_changed_expectation(k1, stable, const_cl(GRID1, 1.0), [0.0], 1.0, 64, seed=3)
    assert est.mean == pytest.approx(1.0)
    assert est.stderr == 0.0


def test_mc_time_changed_reproducible(k1, stable):
    f = cl_from_kernel(k1)
    a = mc_time_changed_expectation(k1, stable, f, [0.0], 1.0, 2000, seed=5)
    b = mc_time_changed_expectation(k1, stable, f, [0.0], 1.0, 2000, seed=5)
    assert (a.mean, a.stderr) == (b.mean, b.stderr)


# ---------------------------------------------------------------------------
# renormalized potential curve
# ---------------------------------------------------------------------------


def test_curve_gap_decreases_and_n_matches(k3, stable):
    f = cl_from_kernel(k3)
    T_grid = np.array([2.0**9, 2.0**13, 2.0**17])
    curve = renormalized_potential_curve(k3, stable, f, [0.0, 0.0, 0.0], T_grid, GRID3)
    assert curve.target == pytest.approx(potential(k3, f, [0.0, 0.0, 0.0], GRID3))
    np.testing.assert_allclose(curve.N_values, 2 * np.sqrt(T_grid / np.pi), rtol=1e-12)
    gaps = curve.rel_gaps
    assert np.all(np.diff(gaps) < 0)


def test_unnormalized_integral_diverges(k3, stable):
    f = cl_from_kernel(k3)
    vals = [
        unnormalized_potential_integral(k3, stable, f, [0.0, 0.0, 0.0], T, GRID3)
        for T in (0.5, 1.0, 2.0)
    ]
    assert vals[1] / vals[0] > 1.8
    assert vals[2] / vals[1] > 1.4  # asymptotic growth per doubling is sqrt(2)


def test_limit_requires_green_existence(k1, stable):
    with pytest.raises(DivergentGreenMeasureError):
        renormalized_potential_curve(
            k1, stable, cl_from_kernel(k1), [0.0], np.array([1.0, 2.0]), GRID1
        )


def test_limit_rejects_inadmissible_subordinator(k3, gamma):
    # the gamma family has bounded K near zero, so the limit theorem's
    # kernel conditions fail and the curve must refuse to run
    with pytest.raises(ConfigError):
        renormalized_potential_curve(
            k3, gamma, cl_from_kernel(k3), [0.0, 0.0, 0.0], np.array([1.0, 2.0]), GRID3
        )


def test_renorm_curve_validates_inputs():
    with pytest.raises(ValueError):
        RenormCurve(np.array([1.0, 1.0]), np.array([0.1, 0.1]), 1.0, np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        RenormCurve(np.array([1.0, 2.0]), np.array([0.1, 0.1]), 1.0, np.array([2.0, 1.0]))


def test_renorm_curve_csv(tmp_path):
    curve = RenormCurve(
        np.array([1.0, 2.0]), np.array([0.05, 0.055]), 0.06, np.array([1.0, 2.0])
    )
    p = tmp_path / "curve.csv"
    curve.write_csv(p)
    lines = p.read_text().strip().splitlines()
    assert lines[0] == "T,N,value,target,rel_gap"
    assert len(lines) == 3


# ---------------------------------------------------------------------------
# renormalized occupation histogram
# ---------------------------------------------------------------------------


def test_histogram_total_mass_identity(k3, stable):
    # per replica the clipped occupation times sum to T, so the normalized
    # total is T/N(T) deterministically
    bins = BinSpec.cube(8.0, 4, 3)
    T = 1000.0
    hist, _ = renormalized_green_histogram(k3, stable, [0.0, 0.0, 0.0], T, bins, 200, seed=2)
    assert hist.total_mass() == pytest.approx(T / normalization_N(stable, T), rel=1e-9)


def test_histogram_converges_toward_green_measure(k3, stable):
    # the normalized occupation histogram of Z approaches |B| G_0 on bins
    # away from the origin atom; the finite-T bias shrinks like T^{-1/4}
    from greenwalk.green import green_regular_series

    bins = BinSpec.cube(8.0, 4, 3)
    g0 = green_regular_series(k3, GRID3, 0.0).regular_part
    centers = bins.centers()
    widths = (np.array(bins.hi) - np.array(bins.lo)) / np.array(bins.shape)

    def bin_target(idx):
        # 3-point Gauss-Legendre per axis over the bin
        nodes, weights = np.polynomial.legendre.leggauss(3)
        total = 0.0
        for ia, wa in zip(nodes, weights):
            for ib, wb in zip(nodes, weights):
                for ic, wc in zip(nodes, weights):
                    p = [
                        centers[0][idx[0]] + 0.5 * widths[0] * ia,
                        centers[1][idx[1]] + 0.5 * widths[1] * ib,
                        centers[2][idx[2]] + 0.5 * widths[2] * ic,
                    ]
                    total += wa * wb * wc * g0.value_at(p)
        return total * np.prod(widths / 2.0)

    probes = [(3, 2, 2), (2, 3, 2), (2, 2, 3)]
    gaps = []
    for T in (1e3, 1e5):
        hist, _ = renormalized_green_histogram(
            k3, stable, [0.0, 0.0, 0.0], T, bins, 2000, seed=14
        )
        rel = [abs(hist.masses[idx] / bin_target(idx) - 1.0) for idx in probes]
        gaps.append(float(np.mean(rel)))
    assert gaps[1] < gaps[0]


def test_histogram_methods_agree(k3, stable):
    bins = BinSpec.cube(8.0, 4, 3)
    cond, cse = renormalized_green_histogram(
        k3, stable, [0.0, 0.0, 0.0], 100.0, bins, 3000, seed=6, method="conditional"
    )
    raw, rse = renormalized_green_histogram(
        k3, stable, [0.0, 0.0, 0.0], 100.0, bins, 3000, seed=7, method="raw"
    )
    idx = (3, 2, 2)
    combined = np.hypot(cse[idx], rse[idx])
    assert abs(cond.masses[idx] - raw.masses[idx]) < 4 * combined


def test_histogram_reproducible(k3, stable):
    bins = BinSpec.cube(8.0, 4, 3)
    a, ase = renormalized_green_histogram(k3, stable, [0.0, 0.0, 0.0], 100.0, bins, 300, seed=9)
    b, bse = renormalized_green_histogram(k3, stable, [0.0, 0.0, 0.0], 100.0, bins, 300, seed=9)
    np.testing.assert_array_equal(a.masses, b.masses)
    np.testing.assert_array_equal(ase, bse)


# ---------------------------------------------------------------------------
# fractional Kolmogorov residual
# ---------------------------------------------------------------------------


def test_fke_residual_zero_for_constant(k1, stable):
    f = const_cl(GRID1, 2.0)
    t_grid = 0.02 * np.arange(51)
    assert fke_residual(k1, stable, f, [0.0], t_grid, grid=GRID1) < 1e-12


def test_fke_residual_small_on_fine_grid(k1, stable):
    f = cl_from_kernel(k1)
    t_grid = 0.02 * np.arange(101)
    res = fke_residual(k1, stable, f, [0.0], t_grid, grid=GRID1, t_min=0.1)
    assert res < 2e-3
