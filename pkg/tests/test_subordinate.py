"""Subordinator, inverse-process and fractional-derivative tests.

Closed forms for the 1/2-stable subordinator anchor most oracles:
k(t) = t^{-1/2}/Gamma(1/2), K(lambda) = lambda^{-1/2}, Phi(lambda) =
sqrt(lambda), int_0^t k = 2 sqrt(t/pi), and the inverse process has the
half-normal marginal rho_t(tau) = (pi t)^{-1/2} e^{-tau^2/(4t)}, so
D(t) =d= |N(0, sqrt(2t))| with mean 2 sqrt(t/pi).
"""

import numpy as np
import pytest
from scipy import integrate, special

from greenwalk.subordinate import (
    SubordinatorSpec,
    check_H,
    check_admissible,
    gfd_apply,
    inverse_subordinator_curve,
    kernel_cell_masses,
    make_gamma_subordinator,
    make_stable_subordinator,
    rho_density,
    sample_inverse_many,
    sample_inverse_subordinator,
    time_averaged_ratio,
)


@pytest.fixture(scope="module")
def stable():
    return make_stable_subordinator(0.5)


@pytest.fixture(scope="module")
def gamma():
    return make_gamma_subordinator(1.0, 1.0)


# ---------------------------------------------------------------------------
# closed-form evaluations
# ---------------------------------------------------------------------------


def test_stable_closed_forms(stable):
    assert float(stable.k_eval(1.0)) == pytest.approx(1.0 / np.sqrt(np.pi))
    assert float(stable.phi_eval(4.0)) == pytest.approx(2.0)
    assert float(stable.K_eval(4.0)) == pytest.approx(0.5)
    assert float(stable.k_primitive(1.0)) == pytest.approx(2.0 / np.sqrt(np.pi))
    # Levy density alpha/Gamma(1-alpha) tau^{-1-alpha}
    assert float(stable.levy_density(1.0)) == pytest.approx(0.5 / special.gamma(0.5))


def test_gamma_closed_forms(gamma):
    # k(t) = b E_1(a t); primitive b (t E_1(a t) + (1 - e^{-a t})/a)
    assert float(gamma.k_eval(1.0)) == pytest.approx(special.exp1(1.0))
    assert float(gamma.phi_eval(1.0)) == pytest.approx(np.log(2.0))
    assert float(gamma.k_primitive(1.0)) == pytest.approx(
        special.exp1(1.0) + 1.0 - np.exp(-1.0)
    )


def test_spec_json_dict(stable):
    d = stable.to_json_dict()
    assert d["family"] == "stable"
    assert d["params"]["alpha"] == 0.5


# ---------------------------------------------------------------------------
# limit conditions and admissibility
# ---------------------------------------------------------------------------


def test_check_H_stable_passes(stable):
    assert check_H(stable).passed


def test_check_H_gamma_reports_bounded_K(gamma):
    # K(lambda) = b log(1 + lambda/a)/lambda tends to the finite limit b/a
    # as lambda -> 0, so the K-divergence condition genuinely fails
    report = check_H(gamma)
    assert not report.K_diverges_at_zero
    assert report.phi_vanishes_at_zero
    assert report.phi_diverges_at_infinity
    assert not report.passed


def test_check_H_flags_degenerate_kernel():
    # k = 1 gives K(lambda) = 1/lambda but Phi = 1 constant: both Phi limits fail
    degenerate = SubordinatorSpec(
        family="degenerate",
        params={},
        levy_density=lambda tau: np.zeros_like(np.asarray(tau, dtype=float)),
        k_eval=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        K_eval=lambda lam: 1.0 / np.asarray(lam, dtype=float),
        phi_eval=lambda lam: np.ones_like(np.asarray(lam, dtype=float)),
        increment_sampler=lambda dt, rng, size: np.full(size, dt),
        k_primitive=lambda t: np.asarray(t, dtype=float),
    )
    report = check_H(degenerate)
    assert not report.phi_vanishes_at_zero
    assert not report.phi_diverges_at_infinity
    assert not report.passed


def test_admissible_stable(stable):
    report = check_admissible(stable, s0=1.0)
    assert report.passed
    # (1/K(lambda)) int_0^{1/lambda} k = 2/sqrt(pi) exactly for alpha = 1/2
    assert report.a1_estimate == pytest.approx(2.0 / np.sqrt(np.pi), rel=0.02)


# ---------------------------------------------------------------------------
# increments and first passage
# ---------------------------------------------------------------------------


def test_stable_increment_laplace_transform(stable):
    # E exp(-S(dt)) = exp(-dt sqrt(1)) for the 1/2-stable subordinator
    rng = np.random.default_rng(12)
    dt = 0.5
    inc = stable.increment_sampler(dt, rng, 200000)
    vals = np.exp(-inc)
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - np.exp(-dt)) < 3 * se


def test_gamma_increment_laplace_transform(gamma):
    # E exp(-S(dt)) = (1 + 1/a)^{-b dt}
    rng = np.random.default_rng(12)
    dt = 0.5
    inc = gamma.increment_sampler(dt, rng, 200000)
    vals = np.exp(-inc)
    se = vals.std(ddof=1) / np.sqrt(vals.size)
    assert abs(vals.mean() - 2.0 ** (-dt)) < 3 * se


def test_inverse_sample_basics(stable):
    ds = 1e-3
    sample = sample_inverse_subordinator(stable, 1.0, ds, np.random.default_rng(0))
    assert sample.t == 1.0
    assert sample.value > 0
    assert sample.path_resolution == ds
    # grid first passage reports an integer number of steps
    assert sample.value / ds == pytest.approx(round(sample.value / ds))


def test_inverse_curve_is_monotone(stable):
    ts = np.array([0.5, 1.0, 2.0, 4.0, 8.0])
    curve = inverse_subordinator_curve(stable, ts, 1e-3, np.random.default_rng(1))
    assert np.all(np.diff(curve) >= 0)


def test_inverse_mean_matches_half_normal(stable):
    draws = sample_inverse_many(stable, 1.0, 1e-3, 4000, seed=8)
    se = draws.std(ddof=1) / np.sqrt(draws.size)
    assert abs(draws.mean() - 2.0 / np.sqrt(np.pi)) < 3 * se + 2e-3


def test_inverse_sampling_is_reproducible(stable):
    a = sample_inverse_many(stable, 1.0, 1e-2, 500, seed=21)
    b = sample_inverse_many(stable, 1.0, 1e-2, 500, seed=21)
    np.testing.assert_array_equal(a, b)


# ---------------------------------------------------------------------------
# marginal density of the inverse process
# ---------------------------------------------------------------------------


def test_rho_closed_form_half_normal(stable):
    t, tau = 2.0, 1.0
    expected = np.exp(-(tau**2) / (4 * t)) / np.sqrt(np.pi * t)
    assert rho_density(stable, t, tau) == pytest.approx(expected, rel=1e-12)


def test_rho_laplace_matches_closed_form(stable):
    for t, tau in [(1.0, 0.5), (1.0, 1.0), (4.0, 2.0)]:
        closed = rho_density(stable, t, tau, method="closed_form")
        talbot = rho_density(stable, t, tau, method="laplace")
        assert talbot == pytest.approx(closed, rel=1e-6)


def test_rho_gamma_integrates_to_one(gamma):
    taus = np.linspace(1e-6, 60.0, 400)
    dens = np.array([rho_density(gamma, 1.0, tau) for tau in taus])
    mass = np.trapezoid(dens, taus)
    assert mass == pytest.approx(1.0, abs=1e-3)


def test_rho_closed_form_unavailable_for_gamma(gamma):
    with pytest.raises(ValueError):
        rho_density(gamma, 1.0, 1.0, method="closed_form")


def test_time_averaged_ratio_near_one_at_large_t(stable):
    _, _, ratio = time_averaged_ratio(stable, 1.0, 1e3)
    assert abs(ratio - 1.0) < 0.1


# ---------------------------------------------------------------------------
# generalized fractional derivative
# ---------------------------------------------------------------------------


def test_cell_masses_match_primitive(stable):
    dt, m = 0.1, 5
    masses = kernel_cell_masses(stable, dt, m)
    edges = dt * np.arange(m + 1)
    np.testing.assert_allclose(masses, np.diff(2 * np.sqrt(edges / np.pi)), rtol=1e-12)


def grid_and_kernel(spec, dt, T):
    m = int(round(T / dt))
    ts = dt * np.arange(m + 1)
    with np.errstate(divide="ignore"):
        ks = np.asarray(spec.k_eval(np.maximum(ts, 1e-300)), dtype=float)
    return ts, ks, kernel_cell_masses(spec, dt, m)


def test_gfd_of_constant_is_exactly_zero(stable):
    ts, ks, masses = grid_and_kernel(stable, 0.01, 1.0)
    out = gfd_apply(ks, np.full(ts.size, 3.7), 0.01, cell_masses=masses)
    assert np.max(np.abs(out)) == 0.0


def test_gfd_is_linear(stable):
    dt = 0.01
    ts, ks, masses = grid_and_kernel(stable, dt, 1.0)
    f, g = ts**2, np.sin(ts)
    combo = gfd_apply(ks, 2.0 * f + g, dt, cell_masses=masses)
    parts = 2.0 * gfd_apply(ks, f, dt, cell_masses=masses) + gfd_apply(
        ks, g, dt, cell_masses=masses
    )
    np.testing.assert_allclose(combo, parts, atol=1e-13)


def caputo_error(spec, dt):
    # Caputo oracle: D^{(k)} t = t^{1-alpha}/Gamma(2-alpha) = 2 sqrt(t/pi).
    # Evaluate at t = 1, away from the t -> 0 boundary layer where the
    # memory-kernel singularity limits the local order.
    ts, ks, masses = grid_and_kernel(spec, dt, 1.2)
    out = gfd_apply(ks, ts.copy(), dt, cell_masses=masses)
    i = int(round(1.0 / dt)) - 1  # gfd output starts at t_1
    return float(abs(out[i] - 2.0 * np.sqrt(ts[i + 1] / np.pi)))


def test_gfd_caputo_oracle(stable):
    assert caputo_error(stable, 4e-3) < 0.01 * 2.0 / np.sqrt(np.pi)


def test_gfd_second_order_convergence(stable):
    e1, e2 = caputo_error(stable, 8e-3), caputo_error(stable, 4e-3)
    assert e1 / e2 > 1.8
