import math

import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from singspec.decompose import decompose_periodic
from singspec.floquet import (
    Band, BandSearchError, DispersionBranch, _solve_in_band, band_edges, discriminant, discriminant_many, dispersion,
    fiber_resolvent, theta_eigenvalues, theta_eigenvalues_many, unit_cell, verify_monotonicity,
)
from singspec.oracles import KPModel, kp_band_edges, kp_trace
from singspec.pw_calculus import DistributionW1, PiecewiseFunction
from singspec.quasi_ode import Coefficients

PI2 = math.pi**2


def kp(alpha=1.0, x0=0.0):
    s = decompose_periodic(DistributionW1(atoms=((x0, alpha),), period=1.0))
    return Coefficients(s.sigma, s.tau)


@pytest.fixture(scope="module")
def kp_bands():
    return band_edges(kp(), -1.0, 60.0)


@pytest.fixture(scope="module")
def free_bands():
    return band_edges(Coefficients.free(), -1.0, 100.0)


# -- discriminant ------------------------------------------------------------------


def test_discriminant_free():
    assert discriminant(Coefficients.free(PI2 / 4)) == pytest.approx(0.0, abs=1e-9)
    assert discriminant(Coefficients.free(PI2)) == pytest.approx(-2.0, abs=1e-9)


def test_discriminant_kp():
    assert discriminant(kp().with_lambda(4.0)) == pytest.approx(kp_trace(KPModel(), 4.0), abs=1e-8)


def test_discriminant_rejects_complex():
    with pytest.raises(ValueError):
        discriminant(Coefficients.free(1.0 + 1.0j))


# -- bands ---------------------------------------------------------------------------


def test_free_bands_have_closed_gaps(free_bands):
    assert [b.k for b in free_bands] == [1, 2, 3, 4]
    for b in free_bands:
        assert b.lo == pytest.approx(((b.k - 1) * math.pi) ** 2, abs=1e-7)
        assert b.hi == pytest.approx((b.k * math.pi) ** 2, abs=1e-7)
        assert b.closed_gap_after and b.gap_after == 0.0


def test_kp_bands_match_oracle(kp_bands):
    ref = kp_band_edges(KPModel(), -1.0, 60.0)
    ours = sorted([b.lo for b in kp_bands] + [b.hi for b in kp_bands if b.hi <= 60.0])
    assert len(ours) == len(ref)
    assert np.max(np.abs(np.array(ours) - ref)) <= 1e-6


def test_kp_first_gap_opens_at_pi_squared(kp_bands):
    b1 = kp_bands[0]
    assert b1.hi == pytest.approx(PI2, abs=1e-8)
    assert not b1.closed_gap_after and b1.gap_after > 1.0
    assert kp_bands[1].lo > PI2


def test_bands_below_spectrum_are_empty():
    assert band_edges(kp(), -50.0, -40.0) == []


def test_band_search_rejects_spectral_floor():
    with pytest.raises(ValueError):
        band_edges(kp(), 5.0, 1.0)


def test_shifted_cell_has_same_bands(kp_bands):
    moved = band_edges(kp(x0=0.5), -1.0, 60.0)
    for a, b in zip(kp_bands, moved):
        assert a.lo == pytest.approx(b.lo, abs=1e-7)
        assert a.hi == pytest.approx(b.hi, abs=1e-7)


def test_trace_duality(kp_bands):
    c = kp()
    for b in kp_bands:
        inside = np.linspace(b.lo, b.hi, 41)[1:-1]
        assert np.all(np.abs(discriminant_many(c.sigma, c.tau, inside)) <= 2 + 1e-9)
        if not b.closed_gap_after:
            gap = np.linspace(b.hi, b.hi + b.gap_after, 21)[1:-1]
            assert np.all(np.abs(discriminant_many(c.sigma, c.tau, gap)) > 2 - 1e-9)


def test_discriminant_strictly_monotone_in_bands(kp_bands):
    c = kp()
    for b in kp_bands:
        d = np.diff(discriminant_many(c.sigma, c.tau, np.linspace(b.lo, b.hi, 60)[1:-1]))
        assert np.all(d < 0) or np.all(d > 0)


def test_unit_cell_rescaling():
    # comb of spacing 1/2: bands scale by a^2
    s = decompose_periodic(DistributionW1.comb(1.0, 0.5))
    sig, tau, a = unit_cell(s.sigma, s.tau)
    assert a == 0.5
    bands = band_edges(Coefficients(sig, tau), -1.0, 15.0)
    ref = kp_band_edges(KPModel(1.0, 0.5), -4.0, 60.0)
    assert bands[0].lo / a**2 == pytest.approx(ref[0], abs=1e-6)
    assert bands[0].hi / a**2 == pytest.approx(ref[1], abs=1e-6)


# -- dispersion and fiber eigenvalues --------------------------------------------------


def test_free_dispersion():
    br = dispersion(Coefficients.free(), 1, [math.pi / 2, 1e-6])
    assert br.lambdas[0] == pytest.approx(PI2 / 4, abs=1e-8)
    assert br.lambdas[1] == pytest.approx(0.0, abs=1e-8)


def test_kp_dispersion_at_quarter_turn(kp_bands):
    lam = dispersion(kp(), 1, [math.pi / 2], kp_bands[0]).lambdas[0]
    assert abs(kp_trace(KPModel(), lam)) <= 1e-8


def test_free_theta_eigenvalues():
    c = Coefficients.free()
    assert np.allclose(theta_eigenvalues(c, 0.0, 200.0), [0.0, 4 * PI2, 16 * PI2], atol=1e-7)
    assert np.allclose(theta_eigenvalues(c, math.pi, 100.0), [PI2, 9 * PI2], atol=1e-7)


def test_kp_theta_eigenvalue_at_pi(kp_bands):
    lam = theta_eigenvalues(kp(), math.pi, 60.0, bands=kp_bands)[0]
    assert kp_trace(KPModel(), lam) == pytest.approx(-2.0, abs=1e-8)


def test_dispersion_consistency(kp_bands):
    c = kp()
    th = 2 * math.pi * np.arange(64) / 64
    eigs = theta_eigenvalues_many(c, th, 60.0, bands=kp_bands)
    branches = [dispersion(c, b.k, th, b) for b in kp_bands]
    for j, vals in enumerate(eigs):
        section = sorted(br.lambdas[j] for br in branches if br.lambdas[j] <= 60.0)
        assert np.allclose(vals, section, atol=1e-8)


def test_fiber_eigenvalues_cover_bands(kp_bands):
    c = kp()
    th = 2 * math.pi * np.arange(64) / 64
    found = np.concatenate([np.array(v) for v in theta_eigenvalues_many(c, th, 1e9, bands=kp_bands)])
    for b in kp_bands:
        edges = np.linspace(b.lo, b.hi, 9)
        hits = np.histogram(found, bins=edges)[0]
        assert np.all(hits > 0)


def test_monotonicity_free_and_kp(kp_bands):
    th = np.linspace(0.0, 2 * math.pi, 66)[1:-1]
    rep = verify_monotonicity(dispersion(Coefficients.free(), 1, th))
    assert rep.ok and rep.direction_lower == 1 and rep.direction_upper == -1
    for b in kp_bands:
        rep = verify_monotonicity(dispersion(kp(), b.k, th, b))
        assert rep.ok and not rep.violations
        assert rep.direction_lower == (1 if b.k % 2 else -1)


def test_monotonicity_flags_constant_branch():
    th = np.linspace(0.1, 6.2, 40)
    rep = verify_monotonicity(DispersionBranch(1, tuple((t, 3.0) for t in th)))
    assert not rep.ok and rep.violations


def test_dispersion_rejects_target_outside_band():
    with pytest.raises(BandSearchError):
        _solve_in_band(PiecewiseFunction.zero(1.0), PiecewiseFunction.zero(1.0), Band(1, 0.0, PI2),
                       np.array([2.5]), 1e-10)


# -- fiber resolvent ---------------------------------------------------------------------


def antiperiodic_fd(lam, f, N=2000):
    """Dense finite differences for -w'' - lam w = f with w(t+1) = -w(t).

    Cell-centred nodes keep the jump of the anti-periodically extended
    forcing at t = 0 off the grid.
    """
    h = 1.0 / N
    t = (np.arange(N) + 0.5) * h
    main = np.full(N, 2.0 / h**2 - lam)
    off = np.full(N - 1, -1.0 / h**2)
    A = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    A[0, N - 1] = 1.0 / h**2   # w_{-1} = -w_{N-1}
    A[N - 1, 0] = 1.0 / h**2   # w_N = -w_0
    return t, spsolve(A.tocsr(), f(t))


def test_fiber_resolvent_free_antiperiodic():
    R = fiber_resolvent(Coefficients.free(), math.pi, -1.0, lambda t: np.ones_like(t))
    t, ref = antiperiodic_fd(-1.0, np.ones_like)
    assert np.max(np.abs(R.w(t).real - ref)) <= 1e-6
    exact = 1.0 - np.cosh(t - 0.5) / np.cosh(0.5)
    assert np.max(np.abs(R.w(t) - exact)) <= 1e-9


def test_fiber_resolvent_of_zero_is_zero():
    R = fiber_resolvent(kp(), 0.7, 1.0 + 2.0j, lambda t: np.zeros_like(t))
    assert np.max(np.abs(R.w(np.linspace(0, 1, 11)))) == 0.0


def test_fiber_resolvent_boundary_conditions():
    th = 1.1
    R = fiber_resolvent(kp(), th, 3.0 + 0.5j, lambda t: np.cos(3 * t))
    e = np.exp(1j * th)
    assert abs(R.w(1.0)[0] - e * R.w(0.0)[0]) <= 1e-10
    assert abs(R.w_quasi(1.0)[0] - e * R.w_quasi(0.0)[0]) <= 1e-10


def test_fiber_resolvent_residual_kp():
    R = fiber_resolvent(kp(), 2.0, 5.0 + 1.0j, lambda t: 1.0 + t * t)
    t = np.array([0.1, 0.3, 0.45, 0.6, 0.9])
    assert np.max(np.abs(R.residual(t))) <= 1e-5


def test_alpha_is_analytic_in_theta():
    R = fiber_resolvent(kp(), 0.8, 2.0 + 1.0j, lambda t: np.sin(2 * np.pi * t) + 0.5)
    z, h = 0.8 + 0.2j, 1e-4
    a = lambda w: R.alphas(w)[0]
    cr = (a(z + h) - a(z - h)) / (2 * h) + 1j * (a(z + 1j * h) - a(z - 1j * h)) / (2 * h)
    assert abs(cr) <= 1e-5
