import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from singspec.decompose import SigmaTau, decompose, decompose_periodic
from singspec.floquet import band_edges, dirichlet_eigenvalues
from singspec.galerkin import (
    Mesh, MeshError, assemble, convergence_experiment, eigen, gamma_bound,
    lbound_constants, lemma_quantities, mesh_for, mollify, resolvent_gap, split, wminus_norm_estimate,
    wminus_unif_estimate, w12_gram,
)
from singspec.pw_calculus import DistributionW1, PiecewiseFunction, TestFunction, norm_L1_unif, norm_L2_unif, pair
from singspec.quasi_ode import Coefficients

seeds = st.integers(0, 2**32 - 1)
ZERO = SigmaTau(PiecewiseFunction.zero(), PiecewiseFunction.zero())


def kp_split(alpha=1.0):
    return decompose_periodic(DistributionW1.comb(alpha, 1.0))


def dense_gap(fm1, fm2, lam):
    """B-weighted norm of the resolvent difference from dense factorizations."""
    B = fm1.B.toarray()
    L = np.linalg.cholesky(B)
    R1 = np.linalg.solve(fm1.A.toarray() - lam * B, L)
    R2 = np.linalg.solve(fm2.A.toarray() - lam * B, L)
    D = L.T @ (R1 - R2)
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (D + D.T)))))


# -- assembly -----------------------------------------------------------------------


def test_free_assembly_is_stiffness_and_mass():
    h = 0.1
    fm = assemble(ZERO, Mesh.uniform(0.0, 1.0, h))
    A, B = fm.A.toarray(), fm.B.toarray()
    assert np.allclose(np.diag(A), 2 / h) and np.allclose(np.diag(A, 1), -1 / h)
    assert np.allclose(np.diag(B), 2 * h / 3) and np.allclose(np.diag(B, 1), h / 6)


def test_unit_tau_adds_mass():
    mesh = Mesh.uniform(0.0, 2.0, 0.125)
    st_ = SigmaTau(PiecewiseFunction.zero(), PiecewiseFunction.constant(1.0))
    fm, free = assemble(st_, mesh), assemble(ZERO, mesh)
    assert np.allclose(fm.A.toarray(), (free.A + free.B).toarray(), atol=1e-13)


def test_form_matches_quadrature(rng):
    # t(u, u) = int |u'|^2 - int sigma (u^2)' + int tau u^2 for a hat-combination u
    f = DistributionW1.random(rng, lo=-1.0, hi=1.0)
    st_ = decompose(f, -2, 2)
    mesh = mesh_for([st_], 3.0, 1 / 32)
    fm = assemble(st_, mesh)
    c = rng.normal(size=fm.dim)
    u = PiecewiseFunction.linear_interpolant(mesh.nodes, np.concatenate([[0.0], c, [0.0]]))
    du = u.derivative()
    form = (du * du).integral() - 2 * (st_.sigma * u * du).integral() + (st_.tau * u * u).integral()
    assert c @ fm.A @ c == pytest.approx(form, rel=1e-11)


def test_missing_breakpoint_is_named():
    sigma = PiecewiseFunction.indicator(0.3, 0.7)
    with pytest.raises(MeshError, match="t=0.29999"):
        assemble(SigmaTau(sigma, PiecewiseFunction.zero()), Mesh.uniform(0.0, 1.0, 0.25))


def test_kp_form_symmetric_and_bounded_below():
    st_ = kp_split()
    fm = assemble(st_, mesh_for([st_], 8.0, 1 / 64))
    assert abs(fm.A - fm.A.T).max() == 0.0
    assert eigen(fm, 1)[0] >= gamma_bound(st_) - 0.5


# -- lower bound ---------------------------------------------------------------------------


def test_gamma_bound_examples():
    assert gamma_bound(ZERO) == -6.0
    assert gamma_bound(SigmaTau(PiecewiseFunction.zero(), PiecewiseFunction.constant(1.0))) == -22.0
    want = -(2 * (4 / math.sqrt(12)) ** 4 + 16 + 6)
    assert gamma_bound(kp_split()) == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("s", [0.25, 0.5, 1.0, 2.0, 4.0])
def test_lbound_ordering(s):
    q = DistributionW1.comb(s, 1.0)
    a, b = lbound_constants()
    w = wminus_unif_estimate(q)
    assert gamma_bound(split(q)) >= -((a * w + b) ** 4)


# -- eigenvalues ----------------------------------------------------------------------------


def test_free_dirichlet_eigenvalue():
    lam = eigen(assemble(ZERO, Mesh.uniform(0.0, 1.0, 1 / 256)), 1)[0]
    assert lam == pytest.approx(math.pi**2, rel=1e-3)


def test_shift_invariance():
    fm = assemble(kp_split(), Mesh.uniform(0.0, 1.0, 1 / 64, extra=[0.5]))
    assert np.allclose(eigen(fm.shifted(2.5), 4), eigen(fm, 4) + 2.5, atol=1e-10)


def test_sparse_and_dense_eigen_agree():
    fm = assemble(kp_split(), Mesh.uniform(-4.0, 4.0, 1 / 64))
    assert np.allclose(eigen(fm, 3, dense_limit=10), eigen(fm, 3, dense_limit=10**4), rtol=1e-9)


def test_eigen_rejects_oversized_request():
    with pytest.raises(ValueError):
        eigen(assemble(ZERO, Mesh.uniform(0.0, 1.0, 0.25)), 5)


def test_truncated_kp_eigenvalues_sit_in_first_band():
    st_ = kp_split()
    band = band_edges(Coefficients(st_.sigma, st_.tau), -1.0, 5.0)[0]
    lams = eigen(assemble(st_, mesh_for([st_], 16.0, 1 / 64)), 5)
    assert np.all(lams >= band.lo - 1e-2) and np.all(lams <= band.hi + 1e-2)


# -- resolvent gap --------------------------------------------------------------------------


def test_identical_forms_have_zero_gap():
    fm = assemble(kp_split(), Mesh.uniform(-2.0, 2.0, 1 / 32))
    assert resolvent_gap(fm, fm, -30.0) == 0.0


def test_tau_shift_gap_is_exact():
    fm = assemble(kp_split(), Mesh.uniform(-2.0, 2.0, 1 / 32))
    eps, lam = 0.3, fm.gamma - 2.0
    mu = eigen(fm, 1)[0]
    want = eps / ((mu - lam) * (mu + eps - lam))
    got = resolvent_gap(fm, fm.shifted(eps), lam)
    assert got == pytest.approx(want, rel=1e-8)
    assert got <= eps / (mu - lam) ** 2


def test_resolvent_gap_against_dense(rng):
    mesh = Mesh.uniform(-2.0, 2.0, 1 / 16, extra=np.arange(-1.5, 2.0))
    st1 = split(DistributionW1(atoms=((0.5, 1.0),)))
    st2 = split(mollify(DistributionW1(atoms=((0.5, 1.0),)), 4))
    mesh = mesh_for([st1, st2], 2.0, 1 / 16)
    fm1, fm2 = assemble(st1, mesh), assemble(st2, mesh)
    lam = min(fm1.gamma, fm2.gamma) - 2.0
    assert resolvent_gap(fm1, fm2, lam) == pytest.approx(dense_gap(fm1, fm2, lam), rel=1e-9)


def test_resolvent_gap_rejects_high_lambda():
    fm = assemble(ZERO, Mesh.uniform(0.0, 1.0, 0.1))
    with pytest.raises(ValueError):
        resolvent_gap(fm, fm, 0.0)


def test_resolvent_gap_needs_same_mesh():
    a = assemble(ZERO, Mesh.uniform(0.0, 1.0, 0.1))
    b = assemble(ZERO, Mesh.uniform(0.0, 1.0, 0.05))
    with pytest.raises(MeshError):
        resolvent_gap(a, b, -10.0)


# -- mollifier -------------------------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 4, 16])
def test_mollified_delta_is_hat(n):
    m = mollify(DistributionW1.delta(0.3), n)
    assert not m.atoms and m.g.is_zero()
    assert m.h.integral() == pytest.approx(1.0, abs=1e-13)
    ts = 0.3 + np.array([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0]) / n
    assert np.allclose(m.h.evaluate(ts), n * np.array([0.0, 0.0, 0.5, 1.0, 0.5, 0.0, 0.0]), atol=1e-12)


def test_mollified_comb_is_periodic_hat_train():
    m = mollify(DistributionW1.comb(2.0, 1.0), 8)
    assert m.period == 1.0
    assert m.h.cell_integral() == pytest.approx(2.0, abs=1e-13)
    assert m.h.evaluate(0.0) == pytest.approx(16.0) and m.h.evaluate(3.0) == pytest.approx(16.0)
    assert m.h.evaluate(0.5) == pytest.approx(0.0, abs=1e-13)


def test_mollified_regular_function_converges_in_L1():
    h = PiecewiseFunction.linear_interpolant([-1.0, 0.0, 1.0], [0.0, 1.0, 0.0])
    q = DistributionW1(h=h)
    errs = [(mollify(q, n).h - h).abs().integral() for n in (4, 8, 16, 32)]
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] * 32 < errs[0] * 4


def test_mollified_pairing_converges(rng):
    q = DistributionW1.random(rng)
    for _ in range(5):
        psi = TestFunction.random(rng)
        errs = [abs(pair(mollify(q, n), psi) - pair(q, psi)) for n in (8, 16, 32, 64)]
        scaled = [e * n for e, n in zip(errs, (8, 16, 32, 64))]
        assert max(scaled[1:]) <= 2.0 * max(scaled[0], 1e-12) + 1e-9


# -- dual norm estimate --------------------------------------------------------------------------


def test_dual_norm_of_zero():
    assert wminus_norm_estimate(DistributionW1(), 0) == 0.0


def test_dual_norm_of_delta_increases_under_refinement():
    d = DistributionW1.delta(0.0)
    vals = [wminus_norm_estimate(d, 0, h=h) for h in (1 / 16, 1 / 64, 1 / 256)]
    assert vals[0] < vals[1] < vals[2] < math.sqrt(0.5)


def test_dual_norm_of_delta_on_wide_window():
    # the reproducing kernel of W^1_2 on the line gives |delta| = 1/sqrt(2)
    mesh = Mesh.uniform(-20.0, 20.0, 1 / 256)
    x = mesh.nodes[1:-1]
    i = int(np.argmin(np.abs(x)))
    G = w12_gram(mesh).toarray()
    b = np.zeros(x.size)
    b[i] = 1.0
    assert math.sqrt(b @ sla.solve(G, b)) == pytest.approx(math.sqrt(0.5), rel=1e-4)


def test_dual_norm_estimate_needs_covering_mesh():
    with pytest.raises(MeshError):
        wminus_norm_estimate(DistributionW1.delta(0.0), 0, mesh=Mesh.uniform(-0.5, 0.5, 0.1))


@settings(max_examples=10)
@given(seeds)
def test_dual_norm_two_sided_sanity(seed):
    rng = np.random.default_rng(seed)
    f = DistributionW1.random(rng)
    st_ = decompose(f, -3, 3)
    bound = 6 * norm_L2_unif(st_.sigma) + 2 * norm_L1_unif(st_.tau)
    assert wminus_unif_estimate(f, h=1 / 32) <= bound


# -- lemma inequalities --------------------------------------------------------------------------


@settings(max_examples=50)
@given(seeds, st.sampled_from([1.0, 0.5, 0.25, 0.125]))
def test_lemma_inequalities(seed, eps):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 30))
    nodes = np.concatenate([[0.0], np.sort(rng.uniform(0, 1, k)), [1.0]])
    f = PiecewiseFunction.linear_interpolant(np.unique(nodes), rng.normal(size=np.unique(nodes).size) * 10)
    L = lemma_quantities(f)
    assert L.sup_sq <= L.max_bound(eps) * (1 + 1e-12)
    assert L.prod_l2 <= L.prod_bound(eps) * (1 + 1e-12)


def test_lemma_quantities_exact():
    f = PiecewiseFunction.linear_interpolant([0.0, 1.0], [0.0, 1.0])
    L = lemma_quantities(f)
    assert (L.sup_sq, L.grad_sq) == (1.0, 1.0)
    assert L.l2_sq == pytest.approx(1 / 3)
    assert L.prod_l2 == pytest.approx(math.sqrt(1 / 3))


# -- S = T and convergence -------------------------------------------------------------------------


def test_galerkin_matches_shooting_on_unit_interval():
    st_ = kp_split()
    sig, tau = st_.sigma.restrict(0.0, 1.0), st_.tau.restrict(0.0, 1.0)
    gal = eigen(assemble(SigmaTau(sig, tau), Mesh.uniform(0.0, 1.0, 1 / 512)), 5)
    shoot = dirichlet_eigenvalues(st_.sigma, st_.tau, -10.0, gal[-1] + 5.0)[:5]
    assert np.max(np.abs(gal - shoot) / np.abs(shoot)) <= 1e-3


def test_convergence_regular_potential():
    q = DistributionW1(h=PiecewiseFunction.linear_interpolant([-1.0, 0.0, 1.0], [0.0, 1.0, 0.0]))
    rep = convergence_experiment(q, None, [8, 64], L=4.0, h=1 / 64)
    assert rep.rows[-1].resolvent_gap <= 1e-3
    assert rep.rows[-1].w_norm_gap < rep.rows[0].w_norm_gap


def test_convergence_single_level():
    rep = convergence_experiment(DistributionW1.delta(0.0), None, [1], L=4.0, h=1 / 32)
    assert len(rep.rows) == 1 and rep.rows[0].n == 1
    assert rep.lam < gamma_bound(split(DistributionW1.delta(0.0))) - 1.0


def test_convergence_single_delta_ratio_bounded():
    rep = convergence_experiment(DistributionW1.delta(0.0), None, [4, 8, 16, 32], L=4.0, h=1 / 64)
    r = rep.column("resolvent_gap")
    assert np.all(np.diff(r) < 0)
    assert np.all(rep.column("ratio") <= 1.0)
