import math

import numpy as np
import pytest
import scipy.linalg as sla

from indeflab.errors import HypothesisHViolated, PreconditionViolated, StateTouchesZero
from indeflab.functional import State
from indeflab.grid import WeightSpec, build, integrals
from indeflab.scalar_core import phi_prime
from indeflab.solve import newton
from indeflab.spectral import (Verdict, apriori_Lambda, dirichlet_mu1, lambda1, lambda_b_sign_test,
                               lambda_star, stability_eigen, variational_bounds)

ZERO = WeightSpec.constant(0.0)


def _dense_lambda1(d):
    """Smallest positive eigenvalue of K u = lam diag(w m) u by a dense solve."""
    K = d.K.toarray()
    M = np.diag(d.w * d.m_nodes)
    vals = sla.eigvals(K, M)
    vals = vals[np.isfinite(vals)].real
    return float(np.min(vals[vals > 1e-9]))


def test_lambda1_positive_mean():
    d = build(101, WeightSpec.constant(1.0), ZERO, 0.0, 0.0)
    r = lambda1(d)
    assert r["value"] == 0.0
    assert np.allclose(r["eigfun"], integrals(d).Im ** -0.5)


def test_lambda1_negative_weight_is_infinite():
    assert lambda1(build(101, WeightSpec.constant(-1.0), ZERO, 0.0, 0.0))["value"] == math.inf


def test_lambda1_indefinite_matches_dense_and_converges():
    m = WeightSpec.cosine(-0.5, 1.0, 2.0)
    d201 = build(201, m, ZERO, 0.0, 0.0)
    l201 = lambda1(d201)
    assert l201["value"] > 0
    assert l201["value"] == pytest.approx(_dense_lambda1(d201), rel=1e-9)
    assert np.all(l201["eigfun"] > 0)
    l401 = lambda1(build(401, m, ZERO, 0.0, 0.0))["value"]
    l801 = lambda1(build(801, m, ZERO, 0.0, 0.0))["value"]
    # second order: successive differences shrink about fourfold
    ratio = (l401 - l201["value"]) / (l801 - l401)
    assert 3.5 < ratio < 4.5


def test_stability_on_trivial_branch(s1, exps):
    r = stability_eigen(s1, State(np.full(s1.n, 0.6), 0.0), exps)
    assert abs(r.gamma1) < 1e-10
    assert np.allclose(r.psi1, 3 ** -0.5, atol=1e-8)
    assert r.verdict is Verdict.MARGINAL


@pytest.mark.parametrize("which,slope", [(1, 0.2196), (0, -0.1448)])
def test_stability_slope_near_constants(s1, exps, s1_zeros, which, slope):
    c = s1_zeros.zeros[which]
    # closed form -c^(q-1) phi'(c) / 3
    closed = -c ** (exps.q - 1) * phi_prime(c, integrals(s1), exps) / 3
    assert closed == pytest.approx(slope, rel=2e-3)
    lam = 0.01
    s = newton(s1, State(np.full(s1.n, c), lam), exps)
    r = stability_eigen(s1, s, exps)
    assert r.gamma1 / lam == pytest.approx(closed, rel=0.02)
    assert r.verdict is (Verdict.STABLE if slope > 0 else Verdict.UNSTABLE)


def test_stability_rejects_touching_zero(s1, exps):
    u = np.linspace(0, 1, s1.n)
    with pytest.raises(StateTouchesZero):
        stability_eigen(s1, State(u, 0.1), exps)


def test_dirichlet_mu1_laplacian_and_shift():
    d = build(401, WeightSpec.constant(1.0), ZERO, 0.0, 0.0)
    exact = math.pi ** 2 / 0.25
    mu0 = dirichlet_mu1(d, (0.25, 0.75), 0.0)
    assert abs(mu0 - exact) < 10 * d.h ** 2 * exact
    assert dirichlet_mu1(d, (0.25, 0.75), 3.0) == pytest.approx(mu0 - 3.0, rel=1e-12)


def test_dirichlet_mu1_decreasing_with_sign_changing_weight(variant_disc):
    lams = np.linspace(0.0, 200.0, 21)
    vals = [dirichlet_mu1(variant_disc, (0.8, 0.98), lam) for lam in lams]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_apriori_requires_sign_change(s1, variant_disc):
    with pytest.raises(HypothesisHViolated):
        apriori_Lambda(s1, (0.8, 0.98), (0.1, 0.35))
    Lam = apriori_Lambda(variant_disc, (0.8, 0.98), (0.1, 0.35))
    assert 0 < Lam < math.inf
    assert Lam == pytest.approx(1566.6, rel=1e-3)


def test_lambda_star_tends_to_lambda1(exps):
    e = exps
    m = WeightSpec.cosine(-0.5, 1.0, 2.0)
    base = build(201, m, WeightSpec.constant(-1e-3), -0.1, -0.1)
    l1 = lambda1(base)["value"]
    stars = [lambda_star(base.with_weights(a=np.full(base.n, -eps)), e) for eps in (1e-3, 1e-4, 1e-5)]
    assert all(s > l1 for s in stars)
    gaps = [s - l1 for s in stars]
    assert gaps[0] > gaps[1] > gaps[2]
    assert lambda_b_sign_test(base, e)["lambda_b_exceeds_lambda1"]


def test_lambda_star_bracket_error(exps):
    m = WeightSpec.cosine(-0.5, 1.0, 2.0)
    d = build(201, m, WeightSpec.constant(-0.1), -0.1, -0.1)
    with pytest.raises(PreconditionViolated):
        lambda_star(d, exps)
    with pytest.raises(PreconditionViolated):
        lambda_star(build(201, WeightSpec.constant(1.0), ZERO, -0.1, -0.1), exps)


def test_variational_bound_dirichlet_case(exps):
    d = build(101, WeightSpec.constant(1.0), WeightSpec.affine(-4.0, 6.0), -0.2, -0.1)
    ub = variational_bounds(d, exps, restarts=1)["lambda_b_ub"]
    K = d.K.toarray()[1:-1, 1:-1]
    M = np.diag((d.w * d.m_nodes)[1:-1])
    oracle = float(sla.eigh(K, M, eigvals_only=True)[0])
    assert ub == pytest.approx(oracle, rel=0.01)
    assert ub == pytest.approx(math.pi ** 2, rel=0.01)


def test_variational_bound_constants_feasible(exps):
    d = build(101, WeightSpec.constant(1.0), WeightSpec.constant(0.5), 0.1, 0.1)
    assert variational_bounds(d, exps, restarts=1)["lambda_a_ub"] == 0.0


def test_more_restarts_never_increase(exps):
    d = build(101, WeightSpec.constant(1.0), WeightSpec.affine(-4.0, 6.0), -0.25, 0.05)
    one = variational_bounds(d, exps, restarts=1, seed=5)
    three = variational_bounds(d, exps, restarts=3, seed=5)
    for k in one:
        assert three[k] <= one[k]


def test_probe_grid(exps):
    d = build(101, WeightSpec.constant(1.0), WeightSpec.affine(-4.0, 6.0), -0.25, 0.05)
    r = variational_bounds(d, exps, lambda_probe_grid=[0.1, 1.0, 10.0], restarts=1)
    assert r["lambda_a_probe"] == min(t for t in (0.1, 1.0, 10.0) if t > r["lambda_a_ub"])
