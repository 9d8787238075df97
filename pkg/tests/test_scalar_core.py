import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings, strategies as st

from indeflab.errors import PreconditionViolated
from indeflab.scalar_core import (Exponents, MassData, NehariClass, Regime, classify_regime,
                                  critical_point, fiber_constants, fibering_roots, k_thresholds,
                                  phi_eval, phi_prime, phi_zeros)


def test_exponents_reject_bad_order():
    with pytest.raises(Exception):
        Exponents(1.5, 3.0)
    with pytest.raises(Exception):
        Exponents(3.0, 2.0)


def test_fiber_constants_reference_values(exps):
    c = fiber_constants(exps)
    assert c["Cpq"] == pytest.approx(0.3535534, abs=1e-6)
    assert c["tildeCpq"] == pytest.approx(0.3849002, abs=1e-6)
    c4 = fiber_constants(Exponents(4.0, 1.5))
    # independent evaluation: 0.6 * 0.4^(1/4) and 0.8 * 0.2^(1/4)
    assert c4["Cpq"] == pytest.approx(0.6 * 0.4 ** 0.25, rel=1e-15)
    assert c4["tildeCpq"] == pytest.approx(0.8 * 0.2 ** 0.25, rel=1e-15)
    assert c4["tildeCpq"] == pytest.approx(0.534992, abs=1e-6)
    assert c4["Cpq"] == pytest.approx(0.477218, abs=1e-4)


def test_fiber_constants_tend_to_one_near_two():
    gaps = [1 - fiber_constants(Exponents(3.0, 2 - dq))["Cpq"] for dq in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert all(g > 0 for g in gaps) and gaps == sorted(gaps, reverse=True)
    c = fiber_constants(Exponents(3.0, 1.9999))
    assert abs(c["Cpq"] - 1) < 5e-3 and abs(c["tildeCpq"] - 1) < 5e-3


def test_tilde_constant_exceeds_plain():
    for p, q in ((3.0, 1.5), (4.0, 1.2), (2.5, 1.9), (6.0, 1.01)):
        c = fiber_constants(Exponents(p, q))
        assert c["tildeCpq"] > c["Cpq"]


def test_phi_eval_samples(exps):
    md = MassData(1.0, -1.0, -0.2)
    assert phi_eval(0.0, md, exps) == -0.2
    assert phi_eval(1.0, md, exps) == pytest.approx(-0.2, abs=1e-15)
    # 1/3^(1/2) - 1/3^(3/2) - 0.2
    expected = 3 ** -0.5 - 3 ** -1.5 - 0.2
    assert phi_eval(1 / 3, md, exps) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.184900, abs=1e-6)
    with pytest.raises(PreconditionViolated):
        phi_eval(-1.0, md, exps)


def test_phi_prime_matches_difference(exps):
    md = MassData(1.0, -1.0, -0.2)
    for t in (0.1, 0.5, 2.0):
        h = 1e-6
        fd = (phi_eval(t + h, md, exps) - phi_eval(t - h, md, exps)) / (2 * h)
        assert phi_prime(t, md, exps) == pytest.approx(fd, rel=1e-7)


def test_thresholds(exps):
    k = k_thresholds(MassData(1.0, -1.0, 0.0), exps)
    assert k["K1"] == pytest.approx(0.3535534, abs=1e-7)
    assert k["tildeK1"] == pytest.approx(0.3849002, abs=1e-7)
    assert k_thresholds(MassData(2.0, -1.0, 0.0), exps)["K1"] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(PreconditionViolated):
        k_thresholds(MassData(-1.0, -1.0, 0.0), exps)


def test_threshold_scaling_in_m(exps):
    base = k_thresholds(MassData(1.0, -1.0, 0.0), exps)
    s = 2.7
    scaled = k_thresholds(MassData(s, -1.0, 0.0), exps)
    f = s ** ((exps.p - exps.q) / (exps.p - 2))
    assert scaled["K1"] == pytest.approx(f * base["K1"], rel=1e-13)
    assert scaled["tildeK1"] == pytest.approx(f * base["tildeK1"], rel=1e-13)


def test_phi_zero_regimes(exps):
    two = phi_zeros(MassData(1.0, -1.0, -0.2), exps)
    assert two.regime is Regime.TWO_ZEROS
    c1, c2 = two.zeros
    assert c1 == pytest.approx(0.04374, abs=1e-4)
    assert c2 == pytest.approx(0.77246, abs=1e-4)
    assert two.c0 == pytest.approx(1 / 3, abs=1e-12)
    # s = sqrt(t) solves s^3 - s + 0.2 = 0
    for c in (c1, c2):
        s = math.sqrt(c)
        assert abs(s ** 3 - s + 0.2) < 1e-12
    tk = k_thresholds(MassData(1.0, -1.0, 0.0), exps)["tildeK1"]
    dz = phi_zeros(MassData(1.0, -1.0, -tk), exps)
    assert dz.regime is Regime.DOUBLE_ZERO and dz.zeros[0] == pytest.approx(1 / 3, abs=1e-6)
    uz = phi_zeros(MassData(1.0, -1.0, 0.5), exps)
    assert uz.regime is Regime.UNIQUE_ZERO and uz.zeros[0] == pytest.approx(1.4197, abs=1e-4)
    assert phi_zeros(MassData(1.0, -1.0, -0.5), exps).regime is Regime.NO_ZERO


def test_critical_point(exps):
    assert critical_point(MassData(1.0, -1.0, -0.2), exps) == pytest.approx(1 / 3, abs=1e-14)
    assert critical_point(MassData(1.0, 1.0, -0.2), exps) is None


def test_regime_labels(exps):
    md = MassData(1.0, -1.0, -0.2)
    signs = {"a_changes_sign": True, "b_changes_sign": True, "m_changes_sign": False}
    assert classify_regime(md, signs, exps).label.startswith("≥ 4")
    low = classify_regime(MassData(1.0, -1.0, -0.5), signs, exps)
    assert "no classical positive solution" in low.label
    tk = k_thresholds(md, exps)["tildeK1"]
    q = classify_regime(MassData(1.0, -1.0, -tk), {"m_changes_sign": True}, exps, "Q")
    assert q.label == "turning point at (0, c₀)"
    assert classify_regime(MassData(-1.0, -1.0, -0.2), signs, exps).label == "NotApplicable"


def test_fibering_two_roots(exps):
    fr = fibering_roots(1.0, 1.0, 1.0, 0.1, exps)
    assert [r.cls for r in fr.roots] == [NehariClass.PLUS, NehariClass.MINUS]
    t1, t2 = fr.roots[0].t, fr.roots[1].t
    assert t1 == pytest.approx(0.0100, abs=1e-3) and t2 == pytest.approx(9.6, abs=0.1)
    for t in (t1, t2):
        assert abs(t ** 0.5 - 0.1 * t ** 1.5 - 0.1) < 1e-10


def test_fibering_none_and_single(exps):
    assert fibering_roots(1.0, 1.0, 1.0, 1.0, exps).roots == []
    fr = fibering_roots(1.0, 1.0, 0.0, 0.3, exps)
    assert len(fr.roots) == 1 and fr.roots[0].cls is NehariClass.MINUS
    assert fr.roots[0].t == pytest.approx(1.0 / 0.3, rel=1e-10)


# zero or a magnitude in [1e-6, 10]; smaller inputs push roots past the float range
finite = st.one_of(st.just(0.0), st.floats(1e-6, 10.0), st.floats(-10.0, -1e-6))


@settings(max_examples=10_000, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(E=finite, A=finite, B=finite, lam=finite)
def test_fibering_root_count_property(exps, E, A, B, lam):
    assume(not (lam == 0 and E <= 0))
    fr = fibering_roots(E, A, B, lam, exps)
    assert len(fr.roots) in (0, 1, 2)
    ts = [r.t for r in fr.roots]
    assert all(t > 0 for t in ts) and ts == sorted(ts)
    if len(fr.roots) == 2:
        assert {r.cls for r in fr.roots} == {NehariClass.PLUS, NehariClass.MINUS}
        if E > 0 and lam * A > 0:
            assert [r.cls for r in fr.roots] == [NehariClass.PLUS, NehariClass.MINUS]


@settings(max_examples=1000, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(p=st.floats(2.05, 6.0), q=st.floats(1.05, 1.95), Im=st.floats(0.05, 10.0), Ia=st.floats(-10.0, -0.05),
       shift=st.floats(0.02, 0.9), side=st.sampled_from([-1, 1]))
def test_zero_count_trichotomy(p, q, Im, Ia, shift, side):
    """Ib above -tildeK1 gives two zeros, below gives none."""
    e = Exponents(p, q)
    tk = k_thresholds(MassData(Im, Ia, 0.0), e)["tildeK1"]
    Ib = -tk * (1 - side * shift)
    an = phi_zeros(MassData(Im, Ia, Ib), e)
    if side > 0:
        assert an.regime is Regime.TWO_ZEROS and len(an.zeros) == 2
        assert an.zeros[0] < an.c0 < an.zeros[1]
    else:
        assert an.regime is Regime.NO_ZERO and an.zeros == []
