import numpy as np
import pytest

from indeflab.errors import BadWeightSpec
from indeflab.grid import WeightSpec, build, integrals, sign_flags


def test_spacing_and_weights():
    d = build(101, WeightSpec.constant(1.0), WeightSpec.constant(0.0), 0.0, 0.0)
    assert d.h == pytest.approx(0.01, abs=1e-15)
    assert d.w[0] == pytest.approx(0.005) and d.w[-1] == pytest.approx(0.005)
    assert d.w.sum() == pytest.approx(1.0, abs=1e-14)


def test_stiffness_on_linear_function():
    d = build(51, WeightSpec.constant(1.0), WeightSpec.constant(0.0), 0.0, 0.0)
    Ku = d.apply_K(d.x.copy())
    assert np.max(np.abs(Ku[1:-1])) < 1e-12
    # outward fluxes of u = x are -1 at x = 0 and +1 at x = 1
    assert Ku[0] == pytest.approx(-1.0, abs=1e-12)
    assert Ku[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(d.K @ d.x, Ku, atol=1e-12)
    assert np.max(np.abs(d.apply_K(np.full(d.n, 3.0)))) < 1e-12


@pytest.mark.parametrize("n", [5, 64, 401, 1000])
def test_affine_sign_change_and_exact_integral(n):
    d = build(n, WeightSpec.constant(1.0), WeightSpec.affine(-4.0, 6.0), -0.25, 0.05)
    assert d.a_nodes.min() < 0 < d.a_nodes.max()
    md = integrals(d)
    assert md.Im == pytest.approx(1.0, abs=1e-13)
    assert md.Ia == pytest.approx(-1.0, abs=1e-13)
    assert md.Ib == pytest.approx(-0.2, abs=1e-15)


def test_sign_flags():
    d = build(11, WeightSpec.cosine(0.0, 1.0, 2.0), WeightSpec.constant(-1.0), 0.3, -0.1)
    assert sign_flags(d) == {"a_changes_sign": False, "m_changes_sign": True, "b_changes_sign": True}


def test_samples_and_csv(tmp_path):
    x = np.linspace(0, 1, 5)
    d = build(5, WeightSpec.samples(list(2 * x)), WeightSpec.constant(0.0), 0.0, 0.0)
    assert np.allclose(d.m_nodes, 2 * x)
    with pytest.raises(BadWeightSpec):
        build(6, WeightSpec.samples(list(x)), WeightSpec.constant(0.0), 0.0, 0.0)
    f = tmp_path / "m.csv"
    f.write_text("x,value\n" + "".join(f"{float(xi)!r},{float(1 - xi)!r}\n" for xi in x))
    d = build(5, WeightSpec.csv_path(str(f)), WeightSpec.constant(0.0), 0.0, 0.0)
    assert np.allclose(d.m_nodes, 1 - x)
    bad = tmp_path / "bad.csv"
    bad.write_text("t,value\n0,1\n")
    with pytest.raises(BadWeightSpec):
        build(5, WeightSpec.csv_path(str(bad)), WeightSpec.constant(0.0), 0.0, 0.0)


def test_negated_weight():
    m = WeightSpec.cosine(1.0, 1.0, 2.0)
    x = np.linspace(0, 1, 9)
    assert np.array_equal(m.negated().sample(x), -m.sample(x))


def test_rejects_tiny_grid():
    with pytest.raises(BadWeightSpec):
        build(2, WeightSpec.constant(1.0), WeightSpec.constant(0.0), 0.0, 0.0)
