import numpy as np
import pytest

from indeflab.errors import BadSubinterval, HypothesisFailed, NegativeState, PreconditionViolated
from indeflab.nehari_min import MinimizerOptions, min_Nplus_Bplus
from indeflab.verify import ComparisonProblem, Positivity, comparison_check, comparison_setup, positivity_check


def _linear_problem(n=41):
    x = np.linspace(0.0, 0.2, n)
    return ComparisonProblem(x, "left", lambda t: -t - np.abs(t) ** 2, lambda t: 0.05 * abs(t) ** 0.5)


def test_identical_pair_is_ordered():
    cp = _linear_problem()
    # u = v = 0 is both a sub and a supersolution
    res = comparison_check(cp, np.zeros(cp.x.size), np.zeros(cp.x.size))
    assert res["ordered"] and res["max_violation"] == 0.0


def test_monotonicity_failure_is_reported():
    x = np.linspace(0.0, 0.2, 21)
    cp = ComparisonProblem(x, "left", lambda t: t ** 2, lambda t: 0.0)
    with pytest.raises(HypothesisFailed) as exc:
        comparison_check(cp, np.zeros(21), x.copy())
    assert exc.value.clause == "monotonicity"


def test_dirichlet_order_required():
    cp = _linear_problem()
    u = np.full(cp.x.size, 0.1)
    with pytest.raises(HypothesisFailed) as exc:
        comparison_check(cp, u, np.zeros(cp.x.size))
    assert exc.value.clause == "dirichlet_order"


def test_problem_rejects_tiny_interval():
    with pytest.raises(BadSubinterval):
        ComparisonProblem(np.array([0.0, 0.1]), "left", lambda t: t, lambda t: t)


@pytest.mark.parametrize("lam", [0.05, 0.02])
@pytest.mark.parametrize("which", ["u0", "u1", "u2"])
def test_setup_pair_is_ordered(s1, exps, lam, which):
    from indeflab import nehari_min as nm
    fn = {"u0": nm.min_Nplus_Bplus, "u1": nm.min_Nplus_Eminus, "u2": nm.min_Nminus_Aplus}[which]
    u = fn(s1, lam, exps, MinimizerOptions(restarts=2)).state.u
    cs = comparison_setup(s1, exps, lam, u, width=0.05)
    assert cs["sigma1"] < 0 and 0 < cs["eps"] < cs["eps_cap"]
    res = comparison_check(cs["problem"], cs["sub"], cs["super"])
    assert res["hypotheses_ok"] and res["ordered"]
    # positive near the flux end follows from eps phi1 <= u
    assert np.all(cs["super"][1:] > 0)


def test_setup_preconditions(s1, exps, minimizers):
    u = minimizers["u0"].state.u
    with pytest.raises(PreconditionViolated):
        comparison_setup(s1, exps, -0.05, u, 0.05)
    with pytest.raises(PreconditionViolated):
        comparison_setup(s1, exps, 0.05, u, 0.05, side="left")
    with pytest.raises(BadSubinterval):
        comparison_setup(s1, exps, 0.05, u, 1e-4)


def test_positivity_verdicts(s1, exps, minimizers):
    assert positivity_check(minimizers["u1"].state.u)["verdict"] is Positivity.POSITIVE
    u0 = min_Nplus_Bplus(s1, 0.02, exps, MinimizerOptions(restarts=2)).state.u
    assert positivity_check(u0)["verdict"] is Positivity.POSITIVE
    assert positivity_check(np.zeros(11))["verdict"] is Positivity.NOT_NONTRIVIAL
    touching = np.linspace(0.0, 1.0, 11)
    assert positivity_check(touching)["verdict"] is Positivity.TOUCHES_ZERO
    with pytest.raises(NegativeState):
        positivity_check(np.linspace(-0.1, 1.0, 11))
