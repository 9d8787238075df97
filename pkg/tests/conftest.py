import numpy as np
import pytest

from indeflab.grid import WeightSpec, build, integrals
from indeflab.scalar_core import Exponents, fiber_constants, k_thresholds, phi_zeros
from indeflab.nehari_min import MinimizerOptions, min_Nminus_Aplus, min_Nplus_Bplus, min_Nplus_Eminus

# literal threshold used by the turning-point scenario
TILDE_K1_LITERAL = 0.3849002


@pytest.fixture(scope="session")
def exps():
    return Exponents(3.0, 1.5)


@pytest.fixture(scope="session")
def s1(exps):
    return build(401, WeightSpec.constant(1.0), WeightSpec.affine(-4.0, 6.0), -0.25, 0.05)


@pytest.fixture(scope="session")
def s1_zeros(s1, exps):
    return phi_zeros(integrals(s1), exps)


def q_disc(n=401, exact=True):
    m = WeightSpec.cosine(1.0, 1.0, 2.0)
    d = build(n, m, m.negated(), 0.0, 0.0)
    tk = k_thresholds(integrals(d), Exponents(3.0, 1.5))["tildeK1"] if exact else TILDE_K1_LITERAL
    return d.with_weights(b0=-tk / 2, b1=-tk / 2)


@pytest.fixture(scope="session")
def q_exact():
    return q_disc(exact=True)


@pytest.fixture(scope="session")
def q_literal():
    return q_disc(exact=False)


@pytest.fixture(scope="session")
def variant_disc():
    return build(401, WeightSpec.cosine(0.6, 1.0, 3.0), WeightSpec.affine(-4.0, 6.0), -0.1, 0.05)


@pytest.fixture(scope="session")
def minimizers(s1, exps):
    """u0, u1, u2 at lambda = 0.05 with a small restart budget."""
    o = MinimizerOptions(restarts=2)
    return {"u0": min_Nplus_Bplus(s1, 0.05, exps, o),
            "u1": min_Nplus_Eminus(s1, 0.05, exps, o),
            "u2": min_Nminus_Aplus(s1, 0.05, exps, o)}


def trace_turning(d, e):
    """Branch through the double-zero neighbourhood, seeded just above t = 1/3."""
    from indeflab.continuation import ContinuationOptions, trace
    from indeflab.functional import State
    from indeflab.solve import ls_derivatives, ls_phi, newton, v_lambda

    t = 1 / 3 + 0.01
    lam = -ls_phi(d, e, 0.0, t) / ls_derivatives(d, e, t)["Phi_lambda_closed"]
    seed = newton(d, State(t + lam * v_lambda(d, e, t), lam), e)
    return trace(d, seed, e, -1, ds=1e-3, n_steps=40, opts=ContinuationOptions(ds_max=2e-3))


@pytest.fixture(scope="session")
def q_branch_literal(q_literal, exps):
    return trace_turning(q_literal, exps)


@pytest.fixture(scope="session")
def q_branch_exact(q_exact, exps):
    return trace_turning(q_exact, exps)


@pytest.fixture(scope="session")
def s1_branches(s1, exps, s1_zeros):
    """Traces from both zeros of phi in both lambda directions, |lambda| <= 0.1."""
    from indeflab.continuation import ContinuationOptions, trace
    from indeflab.functional import State

    opts = ContinuationOptions(lam_min=-0.1, lam_max=0.1, ds_max=0.01)
    out = {}
    for name, c in zip(("c1", "c2"), s1_zeros.zeros):
        for sign in (1, -1):
            out[(name, sign)] = trace(s1, State(np.full(s1.n, c), 0.0), exps, sign, ds=0.002,
                                      n_steps=200, opts=opts)
    return out


SWEEP = (0.05, 0.025, 0.0125, 0.00625)


@pytest.fixture(scope="session")
def s1_sweep(s1, exps):
    o = MinimizerOptions(restarts=4)
    return {"u0": [min_Nplus_Bplus(s1, lam, exps, o) for lam in SWEEP],
            "u1": [min_Nplus_Eminus(s1, lam, exps, o) for lam in SWEEP],
            "u2": [min_Nminus_Aplus(s1, lam, exps, o) for lam in SWEEP]}


# criterion number -> (passed, detail), printed after the run
_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(number, passed, detail=""):
        _ACCEPTANCE[number] = (bool(passed), detail)
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
