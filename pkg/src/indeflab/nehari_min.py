"""Candidate minimizers of the energy on the three Nehari pieces, and their scaling limits.

Each minimizer searches over nonnegative directions z, projects z onto the
requested fibering root, runs descent on the projected energy and then
polishes the result with Newton.  Results are local minimizers; nothing here
certifies global optimality.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InsufficientSweep, MaxIterExceeded, NoCandidate, SingularJacobian
from .fibered import FiberedProblem, lbfgs_descent
from .functional import State, energy, nehari_classify, residual, residual_scale
from .grid import Discretization
from .scalar_core import Exponents, NehariClass
from .solve import NewtonOptions, newton, solve_w0, solve_winf

CRITICAL_TOL = 1e-8


class ConstraintSet(str, Enum):
    NPLUS_BPLUS = "NplusBplus"
    NPLUS_EMINUS = "NplusEminus"
    NMINUS_APLUS = "NminusAplus"


@dataclass
class MinimizerOptions:
    restarts: int = 16
    seed: int = 0
    maxiter: int = 300
    newton: NewtonOptions = field(default_factory=NewtonOptions)
    # optional estimate of min(lambda_b, lambda_s); exceeding it only warns
    lambda_cap: float | None = None


@dataclass
class MinimizerResult:
    state: State
    energy: float
    constraint_set: ConstraintSet
    restarts_used: int
    certificates: dict


_TARGET = {
    ConstraintSet.NPLUS_BPLUS: NehariClass.PLUS,
    ConstraintSet.NPLUS_EMINUS: NehariClass.PLUS,
    ConstraintSet.NMINUS_APLUS: NehariClass.MINUS,
}


def _member(cset, E, A, B):
    if cset is ConstraintSet.NPLUS_BPLUS:
        return B > 0
    if cset is ConstraintSet.NPLUS_EMINUS:
        return E < 0
    return A > 0


def _membership(cset, E, A, B, scale):
    margin = 1e-12 * scale
    flags = {"B_positive": B > margin, "E_negative": E < -margin, "A_positive": A > margin}
    key = {ConstraintSet.NPLUS_BPLUS: "B_positive",
           ConstraintSet.NPLUS_EMINUS: "E_negative",
           ConstraintSet.NMINUS_APLUS: "A_positive"}[cset]
    return flags, flags[key]


def _perturb(z0, rng):
    top = float(np.max(z0))
    return z0 * (1 + 0.3 * rng.random(z0.size)) + 0.2 * top * rng.random(z0.size)


def _certify(d, s, e, cset):
    """Membership, Nehari class and criticality of a polished state, or None."""
    en = energy(d, s, e)
    F = residual(d, s, e)
    rscale = residual_scale(d, s, e)
    crit = float(np.max(np.abs(F))) / rscale if rscale > 0 else math.inf
    if crit > CRITICAL_TOL:
        return None
    cls = nehari_classify(d, s, e).cls
    if cls is not _TARGET[cset]:
        return None
    scale = abs(en.E) + abs(s.lam) * (abs(en.A) + abs(en.B))
    flags, ok = _membership(cset, en.E, en.A, en.B, scale)
    if not ok:
        return None
    cert = {"nehari_residual": abs(en.J) / scale if scale > 0 else 0.0,
            "critical_residual": crit,
            "nehari_class": cls.value,
            "set_membership": flags}
    return en, cert


def _minimize(d: Discretization, lam: float, e: Exponents, cset: ConstraintSet, z_base, opts: MinimizerOptions):
    prob = FiberedProblem(d, e, lam, _TARGET[cset], lambda E, A, B: _member(cset, E, A, B))
    best = None
    for k in range(opts.restarts):
        rng = np.random.default_rng([opts.seed, k])
        z0 = z_base if k == 0 else _perturb(z_base, rng)
        fp = lbfgs_descent(prob, z0, maxiter=opts.maxiter)
        if fp is None:
            continue
        # directions stay nonnegative; the modulus is taken once at the end
        guess = State(fp.t * np.abs(fp.z), lam)
        try:
            s = newton(d, guess, e, opts.newton)
        except (MaxIterExceeded, SingularJacobian):
            continue
        checked = _certify(d, s, e, cset)
        if checked is None:
            continue
        en, cert = checked
        cert["restart_index"] = k
        if best is None or en.I < best[0] - 1e-12 * abs(best[0]):
            best = (en.I, s, cert)
    if best is None:
        raise NoCandidate(f"no admissible candidate in {cset.value} after {opts.restarts} restarts")
    I, s, cert = best
    return MinimizerResult(s, I, cset, opts.restarts, cert)


def _check_cap(lam, opts):
    if opts.lambda_cap is not None and lam >= opts.lambda_cap:
        warnings.warn(f"lambda = {lam} is above the supplied estimate {opts.lambda_cap}", stacklevel=3)


def _boundary_seed(d: Discretization, e: Exponents):
    prof = solve_w0(d.b0, d.b1, e, d.x)
    if prof is not None:
        return prof["profile"] / np.max(prof["profile"])
    # ramp toward the end carrying positive flux
    if d.b1 > 0 and d.b1 >= d.b0:
        return 0.1 + d.x
    return 1.1 - d.x


def min_Nplus_Bplus(d: Discretization, lam: float, e: Exponents, opts: MinimizerOptions | None = None) -> MinimizerResult:
    """u0: minimizer of the energy on N+ restricted to positive boundary term."""
    opts = opts or MinimizerOptions()
    if d.b0 <= 0 and d.b1 <= 0:
        raise NoCandidate("boundary weight has no positive part, B > 0 is empty")
    _check_cap(lam, opts)
    return _minimize(d, lam, e, ConstraintSet.NPLUS_BPLUS, _boundary_seed(d, e), opts)


def min_Nplus_Eminus(d: Discretization, lam: float, e: Exponents, opts: MinimizerOptions | None = None) -> MinimizerResult:
    """u1: minimizer on N+ among directions with negative quadratic part."""
    opts = opts or MinimizerOptions()
    _check_cap(lam, opts)
    return _minimize(d, lam, e, ConstraintSet.NPLUS_EMINUS, np.ones(d.n), opts)


def min_Nminus_Aplus(d: Discretization, lam: float, e: Exponents, opts: MinimizerOptions | None = None) -> MinimizerResult:
    """u2: minimizer on N- among directions with positive superlinear part."""
    opts = opts or MinimizerOptions()
    apos = np.maximum(d.a_nodes, 0.0)
    if not np.any(apos > 0):
        raise NoCandidate("a has no positive part, A > 0 is empty")
    _check_cap(lam, opts)
    return _minimize(d, lam, e, ConstraintSet.NMINUS_APLUS, apos + 1e-3 * float(apos.max()), opts)


def _slope(x, y):
    x, y = np.log(np.asarray(x)), np.log(np.asarray(y))
    return float(np.polyfit(x, y, 1)[0])


def asymptotic_report(results, which: str, d: Discretization, e: Exponents, limit=None):
    """Distances of rescaled minimizers to their small-lambda limit along a geometric sweep.

    which is u0_to_w0, u2_to_winf or u1_to_constant; for the last one limit is
    the constant.  Otherwise the limit is computed unless supplied.
    """
    if len(results) < 3:
        raise InsufficientSweep("need at least 3 sweep points")
    lams = np.array([r.state.lam for r in results])
    ratios = lams[1:] / lams[:-1]
    if np.any(lams <= 0) or np.max(np.abs(ratios - ratios[0])) > 1e-9 * abs(ratios[0]):
        raise InsufficientSweep("sweep must be a positive geometric sequence")
    p, q = e.p, e.q
    if which == "u0_to_w0":
        if limit is None:
            prof = solve_w0(d.b0, d.b1, e, d.x)
            if prof is None:
                raise InsufficientSweep("no boundary limit profile for this data")
            limit = prof["profile"]
        scaled = [r.state.u * r.state.lam ** (-1 / (2 - q)) for r in results]
    elif which == "u2_to_winf":
        if limit is None:
            w = solve_winf(d, e)
            if w is None:
                raise InsufficientSweep("no superlinear limit profile for this data")
            limit = w.u
        scaled = [r.state.u * r.state.lam ** (1 / (p - 2)) for r in results]
    elif which == "u1_to_constant":
        if limit is None:
            raise InsufficientSweep("u1_to_constant needs the constant limit")
        scaled = [r.state.u for r in results]
    else:
        raise ValueError(f"unknown report kind {which!r}")
    limit = np.broadcast_to(np.asarray(limit, float), (d.n,))
    dist = np.array([float(np.max(np.abs(u - limit))) for u in scaled])
    sup = np.array([float(np.max(np.abs(r.state.u))) for r in results])
    rates = {"distance_slope": _slope(lams, dist) if np.all(dist > 0) else math.nan,
             "sup_norm_slope": _slope(lams, sup)}
    order = np.argsort(-lams)
    monotone = bool(np.all(np.diff(dist[order]) < 0))
    return {"lambdas": lams, "distances": dist, "sup_norms": sup, "rates": rates,
            "distance_decreasing": monotone}
