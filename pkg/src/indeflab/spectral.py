"""Principal eigenvalues, linearized stability and the variational constants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq, minimize

from .errors import BadSubinterval, HypothesisHViolated, PreconditionViolated, StateTouchesZero
from .functional import State, Tridiag, default_floor, jacobian, parts, s_functional
from .grid import Discretization, integrals
from .scalar_core import Exponents, fiber_constants


class Verdict(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    MARGINAL = "Marginal"


@dataclass
class EigenPair:
    value: float
    vector: np.ndarray


@dataclass
class StabilityReport:
    gamma1: float
    psi1: np.ndarray
    verdict: Verdict
    residual: float


def tol_gamma(lam):
    return 1e-7 * (1 + abs(lam))


def smallest_pair(op: Tridiag, mass: np.ndarray):
    """Smallest eigenpair of op psi = gamma diag(mass) psi, psi normalized in the mass norm."""
    r = 1.0 / np.sqrt(mass)
    d = op.diag * r * r
    e = op.off * r[:-1] * r[1:]
    vals, vecs = sla.eigh_tridiagonal(d, e, select="i", select_range=(0, 0))
    psi = vecs[:, 0] * r
    psi /= math.sqrt(float(mass @ (psi * psi)))
    if psi.sum() < 0:
        psi = -psi
    return float(vals[0]), psi


def _mu_min(d: Discretization, lam):
    op = Tridiag(d.K_diag - lam * d.w * d.m_nodes, d.K_off)
    return smallest_pair(op, d.w)


def lambda1(d: Discretization):
    """Principal eigenvalue of the Neumann pencil (K, diag(w m))."""
    md = integrals(d)
    if np.all(d.m_nodes <= 0):
        return {"value": math.inf, "eigfun": None}
    if md.Im >= 0:
        val = md.Im if md.Im > 0 else 1.0
        return {"value": 0.0, "eigfun": np.full(d.n, val ** -0.5)}
    # mu(lam) is concave with mu(0) = 0 and mu'(0) > 0; bracket its positive zero
    lo = 0.0
    hi = 1.0
    for _ in range(200):
        mu, _ = _mu_min(d, hi)
        if mu < 0:
            break
        lo = hi
        hi *= 2.0
    if lo == 0.0:
        lo = hi
        for _ in range(200):
            lo *= 0.5
            if _mu_min(d, lo)[0] > 0:
                break
    lam1 = brentq(lambda s: _mu_min(d, s)[0], lo, hi, xtol=1e-14, rtol=1e-14)
    _, phi = _mu_min(d, lam1)
    phi = np.abs(phi)
    phi /= math.sqrt(float((d.w * d.m_nodes) @ (phi * phi)))
    return {"value": float(lam1), "eigfun": phi}


def stability_mass(d: Discretization):
    mass = d.w.copy()
    mass[0] += 1.0
    mass[-1] += 1.0
    return mass


def stability_eigen(d: Discretization, s: State, e: Exponents, floor_eps=None) -> StabilityReport:
    if floor_eps is None:
        floor_eps = default_floor(s.u)
    if s.u.min() <= floor_eps:
        raise StateTouchesZero(f"min u = {s.u.min():.3e} <= floor {floor_eps:.3e}")
    J = jacobian(d, s, e, floor_eps)
    mass = stability_mass(d)
    g, psi = smallest_pair(J, mass)
    res = float(np.max(np.abs(J.matvec(psi) - g * mass * psi)))
    tg = tol_gamma(s.lam)
    if g > tg:
        v = Verdict.STABLE
    elif g < -tg:
        v = Verdict.UNSTABLE
    else:
        v = Verdict.MARGINAL
    return StabilityReport(g, psi, v, res)


def _node_index(d: Discretization, x):
    i = int(round(x * (d.n - 1)))
    if abs(d.x[i] - x) > 1e-8 * d.h:
        raise BadSubinterval(f"{x} is not a grid node")
    return i


def _sub_indices(d: Discretization, sub):
    alpha, beta = sub
    if not (0 < alpha < beta < 1):
        raise BadSubinterval(f"need 0 < alpha < beta < 1, got {sub}")
    ia, ib = _node_index(d, alpha), _node_index(d, beta)
    if ib - ia < 3:
        raise BadSubinterval("subinterval needs at least two interior nodes")
    return ia, ib


def dirichlet_mu1(d: Discretization, sub, lam: float) -> float:
    ia, ib = _sub_indices(d, sub)
    idx = slice(ia + 1, ib)
    h = d.h
    k = ib - ia - 1
    diag = np.full(k, 2.0 / h**2) - lam * d.m_nodes[idx]
    off = np.full(k - 1, -1.0 / h**2)
    vals = sla.eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 0))
    return float(vals[0])


def _check_H(d, sub, a_sign):
    ia, ib = _sub_indices(d, sub)
    a = d.a_nodes[ia + 1:ib]
    m = d.m_nodes[ia + 1:ib]
    if not np.all(a_sign * a > 0):
        raise HypothesisHViolated(f"a does not have sign {a_sign:+d} on {sub}")
    if not (np.any(m > 0) and np.any(m < 0)):
        raise HypothesisHViolated(f"m does not change sign on {sub}")


def _sup_nonneg(fn):
    # sup{s > 0 : fn(s) >= 0} for concave fn with fn(0) > 0
    lo, hi = 0.0, 1.0
    for _ in range(400):
        if fn(hi) < 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        return math.inf
    return brentq(fn, lo, hi, xtol=1e-12, rtol=1e-13)


def apriori_Lambda(d: Discretization, Dplus, Dminus) -> float:
    _check_H(d, Dplus, +1)
    _check_H(d, Dminus, -1)
    lp = _sup_nonneg(lambda s: dirichlet_mu1(d, Dplus, s))
    lm = _sup_nonneg(lambda s: dirichlet_mu1(d, Dminus, -s))
    return max(lp, lm)


def lambda_star(d: Discretization, e: Exponents) -> float:
    md = integrals(d)
    if not md.Im < 0:
        raise PreconditionViolated("lambda* needs Im < 0")
    l1 = lambda1(d)
    phi = l1["eigfun"]
    p, q = e.p, e.q
    Bphi = d.b0 * phi[0] ** q + d.b1 * phi[-1] ** q
    Aphi = float((d.w * d.a_nodes) @ phi**p)
    if Bphi >= 0 or Aphi > 0:
        raise PreconditionViolated("lambda* needs B(phi1) < 0 and A(phi1) <= 0")
    cpq = fiber_constants(e)["Cpq"]
    bracket = 1 - ((-Bphi) * (-Aphi) ** ((2 - q) / (p - 2)) / cpq) ** ((p - 2) / (p - q))
    if bracket <= 0:
        raise PreconditionViolated(f"bracket {bracket:.3e} is not positive")
    return l1["value"] / bracket


def lambda_b_sign_test(d: Discretization, e: Exponents):
    """For Im < 0: lambda_b > lambda_1 exactly when B(phi1) < 0 (reported, not asserted)."""
    l1 = lambda1(d)
    if l1["eigfun"] is None or integrals(d).Im >= 0:
        return None
    phi = l1["eigfun"]
    Bphi = d.b0 * phi[0] ** e.q + d.b1 * phi[-1] ** e.q
    return {"B_phi1": float(Bphi), "lambda_b_exceeds_lambda1": bool(Bphi < 0)}


# -- certified upper bounds ----------------------------------------------------

def _positive_pencil_min(Kd, Md):
    """Smallest positive lam with Kd u = lam Md u, for Kd positive definite."""
    nu = sla.eigh(Md, Kd, eigvals_only=True)
    top = nu.max()
    return math.inf if top <= 0 else 1.0 / top


def _subspace_bound(d: Discretization, kappa0, kappa1):
    """Pencil minimum on u with u0 = kappa0 * s, un = kappa1 * s for the free scalar s."""
    K = d.K.toarray()
    Mm = np.diag(d.w * d.m_nodes)
    n = d.n
    cols = []
    inner = np.eye(n)[:, 1:-1]
    edge = np.zeros(n)
    edge[0], edge[-1] = kappa0, kappa1
    if kappa0 or kappa1:
        cols.append(edge[:, None])
    P = np.hstack(cols + [inner])
    try:
        return _positive_pencil_min(P.T @ K @ P, P.T @ Mm @ P)
    except np.linalg.LinAlgError:
        # the subspace contains constants; the constant candidate covers it
        return math.inf


def _cosine_basis(x, dim):
    return np.stack([np.cos(k * np.pi * x) for k in range(dim)], axis=1)


def _repair(d, e, u, anchor, which):
    """Feasible point on the segment from u to a feasible anchor, closest to u."""
    if anchor is None:
        return math.inf
    # normalize so that neither end dominates the mix
    u = u / np.max(np.abs(u))
    anchor = anchor / np.max(np.abs(anchor))
    lo, hi = 0.0, 1.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if math.isfinite(_feasible_value(d, e, (1 - mid) * u + mid * anchor, which)):
            hi = mid
        else:
            lo = mid
    return _feasible_value(d, e, (1 - hi) * u + hi * anchor, which)


def _quotient_search(d, e, rng, which, dim=16, iters=200, start=None, anchor=None):
    """One restart of constrained minimization of the normalized stiffness energy.

    start, when given, is a nodal vector whose cosine coefficients seed the
    search; an infeasible end point is pulled toward the feasible anchor.
    """
    P = _cosine_basis(d.x, dim)
    Kp = P.T @ (d.K @ P)

    def vec(c):
        return P @ c

    def denom(c):
        u = vec(c)
        if which == "s":
            val = s_functional(d, u, e)
            return -1.0 if val is None else val
        return float((d.w * d.m_nodes) @ (u * u))

    def objective(c):
        den = denom(c)
        if den <= 0:
            return 1e6
        return float(c @ Kp @ c) / den

    cons = [{"type": "eq", "fun": lambda c: float(c @ c) - 1.0},
            {"type": "ineq", "fun": lambda c: denom(c) * 1e3}]
    if which in ("a", "s"):
        cons.append({"type": "ineq", "fun": lambda c: parts(d, vec(c), 0.0, e)[1] * 1e3})
    if which in ("b", "s"):
        cons.append({"type": "ineq", "fun": lambda c: parts(d, vec(c), 0.0, e)[2] * 1e3})
    if start is None:
        c0 = rng.standard_normal(dim) / (1.0 + np.arange(dim))
    else:
        c0 = np.linalg.lstsq(P, start, rcond=None)[0]
    c0 /= np.linalg.norm(c0)
    res = minimize(objective, c0, method="SLSQP", constraints=cons,
                   options={"maxiter": iters, "ftol": 1e-12})
    u = vec(res.x)
    val = _feasible_value(d, e, u, which)
    return val if math.isfinite(val) else _repair(d, e, u, anchor, which)


def _feasible_value(d, e, u, which):
    _, A, B = parts(d, u, 0.0, e)
    if which in ("a", "s") and A < 0:
        return math.inf
    if which in ("b", "s") and B < 0:
        return math.inf
    if which == "s":
        den = s_functional(d, u, e)
    else:
        den = float((d.w * d.m_nodes) @ (u * u))
    if den is None or den <= 0:
        return math.inf
    return float(u @ d.apply_K(u)) / den


def _structured_candidates(d, e, which):
    """Quotients of fixed candidates, and the best finite candidate vector (or None)."""
    cands = [np.ones(d.n)]
    l1 = lambda1(d)
    if l1["eigfun"] is not None:
        cands.append(l1["eigfun"])
    # bumps on the positive part of a have A > 0
    apos = np.maximum(d.a_nodes, 0.0)
    if np.any(apos > 0):
        cands += [apos, apos ** 2]
    vals = [_feasible_value(d, e, u, which) for u in cands]
    best = int(np.argmin(vals))
    start = cands[best] if math.isfinite(vals[best]) else None
    if which == "b":
        b0, b1, q = d.b0, d.b1, e.q
        if b0 < 0 and b1 < 0:
            vals.append(_subspace_bound(d, 0.0, 0.0))
        elif b0 < 0 <= b1:
            kap = (b1 / -b0) ** (1 / q)
            vals.append(_subspace_bound(d, kap, 1.0))
        elif b1 < 0 <= b0:
            kap = (b0 / -b1) ** (1 / q)
            vals.append(_subspace_bound(d, 1.0, kap))
    return vals, start


def variational_bounds(d: Discretization, e: Exponents, lambda_probe_grid=None, restarts: int = 4, seed: int = 0):
    """Upper estimates of lambda_a, lambda_b, lambda_s from feasible candidates.

    Every value is the quotient of a feasible discrete u, so the discrete
    constant is at most the reported value.  A probe grid, when given, reports
    the first probe lambda at which some feasible candidate has E_lambda < 0.
    """
    if restarts < 1:
        raise PreconditionViolated("restarts must be >= 1")
    out = {}
    for which in ("a", "b", "s"):
        vals, start = _structured_candidates(d, e, which)
        for k in range(restarts):
            rng = np.random.default_rng([seed, k, ord(which)])
            # the first restart refines the best fixed candidate
            vals.append(_quotient_search(d, e, rng, which, start=start if k == 0 else None, anchor=start))
        best = min(vals)
        out[f"lambda_{which}_ub"] = float(best)
        if lambda_probe_grid is not None:
            crossing = [float(t) for t in lambda_probe_grid if t > best]
            out[f"lambda_{which}_probe"] = min(crossing) if crossing else math.inf
    return out
