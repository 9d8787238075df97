"""Checks for the mixed-boundary comparison principle and for positivity in 1D."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import BadSubinterval, HypothesisFailed, NegativeState, PreconditionViolated
from .functional import Tridiag
from .grid import Discretization
from .scalar_core import Exponents
from .spectral import smallest_pair


class Positivity(str, Enum):
    POSITIVE = "Positive"
    TOUCHES_ZERO = "TouchesZero"
    NOT_NONTRIVIAL = "NotNontrivial"


@dataclass
class ComparisonProblem:
    """-u'' = f(u) on a closed subinterval, u = 0 on the Dirichlet end, u' = g(u) outward on the other.

    f maps nodal values on the subinterval to nodal reaction values (each node
    keeps its own coefficients); g maps the value at the flux end to the flux.
    """
    x: np.ndarray
    dirichlet: str
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[float], float]

    def __post_init__(self):
        if self.dirichlet not in ("left", "right"):
            raise ValueError("dirichlet must be 'left' or 'right'; the other end carries the flux")
        self.x = np.asarray(self.x, float)
        if self.x.size < 3:
            raise BadSubinterval("subinterval needs at least three nodes")

    @property
    def h(self):
        return float(self.x[1] - self.x[0])

    @property
    def dirichlet_index(self):
        return 0 if self.dirichlet == "left" else self.x.size - 1

    @property
    def flux_index(self):
        return self.x.size - 1 if self.dirichlet == "left" else 0

    def weights(self):
        w = np.full(self.x.size, self.h)
        w[0] = w[-1] = self.h / 2
        return w

    def stiffness(self):
        h = self.h
        diag = np.full(self.x.size, 2.0 / h)
        diag[0] = diag[-1] = 1.0 / h
        return Tridiag(diag, np.full(self.x.size - 1, -1.0 / h))

    def residual(self, u):
        """Weak residual against the lumped nodal test functions, Dirichlet node dropped."""
        u = np.asarray(u, float)
        R = self.stiffness().matvec(u) - self.weights() * self.f(u)
        R[self.flux_index] -= self.g(float(u[self.flux_index]))
        return np.delete(R, self.dirichlet_index)

    def residual_scale(self, u):
        u = np.asarray(u, float)
        K = self.stiffness()
        au = np.abs(u)
        s = np.abs(K.diag) * au
        s[:-1] += np.abs(K.off) * au[1:]
        s[1:] += np.abs(K.off) * au[:-1]
        s += self.weights() * np.abs(self.f(u))
        s[self.flux_index] += abs(self.g(float(u[self.flux_index])))
        return np.delete(s, self.dirichlet_index)


def _t_grid(top):
    return np.geomspace(1e-6, 10.0 * max(top, 1e-6), 200)


def _check_monotone(cp: ComparisonProblem, top: float):
    ts = _t_grid(top)
    ratios = np.array([cp.f(np.full(cp.x.size, t)) / t for t in ts])
    # f(x, t)/t decreasing in t at every node
    steps = np.diff(ratios, axis=0)
    slack = 1e-12 * (np.abs(ratios[:-1]) + np.abs(ratios[1:]))
    if np.any(steps > slack):
        k, i = np.unravel_index(np.argmax(steps - slack), steps.shape)
        raise HypothesisFailed("monotonicity", f"f(x,t)/t increases at x = {cp.x[i]:.4g}, t = {ts[k]:.3e}")
    if np.any(np.all(np.abs(steps) <= slack, axis=0)):
        i = int(np.argmax(np.all(np.abs(steps) <= slack, axis=0)))
        raise HypothesisFailed("monotonicity", f"f(x,t)/t is constant in t at x = {cp.x[i]:.4g}")
    gr = np.array([cp.g(float(t)) / t for t in ts])
    gsteps = np.diff(gr)
    if np.any(gsteps > 1e-12 * (np.abs(gr[:-1]) + np.abs(gr[1:]))):
        k = int(np.argmax(gsteps))
        raise HypothesisFailed("boundary_monotonicity", f"g(t)/t increases at t = {ts[k]:.3e}")


def comparison_check(cp: ComparisonProblem, u, v, tol: float = 1e-9):
    """Verify the hypotheses of the comparison principle for (u, v), then whether u <= v.

    u must be a subsolution and v a supersolution in the lumped weak sense,
    i.e. nodewise residual signs; the tolerances are relative to the size of
    the residual terms at each node.
    """
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    top = float(max(np.max(np.abs(u)), np.max(np.abs(v))))
    if u.min() < -1e-14 * top or v.min() < -1e-14 * top:
        raise HypothesisFailed("nonnegativity", "u and v must be nonnegative")
    j = cp.dirichlet_index
    if abs(u[j]) > 1e-14 * top or v[j] < u[j]:
        raise HypothesisFailed("dirichlet_order", "need u = 0 <= v on the Dirichlet end")
    _check_monotone(cp, top)
    Ru, Su = cp.residual(u), cp.residual_scale(u)
    if np.any(Ru > tol * Su):
        i = int(np.argmax(Ru - tol * Su))
        raise HypothesisFailed("subsolution", f"residual of u is positive ({Ru[i]:.3e}) at free node {i}")
    Rv, Sv = cp.residual(v), cp.residual_scale(v)
    if np.any(Rv < -tol * Sv):
        i = int(np.argmin(Rv + tol * Sv))
        raise HypothesisFailed("supersolution", f"residual of v is negative ({Rv[i]:.3e}) at free node {i}")
    gap = u - v
    margin = 16 * np.finfo(float).eps * top
    violation = float(max(0.0, gap.max()))
    return {"hypotheses_ok": True, "ordered": bool(gap.max() <= margin), "max_violation": violation}


def positivity_check(u, rel_tol: float = 1e-12, zero_tol: float = 0.0):
    """Positive iff every node, endpoints included, exceeds rel_tol * max|u|."""
    u = np.asarray(u, float)
    sup = float(np.max(np.abs(u))) if u.size else 0.0
    if sup <= zero_tol:
        return {"min_interior": float(u[1:-1].min()) if u.size > 2 else 0.0,
                "endpoint_values": (float(u[0]), float(u[-1])), "verdict": Positivity.NOT_NONTRIVIAL}
    pos_tol = rel_tol * sup
    if u.min() < -pos_tol:
        raise NegativeState(f"min u = {u.min():.3e} is below -{pos_tol:.3e}")
    verdict = Positivity.POSITIVE if u.min() > pos_tol else Positivity.TOUCHES_ZERO
    return {"min_interior": float(u[1:-1].min()), "endpoint_values": (float(u[0]), float(u[-1])),
            "verdict": verdict}


# -- construction used to check that positive solutions stay positive near a flux end --

def mixed_principal_pair(cp: ComparisonProblem, shift: np.ndarray, robin: float):
    """Principal pair of (K + W shift - robin e_flux e_flux^T) phi = sigma W phi with phi = 0 on the Dirichlet end."""
    K = cp.stiffness()
    w = cp.weights()
    keep = np.delete(np.arange(cp.x.size), cp.dirichlet_index)
    diag = (K.diag + w * shift)[keep].copy()
    off = K.off[keep[:-1]] if cp.dirichlet == "right" else K.off[1:]
    fl = int(np.where(keep == cp.flux_index)[0][0])
    diag[fl] -= robin
    sigma, phi = smallest_pair(Tridiag(diag, off), w[keep])
    full = np.zeros(cp.x.size)
    full[keep] = phi
    full /= np.max(np.abs(full))
    return sigma, full


def comparison_setup(d: Discretization, e: Exponents, lam: float, u_lambda, width: float, side: str = "right"):
    """Sub/supersolution pair on a boundary layer of the given width at the flux end.

    The layer D has a Dirichlet end inside the domain and the flux end on the
    boundary.  With m_inf = max|m| and a_inf = max|a|, the reaction
    f(t) = -lam (m_inf t + a_inf t^(p-1)) bounds the true one from below, so
    the solution u_lambda restricted to D is a supersolution.  The subsolution
    is eps phi1, where phi1 is the principal eigenfunction with a Robin term of
    strength lam*kappa at the flux end, and kappa is doubled until sigma1 < 0.
    """
    if lam <= 0:
        raise PreconditionViolated("the construction needs lam > 0")
    b = d.b1 if side == "right" else d.b0
    if b <= 0:
        raise PreconditionViolated("the flux end needs a positive boundary weight")
    k = int(round(width / d.h))
    if k < 2 or k >= d.n - 1:
        raise BadSubinterval(f"width {width} gives {k} cells")
    idx = np.arange(d.n - 1 - k, d.n) if side == "right" else np.arange(0, k + 1)
    p, q = e.p, e.q
    m_inf = float(np.max(np.abs(d.m_nodes)))
    a_inf = float(np.max(np.abs(d.a_nodes)))
    cp = ComparisonProblem(d.x[idx], "left" if side == "right" else "right",
                           lambda t: -lam * (m_inf * t + a_inf * np.abs(t) ** (p - 1)),
                           lambda t: lam * b * abs(t) ** (q - 1))
    kappa = 1.0
    shift = np.full(idx.size, lam * m_inf)
    for _ in range(60):
        sigma, phi = mixed_principal_pair(cp, shift, lam * kappa)
        if sigma < 0:
            break
        kappa *= 2.0
    else:
        raise PreconditionViolated("could not make the principal value negative")
    caps = [(-sigma / (lam * a_inf)) ** (1 / (p - 2)) if a_inf > 0 else math.inf,
            (b / kappa) ** (1 / (2 - q))]
    eps = 0.5 * min(caps)
    return {"problem": cp, "sub": eps * phi, "super": np.asarray(u_lambda, float)[idx].copy(), "sigma1": sigma, "kappa": kappa,
            "eps": eps, "eps_cap": min(caps), "indices": idx}
