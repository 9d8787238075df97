"""Newton solver, the two limit profiles and the Lyapunov-Schmidt reduction."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, solve_banded
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .errors import MaxIterExceeded, OutOfNeighborhood, SingularJacobian
from .fibered import FiberedProblem, lbfgs_descent
from .functional import State, d_reaction_du, jacobian, reaction, residual, residual_scale
from .grid import Discretization, integrals
from .scalar_core import Exponents, NehariClass

EPS = np.finfo(float).eps


@dataclass
class NewtonOptions:
    tol_res: float = 1e-11
    max_iter: int = 50
    damping: bool = True
    floor_eps: float | None = None


def _converged(d, s, e, F, tol_res):
    fn = float(np.max(np.abs(F)))
    target = max(tol_res * float(np.max(np.abs(s.u))), 64 * EPS * residual_scale(d, s, e, shifted=False))
    return fn <= target, fn


def newton(d: Discretization, s0: State, e: Exponents, opts: NewtonOptions | None = None) -> State:
    """Damped Newton on F(u, lam) = 0 at fixed lam.

    Converged when ||F||_inf <= tol_res * ||u||_inf, or when F is at the
    rounding floor of its own terms.  The returned state carries .iterations.
    """
    opts = opts or NewtonOptions()
    s = State(s0.u.copy(), s0.lam)
    F = residual(d, s, e)
    for it in range(opts.max_iter + 1):
        ok, fn = _converged(d, s, e, F, opts.tol_res)
        if ok:
            s.iterations = it
            s.residual = fn
            return s
        if it == opts.max_iter:
            break
        J = jacobian(d, s, e, opts.floor_eps)
        try:
            du = solve_banded((1, 1), J.banded(), -F)
        except (LinAlgError, ValueError) as exc:
            raise SingularJacobian(str(exc)) from exc
        if not np.all(np.isfinite(du)):
            raise SingularJacobian("non-finite Newton step")
        alpha = 1.0
        f2 = float(F @ F)
        while True:
            trial = State(s.u + alpha * du, s.lam)
            Ft = residual(d, trial, e)
            if not opts.damping or float(Ft @ Ft) <= (1 - 1e-4 * alpha) * f2 or alpha < 1e-3:
                break
            alpha *= 0.5
        s, F = trial, Ft
    raise MaxIterExceeded(f"no convergence in {opts.max_iter} iterations, |F| = {fn:.3e}")


# -- limit problems ----------------------------------------------------------

def solve_w0(b0: float, b1: float, e: Exponents, x=None):
    """Positive harmonic w = alpha + beta x with the sublinear flux conditions, or None."""
    q = e.q
    if x is None:
        x = np.linspace(0.0, 1.0, 401)
    if b0 < 0 < b1:
        r = (-b0 / b1) ** (1 / (q - 1))
        if r <= 1:
            return None
        alpha = (-b0 / (r - 1)) ** (1 / (2 - q))
        beta = (r - 1) * alpha
    elif b1 < 0 < b0:
        r = (-b1 / b0) ** (1 / (q - 1))
        if r <= 1:
            return None
        right = (-b1 / (r - 1)) ** (1 / (2 - q))
        alpha = r * right
        beta = right - alpha
    else:
        return None
    return {"alpha": alpha, "beta": beta, "profile": alpha + beta * np.asarray(x)}


def winf_problem(d: Discretization):
    """Discretization of the superlinear limit: m = 0 and no boundary flux, at lam = 1."""
    return d.with_weights(m=np.zeros(d.n), b0=0.0, b1=0.0)


def solve_winf(d: Discretization, e: Exponents, opts: NewtonOptions | None = None, restarts: int = 4, seed: int = 0):
    """Positive Neumann solution of -w'' = a w^(p-1), or None."""
    dd = winf_problem(d)
    a = d.a_nodes
    if not np.any(a > 0):
        return None
    prob = FiberedProblem(dd, e, 1.0, NehariClass.MINUS, lambda E, A, B: A > 0)
    bump = np.maximum(a, 0.0) + 1e-3 * np.max(a)
    best = None
    for k in range(restarts):
        rng = np.random.default_rng([seed, k])
        z0 = bump if k == 0 else bump * (1 + 0.3 * rng.random(d.n)) + 0.2 * np.max(bump) * rng.random(d.n)
        fp = lbfgs_descent(prob, z0)
        if fp is None:
            continue
        try:
            s = newton(dd, State(fp.t * np.abs(fp.z), 1.0), e, opts)
        except (MaxIterExceeded, SingularJacobian):
            continue
        if s.u.min() <= 0:
            continue
        val = fp.value
        if best is None or val < best[0] - 1e-14 * abs(val):
            best = (val, s)
    return None if best is None else best[1]


# -- Lyapunov-Schmidt reduction ----------------------------------------------

@dataclass
class LSPoint:
    t: float
    lam: float
    v: np.ndarray
    Phi: float


def _ls_system(d, e, lam, t, v, mu, s_aux):
    u = t + v
    G = reaction(d, u, e)
    omega = float(d.w.sum())
    R = d.apply_K(v) - lam * G + lam * d.w * s_aux / omega + d.w * mu
    r_aux = s_aux - float(G.sum())
    r_mean = float(d.w @ v)
    return R, r_aux, r_mean, G


def ls_v(d: Discretization, e: Exponents, lam: float, t: float, opts: NewtonOptions | None = None, v0=None) -> LSPoint:
    """Zero-mean part v(lam, t) of the reduction, by Newton on a bordered system."""
    opts = opts or NewtonOptions()
    n = d.n
    v = np.zeros(n) if v0 is None else np.asarray(v0, float).copy()
    v -= float(d.w @ v) / float(d.w.sum())
    if lam == 0.0:
        Phi = float(reaction(d, t + v * 0.0, e).sum())
        return LSPoint(t, lam, np.zeros(n), Phi)
    mu = 0.0
    s_aux = float(reaction(d, t + v, e).sum())
    omega = float(d.w.sum())
    Kmat = d.K.tocsc()
    prev = math.inf
    for it in range(opts.max_iter):
        R, r_aux, r_mean, G = _ls_system(d, e, lam, t, v, mu, s_aux)
        dG = d_reaction_du(d, t + v, e, opts.floor_eps)
        # unknowns: v (n), s_aux, mu
        top = Kmat - lam * sp.diags(dG)
        col_s = sp.csc_matrix((lam / omega) * d.w[:, None])
        col_mu = sp.csc_matrix(d.w[:, None])
        row_aux = sp.csr_matrix(-dG[None, :])
        row_mean = sp.csr_matrix(d.w[None, :])
        M = sp.bmat([[top, col_s, col_mu],
                     [row_aux, sp.csr_matrix([[1.0]]), None],
                     [row_mean, None, None]], format="csc")
        rhs = -np.concatenate([R, [r_aux, r_mean]])
        step = spsolve(M, rhs)
        if not np.all(np.isfinite(step)):
            raise SingularJacobian("bordered reduction system is singular")
        v = v + step[:n]
        s_aux += step[n]
        mu += step[n + 1]
        if np.max(np.abs(v)) > t / 2:
            raise OutOfNeighborhood(f"|v| = {np.max(np.abs(v)):.3e} exceeds t/2 = {t / 2:.3e}")
        size = float(np.max(np.abs(step[:n])))
        stalled = it > 3 and size >= prev and size <= 1e-10 * t
        prev = size
        if size <= 1e-14 * t or stalled:
            v -= float(d.w @ v) / omega
            Phi = float(reaction(d, t + v, e).sum())
            return LSPoint(t, lam, v, Phi)
    raise MaxIterExceeded("reduction Newton did not converge")


def ls_phi(d: Discretization, e: Exponents, lam: float, t: float, opts=None) -> float:
    return ls_v(d, e, lam, t, opts).Phi


def v_lambda(d: Discretization, e: Exponents, t: float):
    """d v / d lam at (0, t): zero-mean solution of K v = G(t) - w Phi(0, t) / |Omega|."""
    n = d.n
    G = reaction(d, np.full(n, float(t)), e)
    omega = float(d.w.sum())
    rhs = G - d.w * float(G.sum()) / omega
    M = sp.bmat([[d.K.tocsc(), sp.csc_matrix(d.w[:, None])],
                 [sp.csr_matrix(d.w[None, :]), None]], format="csc")
    sol = spsolve(M, np.concatenate([rhs, [0.0]]))
    return sol[:n]


def _richardson(f, h):
    d1, d2 = f(h), f(h / 2)
    return (4 * d2 - d1) / 3


def ls_derivatives(d: Discretization, e: Exponents, t_star: float, h_fd: float | None = None, opts=None):
    """Finite-difference Phi_t, Phi_tt, Phi_lambda at (0, t_star) next to their closed forms."""
    h = 1e-4 * max(1.0, t_star) if h_fd is None else h_fd
    p, q = e.p, e.q

    def phi0(t):
        return ls_phi(d, e, 0.0, t, opts)

    def dt(hh):
        return (phi0(t_star + hh) - phi0(t_star - hh)) / (2 * hh)

    def dtt(hh):
        return (phi0(t_star + hh) - 2 * phi0(t_star) + phi0(t_star - hh)) / hh**2

    def dl(hh):
        return (ls_phi(d, e, hh, t_star, opts) - ls_phi(d, e, -hh, t_star, opts)) / (2 * hh)

    md = integrals(d)
    c = t_star
    vl = v_lambda(d, e, c)
    dG = d_reaction_du(d, np.full(d.n, float(c)), e)
    out = {
        "t_star": c,
        "h_fd": h,
        "Phi": phi0(c),
        "Phi_t": _richardson(dt, h),
        "Phi_tt": _richardson(dtt, h),
        "Phi_lambda": _richardson(dl, h),
        "Phi_t_closed": md.Im + (p - 1) * c ** (p - 2) * md.Ia + (q - 1) * c ** (q - 2) * md.Ib,
        "Phi_tt_closed": (p - 1) * (p - 2) * c ** (p - 3) * md.Ia + (q - 1) * (q - 2) * c ** (q - 3) * md.Ib,
        # reduces to the general form at a double zero of phi
        "Phi_tt_double_zero": -(2 - q) * (p - 2) * md.Im / c,
        "Phi_lambda_closed": float(dG @ vl),
        "Phi_lambda_energy": (q - 1) / c * float(vl @ d.apply_K(vl)),
        "v_lambda": vl,
    }
    return out


def ls_branch_point(d: Discretization, e: Exponents, lam: float, t_lo: float, t_hi: float, opts=None) -> LSPoint:
    """Solve Phi(lam, t) = 0 for t in a bracket and return the reduced point."""
    t = brentq(lambda s: ls_phi(d, e, lam, s, opts), t_lo, t_hi, xtol=1e-15, rtol=1e-15)
    return ls_v(d, e, lam, t, opts)
