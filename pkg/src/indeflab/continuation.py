"""Pseudo-arclength tracing of solution branches in (lambda, u).

Branches are traced in blown-up coordinates u = t + lam * y with t the mean
of u and y of zero mean.  Dividing the equation by lam gives

    K y = G(t + lam y),    sum(w y) = 0,

which no longer contains the line of constant solutions at lam = 0; the
branches cross lam = 0 transversally at the zeros of phi (the tangent there
is the one of the reduction, dt/dlam = -Phi_lam / Phi_t).  Near the constant
line the physical residual is dominated by rounding, so without this change
the corrector cannot tell the two solution curves apart.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.linalg import spsolve

from .errors import BranchLeftDomain, InsufficientPoints, SingularJacobian, StallDetected, StateTouchesZero
from .functional import State, d_reaction_du, nehari_classify, reaction, residual, residual_scale
from .grid import Discretization
from .scalar_core import Exponents, NehariClass
from .solve import EPS, NewtonOptions, newton, v_lambda
from .spectral import stability_eigen

CSV_COLUMNS = ["arclength", "lambda", "u_mean", "u_min", "u_max", "h1_norm",
               "gamma1", "nehari_class", "fold_flag"]


@dataclass
class ContinuationOptions:
    ds_min: float = 1e-7
    ds_max: float = 0.05
    lam_min: float = -math.inf
    lam_max: float = math.inf
    corrector_iter: int = 15
    tol_rel: float = 1e-11
    # corrector displacement per unit step and cosine between successive tangents
    max_correction: float = 0.1
    min_turn_cos: float = 0.995
    # min u below floor * max u ends the branch
    positivity_floor: float = 1e-8
    newton: NewtonOptions = field(default_factory=NewtonOptions)


@dataclass
class BranchPoint:
    lam: float
    u: np.ndarray
    sup_norm: float
    min_u: float
    u_mean: float
    h1_norm: float
    gamma1: float
    nehari: NehariClass | None
    arclength: float
    tangent_lam: float = 0.0
    fold: bool = False
    # blown-up coordinates (y, t, lam) when produced by trace
    coords: np.ndarray | None = field(default=None, repr=False)


@dataclass
class Branch:
    points: list
    folds: list
    seed_label: str
    stop_reason: str = "n_steps"

    @property
    def lams(self):
        return np.array([p.lam for p in self.points])

    @property
    def means(self):
        return np.array([p.u_mean for p in self.points])


def _make_point(d, e, u, lam, arclength, tangent_lam):
    s = State(u, lam)
    sup = float(np.max(np.abs(u)))
    try:
        gamma = stability_eigen(d, s, e, None).gamma1
    except StateTouchesZero:
        gamma = math.nan
    try:
        cls = nehari_classify(d, s, e).cls
    except Exception:
        cls = None
    h1 = math.sqrt(float(u @ d.apply_K(u) + d.w @ (u * u)))
    return BranchPoint(float(lam), u.copy(), sup, float(u.min()), float(d.w @ u) / float(d.w.sum()),
                       h1, float(gamma), cls, float(arclength), float(tangent_lam))


# -- blown-up coordinates --------------------------------------------------------
# X = (y, t, lam) stored as one vector of length n + 2.

def _unpack(X, n):
    return X[:n], float(X[n]), float(X[n + 1])


def _physical(X, n):
    y, t, lam = _unpack(X, n)
    return t + lam * y, lam


def _metric(d, X_base, dX):
    """dt^2 + dlam^2 + lam^2 |dy|_W^2, the physical W-norm when lam is frozen."""
    n = d.n
    lam = float(X_base[n + 1])
    dy = dX[:n]
    return float(dX[n] ** 2 + dX[n + 1] ** 2 + lam * lam * (d.w @ (dy * dy)))


def _dot(d, X_base, a, b):
    n = d.n
    lam = float(X_base[n + 1])
    return float(a[n] * b[n] + a[n + 1] * b[n + 1] + lam * lam * (d.w @ (a[:n] * b[:n])))


def _equations(d, e, X):
    n = d.n
    y, t, lam = _unpack(X, n)
    u = t + lam * y
    H = d.apply_K(y) - reaction(d, u, e)
    return H, float(d.w @ y), u


def _blowup_scale(d, e, X):
    """Size of the terms in K y - G(u), for a relative convergence test."""
    n = d.n
    y, _, lam = _unpack(X, n)
    u, _ = _physical(X, n)
    ay = np.abs(y)
    k = np.abs(d.K_diag) * ay
    k[:-1] += np.abs(d.K_off) * ay[1:]
    k[1:] += np.abs(d.K_off) * ay[:-1]
    s = State(u, 1.0)
    return float(np.max(k)) + residual_scale(d, s, e, shifted=False) - float(np.max(np.abs(d.K_diag) * np.abs(u)))


def _jacobian(d, e, X, row, row_last, floor):
    n = d.n
    y, t, lam = _unpack(X, n)
    u = t + lam * y
    dG = d_reaction_du(d, u, e, floor)
    Jy = d.K - lam * sp.diags(dG)
    col_t = sp.csc_matrix(-dG[:, None])
    col_l = sp.csc_matrix(-(dG * y)[:, None])
    mean_row = sp.csr_matrix(np.concatenate([d.w, [0.0, 0.0]])[None, :])
    last = sp.csr_matrix(np.concatenate([row, row_last])[None, :])
    top = sp.hstack([Jy, col_t, col_l])
    return sp.vstack([top, mean_row, last], format="csc")


def _weighted_row(d, X_base, tau):
    n = d.n
    lam = float(X_base[n + 1])
    return lam * lam * d.w * tau[:n], np.array([tau[n], tau[n + 1]])


def _tangent(d, e, X, tau_prev, floor=None):
    """Unit tangent (in the blown-up metric) oriented along tau_prev."""
    row, row_last = _weighted_row(d, X, tau_prev)
    if not np.any(row) and not np.any(row_last):
        raise SingularJacobian("orientation vector is zero")
    M = _jacobian(d, e, X, row, row_last, floor)
    rhs = np.zeros(d.n + 2)
    rhs[-1] = 1.0
    z = spsolve(M, rhs)
    if not np.all(np.isfinite(z)):
        raise SingularJacobian("tangent system is singular")
    return z / math.sqrt(_metric(d, X, z))


def _correct(d, e, X_hat, X_base, tau, opts):
    """Newton on the blown-up equations plus the pseudo-arclength hyperplane."""
    n = d.n
    X = X_hat.copy()
    row, row_last = _weighted_row(d, X_base, tau)
    for _ in range(opts.corrector_iter + 1):
        H, mean, u = _equations(d, e, X)
        if u.min() <= 0:
            return None
        g = _dot(d, X_base, X - X_hat, tau)
        hn = float(np.max(np.abs(H)))
        if hn <= max(opts.tol_rel, 64 * EPS) * _blowup_scale(d, e, X) and abs(mean) <= 1e-13 * (1 + float(np.max(np.abs(X[:n])))) \
                and abs(g) <= 1e-13:
            return _polish(d, e, X, X_base, X_hat, tau, row, row_last, hn, opts)
        M = _jacobian(d, e, X, row, row_last, opts.newton.floor_eps)
        step = spsolve(M, -np.concatenate([H, [mean, g]]))
        if not np.all(np.isfinite(step)):
            return None
        X = X + step
    return None


def _polish(d, e, X, X_base, X_hat, tau, row, row_last, hn, opts):
    # one more Newton step takes an accepted point down to rounding level
    H, mean, _ = _equations(d, e, X)
    g = _dot(d, X_base, X - X_hat, tau)
    M = _jacobian(d, e, X, row, row_last, opts.newton.floor_eps)
    step = spsolve(M, -np.concatenate([H, [mean, g]]))
    if not np.all(np.isfinite(step)):
        return X
    Xp = X + step
    Hp, _, up = _equations(d, e, Xp)
    if up.min() <= 0 or float(np.max(np.abs(Hp))) > hn:
        return X
    return Xp


def trivial_tangent(d: Discretization, e: Exponents, c: float):
    """du/dlam of the branch leaving the constant c at lam = 0.

    From the reduction: dt/dlam = -Phi_lam / Phi_t and du/dlam = dt/dlam + v_lambda.
    """
    n = d.n
    vl = v_lambda(d, e, c)
    dG = d_reaction_du(d, np.full(n, float(c)), e)
    phi_t = float(dG.sum())
    if phi_t == 0.0:
        raise SingularJacobian("Phi_t vanishes: the constant is a degenerate zero")
    return -float(dG @ vl) / phi_t + vl


def _is_constant(u):
    return float(np.max(u) - np.min(u)) <= 1e-12 * max(float(np.max(np.abs(u))), 1e-300)


def _seed_coordinates(d, e, seed, opts):
    u0 = np.asarray(seed.u, float)
    lam0 = float(seed.lam)
    n = d.n
    if lam0 == 0.0:
        if not _is_constant(u0):
            raise SingularJacobian("a seed at lam = 0 must be constant")
        c = float(u0[0])
        return np.concatenate([v_lambda(d, e, c), [c, 0.0]])
    s0 = newton(d, State(u0, lam0), e, opts.newton)
    t = float(d.w @ s0.u) / float(d.w.sum())
    y = (s0.u - t) / lam0
    y -= float(d.w @ y) / float(d.w.sum())
    return np.concatenate([y, [t, lam0]])


def _physical_step(d, X0, X1):
    n = d.n
    u0, l0 = _physical(X0, n)
    u1, l1 = _physical(X1, n)
    du = u1 - u0
    return math.sqrt(float(d.w @ (du * du)) + (l1 - l0) ** 2)


def trace(d: Discretization, seed: State, e: Exponents, direction: int = 1, ds: float = 0.01,
          n_steps: int = 100, opts: ContinuationOptions | None = None, label: str = "branch",
          strict: bool = False) -> Branch:
    """Trace a branch from a converged seed or from a constant on lam = 0.

    direction fixes the sign of the initial lambda velocity.  The branch ends
    after n_steps accepted points, at the lambda window, on stall or when
    min u drops below the positivity floor; the reason is kept in stop_reason.
    With strict=True stall and domain exits raise, carrying the partial branch.
    """
    opts = opts or ContinuationOptions()
    direction = 1 if direction >= 0 else -1
    n = d.n
    X = _seed_coordinates(d, e, seed, opts)
    orient = np.zeros(n + 2)
    orient[n + 1] = direction
    tau = _tangent(d, e, X, orient)
    if tau[n + 1] * direction < 0:
        tau = -tau

    u, lam = _physical(X, n)
    points = [_make_point(d, e, u, lam, 0.0, tau[n + 1])]
    points[0].coords = X.copy()
    arc = 0.0
    stop = "n_steps"
    h = ds
    while len(points) < n_steps:
        if not opts.lam_min <= lam <= opts.lam_max:
            stop = "lambda_bound"
            break
        accepted = None
        while h >= opts.ds_min:
            X_hat = X + h * tau
            Xn = _correct(d, e, X_hat, X, tau, opts)
            if Xn is not None:
                dX = Xn - X
                step = math.sqrt(_metric(d, X, dX))
                moved = math.sqrt(_metric(d, X, Xn - X_hat))
                cosang = _dot(d, X, dX, tau) / step if step > 0 else -1.0
                if cosang > 0.8 and moved <= opts.max_correction * h:
                    try:
                        tn = _tangent(d, e, Xn, tau)
                    except SingularJacobian:
                        tn = dX / step
                    turn = _dot(d, Xn, tn, tau) / math.sqrt(_metric(d, Xn, tau))
                    if turn >= opts.min_turn_cos or h <= 4 * opts.ds_min:
                        accepted = (Xn, tn)
                        break
            h *= 0.5
        if accepted is None:
            stop = "stall"
            break
        Xn, tn = accepted
        arc += _physical_step(d, X, Xn)
        X, tau = Xn, tn
        u, lam = _physical(X, n)
        pt = _make_point(d, e, u, lam, arc, tau[n + 1])
        pt.coords = X.copy()
        points.append(pt)
        if pt.min_u <= opts.positivity_floor * pt.sup_norm:
            stop = "left_domain"
            break
        h = min(1.5 * h, opts.ds_max)

    folds = _mark_folds(points)
    br = Branch(points, folds, label, stop)
    if strict and stop == "stall":
        exc = StallDetected(f"step size fell below {opts.ds_min}")
        exc.branch = br
        raise exc
    if strict and stop == "left_domain":
        exc = BranchLeftDomain("min u fell below the positivity floor")
        exc.branch = br
        raise exc
    return br


def _mark_folds(points):
    folds = []
    for i in range(1, len(points)):
        a, b = points[i - 1].tangent_lam, points[i].tangent_lam
        if a * b < 0:
            # keep the point with the more extreme lambda in the old direction
            j = i - 1 if (points[i - 1].lam - points[i].lam) * a > 0 else i
            if j not in folds:
                folds.append(j)
    for j in folds:
        points[j].fold = True
    return folds


def fold_fit(branch: Branch, fold_index: int, per_side: int = 8, min_side: int = 5):
    """Least-squares quadratic lam(t_mean) around a fold."""
    pts = branch.points
    lo = max(0, fold_index - per_side)
    hi = min(len(pts), fold_index + per_side + 1)
    if fold_index - lo < min_side or hi - 1 - fold_index < min_side:
        raise InsufficientPoints(f"need {min_side} points on each side of the fold")
    sub = pts[lo:hi]
    t = np.array([p.u_mean for p in sub])
    lam = np.array([p.lam for p in sub])
    return fit_quadratic(t, lam)


def refine_fold(d: Discretization, e: Exponents, branch: Branch, fold_index: int,
                opts: ContinuationOptions | None = None):
    """Locate the zero of the lambda-tangent between the two points bracketing a fold."""
    opts = opts or ContinuationOptions()
    pts = branch.points
    n = d.n
    k = None
    for j in (fold_index - 1, fold_index):
        if 0 <= j < len(pts) - 1 and pts[j].tangent_lam * pts[j + 1].tangent_lam < 0:
            k = j
            break
    if k is None or pts[k].coords is None:
        raise InsufficientPoints("no bracketing pair with blown-up coordinates at this fold")
    Xa, Xb = pts[k].coords, pts[k + 1].coords
    tau = _tangent(d, e, Xa, Xb - Xa)
    span = math.sqrt(_metric(d, Xa, Xb - Xa))

    def on_branch(sv):
        if sv == 0.0:
            return Xa
        X_hat = Xa + sv * tau
        X = _correct(d, e, X_hat, Xa, tau, opts)
        if X is None:
            raise SingularJacobian(f"corrector failed while refining the fold at s = {sv:.3e}")
        return X

    def tlam(sv):
        return float(_tangent(d, e, on_branch(sv), tau)[n + 1])

    hi = span
    for _ in range(4):
        if tlam(0.0) * tlam(hi) < 0:
            break
        hi *= 1.5
    sf = brentq(tlam, 0.0, hi, xtol=1e-14 * max(span, 1e-300), rtol=1e-12)
    Xf = on_branch(sf)
    u, lam = _physical(Xf, n)
    return {"t_fold": float(d.w @ u) / float(d.w.sum()), "lambda_fold": lam, "u": u}


def fit_quadratic(t, lam):
    t = np.asarray(t, float)
    lam = np.asarray(lam, float)
    centre = float(t.mean())
    scale = float(np.max(np.abs(t - centre))) or 1.0
    s = (t - centre) / scale
    A = np.vstack([np.ones_like(s), s, s * s]).T
    c, *_ = np.linalg.lstsq(A, lam, rcond=None)
    a2 = c[2] / scale**2
    a1 = c[1] / scale - 2 * c[2] * centre / scale**2
    a0 = c[0] - c[1] * centre / scale + c[2] * centre**2 / scale**2
    t_fold = -a1 / (2 * a2)
    return {"t_fold": float(t_fold), "lambda_fold": float(a0 + a1 * t_fold + a2 * t_fold**2),
            "lambda_pp": float(2 * a2)}


# -- CSV ------------------------------------------------------------------------

def fmt(x) -> str:
    return format(float(x), ".17g")


def write_branch_csv(path, branch: Branch):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(CSV_COLUMNS)
        for p in branch.points:
            wr.writerow([fmt(p.arclength), fmt(p.lam), fmt(p.u_mean), fmt(p.min_u), fmt(p.sup_norm),
                         fmt(p.h1_norm), fmt(p.gamma1), p.nehari.value if p.nehari else "None",
                         int(p.fold)])


def write_states_csv(path, branch: Branch):
    """lambda followed by the nodal values, one row per branch point."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        n = branch.points[0].u.size if branch.points else 0
        wr.writerow(["lambda"] + [f"u{i}" for i in range(n)])
        for p in branch.points:
            wr.writerow([fmt(p.lam)] + [fmt(v) for v in p.u])


def read_branch_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        return [dict(zip(header, row)) for row in rd]


def read_states_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        next(rd)
        rows = [[float(v) for v in row] for row in rd]
    return [(r[0], np.array(r[1:])) for r in rows]
