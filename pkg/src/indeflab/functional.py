"""Energy, weak residual, Jacobian and Nehari classification of discrete states."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ZeroState
from .grid import Discretization
from .scalar_core import Exponents, NehariClass, fiber_constants, fibering_roots

TOL_N = 1e-8


@dataclass
class State:
    u: np.ndarray
    lam: float
    iterations: int = field(default=0, compare=False)
    residual: float | None = field(default=None, compare=False)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.lam = float(self.lam)
        if not np.all(np.isfinite(self.u)):
            raise ValueError("state contains non-finite values")

    @property
    def nonnegative(self):
        return bool(self.u.min() >= -1e-12 * max(1.0, np.abs(self.u).max()))


@dataclass
class EnergyBreakdown:
    E: float
    A: float
    B: float
    I: float
    J: float
    S: float | None


@dataclass
class NehariResult:
    cls: NehariClass
    J: float


@dataclass(frozen=True)
class Tridiag:
    """Symmetric tridiagonal operator stored by its diagonals."""
    diag: np.ndarray
    off: np.ndarray

    def matvec(self, v):
        out = self.diag * v
        out[:-1] += self.off * v[1:]
        out[1:] += self.off * v[:-1]
        return out

    def tosparse(self):
        return sp.diags([self.off, self.diag, self.off], [-1, 0, 1], format="csc")

    def todense(self):
        return self.tosparse().toarray()

    def banded(self):
        ab = np.zeros((3, self.diag.size))
        ab[0, 1:] = self.off
        ab[1] = self.diag
        ab[2, :-1] = self.off
        return ab


def parts(d: Discretization, u, lam, e: Exponents):
    """E, A, B of a nodal vector."""
    au = np.abs(u)
    E = float(u @ d.apply_K(u) - lam * (d.w * d.m_nodes) @ (u * u))
    A = float((d.w * d.a_nodes) @ au ** e.p)
    B = float(d.b0 * au[0] ** e.q + d.b1 * au[-1] ** e.q)
    return E, A, B


def s_functional(d, u, e: Exponents, A=None, B=None):
    if A is None or B is None:
        _, A, B = parts(d, u, 0.0, e)
    if A < 0 or B < 0:
        return None
    p, q = e.p, e.q
    cpq = fiber_constants(e)["Cpq"]
    mass = float((d.w * d.m_nodes) @ (u * u))
    return mass + (B * A ** ((2 - q) / (p - 2)) / cpq) ** ((p - 2) / (p - q))


def energy(d: Discretization, s: State, e: Exponents) -> EnergyBreakdown:
    lam = s.lam
    E, A, B = parts(d, s.u, lam, e)
    I = E / 2 - lam * A / e.p - lam * B / e.q
    J = E - lam * A - lam * B
    return EnergyBreakdown(E, A, B, I, J, s_functional(d, s.u, e, A, B))


def _spow(u, r):
    # sign(u) |u|^r, the odd power used throughout the weak form
    return np.abs(u) ** r * np.sign(u)


def reaction(d: Discretization, u, e: Exponents):
    """G(u) with F(u, lam) = K u - lam G(u)."""
    G = d.w * (d.m_nodes * u + d.a_nodes * _spow(u, e.p - 1))
    G[0] += d.b0 * _spow(u[0], e.q - 1)
    G[-1] += d.b1 * _spow(u[-1], e.q - 1)
    return G


def residual(d: Discretization, s: State, e: Exponents):
    # K annihilates constants; shifting first keeps the rounding proportional
    # to the variation of u rather than to its size
    return d.apply_K(s.u - s.u.mean()) - s.lam * reaction(d, s.u, e)


def residual_scale(d: Discretization, s: State, e: Exponents, shifted: bool = True):
    """Largest sum of absolute term sizes entering one residual entry.

    shifted measures the stiffness terms on u minus its mean, as evaluated by
    residual; the unshifted value sets the rounding floor.
    """
    au = np.abs(s.u)
    av = np.abs(s.u - s.u.mean()) if shifted else au
    kabs = np.abs(d.K_diag) * av
    kabs[:-1] += np.abs(d.K_off) * av[1:]
    kabs[1:] += np.abs(d.K_off) * av[:-1]
    lam = abs(s.lam)
    rest = lam * d.w * (np.abs(d.m_nodes) * au + np.abs(d.a_nodes) * au ** (e.p - 1))
    rest[0] += lam * abs(d.b0) * au[0] ** (e.q - 1)
    rest[-1] += lam * abs(d.b1) * au[-1] ** (e.q - 1)
    return float(np.max(kabs + rest))


def default_floor(u):
    return 1e-8 * max(float(np.max(np.abs(u))), 1e-300)


def jacobian(d: Discretization, s: State, e: Exponents, floor_eps: float | None = None) -> Tridiag:
    u, lam = s.u, s.lam
    if floor_eps is None:
        floor_eps = default_floor(u)
    au = np.abs(u)
    diag = d.K_diag - lam * d.w * (d.m_nodes + (e.p - 1) * d.a_nodes * au ** (e.p - 2))
    fl0 = max(au[0], floor_eps)
    fl1 = max(au[-1], floor_eps)
    diag = diag.copy()
    diag[0] -= lam * (e.q - 1) * d.b0 * fl0 ** (e.q - 2)
    diag[-1] -= lam * (e.q - 1) * d.b1 * fl1 ** (e.q - 2)
    return Tridiag(diag, d.K_off.copy())


def d_reaction_du(d: Discretization, u, e: Exponents, floor_eps=None):
    """Diagonal of dG/du."""
    if floor_eps is None:
        floor_eps = default_floor(u)
    au = np.abs(u)
    dg = d.w * (d.m_nodes + (e.p - 1) * d.a_nodes * au ** (e.p - 2))
    dg[0] += (e.q - 1) * d.b0 * max(au[0], floor_eps) ** (e.q - 2)
    dg[-1] += (e.q - 1) * d.b1 * max(au[-1], floor_eps) ** (e.q - 2)
    return dg


def nehari_classify(d: Discretization, s: State, e: Exponents, tol_N: float = TOL_N) -> NehariResult:
    if not np.any(s.u):
        raise ZeroState("u is identically zero")
    en = energy(d, s, e)
    lam = s.lam
    scale = abs(en.E) + abs(lam) * (abs(en.A) + abs(en.B))
    if abs(en.J) > tol_N * scale:
        return NehariResult(NehariClass.OFF, en.J)
    gap = en.E - lam * (e.p - e.q) / (e.p - 2) * en.B
    if abs(gap) <= tol_N * scale:
        return NehariResult(NehariClass.ZERO, en.J)
    return NehariResult(NehariClass.PLUS if gap < 0 else NehariClass.MINUS, en.J)


def project_to_nehari(d: Discretization, s: State, e: Exponents, target: NehariClass):
    """t u on the requested Nehari component, or None when the fiber has no such root."""
    if not np.any(s.u):
        raise ZeroState("u is identically zero")
    E, A, B = parts(d, s.u, s.lam, e)
    if s.lam == 0 and E <= 0:
        return None
    fr = fibering_roots(E, A, B, s.lam, e)
    for r in fr.roots:
        if r.cls == target:
            return State(r.t * s.u, s.lam)
    return None
