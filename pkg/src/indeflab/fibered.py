"""Descent on directions, each direction projected onto a Nehari component."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .functional import parts, reaction
from .grid import Discretization
from .scalar_core import Exponents, NehariClass, fibering_roots


@dataclass
class FiberPoint:
    z: np.ndarray
    t: float
    value: float
    E: float
    A: float
    B: float


class FiberedProblem:
    """I_lambda restricted to one Nehari component, as a function of the direction z.

    admissible(E, A, B) filters directions (e.g. B > 0); the value is I(t z)
    for the requested root and its gradient is t F(t z) because j_z'(t) = 0.
    """

    def __init__(self, d: Discretization, e: Exponents, lam: float, target: NehariClass, admissible):
        self.d, self.e, self.lam = d, e, lam
        self.target = target
        self.admissible = admissible
        # H1 Riesz map K + W as a banded SPD matrix
        ab = np.zeros((2, d.n))
        ab[0, 1:] = d.K_off
        ab[1] = d.K_diag + d.w
        self._pre = ab

    def precondition(self, g):
        return solveh_banded(self._pre, g, lower=False)

    def h1norm(self, z):
        return math.sqrt(float(z @ self.d.apply_K(z) + self.d.w @ (z * z)))

    def evaluate(self, z) -> FiberPoint | None:
        lam, e = self.lam, self.e
        E, A, B = parts(self.d, z, lam, e)
        if not self.admissible(E, A, B):
            return None
        if lam == 0 and E <= 0:
            return None
        fr = fibering_roots(E, A, B, lam, e)
        roots = [r.t for r in fr.roots if r.cls == self.target]
        if not roots:
            return None
        t = roots[0]
        val = 0.5 * t * t * E - lam * A * t**e.p / e.p - lam * B * t**e.q / e.q
        return FiberPoint(z, t, val, E, A, B)

    def gradient(self, fp: FiberPoint):
        u = fp.t * fp.z
        F = self.d.apply_K(u) - self.lam * reaction(self.d, u, self.e)
        return fp.t * F


def lbfgs_descent(prob: FiberedProblem, z0, maxiter=300, memory=8, rtol=1e-10):
    """Preconditioned L-BFGS with backtracking; infeasible trial points count as +inf."""
    z = np.abs(np.asarray(z0, dtype=float))
    z /= prob.h1norm(z)
    fp = prob.evaluate(z)
    if fp is None:
        return None
    g = prob.gradient(fp)
    S, Y = [], []
    scale = abs(fp.value) if fp.value != 0 else 1.0
    step0 = 0.1
    for it in range(maxiter):
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            rho = 1.0 / float(y @ s)
            a = rho * float(s @ q)
            alphas.append((a, rho, s, y))
            q -= a * y
        r = prob.precondition(q)
        if S:
            s, y = S[-1], Y[-1]
            r *= float(s @ y) / float(y @ prob.precondition(y))
        for a, rho, s, y in reversed(alphas):
            b = rho * float(y @ r)
            r += (a - b) * s
        direction = -r
        slope = float(g @ direction)
        if slope >= 0:
            S.clear(), Y.clear()
            direction = -prob.precondition(g)
            slope = float(g @ direction)
        gnorm = math.sqrt(max(-slope, 0.0))
        if gnorm <= rtol * scale:
            break
        if not S:
            # first step: move a fixed fraction of the direction norm
            alpha = step0 / max(prob.h1norm(direction), 1e-300)
        else:
            alpha = 1.0
        accepted = None
        for _ in range(40):
            zn = z + alpha * direction
            fn = prob.evaluate(zn)
            if fn is not None and fn.value <= fp.value + 1e-4 * alpha * slope:
                accepted = fn
                break
            alpha *= 0.5
        if accepted is None:
            break
        gn = prob.gradient(accepted)
        s_vec = accepted.z - z
        y_vec = gn - g
        if float(s_vec @ y_vec) > 1e-12 * float(s_vec @ s_vec) ** 0.5 * float(y_vec @ y_vec) ** 0.5:
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > memory:
                S.pop(0), Y.pop(0)
        improvement = fp.value - accepted.value
        z, fp, g = accepted.z, accepted, gn
        nz = prob.h1norm(z)
        if not 0.2 < nz < 5.0:
            # value is scale invariant; keep directions of unit size
            z = z / nz
            fp = prob.evaluate(z)
            g = prob.gradient(fp)
            S.clear(), Y.clear()
        if improvement <= 1e-15 * scale:
            break
    return fp
