"""Closed-form constants, the scalar function phi and fibering-root arithmetic."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from scipy.optimize import brentq

from .errors import PreconditionViolated

# brentq stops on rtol alone, so tiny roots keep full relative accuracy
XTOL = 1e-300
DOUBLE_ZERO_BAND = 1e-9


@dataclass(frozen=True)
class Exponents:
    p: float
    q: float

    def __post_init__(self):
        p, q = self.p, self.q
        if not (math.isfinite(p) and math.isfinite(q)) or not (1.0 < q < 2.0 < p):
            raise PreconditionViolated(f"need 1 < q < 2 < p, got p={p}, q={q}")


@dataclass(frozen=True)
class MassData:
    Im: float
    Ia: float
    Ib: float


class Regime(str, Enum):
    TWO_ZEROS = "TwoZeros"
    DOUBLE_ZERO = "DoubleZero"
    UNIQUE_ZERO = "UniqueZero"
    NO_ZERO = "NoZero"
    NOT_APPLICABLE = "NotApplicable"


class NehariClass(str, Enum):
    PLUS = "NehariPlus"
    MINUS = "NehariMinus"
    ZERO = "NehariZero"
    OFF = "OffNehari"


@dataclass
class PhiAnalysis:
    zeros: list
    c0: float | None
    K1: float | None
    tildeK1: float | None
    regime: Regime


@dataclass
class FiberRoot:
    t: float
    cls: NehariClass


@dataclass
class FiberingResult:
    roots: list = field(default_factory=list)
    t0: float | None = None
    degenerate: bool = False


def fiber_constants(e: Exponents):
    p, q = e.p, e.q
    cpq = q * (p - 2) / (2 * (p - q)) * (p * (2 - q) / (2 * (p - q))) ** ((2 - q) / (p - 2))
    tcpq = (p - 2) / (p - q) * ((2 - q) / (p - q)) ** ((2 - q) / (p - 2))
    return {"Cpq": cpq, "tildeCpq": tcpq}


def phi_eval(t, md: MassData, e: Exponents):
    if t < 0:
        raise PreconditionViolated("phi is evaluated at t >= 0 only")
    return t ** (2 - e.q) * md.Im + t ** (e.p - e.q) * md.Ia + md.Ib


def phi_prime(t, md: MassData, e: Exponents):
    p, q = e.p, e.q
    return (2 - q) * t ** (1 - q) * md.Im + (p - q) * t ** (p - q - 1) * md.Ia


def k_thresholds(md: MassData, e: Exponents):
    if not (md.Im > 0 > md.Ia):
        raise PreconditionViolated("thresholds need Im > 0 > Ia")
    c = fiber_constants(e)
    p, q = e.p, e.q
    factor = md.Im ** ((p - q) / (p - 2)) / (-md.Ia) ** ((2 - q) / (p - 2))
    return {"K1": c["Cpq"] * factor, "tildeK1": c["tildeCpq"] * factor}


def critical_point(md: MassData, e: Exponents):
    """Interior critical point of phi, defined when Im and Ia have opposite signs."""
    if md.Im * md.Ia >= 0:
        return None
    p, q = e.p, e.q
    return ((2 - q) * md.Im / ((p - q) * (-md.Ia))) ** (1 / (p - 2))


def _thresholds_any_sign(md, e):
    # mirrored case Im < 0 < Ia uses the thresholds of (-m, -a)
    if md.Im > 0 > md.Ia:
        k = k_thresholds(md, e)
    elif md.Im < 0 < md.Ia:
        k = k_thresholds(MassData(-md.Im, -md.Ia, -md.Ib), e)
    else:
        return None, None
    return k["K1"], k["tildeK1"]


def _far_end(f, sign_inf, start):
    t = start
    for _ in range(200):
        v = f(t)
        if v == 0 or math.copysign(1.0, v) == sign_inf:
            return t
        t *= 2.0
    raise PreconditionViolated("could not bracket the far end")


def _monotone_root(f, lo, hi):
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo if lo > 0 else None
    if fhi == 0.0:
        return hi
    if (flo < 0) == (fhi < 0):
        return None
    return brentq(f, lo, hi, xtol=XTOL, rtol=1e-15, maxiter=500)


def phi_zeros(md: MassData, e: Exponents, tol: float = 1e-10) -> PhiAnalysis:
    if tol <= 0:
        raise PreconditionViolated("tol must be positive")
    p = e.p
    c0 = critical_point(md, e)
    K1, tK1 = _thresholds_any_sign(md, e)

    def f(t):
        return phi_eval(t, md, e)

    if tK1 is not None and md.Ib * md.Im < 0:
        # Ib on the side of phi(0) opposite to the hump: two, one double or no zero
        excess = abs(md.Ib) - tK1
        if abs(excess) <= DOUBLE_ZERO_BAND * tK1:
            return PhiAnalysis([c0], c0, K1, tK1, Regime.DOUBLE_ZERO)
        if excess > 0:
            return PhiAnalysis([], c0, K1, tK1, Regime.NO_ZERO)
        tmax = 10 * max(1.0, c0, (md.Im / -md.Ia) ** (1 / (p - 2)))
        tmax = _far_end(f, math.copysign(1.0, md.Ia), tmax)
        z = [_monotone_root(f, 0.0, c0), _monotone_root(f, c0, tmax)]
        zeros = [r for r in z if r is not None]
        regime = Regime.TWO_ZEROS if len(zeros) == 2 else Regime.NOT_APPLICABLE
        return PhiAnalysis(zeros, c0, K1, tK1, regime)

    if md.Ia * md.Ib < 0:
        scale = 1.0 if c0 is None else c0
        if md.Im * md.Ia < 0:
            scale = max(scale, (md.Im / -md.Ia) ** (1 / (p - 2)))
        tmax = _far_end(f, math.copysign(1.0, md.Ia), 10 * max(1.0, scale))
        if c0 is None:
            z = [_monotone_root(f, 0.0, tmax)]
        else:
            z = [_monotone_root(f, 0.0, c0), _monotone_root(f, c0, tmax)]
        zeros = [r for r in z if r is not None]
        regime = Regime.UNIQUE_ZERO if len(zeros) == 1 else Regime.NOT_APPLICABLE
        return PhiAnalysis(zeros, c0, K1, tK1, regime)

    return PhiAnalysis([], c0, K1, tK1, Regime.NOT_APPLICABLE)


LABEL_FOUR = "≥ 4 nontrivial non-negative solutions for small λ>0"
LABEL_TWO_VAR = "≥ 2 variational solutions"
LABEL_TWO_NONE = "≥ 2 variational solutions; no classical positive solution converging to a constant"
LABEL_TURNING = "turning point at (0, c₀)"


@dataclass
class RegimeReport:
    regime: Regime
    label: str
    results: list


def classify_regime(md: MassData, signs: dict, e: Exponents, variant: str = "P") -> RegimeReport:
    """Table lookup of the expected solution count; variant is "P" or "Q" (a = -m)."""
    variant = variant.upper()
    if variant not in ("P", "Q"):
        raise PreconditionViolated("variant must be P or Q")
    an = phi_zeros(md, e)
    na = RegimeReport(an.regime, "NotApplicable", [])
    if not (md.Im > 0 > md.Ia and md.Ib < 0):
        return na
    tk = an.tildeK1
    on_band = abs(md.Ib + tk) <= DOUBLE_ZERO_BAND * tk
    if variant == "Q" and on_band:
        return RegimeReport(an.regime, LABEL_TURNING,
                            ["smooth curve of positive solutions through (0, c0)",
                             "lambda(c0) = lambda'(c0) = 0, lambda''(c0) > 0",
                             "stable for t > c0, unstable for t < c0"])
    if not signs.get("b_changes_sign", False):
        return na
    if variant == "P" and not signs.get("a_changes_sign", False):
        return na
    if variant == "Q" and not signs.get("m_changes_sign", False):
        return na
    results = ["u0 in N+ and B+ (bifurcation from zero)", "u2 in N- and A+ (bifurcation from infinity)"]
    if md.Ib > -tk and not on_band:
        return RegimeReport(an.regime, LABEL_FOUR,
                            results + ["u1 in N+ and E-", "two bifurcating branches from (0, c1), (0, c2)"])
    if on_band:
        return RegimeReport(an.regime, LABEL_TWO_VAR, results)
    return RegimeReport(an.regime, LABEL_TWO_NONE, results)


def _fiber_g(E, A, B, lam, e):
    p, q = e.p, e.q

    def g(t):
        return E * t ** (2 - q) - lam * A * t ** (p - q) - lam * B

    def dg(t):
        return (2 - q) * E * t ** (1 - q) - (p - q) * lam * A * t ** (p - q - 1)

    return g, dg


def _sgn(x):
    return 0.0 if x == 0 else math.copysign(1.0, x)


def fibering_roots(E, A, B, lam, e: Exponents, tol: float = 1e-10) -> FiberingResult:
    """Positive roots of E t^(2-q) - lam A t^(p-q) - lam B, ascending, classified by j''."""
    p, q = e.p, e.q
    if lam == 0 and E <= 0:
        raise PreconditionViolated("lambda = 0 needs E > 0")
    g, dg = _fiber_g(E, A, B, lam, e)
    lA, lB = lam * A, lam * B
    t0 = None
    if lA * E > 0:
        t0 = (p * (2 - q) * E / (2 * (p - q) * lA)) ** (1 / (p - 2))
    tcrit = None
    if lA * E > 0:
        tcrit = ((2 - q) * E / ((p - q) * lA)) ** (1 / (p - 2))

    s0 = _sgn(-lB) or _sgn(E) or _sgn(-lA)
    sinf = _sgn(-lA) or _sgn(E) or _sgn(-lB)
    out = FiberingResult(t0=t0)
    if s0 == 0:
        return out
    ref = tcrit if tcrit is not None else 1.0

    def near_zero():
        t = ref * 0.5
        for _ in range(2000):
            if _sgn(g(t)) == s0:
                return t
            t *= 0.25
            if t < 1e-300:
                break
        return None

    def far():
        t = ref * 2.0
        for _ in range(2000):
            if _sgn(g(t)) == sinf:
                return t
            t *= 2.0
            if t > 1e300:
                break
        return None

    lo, hi = near_zero(), far()
    if tcrit is not None:
        gc = g(tcrit)
        band = tol * (abs(E) * tcrit ** (2 - q) + abs(lA) * tcrit ** (p - q) + abs(lB))
        if abs(gc) <= band:
            out.roots.append(FiberRoot(tcrit, NehariClass.ZERO))
            out.degenerate = True
            return out
        cand = []
        if lo is not None:
            cand.append(_monotone_root(g, lo, tcrit))
        if hi is not None:
            cand.append(_monotone_root(g, tcrit, hi))
    else:
        cand = [_monotone_root(g, lo, hi)] if lo is not None and hi is not None else []
    for t in cand:
        if t is None:
            continue
        d = dg(t)
        out.roots.append(FiberRoot(t, NehariClass.PLUS if d > 0 else NehariClass.MINUS))
    out.roots.sort(key=lambda r: r.t)
    return out
