"""Uniform P1 discretization of the unit interval with lumped quadrature."""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import BadWeightSpec
from .scalar_core import MassData


@dataclass(frozen=True)
class WeightSpec:
    """kind is one of constant, affine, cosine, samples, csv.

    constant: c; affine: c0 + c1 x; cosine: c0 + c1 cos(k pi x).
    """
    kind: str
    c: float = 0.0
    c0: float = 0.0
    c1: float = 0.0
    k: float = 1.0
    values: tuple | None = None
    path: str | None = None
    scale: float = 1.0

    @classmethod
    def constant(cls, c):
        return cls("constant", c=float(c))

    @classmethod
    def affine(cls, c0, c1):
        return cls("affine", c0=float(c0), c1=float(c1))

    @classmethod
    def cosine(cls, c0, c1, k):
        return cls("cosine", c0=float(c0), c1=float(c1), k=float(k))

    @classmethod
    def samples(cls, values):
        return cls("samples", values=tuple(float(v) for v in values))

    @classmethod
    def csv_path(cls, path):
        return cls("csv", path=str(path))

    def negated(self):
        return replace(self, scale=-self.scale)

    def sample(self, x):
        return self.scale * self._raw(x)

    def _raw(self, x):
        n = len(x)
        if self.kind == "constant":
            return np.full(n, self.c)
        if self.kind == "affine":
            return self.c0 + self.c1 * x
        if self.kind == "cosine":
            return self.c0 + self.c1 * np.cos(self.k * np.pi * x)
        if self.kind == "samples":
            vals = np.asarray(self.values, dtype=float)
            if vals.shape != (n,):
                raise BadWeightSpec(f"expected {n} samples, got {vals.size}")
            return vals.copy()
        if self.kind == "csv":
            return _read_weight_csv(self.path, x)
        raise BadWeightSpec(f"unknown weight kind {self.kind!r}")


def _read_weight_csv(path, x):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise BadWeightSpec(f"cannot read {path}: {exc}") from exc
    if not rows or [c.strip() for c in rows[0]] != ["x", "value"]:
        raise BadWeightSpec(f"{path}: header must be x,value")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    except ValueError as exc:
        raise BadWeightSpec(f"{path}: {exc}") from exc
    if data.shape != (len(x), 2):
        raise BadWeightSpec(f"{path}: expected {len(x)} rows")
    if np.max(np.abs(data[:, 0] - x)) > 1e-12:
        raise BadWeightSpec(f"{path}: nodes do not match the grid")
    return data[:, 1]


@dataclass(frozen=True, eq=False)
class Discretization:
    n: int
    h: float
    x: np.ndarray
    K_diag: np.ndarray
    K_off: np.ndarray
    w: np.ndarray
    m_nodes: np.ndarray
    a_nodes: np.ndarray
    b0: float
    b1: float

    @property
    def K(self):
        return sp.diags([self.K_off, self.K_diag, self.K_off], [-1, 0, 1], format="csr")

    def apply_K(self, u):
        out = self.K_diag * u
        out[:-1] += self.K_off * u[1:]
        out[1:] += self.K_off * u[:-1]
        return out

    def with_weights(self, m=None, a=None, b0=None, b1=None):
        return Discretization(self.n, self.h, self.x, self.K_diag, self.K_off, self.w,
                              self.m_nodes if m is None else np.asarray(m, float),
                              self.a_nodes if a is None else np.asarray(a, float),
                              self.b0 if b0 is None else float(b0),
                              self.b1 if b1 is None else float(b1))


def build(n: int, m: WeightSpec, a: WeightSpec, b0: float, b1: float) -> Discretization:
    if int(n) != n or n < 3:
        raise BadWeightSpec("n must be an integer >= 3")
    n = int(n)
    h = 1.0 / (n - 1)
    x = np.linspace(0.0, 1.0, n)
    diag = np.full(n, 2.0 / h)
    diag[0] = diag[-1] = 1.0 / h
    off = np.full(n - 1, -1.0 / h)
    w = np.full(n, h)
    w[0] = w[-1] = h / 2
    return Discretization(n, h, x, diag, off, w, m.sample(x), a.sample(x), float(b0), float(b1))


def integrals(d: Discretization) -> MassData:
    return MassData(float(d.w @ d.m_nodes), float(d.w @ d.a_nodes), d.b0 + d.b1)


def sign_flags(d: Discretization):
    def changes(v):
        return bool(np.any(v > 0) and np.any(v < 0))

    return {"a_changes_sign": changes(d.a_nodes),
            "m_changes_sign": changes(d.m_nodes),
            "b_changes_sign": bool(d.b0 * d.b1 < 0)}
