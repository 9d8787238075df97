"""Run configuration: a single JSON file validated before any computation."""
from __future__ import annotations

import json
from dataclasses import replace
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .grid import Discretization, WeightSpec, build, integrals
from .scalar_core import Exponents, k_thresholds, phi_zeros


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ExponentsCfg(_Strict):
    p: float
    q: float


class GridCfg(_Strict):
    n: int = Field(401, ge=3)


class WeightCfg(_Strict):
    kind: Literal["constant", "affine", "cosine", "samples", "csv", "minus_m"]
    c: float = 0.0
    c0: float = 0.0
    c1: float = 0.0
    k: float = 1.0
    values: Optional[list[float]] = None
    path: Optional[str] = None

    def spec(self) -> WeightSpec:
        if self.kind == "constant":
            return WeightSpec.constant(self.c)
        if self.kind == "affine":
            return WeightSpec.affine(self.c0, self.c1)
        if self.kind == "cosine":
            return WeightSpec.cosine(self.c0, self.c1, self.k)
        if self.kind == "samples":
            if self.values is None:
                raise ConfigError("samples weight needs values")
            return WeightSpec.samples(self.values)
        if self.kind == "csv":
            if self.path is None:
                raise ConfigError("csv weight needs path")
            return WeightSpec.csv_path(self.path)
        raise ConfigError("minus_m is only valid for a")


class WeightsCfg(_Strict):
    m: WeightCfg
    a: WeightCfg


class BoundaryCfg(_Strict):
    """Either explicit b0, b1 or double_zero, which puts the total flux on -tildeK1 split evenly."""
    b0: Optional[float] = None
    b1: Optional[float] = None
    double_zero: bool = False

    @model_validator(mode="after")
    def _one_form(self):
        explicit = self.b0 is not None or self.b1 is not None
        if self.double_zero and explicit:
            raise ValueError("give either b0/b1 or double_zero, not both")
        if not self.double_zero and (self.b0 is None or self.b1 is None):
            raise ValueError("b0 and b1 are both required")
        return self


class SolverCfg(_Strict):
    tol_res: float = Field(1e-11, gt=0)
    max_iter: int = Field(50, ge=1)
    damping: bool = True


Guess = Union[float, Literal["c1", "c2", "c0"]]


class SolveCfg(_Strict):
    lam: float = Field(alias="lambda")
    guess: Guess = "c2"


class SeedCfg(_Strict):
    """Branch seed.

    constant: the constant value at lambda (Newton polish when lambda != 0).
    nehari: the minimizer of the named set at lambda > 0.
    reduced: the constant value + offset, lifted to the branch through the
    reduction, lambda = -Phi(0, t) / Phi_lambda(0, t).
    """
    label: str = Field(pattern=r"^[A-Za-z0-9_\-]+$")
    kind: Literal["constant", "nehari", "reduced"] = "constant"
    value: Optional[Guess] = None
    offset: float = 0.0
    set: Optional[Literal["u0", "u1", "u2"]] = None
    lam: float = Field(0.0, alias="lambda")
    direction: Literal[-1, 1] = 1

    @model_validator(mode="after")
    def _complete(self):
        if self.kind in ("constant", "reduced") and self.value is None:
            raise ValueError(f"seed {self.label}: {self.kind} seeds need value")
        if self.kind == "nehari" and (self.set is None or self.lam <= 0):
            raise ValueError(f"seed {self.label}: nehari seeds need set and lambda > 0")
        return self


class ContinuationCfg(_Strict):
    seeds: list[SeedCfg] = []
    ds: float = Field(0.005, gt=0)
    ds_max: float = Field(0.02, gt=0)
    n_steps: int = Field(100, ge=2)
    lam_min: float = -0.1
    lam_max: float = 0.1


class NehariCfg(_Strict):
    lambdas: list[float] = [0.05, 0.025, 0.0125, 0.00625]
    sets: list[Literal["u0", "u1", "u2"]] = ["u0", "u1", "u2"]
    restarts: int = Field(16, ge=1)


class StabilityCfg(_Strict):
    lambdas: list[float] = [0.01]
    guess: Guess = "c2"


class ReduceCfg(_Strict):
    t_range: tuple[float, float] = (0.01, 1.0)
    n_t: int = Field(50, ge=2)
    lambdas: list[float] = [0.0]


class AprioriCfg(_Strict):
    Dplus: tuple[float, float]
    Dminus: tuple[float, float]


class AnalyzeCfg(_Strict):
    bound_restarts: int = Field(2, ge=1)


class VerifyCfg(_Strict):
    tol: float = Field(1e-9, gt=0)


class RunConfig(_Strict):
    exponents: ExponentsCfg
    grid: GridCfg = GridCfg()
    weights: WeightsCfg
    boundary: BoundaryCfg
    variant: Literal["P", "Q"] = "P"
    seed: int = 0
    solver: SolverCfg = SolverCfg()
    analyze: AnalyzeCfg = AnalyzeCfg()
    solve: Optional[SolveCfg] = None
    continuation: ContinuationCfg = ContinuationCfg()
    nehari: NehariCfg = NehariCfg()
    stability: StabilityCfg = StabilityCfg()
    reduce: ReduceCfg = ReduceCfg()
    apriori: Optional[AprioriCfg] = None
    verify: VerifyCfg = VerifyCfg()

    @model_validator(mode="after")
    def _variant(self):
        if self.variant == "Q" and self.weights.a.kind != "minus_m":
            raise ValueError("variant Q needs a of kind minus_m (a = -k m)")
        if self.weights.m.kind == "minus_m":
            raise ValueError("minus_m is only valid for a")
        return self


def load(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON: {exc}") from exc
    return parse(raw)


def parse(raw) -> RunConfig:
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


def exponents(cfg: RunConfig) -> Exponents:
    try:
        return Exponents(cfg.exponents.p, cfg.exponents.q)
    except Exception as exc:
        raise ConfigError(str(exc)) from exc


def discretization(cfg: RunConfig, n: int | None = None) -> Discretization:
    n = cfg.grid.n if n is None else n
    m = cfg.weights.m.spec()
    if cfg.weights.a.kind == "minus_m":
        a = replace(m, scale=-cfg.weights.a.k * m.scale)
    else:
        a = cfg.weights.a.spec()
    if cfg.boundary.double_zero:
        d = build(n, m, a, 0.0, 0.0)
        md = integrals(d)
        if not md.Im > 0 > md.Ia:
            raise ConfigError("double_zero needs Im > 0 > Ia")
        e = exponents(cfg)
        tk = k_thresholds(md, e)["tildeK1"]
        return d.with_weights(b0=-tk / 2, b1=-tk / 2)
    return build(n, m, a, cfg.boundary.b0, cfg.boundary.b1)


def resolve_guess(guess, d: Discretization, e: Exponents) -> float:
    if not isinstance(guess, str):
        return float(guess)
    an = phi_zeros(integrals(d), e)
    if guess == "c0":
        if an.c0 is None:
            raise ConfigError("c0 is undefined for these weights")
        return an.c0
    zeros = sorted(an.zeros)
    if guess == "c1" and len(zeros) >= 1:
        return zeros[0]
    if guess == "c2" and len(zeros) >= 2:
        return zeros[1]
    raise ConfigError(f"{guess} does not exist: phi has {len(zeros)} zeros")

