"""Command-line entry point.

Every subcommand reads one JSON config, writes into --out and returns
0 on success, 2 on a config error and 3 on a numerical failure after
flushing whatever was computed.
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from enum import Enum

import numpy as np

from . import config as cfgmod
from .continuation import (Branch, ContinuationOptions, fmt, read_branch_csv, read_states_csv,
                           refine_fold, trace, write_branch_csv, write_states_csv)
from .errors import (ConfigError, HypothesisHViolated, InsufficientSweep, LabError, NumericalFailure,
                     PreconditionViolated, BadSubinterval)
from .functional import State, energy, nehari_classify, residual, residual_scale
from .grid import Discretization, integrals, sign_flags
from .nehari_min import (MinimizerOptions, asymptotic_report, min_Nminus_Aplus, min_Nplus_Bplus,
                         min_Nplus_Eminus)
from .scalar_core import Exponents, classify_regime, fiber_constants, phi_eval, phi_zeros
from .solve import EPS, NewtonOptions, ls_derivatives, ls_phi, newton, v_lambda
from .spectral import (Verdict, apriori_Lambda, lambda1, lambda_b_sign_test, lambda_star,
                       stability_eigen, tol_gamma, variational_bounds)
from .verify import positivity_check

log = logging.getLogger("indeflab")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

_MINIMIZERS = {"u0": min_Nplus_Bplus, "u1": min_Nplus_Eminus, "u2": min_Nminus_Aplus}
_REPORTS = {"u0": "u0_to_w0", "u1": "u1_to_constant", "u2": "u2_to_winf"}


class PartialFailure(Exception):
    """Raised after partial output is on disk; carries the failure messages."""

    def __init__(self, messages):
        super().__init__("; ".join(messages))
        self.messages = messages


# -- output helpers ------------------------------------------------------------

def _clean(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_rows(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in r) + "\n")


# -- shared setup ---------------------------------------------------------------

class Context:
    def __init__(self, cfg: cfgmod.RunConfig, out: str, seed: int, n: int | None):
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.e = cfgmod.exponents(cfg)
        self.d = cfgmod.discretization(cfg, n)
        self.newton = NewtonOptions(cfg.solver.tol_res, cfg.solver.max_iter, cfg.solver.damping)

    def path(self, name):
        return os.path.join(self.out, name)

    def guess(self, g):
        return cfgmod.resolve_guess(g, self.d, self.e)

    def solve_at(self, lam, guess) -> State:
        c = self.guess(guess)
        return newton(self.d, State(np.full(self.d.n, c), lam), self.e, self.newton)


def _analysis(d: Discretization, e: Exponents, variant: str):
    md = integrals(d)
    an = phi_zeros(md, e)
    rep = classify_regime(md, sign_flags(d), e, variant)
    return md, an, rep


# -- analyze ----------------------------------------------------------------------

def cmd_analyze(ctx: Context):
    d, e = ctx.d, ctx.e
    md, an, rep = _analysis(d, e, ctx.cfg.variant)
    report = {"Cpq": fiber_constants(e)["Cpq"], "tildeCpq": fiber_constants(e)["tildeCpq"],
              "K1": an.K1, "tildeK1": an.tildeK1, "zeros": sorted(an.zeros), "c0": an.c0,
              "regime": an.regime, "label": rep.label, "expected_results": rep.results,
              "integrals": {"Im": md.Im, "Ia": md.Ia, "Ib": md.Ib}, "sign_flags": sign_flags(d),
              "n": d.n}
    report["lambda1"] = lambda1(d)["value"]
    report["variational_bounds"] = variational_bounds(d, e, restarts=ctx.cfg.analyze.bound_restarts,
                                                      seed=ctx.seed)
    if md.Im < 0:
        try:
            report["lambda_star"] = lambda_star(d, e)
        except PreconditionViolated as exc:
            report["lambda_star"] = None
            report["lambda_star_reason"] = str(exc)
        report["lambda_b_sign_test"] = lambda_b_sign_test(d, e)
    else:
        report["lambda_star"] = None
        report["lambda_star_reason"] = "defined only when Im < 0"
    ap = ctx.cfg.apriori
    if ap is not None:
        try:
            report["Lambda"] = apriori_Lambda(d, ap.Dplus, ap.Dminus)
        except (HypothesisHViolated, BadSubinterval) as exc:
            raise ConfigError(f"apriori subintervals: {exc}") from exc
    write_json(ctx.path("report.json"), report)
    log.info("regime %s, zeros %s", an.regime.value, sorted(an.zeros))


# -- solve -------------------------------------------------------------------------

def _state_summary(ctx: Context, s: State):
    d, e = ctx.d, ctx.e
    en = energy(d, s, e)
    out = {"lambda": s.lam, "iterations": s.iterations, "residual": s.residual,
           "u_min": float(s.u.min()), "u_max": float(s.u.max()),
           "u_mean": float(d.w @ s.u) / float(d.w.sum()), "energy": en.I}
    try:
        out["nehari_class"] = nehari_classify(d, s, e).cls
    except LabError:
        out["nehari_class"] = None
    try:
        st = stability_eigen(d, s, e)
        out["gamma1"], out["verdict"] = st.gamma1, st.verdict
    except LabError as exc:
        out["gamma1"], out["verdict"] = None, str(exc)
    try:
        out["positivity"] = positivity_check(s.u)["verdict"]
    except LabError as exc:
        out["positivity"] = str(exc)
    return out


def cmd_solve(ctx: Context):
    sc = ctx.cfg.solve
    if sc is None:
        raise ConfigError("solve needs a 'solve' section")
    s = ctx.solve_at(sc.lam, sc.guess)
    _write_rows(ctx.path("solution.csv"), ["x", "u"], zip(ctx.d.x, s.u))
    write_json(ctx.path("solve.json"), _state_summary(ctx, s))


# -- stability -------------------------------------------------------------------------

def cmd_stability(ctx: Context):
    sc = ctx.cfg.stability
    rows, failures = [], []
    for lam in sc.lambdas:
        try:
            s = ctx.solve_at(lam, sc.guess)
            rows.append(_state_summary(ctx, s))
        except NumericalFailure as exc:
            failures.append(f"lambda = {lam}: {exc}")
            rows.append({"lambda": lam, "error": str(exc)})
    write_json(ctx.path("stability.json"), {"guess": sc.guess, "points": rows})
    if failures:
        raise PartialFailure(failures)


# -- reduce -----------------------------------------------------------------------------

_DERIV_COLUMNS = ["t_star", "kind", "Phi", "Phi_t", "Phi_t_closed", "Phi_tt", "Phi_tt_closed",
                  "Phi_tt_double_zero", "Phi_lambda", "Phi_lambda_closed", "Phi_lambda_energy"]


def cmd_reduce(ctx: Context):
    d, e = ctx.d, ctx.e
    rc = ctx.cfg.reduce
    md, an, _ = _analysis(d, e, ctx.cfg.variant)
    lo, hi = rc.t_range
    if not 0 < lo < hi:
        raise ConfigError("t_range must satisfy 0 < t_lo < t_hi")
    ts = np.linspace(lo, hi, rc.n_t)
    failures = []
    scan = []
    for lam in rc.lambdas:
        for t in ts:
            try:
                val = ls_phi(d, e, lam, float(t), ctx.newton)
            except NumericalFailure as exc:
                failures.append(f"Phi({lam}, {t:.6g}): {exc}")
                continue
            ident = t ** (e.q - 1) * phi_eval(float(t), md, e) if lam == 0 else ""
            scan.append((float(lam), float(t), val, ident))
    _write_rows(ctx.path("phi_scan.csv"), ["lambda", "t", "Phi", "identity"], scan)

    # zeros of phi inside the range; a double zero is labelled c0
    stars = []
    for z in sorted(an.zeros):
        if lo <= z <= hi:
            double = an.c0 is not None and abs(z - an.c0) <= 1e-6 * an.c0
            stars.append((z, "c0" if double else "zero"))
    table = []
    for t_star, kind in stars:
        try:
            r = ls_derivatives(d, e, t_star, opts=ctx.newton)
        except NumericalFailure as exc:
            failures.append(f"derivatives at {t_star:.6g}: {exc}")
            continue
        table.append([t_star, kind] + [r[k] for k in _DERIV_COLUMNS[2:]])
    _write_rows(ctx.path("derivatives.csv"), _DERIV_COLUMNS, table)
    if failures:
        raise PartialFailure(failures)


# -- nehari ------------------------------------------------------------------------------

def _states_rows(path, states):
    n = states[0].u.size if states else 0
    _write_rows(path, ["lambda"] + [f"u{i}" for i in range(n)], [[s.lam] + list(s.u) for s in states])


def _nehari_opts(ctx: Context):
    return MinimizerOptions(restarts=ctx.cfg.nehari.restarts, seed=ctx.seed, newton=ctx.newton)


def cmd_nehari(ctx: Context):
    d, e = ctx.d, ctx.e
    nc = ctx.cfg.nehari
    opts = _nehari_opts(ctx)
    jobs = [(which, lam) for which in nc.sets for lam in nc.lambdas]

    def run(job):
        which, lam = job
        try:
            return _MINIMIZERS[which](d, lam, e, opts)
        except NumericalFailure as exc:
            return exc

    with ThreadPoolExecutor(max_workers=_workers(len(jobs))) as pool:
        results = list(pool.map(run, jobs))

    failures, table, summary = [], [], {}
    an = phi_zeros(integrals(d), e)
    for which in nc.sets:
        got = [(lam, r) for (w, lam), r in zip(jobs, results) if w == which]
        ok = [r for _, r in got if not isinstance(r, Exception)]
        for lam, r in got:
            if isinstance(r, Exception):
                failures.append(f"{which} at lambda = {lam}: {r}")
                continue
            c = r.certificates
            table.append([which, r.state.lam, r.energy, float(r.state.u.min()), float(r.state.u.max()),
                          c["nehari_class"], c["critical_residual"], c["restart_index"]])
        _states_rows(ctx.path(f"states_nehari_{which}.csv"), [r.state for r in ok])
        entry = {"solved": len(ok), "requested": len(got)}
        try:
            limit = None
            if which == "u1":
                if not an.zeros:
                    raise InsufficientSweep("phi has no zero to compare with")
                mean = float(d.w @ ok[-1].state.u) / float(d.w.sum()) if ok else 0.0
                limit = min(an.zeros, key=lambda z: abs(z - mean))
                entry["limit_constant"] = limit
            rep = asymptotic_report(ok, _REPORTS[which], d, e, limit)
            entry.update({k: rep[k] for k in ("lambdas", "distances", "sup_norms", "rates",
                                              "distance_decreasing")})
        except (InsufficientSweep, LabError) as exc:
            entry["asymptotics"] = str(exc)
        summary[which] = entry
    _write_rows(ctx.path("minimizers.csv"),
                ["set", "lambda", "energy", "u_min", "u_max", "nehari_class", "critical_residual",
                 "restart_index"], table)
    write_json(ctx.path("nehari.json"), summary)
    if failures:
        raise PartialFailure(failures)


# -- branches ------------------------------------------------------------------------------

def _workers(jobs: int) -> int:
    return max(1, min(jobs, os.cpu_count() or 1))


def _seed_state(ctx: Context, sd) -> State:
    d, e = ctx.d, ctx.e
    if sd.kind == "constant":
        return State(np.full(d.n, ctx.guess(sd.value)), sd.lam)
    if sd.kind == "reduced":
        t = ctx.guess(sd.value) + sd.offset
        vl = v_lambda(d, e, t)
        dlam = ls_derivatives(d, e, t, opts=ctx.newton)["Phi_lambda_closed"]
        if dlam == 0:
            raise PreconditionViolated("Phi_lambda vanishes at the seed")
        lam = -ls_phi(d, e, 0.0, t) / dlam
        return newton(d, State(t + lam * vl, lam), e, ctx.newton)
    res = _MINIMIZERS[sd.set](d, sd.lam, e, _nehari_opts(ctx))
    return res.state


def _trace_one(ctx: Context, sd):
    cc = ctx.cfg.continuation
    seed = _seed_state(ctx, sd)
    # step lengths are relative to the size of the seed
    size = max(1.0, float(np.max(np.abs(seed.u))))
    opts = ContinuationOptions(ds_max=cc.ds_max * size, lam_min=cc.lam_min, lam_max=cc.lam_max,
                               newton=ctx.newton)
    return trace(ctx.d, seed, ctx.e, sd.direction, ds=min(cc.ds, cc.ds_max) * size, n_steps=cc.n_steps,
                 opts=opts, label=sd.label)


def _run_seeds(ctx: Context, concurrent: bool):
    seeds = ctx.cfg.continuation.seeds
    if not seeds:
        raise ConfigError("continuation.seeds is empty")
    labels = [s.label for s in seeds]
    if len(set(labels)) != len(labels):
        raise ConfigError("seed labels must be unique")

    def run(sd):
        try:
            return _trace_one(ctx, sd)
        except NumericalFailure as exc:
            return exc

    if concurrent:
        with ThreadPoolExecutor(max_workers=_workers(len(seeds))) as pool:
            results = list(pool.map(run, seeds))
    else:
        results = [run(sd) for sd in seeds]
    failures = []
    # written in seed order after all traces finished
    for sd, br in zip(seeds, results):
        if isinstance(br, Exception):
            failures.append(f"seed {sd.label}: {br}")
            continue
        write_branch_csv(ctx.path(f"branch_{sd.label}.csv"), br)
        write_states_csv(ctx.path(f"states_{sd.label}.csv"), br)
        if br.stop_reason == "stall":
            failures.append(f"seed {sd.label}: continuation stalled after {len(br.points)} points")
        log.info("branch %s: %d points, stop %s, folds %s", sd.label, len(br.points), br.stop_reason, br.folds)
    return seeds, results, failures


def _branch_entry(br: Branch):
    return {"points": len(br.points), "stop_reason": br.stop_reason, "folds": br.folds,
            "lambda_range": [min(br.lams), max(br.lams)]}


def cmd_branch(ctx: Context):
    seeds, results, failures = _run_seeds(ctx, concurrent=False)
    summary = {}
    for sd, br in zip(seeds, results):
        summary[sd.label] = {"error": str(br)} if isinstance(br, Exception) else _branch_entry(br)
    write_json(ctx.path("branch.json"), summary)
    if failures:
        raise PartialFailure(failures)


def _verdict(p):
    if not math.isfinite(p.gamma1):
        return "Undetermined"
    tg = tol_gamma(p.lam)
    if p.gamma1 > tg:
        return Verdict.STABLE.value
    if p.gamma1 < -tg:
        return Verdict.UNSTABLE.value
    return Verdict.MARGINAL.value


def stability_intervals(br: Branch):
    """Maximal runs of consecutive points sharing a stability verdict."""
    runs = []
    for i, p in enumerate(br.points):
        v = _verdict(p)
        if runs and runs[-1]["verdict"] == v:
            runs[-1]["end"] = i
            runs[-1]["lambda_to"] = p.lam
        else:
            runs.append({"verdict": v, "start": i, "end": i, "lambda_from": p.lam, "lambda_to": p.lam})
    return runs


def plot_script(labels):
    lines = ["# gnuplot script; run from the output directory",
             "set datafile separator ','",
             "set key outside",
             "set xlabel 'lambda'",
             "set ylabel 'max u'",
             "set style line 1 lw 2"]
    if not labels:
        return "\n".join(lines) + "\n"
    plots = []
    for lab in labels:
        f = f"branch_{lab}.csv"
        plots.append(f"'{f}' using 2:5 with lines title '{lab}'")
        plots.append(f"'{f}' using 2:($9 == 1 ? $5 : 1/0) with points pt 7 notitle")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def cmd_diagram(ctx: Context):
    seeds, results, failures = _run_seeds(ctx, concurrent=True)
    d, e = ctx.d, ctx.e
    summary = {"branches": {}}
    done = []
    lam_max_abs = 0.0
    for sd, br in zip(seeds, results):
        if isinstance(br, Exception):
            summary["branches"][sd.label] = {"error": str(br)}
            continue
        done.append(sd.label)
        entry = _branch_entry(br)
        folds = []
        for i in br.folds:
            p = br.points[i]
            f = {"index": i, "lambda": p.lam, "u_mean": p.u_mean}
            try:
                r = refine_fold(d, e, br, i)
                f["refined_lambda"], f["refined_t"] = r["lambda_fold"], r["t_fold"]
            except (NumericalFailure, ValueError) as exc:
                f["refined_lambda"] = None
                f["refine_error"] = str(exc)
            folds.append(f)
        entry["folds"] = folds
        entry["stability_intervals"] = stability_intervals(br)
        summary["branches"][sd.label] = entry
        lam_max_abs = max(lam_max_abs, max(abs(x) for x in br.lams))
    ap = ctx.cfg.apriori
    if ap is not None:
        try:
            Lam = apriori_Lambda(d, ap.Dplus, ap.Dminus)
        except (HypothesisHViolated, BadSubinterval) as exc:
            raise ConfigError(f"apriori subintervals: {exc}") from exc
        summary["Lambda_check"] = {"Lambda": Lam, "max_abs_lambda": lam_max_abs,
                                   "all_within": bool(lam_max_abs <= Lam)}
    with open(ctx.path("plot.gp"), "w") as fh:
        fh.write(plot_script(done))
    write_json(ctx.path("summary.json"), summary)
    if failures:
        raise PartialFailure(failures)


# -- verify ---------------------------------------------------------------------------------

def verify_states(d: Discretization, e: Exponents, rows, tol: float):
    """Relative residual and positivity of re-loaded (lambda, u) rows."""
    worst = 0.0
    bad = []
    for k, (lam, u) in enumerate(rows):
        if u.size != d.n:
            raise ConfigError(f"row {k} has {u.size} nodes, the grid has {d.n}")
        s = State(u, lam)
        rs = residual_scale(d, s, e)
        fn = float(np.max(np.abs(residual(d, s, e))))
        # the same rounding floor as the Newton stopping test
        floor = 64 * EPS * residual_scale(d, s, e, shifted=False)
        rel = fn / rs if rs > 0 else 0.0
        worst = max(worst, rel)
        try:
            positive = positivity_check(u)["verdict"].value
        except LabError:
            positive = "Negative"
        if fn > max(tol * rs, floor):
            bad.append({"row": k, "lambda": lam, "relative_residual": rel, "positivity": positive})
    return worst, bad


def _summary_mismatch(d: Discretization, rows, brows):
    worst = 0.0
    for (lam, u), b in zip(rows, brows):
        mean = float(d.w @ u) / float(d.w.sum())
        for val, key in ((lam, "lambda"), (u.min(), "u_min"), (u.max(), "u_max"), (mean, "u_mean")):
            ref = float(b[key])
            worst = max(worst, abs(val - ref) / max(abs(ref), 1e-300))
    return worst


def cmd_verify(ctx: Context):
    d, e = ctx.d, ctx.e
    tol = ctx.cfg.verify.tol
    files = sorted(glob.glob(ctx.path("states_*.csv")))
    if not files:
        raise ConfigError(f"no states_*.csv files in {ctx.out}")
    report, failures = {}, []
    for f in files:
        name = os.path.basename(f)
        rows = read_states_csv(f)
        worst, bad = verify_states(d, e, rows, tol)
        entry = {"rows": len(rows), "max_relative_residual": worst, "failed_rows": bad}
        bfile = ctx.path(name.replace("states_", "branch_", 1))
        if not name.startswith("states_nehari_") and os.path.exists(bfile):
            brows = read_branch_csv(bfile)
            if len(brows) != len(rows):
                failures.append(f"{name}: {len(rows)} states but {len(brows)} branch rows")
            else:
                entry["summary_mismatch"] = _summary_mismatch(d, rows, brows)
                if entry["summary_mismatch"] > 1e-12:
                    failures.append(f"{name}: branch summary columns disagree with the states")
        if bad:
            failures.append(f"{name}: {len(bad)} rows above tolerance {tol}")
        report[name] = entry
    write_json(ctx.path("verify.json"), {"tolerance": tol, "files": report, "ok": not failures})
    if failures:
        raise PartialFailure(failures)


# -- entry point ----------------------------------------------------------------------------

COMMANDS = {"analyze": cmd_analyze, "solve": cmd_solve, "branch": cmd_branch, "nehari": cmd_nehari,
            "stability": cmd_stability, "reduce": cmd_reduce, "verify": cmd_verify, "diagram": cmd_diagram}


def build_parser():
    ap = argparse.ArgumentParser(prog="indeflab", description="Indefinite-weight logistic problem lab")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--out", default="out", metavar="DIR")
        p.add_argument("--seed", type=int, default=None, metavar="INT")
        p.add_argument("--n", type=int, default=None, metavar="INT", help="grid override")
        p.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s %(message)s",
                        level=logging.WARNING if args.quiet else logging.INFO, force=True)
    try:
        cfg = cfgmod.load(args.config)
        if args.n is not None and args.n < 3:
            raise ConfigError("--n must be at least 3")
        os.makedirs(args.out, exist_ok=True)
        seed = cfg.seed if args.seed is None else args.seed
        ctx = Context(cfg, args.out, seed, args.n)
        COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PartialFailure as exc:
        for m in exc.messages:
            print(f"numerical failure: {m}", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except LabError as exc:
        # precondition violations stem from the configured data
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
