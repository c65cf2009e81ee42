"""
Command-line experiment runner.

    fracvol <subcommand> --config run.json [--seed N] [--out DIR] [--threads K]
    fracvol <subcommand> --preset NAME ...

Subcommands: bound, volterra, simulate, defect, moment, covcheck.
Each run writes ``<out>/<subcommand>.csv``, ``<out>/summary.json`` and
``<out>/meta.json``; only ``meta.json`` carries timestamps.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import platform
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, DomainError, FracVolError, InfeasibleError, NumericalError
from .gauss_path import Grid, build_joint_factor, corridor_probability, sample_joint_paths
from .model_core import (Constant, Exponential, ModelParams, Power, PowerKernel, Zeta,
                         continuity_modulus, covariance_YY, covariance_matrix_YY,
                         cross_cov_YW, dudley_diagnostic, variance_Y, variance_Y_quadrature)
from .sde_mc import (ControlConfig, MCConfig, boue_dupuis_lower_bound, choose_gamma,
                     conditional_price_estimator, martingale_defect, simulate_price_paths,
                     truncated_moment)
from .stats import summarize
from .volterra import (AffineForcing, SampledForcing, VolterraProblem, blowup_refinement,
                       explosion_bound, explosion_bound_geometric)

log = logging.getLogger("fracvol")

SUBCOMMANDS = ("bound", "volterra", "simulate", "defect", "moment", "covcheck")


class ConfigError(FracVolError, ValueError):
    """Invalid experiment configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _get(block: dict, key: str, where: str, default=..., kind=float):
    if key not in block:
        if default is ...:
            raise ConfigError(f"{where}.{key}: required field missing")
        return default
    val = block[key]
    if val is None:
        return None
    try:
        if kind is int:
            if isinstance(val, bool) or float(val) != int(val):
                raise ValueError
            return int(val)
        if kind is float:
            if isinstance(val, bool):
                raise ValueError
            return float(val)
        if kind is bool:
            if not isinstance(val, bool):
                raise ValueError
            return val
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected {kind.__name__}, got {val!r}") from None


def _floats(block, key, where, default=...):
    raw = block.get(key, default) if default is not ... else block.get(key)
    if raw is None and default is ...:
        raise ConfigError(f"{where}.{key}: required field missing")
    if raw is None:
        return default
    if not isinstance(raw, list):
        raise ConfigError(f"{where}.{key}: expected a list of numbers")
    try:
        return [float(v) for v in raw]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected a list of numbers") from None


def _wrap(where: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (DomainError, DataError, InfeasibleError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_vol(block, where="vol"):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    fam = str(block.get("family", "")).lower()
    if fam == "exponential":
        z = block.get("zeta", 1.0)
        if isinstance(z, dict):
            zeta = _wrap(f"{where}.zeta", Zeta, tuple(_floats(z, "times", f"{where}.zeta")),
                         tuple(_floats(z, "values", f"{where}.zeta")))
        else:
            zeta = _wrap(f"{where}.zeta", Zeta.constant, _get(block, "zeta", where, 1.0))
        return _wrap(where, Exponential, _get(block, "eta", where), zeta)
    if fam == "power":
        return _wrap(where, Power, _get(block, "c", where, 1.0), _get(block, "p", where),
                     _get(block, "two_sided", where, False, bool))
    if fam == "constant":
        return _wrap(where, Constant, _get(block, "sbar", where))
    raise ConfigError(f"{where}.family: must be one of exponential|power|constant, got {fam!r}")


def parse_problem(block, where="problem"):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    alpha = _get(block, "alpha", where)
    _wrap(f"{where}.alpha", PowerKernel, alpha)
    f = block.get("forcing")
    if not isinstance(f, dict):
        raise ConfigError(f"{where}.forcing: expected an object")
    if "times" in f:
        forcing = _wrap(f"{where}.forcing", SampledForcing,
                        tuple(_floats(f, "times", f"{where}.forcing")),
                        tuple(_floats(f, "values", f"{where}.forcing")))
    else:
        forcing = AffineForcing(_get(f, "lam", f"{where}.forcing"),
                                _get(f, "offset", f"{where}.forcing", 1.0))
    b = parse_vol(block.get("b"), f"{where}.b")
    return _wrap(where, VolterraProblem, alpha, forcing, b,
                 _get(block, "multiplier", where, 1.0), _get(block, "cap_level", where, None))


def parse_model(block, where="model"):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    kernel = _wrap(f"{where}.alpha", PowerKernel, _get(block, "alpha", where))
    vol = parse_vol(block.get("vol"), f"{where}.vol")
    return _wrap(where, ModelParams, _get(block, "rho", where), kernel, vol,
                 _get(block, "T", where, 1.0), _get(block, "s0", where, 1.0))


def parse_mc(block, T, seed, threads, where="mc"):
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    grid = _wrap(f"{where}.n", Grid, T, _get(block, "n", where, kind=int))
    return _wrap(where, MCConfig, _get(block, "n_paths", where, kind=int), grid, seed,
                 _get(block, "explosion_cap", where, 1e12),
                 _get(block, "antithetic", where, False, bool), threads,
                 _get(block, "chunk", where, 8192, int))


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return "" if v is None else str(v)


def _key(v) -> str:
    return repr(float(v))


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else _fmt(v)
    return obj


def _mc_dict(r):
    d = {"mean": r.mean, "std_error": r.std_error, "ci95": list(r.ci95),
         "n_paths": r.n_paths, "n_exploded": r.n_exploded}
    if r.wilson is not None:
        d["wilson"] = list(r.wilson)
    return d


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_bound(cfg, seed, threads, out: Path):
    problem = parse_problem(cfg.get("problem"))
    T = _get(cfg, "T", "config")
    Rs = _floats(cfg, "R", "config", [])
    if not isinstance(problem.forcing, AffineForcing):
        raise ConfigError("problem.forcing: the bound needs an affine forcing")
    if problem.forcing.lam < 0:
        raise ConfigError("problem.forcing.lam: must be >= 0 (nondecreasing forcing)")
    if not T > 0:
        raise ConfigError("config.T: must be > 0")
    if any(R <= 1 for R in Rs):
        raise ConfigError("config.R: every ratio must be > 1")
    eb = explosion_bound(problem, T)
    x_geo = _get(cfg, "x_geometric", "config", None)
    if x_geo is None:
        x_geo = eb.minimizer_x
    rows = []
    geo = {}
    for R in Rs or [None]:
        g = None
        if R is not None and eb.osgood_finite and x_geo and x_geo > 0:
            g = explosion_bound_geometric(problem, x_geo, R, T)
        elif R is not None:
            g = math.inf
        if R is not None:
            geo[_key(R)] = g
        rows.append([eb.minimizer_x, eb.h_value, eb.integral_value, eb.bound,
                     eb.osgood_finite, R, x_geo, g])
    write_csv(out / "bound.csv", ["x_star", "h_value", "integral_value", "bound",
                                  "osgood_finite", "R", "x_geometric", "geometric_bound"], rows)
    print(f"osgood integral {'finite' if eb.osgood_finite else 'divergent'}; bound = {_fmt(eb.bound)}")
    return {"bound": eb.bound, "x_star": eb.minimizer_x, "h_value": eb.h_value,
            "integral_value": eb.integral_value, "osgood_finite": eb.osgood_finite,
            "geometric": geo}


def cmd_volterra(cfg, seed, threads, out: Path):
    problem = parse_problem(cfg.get("problem"))
    horizon = _get(cfg, "horizon", "config")
    steps = cfg.get("steps", [2000, 4000, 8000])
    if not isinstance(steps, list) or not steps or any(
            not isinstance(s, int) or isinstance(s, bool) or s < 2 for s in steps):
        raise ConfigError("config.steps: expected a nonempty list of integers >= 2")
    cap = _get(cfg, "cap", "config", 1e12)
    if not horizon > 0:
        raise ConfigError("config.horizon: must be > 0")
    reports, extrap = _wrap("problem", blowup_refinement, problem, horizon, steps, cap) \
        if len(steps) > 1 else (None, None)
    if reports is None:
        from .volterra import solve_volterra
        reports = [_wrap("problem", solve_volterra, problem, horizon, steps[0], cap)]
        extrap = reports[0].t_cap
    rows = []
    z = problem.forcing
    for r in reports:
        zt = np.asarray(z(r.times), float)
        rows.extend([r.grid_steps, t, y, zv] for t, y, zv in zip(r.times, r.solution_path, zt))
    write_csv(out / "volterra.csv", ["steps", "t", "y", "z"], rows)
    summary = {"grids": [{"steps": r.grid_steps, "exploded": r.exploded, "t_cap": r.t_cap,
                          "level_crossings": [list(c) for c in r.level_crossings]}
                         for r in reports],
               "exploded": reports[-1].exploded, "t_cap_extrapolated": extrap}
    if isinstance(z, AffineForcing) and z.lam >= 0 and problem.nonlinearity.monotone:
        eb = explosion_bound(problem, horizon)
        summary["bound"] = eb.bound
        summary["t_cap_below_bound"] = bool(reports[-1].t_cap <= eb.bound) if reports[-1].exploded else None
    return summary


def cmd_simulate(cfg, seed, threads, out: Path):
    model = parse_model(cfg.get("model"))
    mc = parse_mc(cfg.get("mc"), model.T, seed, threads)
    sample = simulate_price_paths(model, mc)
    write_csv(out / "simulate.csv", ["path_index", "terminal", "running_max"],
              zip(sample.path_indices, sample.terminal, sample.running_max))
    plain = summarize(sample.terminal, antithetic=mc.antithetic)
    cond = conditional_price_estimator(model, mc)
    summary = {"plain": _mc_dict(plain), "conditional": _mc_dict(cond), "s0": model.s0,
               "conditional_z": (cond.mean - model.s0) / cond.std_error if cond.std_error > 0 else 0.0}
    caps = _floats(cfg, "truncation_caps", "config", [])
    if caps:
        m = _get(cfg, "m", "config", 2.0)
        summary["truncated_moment"] = {_key(c): _mc_dict(r)
                                       for c, r in zip(caps, truncated_moment(model, m, caps, mc))}
    return summary


def cmd_defect(cfg, seed, threads, out: Path):
    model = parse_model(cfg.get("model"))
    mc = parse_mc(cfg.get("mc"), model.T, seed, threads)
    levels = _floats(cfg, "levels", "config")
    grids = cfg.get("grids")
    if grids is not None and (not isinstance(grids, list) or any(
            not isinstance(g, int) or g < 2 for g in grids)):
        raise ConfigError("config.grids: expected a list of integers >= 2")
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])) or levels[0] <= 0:
        raise ConfigError("config.levels: must be positive and strictly increasing")
    rep = martingale_defect(model, levels, mc, grids)
    rows = []
    for n in rep.grids:
        for lv, r in zip(rep.levels, rep.hit_probs[n]):
            rows.append([n, lv, r.mean, r.std_error, r.wilson[0], r.wilson[1], r.n_exploded])
    write_csv(out / "defect.csv", ["grid_steps", "level", "estimate", "std_error",
                                   "wilson_lo", "wilson_hi", "n_exploded"], rows)
    return {"levels": rep.levels, "grids": rep.grids, "defect_estimate": rep.defect_estimate,
            "hit_probs": {str(n): [_mc_dict(r) for r in rep.hit_probs[n]] for n in rep.grids}}


def cmd_moment(cfg, seed, threads, out: Path):
    model = parse_model(cfg.get("model"))
    mc = parse_mc(cfg.get("mc"), model.T, seed, threads)
    m = _get(cfg, "m", "config")
    gamma = _get(cfg, "gamma", "config", None)
    if gamma is None:
        try:
            gamma = choose_gamma(model.rho, m)
        except (InfeasibleError, DomainError) as exc:
            raise ConfigError(f"config.m/model.rho: {exc}") from None
    if "barrier_A" in cfg:
        A = _get(cfg, "barrier_A", "config")
    else:
        A = _get(cfg, "lambda", "config") * model.T + 1.0
    caps_n = _floats(cfg, "caps_n", "config")
    rows = []
    ladder = []
    for cap in caps_n:
        ctrl = _wrap("config", ControlConfig, model.rho, m, gamma, cap, A)
        r = boue_dupuis_lower_bound(model, ctrl, mc)
        ladder.append(r)
        rows.append(["lower_bound", cap, r.mean, r.std_error, r.ci95[0], r.ci95[1]])
    trunc_caps = _floats(cfg, "truncation_caps", "config", [])
    trunc = truncated_moment(model, m, trunc_caps, mc) if trunc_caps else []
    for c, r in zip(trunc_caps, trunc):
        rows.append(["truncated_moment", c, r.mean, r.std_error, r.ci95[0], r.ci95[1]])
    write_csv(out / "moment.csv", ["kind", "cap", "mean", "std_error", "ci_lo", "ci_hi"], rows)
    summary = {"m": m, "gamma": gamma, "barrier_A": A,
               "lower_bound": {_key(c): _mc_dict(r) for c, r in zip(caps_n, ladder)},
               "lower_bound_increasing": all(b.mean > a.mean for a, b in zip(ladder, ladder[1:])),
               "truncated_moment": {_key(c): _mc_dict(r) for c, r in zip(trunc_caps, trunc)}}
    sweep = cfg.get("gamma_sweep")
    if sweep:
        res = []
        if not isinstance(sweep, list):
            raise ConfigError("config.gamma_sweep: expected a list of [rho, m] pairs")
        for k, pair in enumerate(sweep):
            try:
                rho, mm = (float(v) for v in pair)
            except (TypeError, ValueError):
                raise ConfigError(f"config.gamma_sweep[{k}]: expected a [rho, m] pair") from None
            try:
                res.append({"rho": rho, "m": mm, "gamma": choose_gamma(rho, mm), "feasible": True})
            except (InfeasibleError, DomainError) as exc:
                res.append({"rho": rho, "m": mm, "feasible": False, "error": str(exc)})
        summary["gamma_sweep"] = res
    return summary


def cmd_covcheck(cfg, seed, threads, out: Path):
    alphas = _floats(cfg, "alphas", "config", [0.8])
    ts = _floats(cfg, "t_values", "config", [0.1, 1.0, 5.0])
    rows = []
    worst_var = worst_cov = worst_bm = 0.0
    for a in alphas:
        k = _wrap("config.alphas", PowerKernel, a)
        for t in ts:
            cf, q = variance_Y(k, t), variance_Y_quadrature(k, t)
            err = abs(q / cf - 1)
            worst_var = max(worst_var, err)
            rows.append(["variance", a, t, t, cf, q, err])
            for u in ts:
                if u < t:
                    q, h = covariance_YY(k, t, u), covariance_matrix_YY(k, [t, u])[0, 1]
                    err = abs(h / q - 1)
                    worst_cov = max(worst_cov, err)
                    rows.append(["covariance", a, t, u, q, h, err])
                    if a == 1.0:
                        e = max(abs(q - min(t, u)), abs(cross_cov_YW(k, 1.0, t, u) - min(t, u)))
                        worst_bm = max(worst_bm, e)
                        rows.append(["brownian", a, t, u, q, min(t, u), e])
    T = _get(cfg, "T", "config", 1.0)
    mesh = _floats(cfg, "mesh", "config", list(np.logspace(-3, 0, 13) * T))
    theta_by_alpha = {}
    for a in alphas:
        k = PowerKernel(a)
        th = continuity_modulus(k, T, mesh, _get(cfg, "resolution", "config", 400, int))
        for h, v in zip(mesh, th):
            rows.append(["theta", a, h, T, v, math.sqrt(h) if a == 1.0 else None,
                         abs(v - math.sqrt(h)) if a == 1.0 else None])
        d = dudley_diagnostic(list(zip(mesh, th)))
        theta_by_alpha[_key(a)] = {"dudley_integral": d.integral_estimate,
                                   "converged": d.converged, "tail_exponent": d.tail_exponent}
    summary = {"worst_variance_relerr": worst_var, "worst_covariance_relerr": worst_cov,
               "worst_brownian_abserr": worst_bm, "continuity": theta_by_alpha}

    samp = cfg.get("sampling")
    if samp:
        a = _get(samp, "alpha", "sampling")
        rho = _get(samp, "rho", "sampling", 0.0)
        n = _get(samp, "n", "sampling", 64, int)
        count = _get(samp, "count", "sampling", 100000, int)
        grid = _wrap("sampling.n", Grid, T, n)
        factor = build_joint_factor(PowerKernel(a), rho, grid)
        summary["jitter"] = factor.jitter
        sample_z = _sample_cov_zscore(factor, seed, count)
        summary["sample_cov_max_abs_z"] = sample_z
        rows.append(["sample_cov", a, n, count, sample_z, 4.0, None])
    corr = cfg.get("corridor")
    if corr:
        res = {}
        n = _get(corr, "n", "corridor", 16, int)
        count = _get(corr, "count", "corridor", 100000, int)
        for a in _floats(corr, "alphas", "corridor"):
            for lam in _floats(corr, "lambdas", "corridor"):
                r = corridor_probability(PowerKernel(a), lam, T, Grid(T, n), seed, count)
                res[f"{_key(a)},{_key(lam)}"] = _mc_dict(r)
                rows.append(["corridor", a, lam, n, r.mean, r.wilson[0], r.wilson[1]])
        summary["corridor"] = res
    write_csv(out / "covcheck.csv", ["section", "alpha", "a", "b", "value", "reference", "error"], rows)
    return summary


def _sample_cov_zscore(factor, seed, count) -> float:
    """Largest |sample - analytic| / SE over all (Y, W) covariance entries."""
    n = factor.grid.n
    acc_sum = np.zeros(2 * n)
    acc_prod = np.zeros((2 * n, 2 * n))
    acc_sq = np.zeros((2 * n, 2 * n))
    chunk = 8192
    for s in range(0, count, chunk):
        b = sample_joint_paths(factor, (seed, s), min(chunk, count - s))
        X = np.hstack([b.y[:, 1:], np.cumsum(b.dw, axis=1)])
        acc_sum += X.sum(0)
        acc_prod += X.T @ X
        acc_sq += (X * X).T @ (X * X)
    # centred model: E[X] = 0 is known, so use raw moments
    S = acc_prod / count
    se = np.sqrt(np.maximum(acc_sq / count - S * S, 1e-300) / count)
    C = factor.covariance_yw()
    return float(np.max(np.abs(S - C) / se))


COMMANDS = {"bound": cmd_bound, "volterra": cmd_volterra, "simulate": cmd_simulate,
            "defect": cmd_defect, "moment": cmd_moment, "covcheck": cmd_covcheck}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def list_presets():
    return sorted(p.name[:-5] for p in resources.files("fracvol.presets").iterdir()
                  if p.name.endswith(".json"))


def load_preset(name: str) -> dict:
    path = resources.files("fracvol.presets") / f"{name}.json"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    return json.loads(path.read_text())


def build_parser():
    p = argparse.ArgumentParser(prog="fracvol", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="JSON configuration file")
    src.add_argument("--preset", help="name of a shipped preset configuration")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--out", type=Path, default=Path("fracvol-out"), help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker cap for path sampling")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is not None:
            try:
                cfg = json.loads(args.config.read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed JSON config: {exc}") from None
        else:
            cfg = load_preset(args.preset)
        if not isinstance(cfg, dict):
            raise ConfigError("config root must be an object")
        if "subcommand" in cfg and cfg["subcommand"] != args.subcommand:
            raise ConfigError(f"config is for subcommand {cfg['subcommand']!r}, not {args.subcommand!r}")
        if args.threads < 1:
            raise ConfigError("--threads: must be >= 1")
        seed = args.seed if args.seed is not None else _get(cfg, "seed", "config", 0, int)
        if seed < 0 or seed >= 2 ** 64:
            raise ConfigError("seed: must be an unsigned 64-bit integer")
        args.out.mkdir(parents=True, exist_ok=True)
        started = _dt.datetime.now(_dt.timezone.utc)
        summary = COMMANDS[args.subcommand](cfg, seed, args.threads, args.out)
    except (ConfigError, DomainError, DataError, InfeasibleError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (TypeError, KeyError, IndexError, AttributeError, ValueError) as exc:
        # config shapes that slipped past field checks (wrong nesting, short lists)
        print(f"validation error: malformed config ({type(exc).__name__}: {exc})", file=sys.stderr)
        return 2
    summary = {"subcommand": args.subcommand, "seed": seed, **summary}
    (args.out / "summary.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    meta = {"started": started.isoformat(), "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
            "version": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "argv": list(argv if argv is not None else sys.argv[1:]),
            "config": str(args.config) if args.config else f"preset:{args.preset}",
            "threads": args.threads}
    (args.out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
