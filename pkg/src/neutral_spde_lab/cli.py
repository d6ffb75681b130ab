"""``neutral-spde-lab <command> --config path [--threads n] [--out dir]``.

Commands: certify, spectrum, simulate, variance, stationarity, validate.
Every report is deterministic JSON embedding the fully resolved config and
the package version, printed to standard output and, with ``--out``,
written to ``<out>/<command>.json``.

Exit codes: 2 for configuration or numerical errors; certify uses 0/10/20
(analytic / numeric only / not certified); stationarity and validate use
0 for PASS and 1 for FAIL; the other commands return 0 on success.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys as _sys
from importlib import resources

import jsonschema
import numpy as np
import yaml

from . import __version__, certify as certify_mod, picard, simulate, spectrum, stationary
from .charfn import NeutralSystem, from_concrete
from .errors import ConfigError, LabError
from .kernels import kernel_from_spec

COMMANDS = ("certify", "spectrum", "simulate", "variance", "stationarity", "validate")

DEFAULTS = {
    "spectrum": {"box": None, "a_max": None},
    "certify": {"numeric": True},
    "simulate": {
        "h": 1e-3, "T": 10.0, "burn_in": None, "scheme": "semi_implicit", "seed": 0,
        "replicas": 1, "stride": 1, "field_grid": None,
        "initial": {"type": "zero", "values": None, "phi0": None},
    },
    "variance": {"tol": 1e-8, "omega_max": None, "cross": True},
    "stationarity": {"batches": stationary.DEFAULT_BATCHES, "sigmas": 3.0},
    "validate": {
        "h": 1e-3, "horizon": 3.0, "modes": 2, "rel_tol": 1e-3, "order_slack": 0.2,
        "restart_pairs": 5, "resolvent_grids": [128, 256, 512, 1024],
        "resolvent_lambda": [1.0, 1.0], "min_order": 1.8, "seed": 0,
    },
}


# --------------------------------------------------------------------------
# config handling


def _schema():
    return json.loads(resources.files(__package__).joinpath("schema.json").read_text())


def _error_key(err):
    if err.validator == "additionalProperties" and isinstance(err.instance, dict):
        known = set(err.schema.get("properties", {}))
        extra = sorted(set(err.instance) - known)
        if extra:
            return extra[0]
    if err.validator == "required" and isinstance(err.instance, dict):
        missing = [k for k in err.validator_value if k not in err.instance]
        if missing:
            return missing[0]
    path = [p for p in err.absolute_path if isinstance(p, str)]
    return path[-1] if path else None


def validate_config(cfg):
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), e.message))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        key = _error_key(err)
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {err.message}", key=key)


def load_config(path):
    with open(path) as fh:
        text = fh.read()
    try:
        cfg = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a mapping", key="system")
    return cfg


def _merge(default, given):
    out = copy.deepcopy(default)
    for key, val in (given or {}).items():
        if isinstance(out.get(key), dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_config(cfg):
    """Validate ``cfg`` and fill in every default."""
    validate_config(cfg)
    s = dict(cfg["system"])
    s.setdefault("form", "abstract")
    s.setdefault("gamma", {"type": "zero"})
    s.setdefault("beta", {"type": "zero"})
    s.setdefault("alpha1", 0.0)
    s.setdefault("alpha2", 0.0)
    s.setdefault("modes", 1)
    s.setdefault("noise", [1.0] * s["modes"])
    out = {"system": s}
    for section, default in DEFAULTS.items():
        out[section] = _merge(default, cfg.get(section))
    return out


def project_noise(samples, K):
    """Sine coefficients of b sampled at xi_i = i pi / (n + 1), i = 1..n.

    Trapezoid rule over [0, pi]; the integrand vanishes at both ends.
    """
    b = np.asarray(samples, dtype=float)
    if b.size == 0:
        raise ConfigError("noise samples are empty", key="samples")
    n = b.size
    step = math.pi / (n + 1)
    xi = step * np.arange(1, n + 1)
    basis = math.sqrt(2.0 / math.pi) * np.sin(np.outer(np.arange(1, K + 1), xi))
    return step * (basis @ b)


def build_system(resolved):
    s = resolved["system"]
    r = float(s["r"])
    K = int(s["modes"])
    gamma = kernel_from_spec(s["gamma"], r)
    beta = kernel_from_spec(s["beta"], r)
    if isinstance(s["noise"], dict):
        noise = project_noise(s["noise"]["samples"], K)
    else:
        noise = np.asarray(s["noise"], dtype=float)
        if noise.size != K:
            raise ConfigError(f"noise has {noise.size} coefficients but modes = {K}", key="noise")
    if s["form"] == "concrete":
        if s["alpha1"] or s["alpha2"]:
            raise ConfigError("point delays are only supported in the abstract form", key="alpha1")
        return from_concrete(r, gamma, beta, modes=K, noise=noise)
    return NeutralSystem(r, gamma, beta, float(s["alpha1"]), float(s["alpha2"]), noise)


# --------------------------------------------------------------------------
# reports


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def render(report):
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def _report(command, resolved, body):
    out = {"command": command, "version": __version__, "config": resolved}
    out.update(body)
    return out


def _box(resolved):
    b = resolved["spectrum"]["box"]
    return None if b is None else spectrum.SearchBox(**b)


def _initial_state(sys, sim):
    init = sim["initial"]
    h = sim["h"]
    R = sim["replicas"]
    kind = init.get("type", "zero")
    N = simulate.history_intervals(sys.r, h)
    if kind == "zero":
        hist = np.zeros((sys.modes, N + 1))
    elif kind == "constant":
        vals = np.broadcast_to(np.asarray(init.get("values", 0.0), dtype=float).reshape(-1), (sys.modes,))
        hist = np.repeat(vals[:, None], N + 1, axis=1)
    else:
        hist = np.asarray(init.get("values"), dtype=float)
    try:
        return simulate.init_history(sys, hist, h, phi0=init.get("phi0"), replicas=R)
    except ValueError as exc:
        raise ConfigError(str(exc), key="values") from exc


def _sim_config(sim, T=None):
    return simulate.SimConfig(h=sim["h"], T=sim["T"] if T is None else T,
                              burn_in=sim["burn_in"] or 0.0, scheme=sim["scheme"],
                              seed=sim["seed"], replicas=sim["replicas"], stride=sim["stride"])


def cmd_certify(resolved, sys, args):
    cert = certify_mod.certify(sys, use_numeric=resolved["certify"]["numeric"], box=_box(resolved),
                               threads=args.threads)
    return _report("certify", resolved, {"certificate": cert.to_dict()}), cert.exit_code


def cmd_spectrum(resolved, sys, args):
    rep = spectrum.system_abscissa(sys, box=_box(resolved), threads=args.threads,
                                   a_max=resolved["spectrum"]["a_max"])
    return _report("spectrum", resolved, rep.to_dict()), 0


def cmd_simulate(resolved, sys, args):
    sim = resolved["simulate"]
    cfg = _sim_config(sim)
    state = _initial_state(sys, sim)
    traj = simulate.run(sys, cfg, state, threads=args.threads)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    files = []
    for i in range(cfg.replicas):
        name = "trajectory.csv" if cfg.replicas == 1 else f"trajectory_{i}.csv"
        traj.to_csv(os.path.join(out, name), replica=i)
        files.append(name)
    if sim["field_grid"]:
        n = int(sim["field_grid"])
        xi = math.pi * np.arange(1, n + 1) / (n + 1)
        field = simulate.reconstruct_field(traj.y[0], xi)
        with open(os.path.join(out, "field.csv"), "w") as fh:
            fh.write(",".join(["t"] + [repr(float(x)) for x in xi]) + "\n")
            for t, row in zip(traj.t, field):
                fh.write(",".join([repr(float(t))] + [repr(float(v)) for v in row]) + "\n")
        files.append("field.csv")
    recovery = simulate.recovery_residual(sys, traj.final)
    body = {
        "files": files,
        "steps": traj.final.step,
        "final_time": traj.final.t,
        "samples": int(traj.t.size),
        "recovery_residual_max": float(recovery.max()),
        "backend": simulate.BACKEND,
        "noise_coefficients": sys.noise,
    }
    return _report("simulate", resolved, body), 0


def cmd_variance(resolved, sys, args):
    v = resolved["variance"]
    K = sys.modes
    variances = [stationary.oracle_variance(sys, k, tol=v["tol"], omega_max=v["omega_max"], full=True)
                 for k in range(1, K + 1)]
    body = {
        "variances": [r.value for r in variances],
        "errors": [{"quadrature": r.quadrature_error, "tail_bound": r.tail_bound,
                    "omega_max": r.omega_max} for r in variances],
        "noise_coefficients": sys.noise,
    }
    if v["cross"]:
        C, err = stationary.oracle_matrix(sys, tol=v["tol"], omega_max=v["omega_max"],
                                          check_stability=False)
        body["cross_covariance"] = C
        body["cross_covariance_error_bound"] = err
    return _report("variance", resolved, body), 0


def cmd_stationarity(resolved, sys, args):
    sim = resolved["simulate"]
    st = resolved["stationarity"]
    burn = sim["burn_in"]
    if burn is None:
        absc = spectrum.system_abscissa(sys, threads=args.threads).system_abscissa
        if not absc < 0:
            raise LabError(f"system is not stable (abscissa {absc:.6g}); no stationary regime")
        burn = stationary.default_burn_in(absc)
        burn = math.ceil(burn / (sim["h"] * sim["stride"])) * sim["h"] * sim["stride"]
    if burn >= sim["T"]:
        raise ConfigError(f"burn-in {burn:.6g} is not below T = {sim['T']}", key="T")
    cfg = _sim_config(sim)
    traj = simulate.run(sys, cfg, _initial_state(sys, sim), threads=args.threads)
    oracle = [stationary.oracle_variance(sys, k) for k in range(1, sys.modes + 1)]
    est = stationary.empirical_report(traj, burn, sys.r, batches=st["batches"], oracle=oracle,
                                      sigmas=st["sigmas"])
    ok = est.verdict == "PASS" and est.oracle_verdict == "PASS"
    body = {"burn_in": burn, "estimate": est.to_dict(), "verdict": "PASS" if ok else "FAIL"}
    return _report("stationarity", resolved, body), 0 if ok else 1


def picard_vs_simulate(sys, h, horizon, K, history=1.0):
    """Sup-norm gaps between the stepper (step h, b = 0) and the Picard
    reference (step h/2) over [0, horizon], for h and h/2."""
    quiet = NeutralSystem(sys.r, sys.gamma, sys.beta, sys.alpha1, sys.alpha2, np.zeros(K))
    rows = []
    for step in (h, h / 2):
        hp = step / 2
        Np = simulate.history_intervals(sys.r, hp)
        ref = picard.picard_solve(quiet, np.full((K, Np + 1), history), horizon, h=hp)
        state = simulate.constant_history(quiet, step, np.full(K, history))
        traj = simulate.run(quiet, simulate.SimConfig(h=step, T=horizon), state)
        gap = float(np.max(np.abs(traj.y[0] - ref.x[::2])))
        rows.append({"h": step, "sup_error": gap, "relative_error": gap / float(np.max(np.abs(ref.x))),
                     "max_contraction": max(w.max_contraction for w in ref.windows),
                     "max_delta": max(w.delta for w in ref.windows)})
    return rows


def smooth_history(seed, terms=6):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(terms) + 1j * rng.standard_normal(terms)
    return lambda theta: sum(c[j] * np.exp(1j * j * theta) for j in range(terms))


def cmd_validate(resolved, sys, args):
    v = resolved["validate"]
    K = min(v["modes"], sys.modes)
    checks = {}

    rows = picard_vs_simulate(sys, v["h"], v["horizon"] * sys.r, K)
    ratio = rows[0]["sup_error"] / rows[1]["sup_error"] if rows[1]["sup_error"] > 0 else math.inf
    slack = v["order_slack"]
    checks["picard_vs_simulate"] = {
        "rows": rows, "halving_ratio": ratio,
        "pass": rows[0]["relative_error"] <= v["rel_tol"] and (2 - 2 * slack) <= ratio <= (2 + 2 * slack),
    }

    rng = np.random.default_rng(v["seed"])
    h = v["h"]
    cfg = simulate.SimConfig(h=h, T=0.0)
    N = simulate.history_intervals(sys.r, h)
    state = simulate.init_history(sys, rng.standard_normal((sys.modes, N + 1)), h)
    gaps = []
    for _ in range(v["restart_pairs"]):
        s, t = (int(x) * h for x in rng.integers(0, 2 * N + 1, size=2))
        gaps.append({"s": s, "t": t, "gap": simulate.restart_check(sys, cfg, state, s, t)})
    checks["restart"] = {"rows": gaps, "pass": all(g["gap"] <= 1e-12 for g in gaps)}

    lam = complex(*v["resolvent_lambda"])
    psi1 = smooth_history(v["seed"])
    psi0 = complex(*rng.standard_normal(2))
    res = []
    for k in range(1, sys.modes + 1):
        vals = [picard.resolvent_check(sys, k, lam, psi0, psi1, n).residual for n in v["resolvent_grids"]]
        res.append({"k": k, "residuals": vals, "order": picard.fitted_order(v["resolvent_grids"], vals)})
    checks["resolvent"] = {"lambda": lam, "grids": v["resolvent_grids"], "rows": res,
                           "pass": all(r["order"] >= v["min_order"] for r in res)}

    ok = all(c["pass"] for c in checks.values())
    body = {"checks": checks, "verdict": "PASS" if ok else "FAIL"}
    return _report("validate", resolved, body), 0 if ok else 1


HANDLERS = {
    "certify": cmd_certify,
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "variance": cmd_variance,
    "stationarity": cmd_stationarity,
    "validate": cmd_validate,
}


def build_parser():
    p = argparse.ArgumentParser(prog="neutral-spde-lab", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="JSON or YAML run configuration")
    p.add_argument("--threads", type=int, default=1, help="worker cap (default 1)")
    p.add_argument("--out", default=None, help="directory for reports and CSV files")
    p.add_argument("--version", action="version", version=__version__)
    return p


def dispatch(command, config, threads=1, out=None):
    """Run ``command`` on a config mapping; returns ``(exit_code, report_text)``."""
    args = argparse.Namespace(threads=max(1, int(threads)), out=out)
    resolved = resolve_config(config)
    sys = build_system(resolved)
    report, code = HANDLERS[command](resolved, sys, args)
    text = render(report)
    if out:
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, f"{command}.json"), "w") as fh:
            fh.write(text)
    return code, text


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        code, text = dispatch(args.command, config, args.threads, args.out)
    except ConfigError as exc:
        key = f" (key: {exc.key})" if exc.key else ""
        print(f"config error{key}: {exc}", file=_sys.stderr)
        return 2
    except (LabError, OSError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 2
    _sys.stdout.write(text)
    return code


if __name__ == "__main__":  # pragma: no cover
    _sys.exit(main())
