"""Command-line front end: JSON config, dispatch, deterministic artifacts.

Subcommands: bounds, cir-density, classify, simulate, estimate,
verify-tail, verify-zero, report.  Every run writes a JSON report (and CSV
curves where applicable) atomically, embeds the config hash and library
version, and is byte-identical when repeated with the same config and
seed at any worker count.  Exit codes: 0 pass/ok, 1 verification fail,
2 inconclusive, 3 error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bounds import BoundContext, TailEnvelope, compute_bound_values, eval_combinatorial
from .boundary import classify_zero_boundary
from .cir import cir_mean_var, cir_params, cir_pdf
from .density import fourier_local_density, kde
from .errors import ParseError, SqrtDiffError, ValidationError
from .mc import estimate_ball_prob, simulate_paths, terminal_samples
from .model import CoefficientSet, GrowthProfile, NormTable, local_norms
from .verify import cross_validate, exact_cir_samples, verify_tail, verify_zero

COMMANDS = ("bounds", "cir-density", "classify", "simulate", "estimate",
            "verify-tail", "verify-zero", "report")

_NUMERIC_DEFAULTS = {
    "steps": 512,
    "paths": 100_000,
    "grid_points": 512,
    "kappa": 1.0,
    "gamma0": 0.25,
    "xi_max": 256.0,
    "xi_step": 0.05,
    "radius": 1.0,
    "bandwidth": None,
}

_MODEL_KEYS_CONSTANT = {"family", "a", "b", "gamma", "alpha", "eta"}
_MODEL_KEYS_TABULATED = {"family", "knots", "a_values", "b_values", "gamma_values",
                         "alpha", "eta"}
_TOP_KEYS = {"model", "task", "numerics", "seed", "output_dir"}


@dataclass
class RunConfig:
    model: dict
    task: dict
    numerics: dict
    seed: int
    output_dir: str
    raw: dict = field(default_factory=dict)

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    def coefficient_set(self) -> CoefficientSet:
        m = self.model
        if m["family"] == "constant":
            return CoefficientSet.constant(m["a"], m["b"], m["gamma"], m["alpha"])
        return CoefficientSet.tabulated(m["knots"], m["a_values"], m["b_values"],
                                        m["gamma_values"], m["alpha"], m.get("eta", 0.0))


def _require_keys(section: dict, allowed: set, name: str) -> None:
    for key in section:
        if key not in allowed:
            raise ValidationError(f"unknown key {key!r} in {name}", field=f"{name}.{key}")


def validate_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    _require_keys(data, _TOP_KEYS, "config")
    model = data.get("model", {"family": "constant", "a": 1.0, "b": 1.0,
                               "gamma": 1.0, "alpha": 0.5})
    family = model.get("family")
    if family == "constant":
        _require_keys(model, _MODEL_KEYS_CONSTANT, "model")
        for key in ("a", "b", "gamma"):
            if key not in model:
                raise ValidationError(f"model.{key} is required", field=f"model.{key}")
    elif family == "tabulated":
        _require_keys(model, _MODEL_KEYS_TABULATED, "model")
        for key in ("knots", "a_values", "b_values", "gamma_values"):
            if key not in model:
                raise ValidationError(f"model.{key} is required", field=f"model.{key}")
    else:
        raise ValidationError(f"unknown model family {family!r}", field="model.family")
    model.setdefault("alpha", 0.5)
    model.setdefault("eta", 0.0)
    alpha = model["alpha"]
    if not (isinstance(alpha, (int, float)) and 0.5 <= alpha < 1.0):
        raise ValidationError("alpha must lie in [0.5, 1)", field="model.alpha")

    task = data.get("task", {})
    if "command" not in task:
        raise ValidationError("task.command is required", field="task.command")
    if task["command"] not in COMMANDS:
        raise ValidationError(f"unknown command {task['command']!r}", field="task.command")

    numerics = dict(_NUMERIC_DEFAULTS)
    user_numerics = data.get("numerics", {})
    _require_keys(user_numerics, set(_NUMERIC_DEFAULTS), "numerics")
    numerics.update(user_numerics)
    if numerics["kappa"] <= 0:
        raise ValidationError("kappa must be > 0", field="numerics.kappa")
    if numerics["gamma0"] <= 0:
        raise ValidationError("gamma0 must be > 0", field="numerics.gamma0")

    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ValidationError("seed must be an integer", field="seed")
    output_dir = data.get("output_dir", "sqrtdiff-out")

    raw = {"model": model, "task": task, "numerics": numerics,
           "seed": seed, "output_dir": output_dir}
    return RunConfig(model=model, task=task, numerics=numerics, seed=seed,
                     output_dir=output_dir, raw=raw)


def load_config(path: str) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg} at line {exc.lineno}, column {exc.colno}",
                         line=exc.lineno, column=exc.colno) from exc
    return validate_config(data)


# ---------------------------------------------------------------------------
# Artifact output
# ---------------------------------------------------------------------------

def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(grid, values, header, path: str) -> None:
    """Two-column CSV with '.' decimals and 17 significant digits, written atomically."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.shape != values.shape:
        raise ValueError("grid and values must have equal length")
    lines = [header]
    lines.extend(f"{_fmt(g)},{_fmt(v)}" for g, v in zip(grid, values))
    _atomic_write(path, "\r\n".join(lines) + "\r\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_report(config: RunConfig, name: str, payload: dict) -> str:
    report = {
        "command": config.task["command"],
        "config": config.raw,
        "config_hash": config.config_hash(),
        "library_version": __version__,
        "result": _jsonable(payload),
    }
    path = os.path.join(config.output_dir, f"{name}.json")
    _atomic_write(path, json.dumps(report, sort_keys=True, indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------
# Task implementations
# ---------------------------------------------------------------------------

def _task_bounds(config: RunConfig) -> tuple[int, dict]:
    task = config.task
    m = int(task.get("m", 1))
    k = int(task.get("k", 3))
    t = float(task.get("t", 1.0))
    R = float(task.get("radius", 1.0))
    q = task.get("q", 1)
    q_bar = task.get("q_bar", 0)
    kappa = float(config.numerics["kappa"])
    ctx = BoundContext(t=t, T=max(t, float(task.get("T", t))), R=R, m=m, d=int(task.get("d", 1)),
                       k=k, kappa=kappa)
    growth = GrowthProfile(q=q, q_bar=q_bar)
    if "y0" in task and config.model["family"] != "unspecified":
        c = config.coefficient_set()
        table = local_norms(c, float(task["y0"]), R, m * k + 1, growth=growth)
    else:
        table = NormTable.flat(radius=R, k_max=m * k + 1,
                               value=float(task.get("flat_norms", 1.0)),
                               c_star=float(task.get("c_star", 1.0)), growth=growth)
    vals = compute_bound_values(table, ctx, float(task.get("y0", 0.0)))
    phi_k, phi_prime_k, q_prime_k = eval_combinatorial(max(k, 1), m, q, q_bar)
    payload = vals.as_dict()
    payload.update({"phi_k": phi_k, "phi_prime_k": phi_prime_k, "q_prime_k": q_prime_k,
                    "inputs": {"m": m, "k": k, "t": t, "radius": R, "q": q,
                               "q_bar": q_bar, "kappa": kappa}})
    return 0, payload


def _task_cir_density(config: RunConfig) -> tuple[int, dict]:
    task, mdl = config.task, config.model
    if mdl["family"] != "constant":
        raise ValidationError("cir-density requires the constant family", field="model.family")
    p = cir_params(mdl["a"], mdl["b"], mdl["gamma"], float(task.get("x0", 1.0)),
                   float(task.get("t", 1.0)))
    mean, var = cir_mean_var(p)
    lo = float(task.get("y_min", max(mean - 6 * math.sqrt(var), 1e-9)))
    hi = float(task.get("y_max", mean + 8 * math.sqrt(var)))
    grid = np.linspace(lo, hi, int(config.numerics["grid_points"]))
    pdf = cir_pdf(p, grid)
    csv_path = os.path.join(config.output_dir, "cir_density.csv")
    write_csv(grid, pdf, "y,pdf", csv_path)
    payload = {"L_t": p.L_t, "delta": p.delta, "zeta_t": p.zeta_t,
               "mean": mean, "variance": var, "csv": csv_path}
    return 0, payload


def _task_classify(config: RunConfig) -> tuple[int, dict]:
    c = config.coefficient_set()
    report = classify_zero_boundary(c, cpoint=float(config.task.get("cpoint", 1.0)))
    code = {"unattainable": 0, "attainable": 0, "inconclusive": 2}[report.classification]
    return code, report.as_dict()


def _task_simulate(config: RunConfig) -> tuple[int, dict]:
    task = config.task
    c = config.coefficient_set()
    scheme = task.get("scheme", "full-truncation-euler")
    t = float(task.get("t", 1.0))
    x0 = float(task.get("x0", 1.0))
    n_steps = int(task.get("steps", config.numerics["steps"]))
    n_paths = int(task.get("paths", config.numerics["paths"]))
    ens = simulate_paths(c, x0, t, n_steps, n_paths, scheme=scheme,
                         master_seed=config.seed)
    terminal = np.maximum(ens.states[:, -1], 0.0)
    payload = {
        "scheme": scheme, "steps": n_steps, "paths": n_paths, "t": t, "x0": x0,
        "terminal_mean": float(np.mean(terminal)),
        "terminal_std": float(np.std(terminal, ddof=1)),
        "terminal_se": float(np.std(terminal, ddof=1) / math.sqrt(n_paths)),
        "min_state": float(np.min(ens.states)),
        "max_state": float(np.max(ens.states)),
    }
    if task.get("ball_y0") is not None:
        res = estimate_ball_prob(ens, float(task["ball_y0"]),
                                 float(task.get("ball_radius", config.numerics["radius"])))
        payload["ball_prob"] = {"estimate": res.estimate, "se": res.standard_error}
    if task.get("write_paths"):
        csv_path = os.path.join(config.output_dir, "paths.csv")
        n_keep = min(int(task.get("write_paths")), n_paths)
        lines = ["t," + ",".join(f"path{i}" for i in range(n_keep))]
        for j, tv in enumerate(ens.times):
            row = [_fmt(tv)] + [_fmt(ens.states[i, j]) for i in range(n_keep)]
            lines.append(",".join(row))
        _atomic_write(csv_path, "\r\n".join(lines) + "\r\n")
        payload["paths_csv"] = csv_path
    return 0, payload


def _task_estimate(config: RunConfig) -> tuple[int, dict]:
    task, num = config.task, config.numerics
    c = config.coefficient_set()
    method = task.get("method", "kde-log")
    t = float(task.get("t", 1.0))
    x0 = float(task.get("x0", 1.0))
    n_paths = int(task.get("paths", num["paths"]))
    n_steps = int(task.get("steps", num["steps"]))
    scheme = task.get("scheme", "exact-cir" if c.is_constant else "full-truncation-euler")
    samples = terminal_samples(c, x0, t, n_steps, n_paths, scheme=scheme,
                               master_seed=config.seed)
    pos = samples[samples > 0]
    lo = float(task.get("y_min", max(np.quantile(pos, 1e-4), 1e-9)))
    hi = float(task.get("y_max", np.quantile(pos, 1 - 1e-4)))
    grid = np.linspace(lo, hi, int(num["grid_points"]))
    diagnostics: dict = {}
    if method == "kde":
        est = kde(samples, grid, bandwidth=num["bandwidth"], variant="gaussian")
    elif method == "kde-log":
        est = kde(pos, grid, bandwidth=num["bandwidth"], variant="log-gaussian")
    elif method == "fourier-local":
        y0 = float(task.get("y0", np.mean(pos)))
        R = float(task.get("radius", num["radius"]))
        est = fourier_local_density(samples, y0, R, grid,
                                    xi_max=float(num["xi_max"]),
                                    xi_step=float(num["xi_step"]))
        diagnostics = est.diagnostics
    else:
        raise ValidationError(f"unknown estimate method {method!r}", field="task.method")
    csv_path = os.path.join(config.output_dir, "density_estimate.csv")
    write_csv(grid, est.values, "y,density", csv_path)
    payload = {"method": est.method, "bandwidth": est.bandwidth, "paths": n_paths,
               "scheme": scheme, "csv": csv_path, "diagnostics": diagnostics}
    return 0, payload


def _cir_from_config(config: RunConfig):
    mdl, task = config.model, config.task
    if mdl["family"] != "constant":
        raise ValidationError("this task requires the constant family", field="model.family")
    return cir_params(mdl["a"], mdl["b"], mdl["gamma"], float(task.get("x0", 1.0)),
                      float(task.get("t", 1.0)))


def _task_verify_tail(config: RunConfig) -> tuple[int, dict]:
    task, num = config.task, config.numerics
    p = _cir_from_config(config)
    env = TailEnvelope(alpha=config.model["alpha"], gamma_sup=config.model["gamma"],
                       x=p.x, t=p.t, gamma0=float(num["gamma0"]))
    mean, var = cir_mean_var(p)
    lo = float(task.get("y_min", max(p.x + 1.5, mean + 2 * math.sqrt(var))))
    hi = float(task.get("y_max", mean + 12 * math.sqrt(var)))
    report = verify_tail(lambda y: cir_pdf(p, y), env, (lo, hi), seed=config.seed)
    grid = np.linspace(lo, hi, 200)
    csv_path = os.path.join(config.output_dir, "tail_fit.csv")
    write_csv(grid, cir_pdf(p, grid), "y,pdf", csv_path)
    report.artifacts.append(csv_path)
    return report.exit_code, report.as_dict()


def _task_verify_zero(config: RunConfig) -> tuple[int, dict]:
    task = config.task
    p = _cir_from_config(config)
    lo = float(task.get("y_min", 1e-6))
    hi = float(task.get("y_max", 1e-3))
    report = verify_zero(lambda y: cir_pdf(p, y), p.delta, (lo, hi), seed=config.seed)
    grid = np.geomspace(lo, hi, 120)
    csv_path = os.path.join(config.output_dir, "zero_fit.csv")
    write_csv(grid, cir_pdf(p, grid), "y,pdf", csv_path)
    report.artifacts.append(csv_path)
    return report.exit_code, report.as_dict()


def _task_report(config: RunConfig) -> tuple[int, dict]:
    """Full verification bundle on the configured constant model."""
    num = config.numerics
    p = _cir_from_config(config)
    env = TailEnvelope(alpha=config.model["alpha"], gamma_sup=config.model["gamma"],
                       x=p.x, t=p.t, gamma0=float(num["gamma0"]))
    mean, var = cir_mean_var(p)
    sd = math.sqrt(var)
    tail = verify_tail(lambda y: cir_pdf(p, y), env,
                       (max(p.x + 1.5, mean + 2 * sd), mean + 12 * sd), seed=config.seed)
    zero = verify_zero(lambda y: cir_pdf(p, y), p.delta, (1e-6, 1e-3), seed=config.seed)
    poly = verify_polydecay_default(p, mean, sd)
    xval = cross_validate(p, n_samples=min(int(num["paths"]), 100_000),
                          seeds=(config.seed + 1, config.seed + 2))
    reports = {"tail": tail, "zero": zero, "polydecay": poly, "oracle-xval": xval}
    worst = max(r.exit_code for r in reports.values())
    return worst, {name: r.as_dict() for name, r in reports.items()}


def verify_polydecay_default(p, mean: float, sd: float):
    from .verify import verify_polydecay
    return verify_polydecay(lambda y: cir_pdf(p, y), 10.0,
                            (mean + 3 * sd, mean + 12 * sd))


_TASKS = {
    "bounds": _task_bounds,
    "cir-density": _task_cir_density,
    "classify": _task_classify,
    "simulate": _task_simulate,
    "estimate": _task_estimate,
    "verify-tail": _task_verify_tail,
    "verify-zero": _task_verify_zero,
    "report": _task_report,
}


def run(config: RunConfig) -> int:
    """Dispatch a validated config; write the report; return the exit code."""
    command = config.task["command"]
    try:
        code, payload = _TASKS[command](config)
    except SqrtDiffError as exc:
        error_payload = {"error": type(exc).__name__, "message": str(exc)}
        write_report(config, f"{command.replace('-', '_')}_error", error_payload)
        print(f"error: {exc}", file=sys.stderr)
        return 3
    write_report(config, command.replace("-", "_") + "_report", payload)
    return code


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_model_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--a", type=float, default=None)
    sp.add_argument("--b", type=float, default=None)
    sp.add_argument("--gamma", type=float, default=None)
    sp.add_argument("--alpha", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sqrtdiff",
                                     description="square-root-type diffusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=str, default=None)
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", type=str, default=None)
        _add_model_flags(sp)
        if name == "simulate":
            sp.add_argument("--x0", type=float, default=None)
            sp.add_argument("--t", type=float, default=None)
            sp.add_argument("--steps", type=int, default=None)
            sp.add_argument("--paths", type=int, default=None)
            sp.add_argument("--scheme", type=str, default=None,
                            choices=["full-truncation-euler", "exact-cir"])
        if name == "bounds":
            sp.add_argument("--m", type=int, default=None)
            sp.add_argument("--k", type=int, default=None)
            sp.add_argument("--t", type=float, default=None)
            sp.add_argument("--q", type=float, default=None)
            sp.add_argument("--q-bar", dest="q_bar", type=float, default=None)
        if name == "cir-density":
            sp.add_argument("--x0", type=float, default=None)
            sp.add_argument("--t", type=float, default=None)
            sp.add_argument("--y-min", dest="y_min", type=float, default=None)
            sp.add_argument("--y-max", dest="y_max", type=float, default=None)
        if name == "estimate":
            sp.add_argument("--method", type=str, default=None,
                            choices=["kde", "kde-log", "fourier-local"])
            sp.add_argument("--x0", type=float, default=None)
            sp.add_argument("--t", type=float, default=None)
            sp.add_argument("--paths", type=int, default=None)
            sp.add_argument("--y0", type=float, default=None)
            sp.add_argument("--radius", type=float, default=None)
    return parser


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config:
        data = json.loads(open(args.config, encoding="utf-8").read())
    else:
        data = {}
    data.setdefault("task", {})
    data["task"]["command"] = args.command
    model = data.setdefault("model", {"family": "constant", "a": 1.0, "b": 1.0,
                                      "gamma": 1.0, "alpha": 0.5})
    for key in ("a", "b", "gamma", "alpha"):
        val = getattr(args, key, None)
        if val is not None:
            model[key] = val
    for key in ("x0", "t", "steps", "paths", "scheme", "method", "y0", "radius",
                "y_min", "y_max", "m", "k", "q", "q_bar"):
        val = getattr(args, key, None)
        if val is not None:
            data["task"][key] = val
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = args.out
    return validate_config(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            config = load_config(args.config)
            config = _merge_cli_overrides(config, args)
        else:
            config = _config_from_args(args)
    except ParseError as exc:
        print(f"config parse error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"config validation error: {exc}", file=sys.stderr)
        return 3
    return run(config)


def _merge_cli_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    data = dict(config.raw)
    data["task"] = dict(data["task"])
    data["task"]["command"] = args.command
    data["model"] = dict(data["model"])
    for key in ("a", "b", "gamma", "alpha"):
        val = getattr(args, key, None)
        if val is not None:
            data["model"][key] = val
    for key in ("x0", "t", "steps", "paths", "scheme", "method", "y0", "radius",
                "y_min", "y_max", "m", "k", "q", "q_bar"):
        val = getattr(args, key, None)
        if val is not None:
            data["task"][key] = val
    if args.seed is not None:
        data["seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = args.out
    return validate_config(data)


if __name__ == "__main__":
    sys.exit(main())
