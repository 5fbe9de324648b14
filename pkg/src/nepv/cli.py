"""Command-line front end: ``nepv run`` and ``nepv sweep``.

Settings come from an optional ``key = value`` file (``--config``) and from
flags; flags win.  Unknown keys are rejected.  Exit codes: 0 converged,
1 configuration error, 2 iteration cap reached, 3 failed shifted solve.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .analysis import convergence_factor, empirical_gamma
from .core import SolveFailed
from .flow import flow_at_times
from .iteration import (
    FixedShift,
    HeuristicShift,
    SolverConfig,
    Status,
    Version,
    sign_aligned_distance,
    solve,
)
from .problems import GpeParams, build_gpe, build_linear, build_sine, initial_guess
from .problems.gpe import count_vortices, write_fields

log = logging.getLogger("nepv")

EXIT_OK, EXIT_CONFIG, EXIT_MAXITER, EXIT_SOLVE = 0, 1, 2, 3
EXIT_FOR_STATUS = {
    Status.CONVERGED: EXIT_OK,
    Status.MAX_ITER: EXIT_MAXITER,
    Status.SOLVE_FAILED: EXIT_SOLVE,
}

OUTPUTS = ("trace", "stability", "trajectory_compare", "density")
AXES = ("sigma", "beta", "seed")
TRACE_COLUMNS = ("k", "sigma", "h", "rayleigh", "residual_norm", "error_vs_final")
SWEEP_COLUMNS = ("converged", "lambda", "gamma_empirical", "gamma_theoretical", "status", "iterations")


class ConfigError(Exception):
    """Invalid configuration; the message names the offending field."""


def _float(s):
    x = float(s)
    if not math.isfinite(x):
        raise ValueError(f"{s!r} is not a finite number")
    return x


def _int(s):
    return int(s)


def _float_list(s):
    s = s.strip()
    return [] if not s else [_float(t) for t in s.split(",")]


def _choice(options):
    def conv(s):
        s = s.strip()
        if s not in options:
            raise ValueError(f"{s!r} is not one of {', '.join(options)}")
        return s

    return conv


def _outputs(s):
    items = [t.strip() for t in s.split(",") if t.strip()]
    for t in items:
        if t not in OUTPUTS:
            raise ValueError(f"unknown output {t!r}; choose from {', '.join(OUTPUTS)}")
    return items


# config key -> converter of the raw string
KEYS = {
    "problem": _choice(("sine", "gpe", "linear")),
    "beta": _float,
    "diag": _float_list,
    "N": _int,
    "b": _float,
    "omega": _float,
    "L": _float,
    "sigma": _float,
    "heuristic_eps": _float,
    "h_max": _float,
    "version": _choice(("J", "A")),
    "tol": _float,
    "max_iter": _int,
    "seed": _int,
    "outputs": _outputs,
    "output_dir": str,
    # sweep only
    "axis": _choice(AXES),
    "values": str,
    "workers": _int,
}
SWEEP_KEYS = ("axis", "values", "workers")
HEURISTIC_KEYS = ("heuristic_eps", "h_max")


@dataclass
class ExperimentConfig:
    problem: str
    beta: float = 1.0
    diag: list = field(default_factory=list)
    gpe: Optional[GpeParams] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    outputs: list = field(default_factory=lambda: ["trace"])
    output_dir: str = "nepv-out"
    seed: int = 0


def _canonical(key):
    return key.strip().replace("-", "_")


def read_config_file(path):
    """Parse ``key = value`` lines into ``{key: (raw, where)}``.

    Blank lines and ``#`` comments are ignored; duplicate or unknown keys
    are errors reported with their line number.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    out = {}
    for lineno, line in enumerate(lines, 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        where = f"{path}:{lineno}"
        if "=" not in text:
            raise ConfigError(f"{where}: expected 'key = value', got {text!r}")
        key, raw = (t.strip() for t in text.split("=", 1))
        key = _canonical(key)
        if key not in KEYS:
            raise ConfigError(f"{where}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{where}: duplicate key {key!r} (first set at {out[key][1]})")
        out[key] = (raw, where)
    return out


def _merge(file_values, flag_values):
    merged = dict(file_values)
    # a shift given on one level replaces the other kind of shift from the file
    if "sigma" in flag_values:
        for k in HEURISTIC_KEYS:
            merged.pop(k, None)
    if any(k in flag_values for k in HEURISTIC_KEYS):
        merged.pop("sigma", None)
    merged.update(flag_values)
    return merged


def _convert(merged):
    values = {}
    for key, (raw, where) in merged.items():
        try:
            values[key] = KEYS[key](raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: field {key!r}: {exc}") from None
    return values


def build_config(values, command="run"):
    """Validate converted values and assemble an :class:`ExperimentConfig`."""
    if command == "run":
        extra = [k for k in SWEEP_KEYS if k in values]
        if extra:
            raise ConfigError(f"field {extra[0]!r} is only valid for 'sweep'")
    if "problem" not in values:
        raise ConfigError("field 'problem' is required (sine, gpe or linear)")
    problem = values["problem"]

    own = {"sine": ("beta",), "linear": ("diag",), "gpe": ("N", "b", "omega", "L")}
    for name, keys in own.items():
        if name != problem:
            for k in keys:
                if k in values:
                    raise ConfigError(f"field {k!r} does not apply to problem {problem!r}")

    cfg = ExperimentConfig(problem=problem)
    if problem == "sine":
        cfg.beta = values.get("beta", 1.0)
    elif problem == "linear":
        cfg.diag = values.get("diag", [])
        if len(cfg.diag) < 2:
            raise ConfigError("field 'diag': linear problem needs at least two diagonal entries")
    else:
        kw = {k: values[k] for k in ("N", "b", "omega", "L") if k in values}
        try:
            cfg.gpe = GpeParams(**kw)
        except ValueError as exc:
            raise ConfigError(f"gpe parameters: {exc}") from None

    if "sigma" in values and any(k in values for k in HEURISTIC_KEYS):
        raise ConfigError("field 'sigma' conflicts with heuristic shift fields; give one kind of shift")
    try:
        if "sigma" in values:
            shift = FixedShift(values["sigma"])
        else:
            shift = HeuristicShift(
                eps=values.get("heuristic_eps", HeuristicShift.eps),
                h_max=values.get("h_max", HeuristicShift.h_max),
            )
        cfg.seed = values.get("seed", 0)
        cfg.solver = SolverConfig(
            version=Version(values.get("version", "J")),
            shift=shift,
            residual_tol=values.get("tol", 1e-10),
            max_iter=values.get("max_iter", 1000),
            record_trace=True,
            seed=cfg.seed,
        )
    except ValueError as exc:
        raise ConfigError(f"solver settings: {exc}") from None

    default_outputs = ["trace", "density"] if problem == "gpe" else ["trace"]
    cfg.outputs = values.get("outputs", default_outputs)
    if "density" in cfg.outputs and problem != "gpe":
        raise ConfigError("output 'density' is only available for problem 'gpe'")
    if "trajectory_compare" in cfg.outputs and problem == "gpe":
        raise ConfigError("output 'trajectory_compare' needs an explicit reference integration; not supported for 'gpe'")
    cfg.output_dir = values.get("output_dir", "nepv-out")
    return cfg


def make_problem(cfg):
    if cfg.problem == "sine":
        return build_sine(cfg.beta)
    if cfg.problem == "linear":
        return build_linear(diagonal=cfg.diag)
    return build_gpe(cfg.gpe)


def starting_vector(problem, cfg):
    if cfg.problem == "gpe":
        return initial_guess(problem.grid, cfg.seed)
    return None  # the solver draws from its seed


# ---------------------------------------------------------------- output


def _num(x):
    """JSON-safe float: shortest round-trip repr, NaN/inf become null."""
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def _csv_float(x):
    return repr(float(x))


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_trace(path, report):
    final = report.last_vector
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(TRACE_COLUMNS)
        for rec, v in zip(report.trace, report.iterates):
            w.writerow(
                [
                    rec.k,
                    _csv_float(rec.sigma),
                    _csv_float(rec.h),
                    _csv_float(rec.rayleigh),
                    _csv_float(rec.residual_norm),
                    _csv_float(sign_aligned_distance(v, final)),
                ]
            )


def stability_summary(problem, cfg, report):
    """Theoretical and empirical factors at the final iterate."""
    sigma = report.trace[-1].sigma
    out = {"sigma": _num(sigma)}
    clip = cfg.solver.shift.h_max if isinstance(cfg.solver.shift, HeuristicShift) else None
    out["gamma_empirical"] = _num(empirical_gamma(problem, report, sigma, cfg.solver.version, clipped_only=clip))
    if cfg.solver.version is Version.J:
        st = convergence_factor(problem, report.eigenpair.vector, sigma)
        out.update(
            gamma_theoretical=_num(st.gamma),
            gamma_deflated=_num(st.gamma_deflated),
            mu2=[_num(st.mu2.real), _num(st.mu2.imag)],
            mu2_deflated=[_num(st.mu2_deflated.real), _num(st.mu2_deflated.imag)],
            lambda_multiplicity=st.lambda_multiplicity,
            stable=st.stable.value,
            complete_spectrum=st.complete_spectrum,
        )
    else:
        out["gamma_theoretical"] = None
    return out


def trajectory_compare(problem, report):
    """Sign-aligned distance of each iterate to the flow at its flow time."""
    hs = [r.h for r in report.trace[:-1]]
    if not hs or not all(math.isfinite(h) and h > 0 for h in hs):
        raise ConfigError("trajectory_compare needs every shift below the Rayleigh quotient")
    times = np.concatenate([[0.0], np.cumsum(hs)])
    max_dt = min(1e-3, 0.25 * min(hs))
    states = flow_at_times(problem, report.iterates[0], times, max_dt)
    return [(k, s.t, sign_aligned_distance(v, s.y)) for k, (v, s) in enumerate(zip(report.iterates, states))]


def _shift_dict(shift):
    if isinstance(shift, FixedShift):
        return {"kind": "fixed", "sigma": _num(shift.sigma)}
    return {"kind": "heuristic", "eps": _num(shift.eps), "h_max": _num(shift.h_max)}


def _problem_dict(cfg):
    if cfg.problem == "sine":
        return {"name": "sine", "beta": cfg.beta}
    if cfg.problem == "linear":
        return {"name": "linear", "diag": list(cfg.diag)}
    p = cfg.gpe
    return {"name": "gpe", "N": p.N, "b": p.b, "omega": p.omega, "L": p.L, "dx": p.dx, "beta": p.beta}


def run_experiment(cfg):
    """Run one configuration, write its files and return the exit code."""
    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"field 'output_dir': cannot create {cfg.output_dir!r}: {exc.strerror}") from None
    problem = make_problem(cfg)
    report = solve(problem, cfg.solver, starting_vector(problem, cfg))

    last = report.trace[-1]
    doc = {
        "status": report.status.value,
        "lambda": _num(report.eigenpair.lam) if report.converged else None,
        "rayleigh_final": _num(last.rayleigh),
        "residual_norm": _num(last.residual_norm),
        "iterations": report.iterations,
        "problem": _problem_dict(cfg),
        "version": cfg.solver.version.value,
        "shift": _shift_dict(cfg.solver.shift),
        "residual_tol": cfg.solver.residual_tol,
        "max_iter": cfg.solver.max_iter,
        "seed": cfg.seed,
        "error": str(report.error) if report.error is not None else None,
    }

    if "trace" in cfg.outputs:
        write_trace(os.path.join(cfg.output_dir, "trace.csv"), report)
    if "stability" in cfg.outputs:
        doc["stability"] = stability_summary(problem, cfg, report) if report.converged else None
    if "trajectory_compare" in cfg.outputs:
        rows = trajectory_compare(problem, report)
        with open(os.path.join(cfg.output_dir, "trajectory.csv"), "w", newline="", encoding="utf-8") as fh:
            w = _writer(fh)
            w.writerow(("k", "t", "distance"))
            for k, t, d in rows:
                w.writerow([k, _csv_float(t), _csv_float(d)])
        doc["trajectory_max_distance"] = _num(max(d for _, _, d in rows))
    if "density" in cfg.outputs:
        write_fields(cfg.output_dir, report.last_vector, problem.grid, cfg.gpe)
        doc["vortex_count"] = count_vortices(report.last_vector, problem.grid)

    with open(os.path.join(cfg.output_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")

    lam = doc["lambda"]
    print(
        f"{report.status.value}: lambda={lam!r} iterations={report.iterations} "
        f"residual={last.residual_norm:.3e} -> {cfg.output_dir}"
    )
    return EXIT_FOR_STATUS[report.status]


# ----------------------------------------------------------------- sweep


def parse_axis_values(axis, raw):
    """Comma list, or ``start:stop:num`` (linspace) / ``start:stop`` (seed range)."""
    raw = raw.strip()
    if not raw:
        return []
    if ":" in raw:
        parts = raw.split(":")
        if axis == "seed":
            if len(parts) not in (2, 3):
                raise ValueError("seed range is start:stop[:step]")
            return list(range(*(int(p) for p in parts)))
        if len(parts) != 3:
            raise ValueError("range is start:stop:num")
        return [float(x) for x in np.linspace(_float(parts[0]), _float(parts[1]), int(parts[2]))]
    if axis == "seed":
        return [int(t) for t in raw.split(",")]
    return [_float(t) for t in raw.split(",")]


def _sweep_point(cfg, axis, value):
    if axis == "sigma":
        cfg = replace(cfg, solver=replace(cfg.solver, shift=FixedShift(value)))
    elif axis == "beta":
        cfg = replace(cfg, beta=value)
    else:
        cfg = replace(cfg, seed=value, solver=replace(cfg.solver, seed=value))
    row = {"converged": False, "lambda": math.nan, "gamma_empirical": math.nan, "gamma_theoretical": math.nan}
    try:
        problem = make_problem(cfg)
        report = solve(problem, cfg.solver, starting_vector(problem, cfg))
        row["status"], row["iterations"] = report.status.value, report.iterations
        if report.converged:
            row["converged"] = True
            row["lambda"] = report.eigenpair.lam
            st = stability_summary(problem, cfg, report)
            row["gamma_empirical"] = st["gamma_empirical"]
            row["gamma_theoretical"] = st["gamma_theoretical"]
    except (SolveFailed, ValueError, np.linalg.LinAlgError, ArithmeticError) as exc:
        log.warning("sweep point %s=%r failed: %s", axis, value, exc)
        row.setdefault("status", Status.SOLVE_FAILED.value)
        row.setdefault("iterations", 0)
    return row


def run_sweep(cfg, axis, values, workers=1):
    if axis == "beta" and cfg.problem != "sine":
        raise ConfigError("axis 'beta' needs problem 'sine'")
    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"field 'output_dir': cannot create {cfg.output_dir!r}: {exc.strerror}") from None
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda x: _sweep_point(cfg, axis, x), values))
    else:
        rows = [_sweep_point(cfg, axis, x) for x in values]

    path = os.path.join(cfg.output_dir, "sweep.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow((axis,) + SWEEP_COLUMNS)
        for x, row in zip(values, rows):
            val = str(x) if axis == "seed" else _csv_float(x)

            def f(key):
                y = row[key]
                return "nan" if y is None else _csv_float(y)

            w.writerow(
                [
                    val,
                    "true" if row["converged"] else "false",
                    f("lambda"),
                    f("gamma_empirical"),
                    f("gamma_theoretical"),
                    row["status"],
                    row["iterations"],
                ]
            )
    done = sum(r["converged"] for r in rows)
    print(f"sweep over {axis}: {done}/{len(rows)} converged -> {path}")
    return EXIT_OK


# ------------------------------------------------------------ arguments


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add_common(p):
    p.add_argument("--config", metavar="FILE", help="key = value settings file; flags override it")
    p.add_argument("--problem", help="sine, gpe or linear")
    p.add_argument("--beta", help="sine nonlinearity strength (default 1)")
    p.add_argument("--diag", help="comma-separated diagonal of the linear problem")
    p.add_argument("--N", dest="N", help="GPE interior points per direction (default 32)")
    p.add_argument("--b", dest="b", help="GPE interaction strength (default 200)")
    p.add_argument("--omega", help="GPE angular velocity (default 0.85)")
    p.add_argument("--L", dest="L", help="GPE domain half-width (default 15)")
    p.add_argument("--sigma", help="fixed shift; omit for the step-length heuristic")
    p.add_argument("--heuristic-eps", dest="heuristic_eps", help="heuristic local error target (default 2)")
    p.add_argument("--h-max", dest="h_max", help="heuristic step-length cap (default 1e4)")
    p.add_argument("--version", help="J (default) or A")
    p.add_argument("--tol", help="residual tolerance (default 1e-10)")
    p.add_argument("--max-iter", dest="max_iter", help="iteration cap (default 1000)")
    p.add_argument("--seed", help="seed of the starting vector (default 0)")
    p.add_argument("--outputs", help=f"comma list from {', '.join(OUTPUTS)}")
    p.add_argument("--output-dir", dest="output_dir", help="directory for result files (default nepv-out)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")


def build_parser():
    parser = _Parser(prog="nepv", description="Inverse iteration for eigenvector-nonlinear eigenproblems.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run_p = sub.add_parser("run", help="solve one configuration")
    _add_common(run_p)
    sweep_p = sub.add_parser("sweep", help="solve along a parameter axis and summarize")
    _add_common(sweep_p)
    sweep_p.add_argument("--axis", help="sigma, beta or seed")
    sweep_p.add_argument("--values", help="comma list, start:stop:num, or start:stop for seeds")
    sweep_p.add_argument("--workers", help="worker threads (default 1)")
    return parser


def _flag_values(ns):
    out = {}
    for key in KEYS:
        raw = getattr(ns, key, None)
        if raw is not None:
            flag = "--" + key.replace("_", "-")
            out[key] = (raw, flag)
    return out


def main(argv=None):
    try:
        ns = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING, format="%(name)s: %(message)s")
        file_values = read_config_file(ns.config) if ns.config else {}
        values = _convert(_merge(file_values, _flag_values(ns)))
        cfg = build_config(values, ns.command)
        if ns.command == "run":
            return run_experiment(cfg)
        if "axis" not in values:
            raise ConfigError("field 'axis' is required for sweep (sigma, beta or seed)")
        axis = values["axis"]
        try:
            points = parse_axis_values(axis, values.get("values", ""))
        except ValueError as exc:
            raise ConfigError(f"field 'values': {exc}") from None
        workers = values.get("workers", 1)
        if workers < 1:
            raise ConfigError("field 'workers' must be >= 1")
        return run_sweep(cfg, axis, points, workers)
    except ConfigError as exc:
        print(f"nepv: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
