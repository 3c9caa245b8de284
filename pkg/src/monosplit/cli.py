"""Command-line experiment runner.

Usage::

    monosplit run CONFIG.json [--out-dir DIR] [--quiet]
    monosplit catalog

Exit codes: 0 success, 1 internal solver error, 2 malformed config,
3 unknown problem or method (or a method that cannot run on the chosen
problem), 4 I/O failure reading the config or writing outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import diagnostics as dg
from . import splitting as sp
from .errors import (
    ConfigurationError,
    DiagnosticUnavailable,
    FitError,
    MonosplitError,
    ParameterError,
)
from .operators import GALLERY
from .problems import PROBLEMS, ProblemInstance, build_problem

EXIT_OK, EXIT_INTERNAL, EXIT_PARSE, EXIT_UNKNOWN, EXIT_IO = 0, 1, 2, 3, 4

SEED_ENV = "MONOSPLIT_SEED_OVERRIDE"
CSV_HEADER = ["k", "lambda", "residual", "dist_to_solution", "energy",
              "forward_calls", "resolvent_calls"]
DEFAULT_TRACE = "trace_{label}.csv"
DEFAULT_REPORT = "report.json"

# descriptive anchor per method: which convergence result the bound comes from
BOUNDS = {
    "forb": ("1/(2L)", "constant or varying step FoRB, monotone Lipschitz B"),
    "forb_linesearch": ("adaptive", "backtracking on lam*||B(x+)-B(x)|| <= (delta/2)*||x+ - x||"),
    "relaxed_inertial": ("min{(2-b-ab-2a)/(2L), (1-a-ab)/(bL)}; cocoercive: "
                         "min{(2-b-ab+2a)/(2L), (1-a+ab)/(bL)} with a < (2-b)/(2+b)",
                         "relaxed inertial FoRB"),
    "forb3": ("2/(4*L1+L2)", "three-operator FoRB with cocoercive C"),
    "stochastic_forb": ("1/(2L)", "FoRB with sampled reflection, L of the parts"),
    "tseng": ("1/L", "forward-backward-forward"),
    "forward_backward": ("2/L", "cocoercive B only; diverges on skew B"),
    "proximal_point": ("inf", "resolvent iteration, B = 0"),
    "projected_reflected_gradient": ("1/(2L)", "A a normal cone"),
    "popov": ("1/(2L)", "A = 0, optimistic gradient form"),
}


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


@dataclass
class MethodSpec:
    alg: str
    label: str
    step: sp.StepPlan
    alpha: float = 0.0
    beta: float = 1.0
    seed: int = 0
    max_iters: int = 1000
    tol: float = 1e-10
    x0: Optional[list] = None
    x_minus1: Optional[list] = None


@dataclass
class ExperimentConfig:
    problem: dict
    methods: list
    trace_path: str = DEFAULT_TRACE
    report_path: str = DEFAULT_REPORT
    iterate_stride: int = 1
    raw: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# config parsing
# --------------------------------------------------------------------------

def _seed_override() -> Optional[int]:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        value = int(raw, 10)
    except ValueError:
        raise CliError(EXIT_PARSE, f"{SEED_ENV} must be an unsigned integer, got {raw!r}")
    if not 0 <= value < 2 ** 64:
        raise CliError(EXIT_PARSE, f"{SEED_ENV} must fit in 64 unsigned bits")
    return value


def _parse_step(raw) -> sp.StepPlan:
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return sp.StepPlan.constant(float(raw))
    if not isinstance(raw, dict):
        raise ParameterError("step must be a number or an object")
    lm1 = raw.get("lambda_minus1")
    if "linesearch" in raw:
        ls = raw["linesearch"] or {}
        if not isinstance(ls, dict):
            raise ParameterError("linesearch must be an object")
        return sp.StepPlan.with_linesearch(lambda_minus1=lm1, **ls)
    if "schedule" in raw:
        return sp.StepPlan.from_schedule([float(v) for v in raw["schedule"]], lm1)
    if "lambda" in raw:
        return sp.StepPlan.constant(float(raw["lambda"]), lm1)
    raise ParameterError("step object needs 'lambda', 'schedule' or 'linesearch'")


def parse_config(doc, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Validate a decoded JSON document.

    Raises :class:`CliError` with exit code 2 for schema problems and 3 for
    unknown names or an empty method list.
    """
    if not isinstance(doc, dict):
        raise CliError(EXIT_PARSE, "config must be a JSON object")
    prob = doc.get("problem")
    if not isinstance(prob, dict) or not isinstance(prob.get("name"), str):
        raise CliError(EXIT_PARSE, "config.problem must be an object with a 'name'")
    if prob["name"] not in PROBLEMS:
        raise CliError(EXIT_UNKNOWN, f"unknown problem {prob['name']!r}")
    params = prob.get("params") or {}
    if not isinstance(params, dict):
        raise CliError(EXIT_PARSE, "config.problem.params must be an object")
    seed = prob.get("seed")
    if seed_override is not None:
        seed = seed_override
    problem = {"name": prob["name"], "params": params, "seed": seed}

    methods_raw = doc.get("methods")
    if not isinstance(methods_raw, list):
        raise CliError(EXIT_PARSE, "config.methods must be a list")
    if not methods_raw:
        raise CliError(EXIT_UNKNOWN, "config.methods is empty")
    methods, used = [], {}
    for i, m in enumerate(methods_raw):
        if not isinstance(m, dict) or not isinstance(m.get("alg"), str):
            raise CliError(EXIT_PARSE, f"methods[{i}] must be an object with an 'alg'")
        alg = m["alg"]
        if alg not in sp.METHODS:
            raise CliError(EXIT_UNKNOWN, f"unknown method {alg!r}")
        label = str(m.get("label", alg))
        used[label] = used.get(label, 0) + 1
        if used[label] > 1:
            label = f"{label}_{used[label]}"
        try:
            step = _parse_step(m.get("step"))
            spec = MethodSpec(
                alg=alg, label=label, step=step,
                alpha=float(m.get("alpha", 0.0)), beta=float(m.get("beta", 1.0)),
                seed=int(seed_override if seed_override is not None else m.get("seed", 0)),
                max_iters=int(m.get("max_iters", 1000)), tol=float(m.get("tol", 1e-10)),
                x0=m.get("x0"), x_minus1=m.get("x_minus1"))
        except (TypeError, ValueError) as exc:
            raise CliError(EXIT_PARSE, f"methods[{i}]: {exc}")
        methods.append(spec)

    out = doc.get("outputs") or {}
    if not isinstance(out, dict):
        raise CliError(EXIT_PARSE, "config.outputs must be an object")
    stride = out.get("iterate_stride", 1)
    if not isinstance(stride, int) or isinstance(stride, bool) or stride < 1:
        raise CliError(EXIT_PARSE, "outputs.iterate_stride must be an integer >= 1")
    trace = out.get("trace_path", DEFAULT_TRACE)
    report = out.get("report_path", DEFAULT_REPORT)
    if not isinstance(trace, str) or not isinstance(report, str):
        raise CliError(EXIT_PARSE, "output paths must be strings")
    if "{label}" not in trace and len(methods) > 1:
        raise CliError(EXIT_PARSE, "outputs.trace_path needs a '{label}' placeholder")
    return ExperimentConfig(problem, methods, trace, report, stride, doc)


def load_config(path, seed_override: Optional[int] = None) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read config {path}: {exc.strerror or exc}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_PARSE, f"config is not valid JSON: {exc}")
    return parse_config(doc, seed_override)


# --------------------------------------------------------------------------
# running
# --------------------------------------------------------------------------

def _op_class(inst: ProblemInstance) -> str:
    return "cocoercive" if inst.inclusion.B.cocoercivity is not None else "lipschitz"


def solve(inst: ProblemInstance, spec: MethodSpec, iterate_stride: int = 1) -> sp.SolverRun:
    """Dispatch one method on one instance."""
    x0 = spec.x0 if spec.x0 is not None else inst.x0
    # energy checks need every iterate
    stride = 1 if spec.alg == "forb" else iterate_stride
    cfg = sp.SolverConfig(x0=x0, step=spec.step, x_minus1=spec.x_minus1,
                          max_iters=spec.max_iters, residual_tol=spec.tol,
                          alpha=spec.alpha, beta=spec.beta, seed=spec.seed,
                          record_energy=True, iterate_stride=stride)
    P = inst.inclusion
    if spec.alg == "forb":
        if spec.step.kind == "linesearch":
            return sp.run_forb_linesearch(P, cfg)
        return sp.run_forb(P, cfg)
    if spec.alg == "forb_linesearch":
        return sp.run_forb_linesearch(P, cfg)
    if spec.alg == "relaxed_inertial":
        return sp.run_relaxed_inertial(P, cfg)
    if spec.alg == "forb3":
        return sp.run_forb3(P, cfg)
    if spec.alg == "stochastic_forb":
        if not inst.parts:
            raise ConfigurationError(f"problem {inst.name!r} has no operator parts")
        return sp.run_stochastic_forb(P, inst.parts, cfg)
    return sp.run_baseline(spec.alg, P, cfg)


def summarize(inst: ProblemInstance, spec: MethodSpec, run: sp.SolverRun) -> dict:
    """Report entry for one method."""
    rate = None
    if run.distances is not None:
        try:
            rate = dg.estimate_rate(run, "dist_to_solution").as_dict()
        except (FitError, DiagnosticUnavailable):
            rate = None
    violations = None
    if spec.alg == "forb" and spec.step.kind != "linesearch":
        try:
            violations = dg.energy_forb(run, inst.inclusion).violations
        except DiagnosticUnavailable:
            violations = None
    bound = None
    if spec.alg != "forb_linesearch" and spec.step.kind != "linesearch":
        try:
            bound = sp.max_stepsize(spec.alg, inst.constants, spec.alpha, spec.beta,
                                    _op_class(inst))
        except (ConfigurationError, ParameterError):
            bound = None
    return {
        "method": spec.label,
        "alg": spec.alg,
        "status": run.status,
        "iterations": run.iterations,
        "final_residual": _json_float(run.final_residual),
        "rate_estimate": rate,
        "energy_violations": violations,
        "max_stepsize_bound": _json_float(bound),
        "oracle_calls": run.oracle_calls.as_dict(),
        "warnings": list(run.warnings),
    }


def _json_float(v):
    if v is None:
        return None
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    v = float(v)
    if math.isnan(v):
        return ""
    return f"{v:.17g}"


def trace_csv(run: sp.SolverRun) -> str:
    """CSV text; row ``k`` describes the point produced by iteration ``k``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    n = run.iterations
    dist = run.distances or [None] * n
    energy = run.energies or [None] * n
    for k in range(n):
        w.writerow([k, _fmt(run.lambdas[k]), _fmt(run.residuals[k]), _fmt(dist[k]),
                    _fmt(energy[k]), run.forward_trace[k], run.resolvent_trace[k]])
    return buf.getvalue()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_experiment(config_path, out_dir=None, quiet: bool = False,
                   stdout=None) -> int:
    """Run every method of a config file; returns the process exit code."""
    stdout = stdout or sys.stdout
    try:
        cfg = load_config(config_path, _seed_override())
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    base = Path(out_dir) if out_dir is not None else Path(config_path).resolve().parent

    try:
        inst = build_problem(cfg.problem["name"], cfg.problem["params"], cfg.problem["seed"])
    except (ConfigurationError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except MonosplitError as exc:
        print(f"error: problem construction failed: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    entries, traces, code = [], [], EXIT_OK
    for spec in cfg.methods:
        try:
            run = solve(inst, spec, cfg.iterate_stride)
        except ConfigurationError as exc:
            print(f"error: {spec.label}: {exc}", file=sys.stderr)
            return EXIT_UNKNOWN
        except ParameterError as exc:
            print(f"error: {spec.label}: {exc}", file=sys.stderr)
            return EXIT_PARSE
        except Exception as exc:  # noqa: BLE001 - reported, other methods still run
            print(f"error: {spec.label} failed: {exc!r}", file=sys.stderr)
            entries.append({"method": spec.label, "alg": spec.alg, "status": "error",
                            "error": str(exc)})
            code = EXIT_INTERNAL
            continue
        entry = summarize(inst, spec, run)
        trace_file = cfg.trace_path.replace("{label}", spec.label)
        entry["trace_path"] = trace_file
        entries.append(entry)
        traces.append((base / trace_file, trace_csv(run)))
        if not quiet:
            print(f"{spec.label}: {run.status} after {run.iterations} iterations, "
                  f"final residual {run.final_residual:.3e}", file=stdout)

    report = {
        "problem": {"name": inst.name, "params": cfg.problem["params"],
                    "seed": cfg.problem["seed"], "constants": inst.constants.as_dict()},
        "methods": entries,
    }
    try:
        for path, text in traces:
            _atomic_write(path, text)
        _atomic_write(base / cfg.report_path, json.dumps(report, indent=2) + "\n")
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


def list_catalog() -> str:
    lines = ["problems:"]
    lines += [f"  {name}" for name in PROBLEMS]
    lines.append("gallery:")
    lines += [f"  {name}" for name in GALLERY]
    lines.append("methods:")
    for name in sp.METHODS:
        formula, anchor = BOUNDS[name]
        kind = "baseline" if name in sp.BASELINES else "forb family"
        lines.append(f"  {name:<5} bound: {formula}  [{kind}; {anchor}]")
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="monosplit",
                                     description="Run monotone splitting experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the methods of a JSON experiment config")
    run.add_argument("config")
    run.add_argument("--out-dir", default=None,
                     help="directory for traces and report (default: next to the config)")
    run.add_argument("--quiet", action="store_true", help="suppress the per-method summary")
    sub.add_parser("catalog", help="list problems, prox gallery and methods with bounds")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    if args.command == "catalog":
        sys.stdout.write(list_catalog())
        return EXIT_OK
    return run_experiment(args.config, args.out_dir, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
