"""Command-line interface: ``nliht <command> [options]``.

Commands print flat ``key=value`` records (or CSV for ``sweep``) to stdout or
to ``--out``. Exit codes: 0 success, 1 usage or input error, 2 no admissible
step size, 3 the iteration diverged or left the model domain.

Problem settings come from built-in defaults, then the ``--config`` TOML file,
then explicit flags. A config file looks like::

    [problem]
    N = 256
    M = 128
    k = 8
    nonlinearity = "sine"   # linear | identity | sine | tanh | cubic
    h_scale = 0.05

    [solver]
    algorithm = "niht"      # or "pgd"
    mu = "auto"
    max_iterations = 500
    enforce_step_condition = false

    [report]
    success_threshold = 1e-6
    rip_trials = 2000

    [sweep]
    M = [64, 96, 128]
    k = [4, 8]
    h_scale = [0.0]
    trials_per_cell = 20
"""
import argparse
import csv
import math
import re
import sys

import numpy as np

from ._util import format_value, key_value_lines
from .analysis import (
    Variant,
    convexity_counterexample,
    corollary1_report,
    estimate_C,
    estimate_rip,
    estimate_rip_exact,
    lemma1_constants,
    theorem1_report,
    theorem2_report,
)
from .constraints import KSparse
from .errors import Diverged, DomainViolation, InfeasibleStep, InvalidInput
from .harness import (
    ProblemSpec,
    TrialRecord,
    generate_problem,
    run_sweep,
    sweep_csv,
)
from .operators import fd_jacobian_check
from .solvers import (
    SolverConfig,
    admissible_step_niht,
    admissible_step_pgd,
    least_squares_objective,
    niht_solve,
    pgd_solve,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration

_SCHEMA = {
    "problem": {
        "N": int, "M": int, "k": int, "ensemble": str, "matrix_file": str,
        "nonlinearity": str, "h_scale": float, "h_radius": float,
        "noise_sigma": float, "seed": int,
    },
    "solver": {
        "algorithm": str, "mu": (float, str), "max_iterations": int,
        "residual_tolerance": float, "iterate_change_tolerance": float,
        "enforce_step_condition": bool, "trace_file": str,
    },
    "report": {"success_threshold": float, "rip_trials": int, "bounds": bool},
    "sweep": {"M": list, "k": list, "h_scale": list, "trials_per_cell": int},
}

_DEFAULTS = {
    "problem": dict(N=64, M=32, k=4, ensemble="gaussian", matrix_file=None,
                    nonlinearity="linear", h_scale=0.0, h_radius=None,
                    noise_sigma=0.0, seed=0),
    "solver": dict(algorithm="niht", mu="auto", max_iterations=1000,
                   residual_tolerance=1e-8, iterate_change_tolerance=1e-10,
                   enforce_step_condition=False, trace_file=None),
    "report": dict(success_threshold=1e-4, rip_trials=2000, bounds=True),
    "sweep": dict(M=None, k=None, h_scale=None, trials_per_cell=10),
}


def _line_of(text, section, key=None):
    """1-based line of ``[section]`` or of ``key`` inside it; 0 if not found."""
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        m = re.match(r"\[\s*([A-Za-z0-9_.-]+)\s*\]", stripped)
        if m:
            current = m.group(1)
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"{re.escape(key)}\s*=", stripped):
            return i
    return 0


def _type_ok(value, expected):
    types = expected if isinstance(expected, tuple) else (expected,)
    for t in types:
        if t is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return True
        if t is int and isinstance(value, int) and not isinstance(value, bool):
            return True
        if t not in (int, float) and isinstance(value, t):
            return True
    return False


def load_config(path):
    """Parse and validate a TOML experiment config.

    Returns a dict of sections filled with defaults. Problems are reported as
    ``path:line: message``.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise UsageError(f"{path}: cannot read config: {exc.strerror}") from None
    text = raw.decode("utf-8", errors="replace")
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        line = m.group(1) if m else "?"
        raise UsageError(f"{path}:{line}: malformed config: {exc}") from None

    cfg = {name: dict(values) for name, values in _DEFAULTS.items()}
    for section, values in data.items():
        if section not in _SCHEMA:
            raise UsageError(f"{path}:{_line_of(text, section)}: unknown section [{section}]")
        if not isinstance(values, dict):
            raise UsageError(f"{path}:{_line_of(text, section)}: {section} must be a table")
        for key, value in values.items():
            line = _line_of(text, section, key)
            if key not in _SCHEMA[section]:
                raise UsageError(f"{path}:{line}: unknown key {section}.{key}")
            if not _type_ok(value, _SCHEMA[section][key]):
                raise UsageError(f"{path}:{line}: {section}.{key} has the wrong type ({value!r})")
            cfg[section][key] = value
    cfg["_path"] = path
    cfg["_text"] = text
    return cfg


def _check_ranges(cfg):
    """Validate numeric ranges before any computation."""
    path, text = cfg.get("_path", "<flags>"), cfg.get("_text", "")

    def fail(section, key, msg):
        line = _line_of(text, section, key) if text else 0
        where = f"{path}:{line}" if line else path
        raise UsageError(f"{where}: {section}.{key} {msg}")

    p, s, r = cfg["problem"], cfg["solver"], cfg["report"]
    for key in ("N", "M", "k"):
        if p[key] < 1:
            fail("problem", key, "must be >= 1")
    if p["k"] > p["N"]:
        fail("problem", "k", "must not exceed N")
    if p["noise_sigma"] < 0:
        fail("problem", "noise_sigma", "must be >= 0")
    if not 0 <= p["seed"] < 2**64:
        fail("problem", "seed", "must be an unsigned 64-bit integer")
    if p["ensemble"] == "file" and p["matrix_file"] is None:
        fail("problem", "matrix_file", "is required for the file ensemble")
    if p["matrix_file"] is not None:
        try:
            open(p["matrix_file"]).close()
        except OSError:
            fail("problem", "matrix_file", f"does not exist: {p['matrix_file']}")
    if isinstance(s["mu"], str):
        if s["mu"] != "auto":
            fail("solver", "mu", "must be a positive number or \"auto\"")
    elif not (s["mu"] > 0 and math.isfinite(s["mu"])):
        fail("solver", "mu", "must be positive")
    if s["algorithm"] not in ("niht", "pgd"):
        fail("solver", "algorithm", "must be \"niht\" or \"pgd\"")
    if s["max_iterations"] < 1:
        fail("solver", "max_iterations", "must be >= 1")
    if s["residual_tolerance"] < 0 or s["iterate_change_tolerance"] < 0:
        fail("solver", "residual_tolerance", "tolerances must be >= 0")
    if r["rip_trials"] < 1:
        fail("report", "rip_trials", "must be >= 1")
    if not r["success_threshold"] > 0:
        fail("report", "success_threshold", "must be positive")


def _settings(args):
    cfg = load_config(args.config) if args.config else {
        name: dict(values) for name, values in _DEFAULTS.items()
    }
    p = cfg["problem"]
    for key in ("N", "M", "k", "ensemble", "matrix_file", "nonlinearity",
                "h_scale", "h_radius", "noise_sigma"):
        value = getattr(args, key, None)
        if value is not None:
            p[key] = value
    if getattr(args, "seed", None) is not None:
        p["seed"] = args.seed
    if p["matrix_file"] is not None and p["ensemble"] == "gaussian" and not args.config:
        p["ensemble"] = "file"
    _check_ranges(cfg)
    return cfg


def _spec(cfg):
    return ProblemSpec(**cfg["problem"])


def _emit(args, text):
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# commands


def _write_trace(path, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "value", "change", "component", "e_A_norm", "truth_distance"])
        for rec in result.trace:
            comp = rec.component
            comp = ";".join(str(c) for c in comp) if isinstance(comp, tuple) else str(comp)
            w.writerow([rec.iteration, format_value(rec.value), format_value(rec.change), comp,
                        format_value(rec.e_A_norm), format_value(rec.truth_distance)])


def cmd_solve(args):
    cfg = _settings(args)
    s, r = cfg["solver"], cfg["report"]
    spec = _spec(cfg)
    problem = generate_problem(spec)
    model = problem.model
    A = KSparse(spec.N, spec.k)
    ss = np.random.SeedSequence([spec.seed, 1])
    rip = estimate_rip(model, A, trials=r["rip_trials"], seed=np.random.default_rng(ss))
    C_hat = 0.0
    if not model.is_linear:
        ss = np.random.SeedSequence([spec.seed, 2])
        C_hat = estimate_C(model, A, trials=r["rip_trials"], seed=np.random.default_rng(ss)).empirical
    mu = 1.0 / rip.beta_hat if s["mu"] == "auto" else float(s["mu"])

    if s["enforce_step_condition"]:
        if s["algorithm"] == "niht":
            window = admissible_step_niht(rip.alpha_hat, rip.beta_hat, C_hat)
        else:
            window = admissible_step_pgd(rip.alpha_hat, rip.beta_hat)
        if mu not in window:
            raise InfeasibleStep(
                f"mu={mu:.6g} violates {window.condition}: admissible interval is {window}"
            )

    record_trace = bool(args.trace or s["trace_file"])
    solver_cfg = SolverConfig(mu, s["max_iterations"], s["residual_tolerance"],
                              s["iterate_change_tolerance"], record_trace)
    if s["algorithm"] == "niht":
        result = niht_solve(problem.y, model, A, solver_cfg, ground_truth=problem.x0)
    else:
        obj = least_squares_objective(model, problem.y)
        result = pgd_solve(obj, A, solver_cfg, ground_truth=problem.x0)

    rec = TrialRecord(spec.N, spec.M, spec.k, model.h_kind, model.h_scale, spec.noise_sigma, spec.seed)
    rec.error = float(np.linalg.norm(result.estimate - problem.x0))
    rec.rel_error = rec.error / float(np.linalg.norm(problem.x0))
    rec.success = bool(rec.rel_error < r["success_threshold"])
    rec.iterations, rec.stop_reason = result.iterations_run, result.stop_reason.value
    rec.final_residual = float(np.linalg.norm(problem.y - model.forward(result.estimate)))
    rec.mu, rec.alpha_hat, rec.beta_hat, rec.C_hat = mu, rip.alpha_hat, rip.beta_hat, C_hat
    out = rec.to_record()
    out["algorithm"] = s["algorithm"]
    if r["bounds"] and s["algorithm"] == "niht":
        e_A = float(np.linalg.norm(problem.y - model.forward(A.project(problem.x0))))
        reps = corollary1_report(rip.alpha_hat, mu, C_hat, e_A)
        for variant, rep in reps.items():
            tag = "printed" if variant is Variant.AS_PRINTED else "derived"
            out[f"corollary1_{tag}_bound"] = rep.error_bound
            out[f"corollary1_{tag}_flags"] = ",".join(rep.flags) or "none"
    _emit(args, key_value_lines(out))
    trace_path = args.trace or s["trace_file"]
    if trace_path:
        _write_trace(trace_path, result)
    return EXIT_OK


def _grid(values, name):
    if values is None:
        return None
    if not isinstance(values, list) or not values:
        raise UsageError(f"sweep.{name} must be a non-empty list")
    return values


def _parse_list(text, conv):
    try:
        return [conv(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"cannot parse list {text!r}") from None


def cmd_sweep(args):
    cfg = _settings(args)
    s, r, g = cfg["solver"], cfg["report"], cfg["sweep"]
    Ms = _parse_list(args.M_values, int) if args.M_values else _grid(g["M"], "M")
    ks = _parse_list(args.k_values, int) if args.k_values else _grid(g["k"], "k")
    hs = _parse_list(args.h_scales, float) if args.h_scales else _grid(g["h_scale"], "h_scale")
    trials = args.trials if args.trials is not None else g["trials_per_cell"]
    if trials < 1:
        raise UsageError("trials per cell must be >= 1")
    base = _spec(cfg)
    summaries = run_sweep(
        base, Ms, ks, hs, trials_per_cell=trials, base_seed=base.seed, jobs=args.jobs,
        mu=s["mu"], max_iterations=s["max_iterations"],
        residual_tolerance=s["residual_tolerance"],
        iterate_change_tolerance=s["iterate_change_tolerance"],
        success_threshold=r["success_threshold"], rip_trials=r["rip_trials"],
        enforce_step_condition=s["enforce_step_condition"],
    )
    _emit(args, sweep_csv(summaries))
    return EXIT_OK


def cmd_rip(args):
    cfg = _settings(args)
    spec = _spec(cfg)
    model = generate_problem(spec).model
    A = KSparse(spec.N, spec.k)
    trials = args.trials if args.trials is not None else cfg["report"]["rip_trials"]
    if args.exact:
        est = estimate_rip_exact(model, A)
    else:
        est = estimate_rip(model, A, trials=trials, seed=spec.seed)
    out = est.to_record()
    c = estimate_C(model, A, trials=trials, seed=spec.seed)
    out.update(c.to_record())
    out.pop("trials", None)
    out["trials"] = est.trials
    _emit(args, key_value_lines(out))
    return EXIT_OK


def _floats(text):
    return _parse_list(text, float)


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"bound {args.kind} requires {flags}")


def cmd_bound(args):
    variants = {
        "printed": [Variant.AS_PRINTED],
        "derived": [Variant.DERIVATION_CONSISTENT],
        "both": [Variant.AS_PRINTED, Variant.DERIVATION_CONSISTENT],
    }[args.variant]
    blocks = []
    if args.kind == "theorem1":
        _need(args, "alpha", "mu", "residuals", "xa_norm", "delta")
        rep = theorem1_report(args.alpha, args.mu, _floats(args.residuals), args.xa_norm,
                              args.delta, args.dist)
        # one formula, no disputed constant: identical under either variant
        blocks.append(rep.to_record())
    elif args.kind == "corollary1":
        _need(args, "alpha", "mu", "C", "e_a_norm")
        reps = corollary1_report(args.alpha, args.mu, args.C, args.e_a_norm, args.dist)
        blocks.extend(reps[v].to_record() for v in variants)
    elif args.kind == "theorem2":
        _need(args, "alpha", "mu", "f_opt", "xopt_norm", "delta")
        reps = theorem2_report(args.alpha, args.mu, args.f_opt, args.xopt_norm, args.delta,
                               args.dist)
        blocks.extend(reps[v].to_record() for v in variants)
    else:
        _need(args, "alpha", "beta", "h_bound")
        consts = lemma1_constants(args.alpha, args.beta, args.h_bound)
        for v in variants:
            c = consts[v]
            blocks.append({"variant": v.value, "alpha": args.alpha, "beta": args.beta,
                           "M": args.h_bound, "lower": c.lower, "upper": c.upper,
                           "flags": "Vacuous" if c.vacuous else "none"})
    _emit(args, "\n".join(key_value_lines(b) for b in blocks))
    return EXIT_OK


def cmd_check_jacobian(args):
    cfg = _settings(args)
    spec = _spec(cfg)
    model = generate_problem(spec).model
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 3]))
    h = model.nonlinearity
    worst = 0.0
    for _ in range(args.points):
        if h is not None and hasattr(h, "radius"):
            # stay inside the box so the forward step is defined too
            p = rng.uniform(-0.9 * h.radius, 0.9 * h.radius, spec.N)
        else:
            p = rng.standard_normal(spec.N)
        worst = max(worst, fd_jacobian_check(model, p, args.step))
    out = {"model": model.h_kind, "points": args.points, "step": args.step,
           "max_deviation": worst, "tolerance": args.tol, "passed": worst < args.tol}
    _emit(args, key_value_lines(out))
    return EXIT_OK


def cmd_counterexample(args):
    cfg = _settings(args)
    spec = _spec(cfg)
    model = generate_problem(spec).model
    A = KSparse(spec.N, spec.k)
    rep = convexity_counterexample(model, A, seed=spec.seed, trials=args.trials,
                                   spread=args.spread)
    out = {"model": model.h_kind, "h_scale": model.h_scale}
    out.update(rep.to_record())
    _emit(args, key_value_lines(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _global_flags(parser, suppress):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default,
                        help="seed for every random draw (unsigned 64-bit)")
    parser.add_argument("--out", default=default, help="write output here instead of stdout")
    parser.add_argument("--config", default=default, help="TOML experiment config")


def _model_flags(parser):
    g = parser.add_argument_group("problem")
    g.add_argument("--N", type=int, help="signal length")
    g.add_argument("--M", type=int, help="number of measurements")
    g.add_argument("--k", type=int, help="sparsity")
    g.add_argument("--ensemble", choices=["gaussian", "identity", "file"])
    g.add_argument("--matrix-file", dest="matrix_file", help="gain matrix file ('M N' header)")
    g.add_argument("--nonlinearity", choices=["linear", "identity", "sine", "tanh", "cubic"])
    g.add_argument("--h-scale", dest="h_scale", type=float, help="nonlinearity scale s")
    g.add_argument("--h-radius", dest="h_radius", type=float, help="domain radius (cubic)")
    g.add_argument("--noise-sigma", dest="noise_sigma", type=float, help="noise std. dev.")


def build_parser():
    parser = _Parser(prog="nliht", description="Sparse recovery from nonlinear observations.")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("solve", cmd_solve, "generate one problem and recover it")
    _model_flags(p)
    p.add_argument("--trace", help="write the per-iteration trace CSV here")

    p = add("sweep", cmd_sweep, "run a grid of trials and write the summary CSV")
    _model_flags(p)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--M-values", dest="M_values", help="comma-separated M grid")
    p.add_argument("--k-values", dest="k_values", help="comma-separated k grid")
    p.add_argument("--h-scales", dest="h_scales", help="comma-separated nonlinearity scales")
    p.add_argument("--trials", type=int, help="trials per cell")

    p = add("rip", cmd_rip, "estimate RIP and linearization constants")
    _model_flags(p)
    p.add_argument("--trials", type=int, help="number of sampled triples")
    p.add_argument("--exact", action="store_true", help="enumerate supports (linear, small N)")

    p = add("bound", cmd_bound, "evaluate an iteration-count or error bound")
    p.add_argument("kind", choices=["theorem1", "corollary1", "theorem2", "lemma1"])
    p.add_argument("--variant", choices=["printed", "derived", "both"], default="both")
    p.add_argument("--alpha", type=float, help="lower RIP / RSCP constant")
    p.add_argument("--beta", type=float, help="upper RIP constant (lemma1)")
    p.add_argument("--mu", type=float, help="step size")
    p.add_argument("--C", type=float, help="linearization constant (corollary1)")
    p.add_argument("--h-bound", dest="h_bound", type=float, help="derivative bound M (lemma1)")
    p.add_argument("--residuals", help="comma-separated ||e_A^n|| values (theorem1)")
    p.add_argument("--xa-norm", dest="xa_norm", type=float, help="||x_A|| (theorem1)")
    p.add_argument("--e-a-norm", dest="e_a_norm", type=float, help="||e_A|| (corollary1)")
    p.add_argument("--f-opt", dest="f_opt", type=float, help="f(x_opt) (theorem2)")
    p.add_argument("--xopt-norm", dest="xopt_norm", type=float, help="||x_opt|| (theorem2)")
    p.add_argument("--delta", type=float, help="target accuracy factor")
    p.add_argument("--dist", type=float, default=0.0, help="distance from x to the set")

    p = add("check-jacobian", cmd_check_jacobian, "compare Jacobians with finite differences")
    _model_flags(p)
    p.add_argument("--points", type=int, default=10, help="random linearization points")
    p.add_argument("--step", type=float, default=1e-6, help="finite-difference step")
    p.add_argument("--tol", type=float, default=1e-4, help="pass threshold")

    p = add("counterexample", cmd_counterexample, "search for a non-convexity witness")
    _model_flags(p)
    p.add_argument("--trials", type=int, default=1000, help="search budget")
    p.add_argument("--spread", type=float, default=math.pi, help="coordinate range")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    for name in ("seed", "out", "config"):
        if not hasattr(args, name):
            setattr(args, name, None)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"nliht: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InfeasibleStep as exc:
        print(f"nliht: infeasible step size: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (Diverged, DomainViolation) as exc:
        print(f"nliht: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except InvalidInput as exc:
        print(f"nliht: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
