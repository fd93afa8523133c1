"""Command-line interface: design generation, evaluation, method comparison,
surrogate benchmarking and schedule tuning.

Subcommands
-----------
``gen``        write one design (CSV + metadata JSON, trace JSONL for SA runs)
``eval``       score an existing design file against a domain
``compare``    replicate harness: per-method statistics and boxplot-ready data
``surrogate``  fit a kernel interpolator on a design and report its accuracy
``tune``       suggest T0 and tau0 for a domain

Exit codes: 0 success, 2 usage/configuration, 3 validation (bad files or
out-of-domain points), 4 runtime failure (including partial compare failures).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import annealing, baselines, designs, domains, kriging
from .errors import (
    ConfigurationError,
    FitError,
    MembershipError,
    SamplingError,
    SpacefillError,
    ValidationError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4

OUT_DIR_ENV = "SPACEFILL_OUT_DIR"


def _resolve_out(arg_out: str | None, default_name: str) -> Path:
    """Explicit --out wins; otherwise fall back to $SPACEFILL_OUT_DIR/<name>."""
    if arg_out:
        return Path(arg_out)
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return Path(env) / default_name
    raise ConfigurationError(
        f"--out is required (or set {OUT_DIR_ENV} for a default output directory)"
    )

SA_METHODS = {"sa1": "A1", "sa2": "A2", "sa3": "A3"}
ALL_METHODS = ("sa1", "sa2", "sa3", "uniform", "lhs", "lhs-maximin", "truncated-lhs", "sobol")


# ---------------------------------------------------------------------------
# files


def write_design_csv(path: str | Path, design: designs.Design) -> None:
    """Header x1..xd, one point per row, full round-trip decimal precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(design.dim)])
        for row in design.points:
            writer.writerow([repr(float(v)) for v in row])


def read_design_csv(path: str | Path, domain_label: str = "") -> designs.Design:
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or not all(h.strip().startswith("x") for h in header):
                raise ValidationError(f"{path}: expected header x1,...,xd")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(header):
                    raise ValidationError(f"{path}:{lineno}: expected {len(header)} columns")
                try:
                    rows.append([float(v) for v in row])
                except ValueError as exc:
                    raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise ValidationError(f"cannot read design file {path}: {exc}") from exc
    if not rows:
        raise ValidationError(f"{path}: no points")
    try:
        return designs.Design(points=np.asarray(rows), domain_label=domain_label)
    except ConfigurationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


def write_design_json(path: str | Path, design: designs.Design) -> None:
    """JSON alternative to the CSV format, embedding the label and score."""
    payload = {
        "domain_label": design.domain_label,
        "n": design.n,
        "dim": design.dim,
        "points": [[float(v) for v in row] for row in design.points],
    }
    if design.n >= 2:
        score = designs.maximin_score(design)
        payload["delta"] = score.delta
        payload["critical_pairs"] = score.critical_pairs
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_design_json(path: str | Path) -> designs.Design:
    try:
        payload = json.loads(Path(path).read_text())
        return designs.Design(
            points=np.asarray(payload["points"], dtype=float),
            domain_label=payload.get("domain_label", ""),
        )
    except (OSError, json.JSONDecodeError, KeyError, ConfigurationError) as exc:
        raise ValidationError(f"cannot read design JSON {path}: {exc}") from exc


def read_design_file(path: str | Path, domain_label: str = "") -> designs.Design:
    """Dispatch on extension: .json for the JSON format, CSV otherwise."""
    if str(path).endswith(".json"):
        return read_design_json(path)
    return read_design_csv(path, domain_label=domain_label)


def load_domain_arg(arg: str, dim: int | None = None) -> domains.Domain:
    """A builtin name (triangle2d / hypercube with --dim) or a JSON spec path."""
    if arg == "triangle2d":
        return domains.make_builtin_domain("triangle2d")
    if arg == "hypercube":
        d = dim or 2
        return domains.make_builtin_domain("hypercube", lower=[0.0] * d, upper=[1.0] * d)
    path = Path(arg)
    if not path.exists():
        raise ConfigurationError(
            f"domain {arg!r} is neither a builtin name (triangle2d, hypercube) nor a file"
        )
    try:
        spec = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse domain spec {arg}: {exc}") from exc
    return domains.domain_from_spec(spec)


# ---------------------------------------------------------------------------
# generator dispatch


def _annealer_config(
    domain: domains.Domain, algorithm: str, params: dict, seed: int
) -> annealing.AnnealerConfig:
    n = int(params.get("n", 0))
    iterations = int(params.get("iterations", 100_000))
    cooling_kind = params.get("cooling", "sqrt_heuristic")
    variance_kind = params.get("variance", "frozen_then_inv_sqrt")
    tune_rng = np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFF, 0x7E57]))
    t0 = params.get("t0")
    if t0 is None:
        t0 = annealing.default_T0(
            domain, n, tune_rng,
            replicates=int(params.get("t0_replicates", 100)),
            fraction=float(params.get("t0_fraction", 0.5)),
        )
    tau0 = params.get("tau0")
    if tau0 is None:
        tau0 = annealing.default_tau0(domain, n, tune_rng)
    tau_min = float(params.get("tau_min", tau0 * 1e-3))
    return annealing.AnnealerConfig(
        algorithm=algorithm,
        n_points=n,
        iterations=iterations,
        cooling=annealing.CoolingSchedule(kind=cooling_kind, t0=float(t0)),
        variance=annealing.VarianceSchedule(
            tau0=float(tau0),
            tau_min=tau_min,
            kind=variance_kind,
            freeze_fraction=float(params.get("freeze_fraction", 0.25)),
        ),
        gamma=params.get("gamma"),
        seed=seed,
        mass_mc_samples=int(params.get("mass_mc_samples", 4096)),
        proposal_max_rejects=int(params.get("proposal_max_rejects", 1000)),
        trace_thin=int(params.get("trace_thin", 1000)),
    )


def generate_design(
    domain: domains.Domain, method: str, params: dict, seed: int
) -> tuple[designs.Design, dict, list]:
    """Run one generator; returns (design, effective-params metadata, trace)."""
    if method in SA_METHODS:
        config = _annealer_config(domain, SA_METHODS[method], params, seed)
        best, score, trace = annealing.run(config, domain)
        meta = {
            "n": config.n_points,
            "iterations": config.iterations,
            "cooling": {"kind": config.cooling.kind, "t0": config.cooling.t0},
            "variance": {
                "kind": config.variance.kind,
                "tau0": config.variance.tau0,
                "tau_min": config.variance.tau_min,
                "freeze_fraction": config.variance.freeze_fraction,
            },
            "gamma": annealing.resolve_gamma(config.gamma, domain),
        }
        return best, meta, trace
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFF, 0x5EED]))
    if method == "uniform":
        return baselines.uniform_design(domain, int(params["n"]), rng), {"n": params["n"]}, []
    if method == "lhs":
        base = baselines.lhs(int(params["n"]), domain.dim, rng)
        pts = domain.bbox.lower + base.points * domain.bbox.widths
        return (
            designs.Design(points=pts, domain_label=domain.label),
            {"n": params["n"]},
            [],
        )
    if method == "lhs-maximin":
        iterations = int(params.get("iterations", 20_000))
        base = baselines.maximin_lhs(int(params["n"]), domain.dim, iterations, rng,
                                     t0=params.get("t0"))
        pts = domain.bbox.lower + base.points * domain.bbox.widths
        return (
            designs.Design(points=pts, domain_label=domain.label),
            {"n": params["n"], "iterations": iterations},
            [],
        )
    if method == "truncated-lhs":
        m = int(params.get("m_hypercube", params.get("n", 0) * 2))
        maximin = bool(params.get("maximin", False))
        its = int(params.get("maximin_iterations", 20_000))
        design = baselines.truncated_lhs(domain, m, rng, maximin=maximin,
                                         maximin_iterations=its)
        meta = {"m_hypercube": m, "maximin": maximin}
        if maximin:
            meta["maximin_iterations"] = its
        return design, meta, []
    if method == "sobol":
        design = baselines.sobol_design(domain, int(params["n"]), skip=int(params.get("skip", 0)))
        return design, {"n": params["n"], "skip": params.get("skip", 0)}, []
    raise ConfigurationError(f"unknown method {method!r}; choose from {ALL_METHODS}")


# ---------------------------------------------------------------------------
# replicate harness


def _replicate_seed(base_seed: int, gen_index: int, replicate: int) -> int:
    ss = np.random.SeedSequence([base_seed & 0x7FFFFFFF, gen_index, replicate])
    return int(ss.generate_state(1, np.uint64)[0])


def _replicate_task(task: tuple) -> dict:
    domain_spec, method, params, base_seed, gen_index, replicate = task
    domain = domains.domain_from_spec(domain_spec)
    seed = _replicate_seed(base_seed, gen_index, replicate)
    started = time.perf_counter()
    record = {"method": method, "generator": gen_index, "replicate": replicate, "seed": seed}
    try:
        design, _, _ = generate_design(domain, method, params, seed)
        score = designs.maximin_score(design)
        record.update(
            delta=score.delta,
            critical_pairs=score.critical_pairs,
            n=design.n,
        )
        cr_samples = int(params.get("covering_radius_samples", 0))
        if cr_samples > 0:
            cr_rng = np.random.default_rng(np.random.SeedSequence([seed & 0x7FFFFFFF, 0xC0]))
            record["covering_radius"] = designs.covering_radius_estimate(
                design, domain, cr_samples, cr_rng
            )
    except SpacefillError as exc:
        record["error"] = str(exc)
    record["wall_time"] = time.perf_counter() - started
    return record


def run_comparison(spec: dict, jobs: int | None = None) -> tuple[list[dict], list[dict]]:
    """Run every (generator, replicate) job; returns (rows, per-replicate records)."""
    domain_spec = spec["domain"]
    base_seed = int(spec.get("seed", 0))
    generators = spec["generators"]
    if not generators:
        raise ConfigurationError("experiment spec has no generators")
    tasks = []
    for g_idx, gen in enumerate(generators):
        method = gen["method"]
        if method not in ALL_METHODS:
            raise ConfigurationError(f"unknown method {method!r} in experiment spec")
        replicates = int(gen.get("replicates", 1))
        if replicates < 1:
            raise ConfigurationError("replicates must be >= 1")
        params = dict(gen.get("params", {}))
        for rep in range(replicates):
            tasks.append((domain_spec, method, params, base_seed, g_idx, rep))
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(tasks) == 1:
        records = [_replicate_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_replicate_task, tasks, chunksize=1))
    records.sort(key=lambda r: (r["generator"], r["replicate"]))

    rows = []
    for g_idx, gen in enumerate(generators):
        method = gen["method"]
        recs = [r for r in records if r["generator"] == g_idx]
        good = [r for r in recs if "error" not in r]
        deltas = np.array([r["delta"] for r in good], dtype=float)
        ns = np.array([r["n"] for r in good], dtype=float)
        row = {
            "method": method,
            "replicates": len(recs),
            "failures": len(recs) - len(good),
            "delta_mean": float(deltas.mean()) if deltas.size else math.nan,
            "delta_variance": float(deltas.var(ddof=1)) if deltas.size > 1 else 0.0,
            "delta_min": float(deltas.min()) if deltas.size else math.nan,
            "delta_max": float(deltas.max()) if deltas.size else math.nan,
            "n_mean": float(ns.mean()) if ns.size else math.nan,
            "n_min": int(ns.min()) if ns.size else 0,
            "n_max": int(ns.max()) if ns.size else 0,
            "wall_time_mean": float(np.mean([r["wall_time"] for r in recs])),
        }
        rows.append(row)
    return rows, records


def write_comparison_outputs(out_dir: str | Path, rows: list[dict], records: list[dict]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cols = [
        "method", "replicates", "failures", "delta_mean", "delta_variance",
        "delta_min", "delta_max", "n_mean", "n_min", "n_max", "wall_time_mean",
    ]
    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(cols)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
    with open(out / "replicates.jsonl", "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    # long format for external boxplotting
    with open(out / "boxplot.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "replicate", "delta"])
        for rec in records:
            if "error" not in rec:
                writer.writerow([rec["method"], rec["replicate"], repr(rec["delta"])])


# ---------------------------------------------------------------------------
# subcommands


def _load_params(arg: str | None) -> dict:
    """Generator params: inline JSON, or a path to a JSON config file."""
    if not arg:
        return {}
    path = Path(arg)
    if path.exists():
        try:
            return json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot parse params file {arg}: {exc}") from exc
    try:
        return json.loads(arg)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"--params is neither a file nor valid JSON: {exc}") from exc


def cmd_gen(args) -> int:
    domain = load_domain_arg(args.domain, args.dim)
    params = _load_params(args.params)
    # explicit flags override file values
    if args.n is not None:
        params["n"] = args.n
    if args.iters is not None:
        params["iterations"] = int(args.iters)
    started = time.perf_counter()
    design, effective, trace = generate_design(domain, args.method, params, args.seed)
    runtime = time.perf_counter() - started
    score = designs.maximin_score(design)
    out = _resolve_out(args.out, f"{args.method}_design")
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "json":
        design_path = out.with_suffix(".design.json")
        write_design_json(design_path, design)
    else:
        design_path = out.with_suffix(".csv")
        write_design_csv(design_path, design)
    trace_path = None
    if trace:
        trace_path = str(out.with_suffix(".trace.jsonl"))
        with open(trace_path, "w") as fh:
            for rec in trace:
                fh.write(json.dumps(rec.to_dict()) + "\n")
    meta = {
        "method": args.method,
        "domain": domains.domain_to_spec(domain),
        "params": effective,
        "seed": args.seed,
        "n": design.n,
        "delta": score.delta,
        "critical_pairs": score.critical_pairs,
        "runtime_seconds": runtime,
        "design_file": str(design_path),
        "trace_jsonl": trace_path,
    }
    out.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")
    print(json.dumps({"delta": score.delta, "n": design.n, "out": str(design_path)}))
    return EXIT_OK


def cmd_eval(args) -> int:
    domain = load_domain_arg(args.domain, args.dim)
    design = read_design_file(args.design, domain_label=domain.label)
    designs.validate_design(design, domain)
    result = {"n": design.n, "dim": design.dim}
    if design.n >= 2:
        score = designs.maximin_score(design)
        result["delta"] = score.delta
        result["critical_pairs"] = score.critical_pairs
    if args.m > 0:
        rng = np.random.default_rng(args.seed)
        result["covering_radius_estimate"] = designs.covering_radius_estimate(
            design, domain, args.m, rng
        )
        result["covering_radius_samples"] = args.m
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        spec = json.loads(Path(args.spec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse experiment spec {args.spec}: {exc}") from exc
    rows, records = run_comparison(spec, jobs=args.jobs)
    out_dir = (
        args.out
        or spec.get("output_dir")
        or os.environ.get(OUT_DIR_ENV)
        or "comparison_out"
    )
    write_comparison_outputs(out_dir, rows, records)
    for row in rows:
        print(
            f"{row['method']:>14s}: mean={row['delta_mean']:.4g} "
            f"var={row['delta_variance']:.3g} min={row['delta_min']:.4g} "
            f"max={row['delta_max']:.4g} (n~{row['n_mean']:.0f}, "
            f"{row['failures']} failures)"
        )
    failures = sum(row["failures"] for row in rows)
    if failures:
        print(f"{failures} replicate(s) failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_surrogate(args) -> int:
    domain = load_domain_arg(args.domain, args.dim)
    design = read_design_file(args.design, domain_label=domain.label)
    designs.validate_design(design, domain)
    blackbox = kriging.synthetic_blackbox(args.blackbox, domain.dim, args.blackbox_seed)
    values = blackbox(design.points)
    trend = kriging.TrendSpec(args.trend)
    rng = np.random.default_rng(args.seed)
    if args.mle:
        family = "gaussian_isotropic" if args.kernel == "gaussian" else "generalized_exponential"
        spec = kriging.mle_fit(
            design, values, family,
            budget=args.mle_budget, rng=rng, trend=trend, nugget=args.nugget,
        )
    elif args.kernel == "gaussian":
        spec = kriging.KernelSpec(family="gaussian_isotropic", theta=np.array([args.theta]))
    else:
        spec = kriging.KernelSpec(
            family="generalized_exponential",
            theta=np.full(domain.dim, args.theta),
            nu=args.nu,
        )
    interp = kriging.fit(design, values, spec, trend=trend, nugget=args.nugget)
    test_pts = domains.sample_uniform_many(domain, args.test_points, rng)
    report = kriging.error_metrics(blackbox(test_pts), kriging.predict_many(interp, test_pts))
    out = _resolve_out(args.out, "surrogate")
    out.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "blackbox": {"kind": args.blackbox, "seed": args.blackbox_seed},
        "kernel": {"family": spec.family, "theta": spec.theta.tolist(), "nu": spec.nu},
        "trend": trend.degree,
        "design_n": design.n,
        "report": report.to_dict(),
    }
    out.with_suffix(".json").write_text(json.dumps(payload, indent=2) + "\n")
    out.with_suffix(".model.json").write_text(kriging.interpolator_to_json(interp) + "\n")
    print(json.dumps(payload["report"]))
    return EXIT_OK


def cmd_tune(args) -> int:
    domain = load_domain_arg(args.domain, args.dim)
    rng = np.random.default_rng(args.seed)
    t0 = annealing.default_T0(
        domain, args.n, rng, replicates=args.replicates, fraction=args.fraction
    )
    tau0 = annealing.default_tau0(domain, args.n, rng)
    print(json.dumps({"t0": t0, "tau0": tau0, "n": args.n, "fraction": args.fraction}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spacefill",
        description="Maximin space-filling designs in bounded domains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_domain(p):
        p.add_argument("--domain", required=True,
                       help="builtin name (triangle2d, hypercube) or JSON spec path")
        p.add_argument("--dim", type=int, default=None, help="dimension for builtin hypercube")

    p_gen = sub.add_parser("gen", help="generate one design")
    add_domain(p_gen)
    p_gen.add_argument("--method", required=True, choices=ALL_METHODS)
    p_gen.add_argument("--n", type=int, default=None, help="number of points")
    p_gen.add_argument("--iters", type=float, default=None, help="iterations for SA methods")
    p_gen.add_argument("--params", default=None,
                       help="extra generator params: inline JSON or a JSON file path "
                            "(explicit flags override file values)")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--format", choices=("csv", "json"), default="csv",
                       help="design file format")
    p_gen.add_argument("--out", default=None,
                       help=f"output path prefix (default: ${OUT_DIR_ENV}/<method>_design)")
    p_gen.set_defaults(func=cmd_gen)

    p_eval = sub.add_parser("eval", help="evaluate a design file")
    add_domain(p_eval)
    p_eval.add_argument("--design", required=True, help="design CSV path")
    p_eval.add_argument("--m", type=int, default=0, help="covering-radius Monte Carlo samples")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--out", default=None, help="also write the metrics JSON here")
    p_eval.set_defaults(func=cmd_eval)

    p_cmp = sub.add_parser("compare", help="run a replicated method comparison")
    p_cmp.add_argument("--spec", required=True, help="experiment spec JSON path")
    p_cmp.add_argument("--out", default=None, help="output directory (overrides spec)")
    p_cmp.add_argument("--jobs", type=int, default=None,
                       help="parallel replicate workers (default: all cores)")
    p_cmp.set_defaults(func=cmd_compare)

    p_sur = sub.add_parser("surrogate", help="kernel-interpolation benchmark on a design")
    add_domain(p_sur)
    p_sur.add_argument("--design", required=True, help="design CSV path")
    p_sur.add_argument("--blackbox", choices=("rkhs_mixture", "smooth_ridge"),
                       default="smooth_ridge")
    p_sur.add_argument("--blackbox-seed", type=int, default=0)
    p_sur.add_argument("--kernel", choices=("gaussian", "genexp"), default="gaussian")
    p_sur.add_argument("--theta", type=float, default=10.0)
    p_sur.add_argument("--nu", type=float, default=2.0)
    p_sur.add_argument("--trend", choices=_trend_choices(), default="none")
    p_sur.add_argument("--mle", action="store_true", help="fit kernel parameters by ML")
    p_sur.add_argument("--mle-budget", type=int, default=120)
    p_sur.add_argument("--nugget", type=float, default=kriging.DEFAULT_NUGGET)
    p_sur.add_argument("--test-points", type=int, default=1000)
    p_sur.add_argument("--seed", type=int, default=0)
    p_sur.add_argument("--out", default=None,
                       help=f"output path prefix (default: ${OUT_DIR_ENV}/surrogate)")
    p_sur.set_defaults(func=cmd_surrogate)

    p_tune = sub.add_parser("tune", help="suggest T0 and tau0")
    add_domain(p_tune)
    p_tune.add_argument("--n", type=int, required=True)
    p_tune.add_argument("--replicates", type=int, default=100)
    p_tune.add_argument("--fraction", type=float, default=0.5)
    p_tune.add_argument("--seed", type=int, default=0)
    p_tune.set_defaults(func=cmd_tune)
    return parser


def _trend_choices():
    return ("none", "constant", "linear", "quadratic")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SamplingError, MembershipError, FitError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
