"""Command-line interface.

Subcommands: moments (CSV -> moment JSON), solve (univariate model classes),
recover (the two multivariate pipelines), selftest (solution-count checks),
benchmark (random-model recovery harness) and benchmark-kernels (compiled vs
pure-Python tracking kernel).

Exit codes: 0 success, 2 solved but nothing statistically meaningful,
3 bad input, 4 solver failure.  All randomness is driven by --seed; there are
no environment knobs.  A --config JSON file may supply any long option's
value (explicit flags win).
"""

from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from momentmix import __version__
from momentmix.backend import HAVE_COMPILED, get_backend
from momentmix.errors import InputError, MomentmixError, NoMeaningfulSolutionError, SolverError
from momentmix.homotopy import TrackerSettings, binomial_start, draw_gamma, solve_system
from momentmix.modelsolve import (
    ModelClass,
    Tolerances,
    expected_count,
    solve_class_full,
)
from momentmix.moments import Knowns, MixtureParams, MomentTable, exact_moments, sample_moments
from momentmix.recover import (
    algorithm1,
    algorithm1_required_keys,
    algorithm2,
    algorithm2_required_keys,
)
from momentmix import serialize

EXIT_NO_MEANINGFUL = 2
EXIT_INPUT = 3
EXIT_SOLVER = 4

_CLASS_ALIASES = {
    "lambda_weighted": ModelClass.LAMBDA_WEIGHTED,
    "homoscedastic": ModelClass.HOMOSCEDASTIC,
    "means_only": ModelClass.MEANS_ONLY,
    "known_variance_means_only": ModelClass.MEANS_ONLY,
    "general": ModelClass.GENERAL,
}


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except InputError as exc:
        _fail(EXIT_INPUT, str(exc))
    except NoMeaningfulSolutionError as exc:
        _fail(EXIT_NO_MEANINGFUL, str(exc))
    except SolverError as exc:
        _fail(EXIT_SOLVER, str(exc))
    except MomentmixError as exc:
        _fail(EXIT_SOLVER, str(exc))


def _load_config(ctx, param, value):
    if not value:
        return value
    try:
        cfg = json.loads(Path(value).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_INPUT, f"unreadable config {value}: {exc}")
    if not isinstance(cfg, dict):
        _fail(EXIT_INPUT, f"config {value} must be a JSON object")
    ctx.default_map = {**cfg, **(ctx.default_map or {})}
    return value


def tracker_options(fn):
    opts = [
        click.option("--config", callback=_load_config, is_eager=True, expose_value=False,
                     type=click.Path(), help="JSON file mirroring the long options."),
        click.option("--seed", type=int, default=0, show_default=True,
                     help="Seed for every random draw."),
        click.option("--newton-tol", type=float, default=1e-12, show_default=True),
        click.option("--final-tol", type=float, default=1e-10, show_default=True),
        click.option("--max-step", type=float, default=0.2, show_default=True),
        click.option("--workers", type=int, default=1, show_default=True,
                     help="Thread pool size for independent paths/coordinates."),
        click.option("--backend", type=click.Choice(["auto", "compiled", "python"]),
                     default="auto", show_default=True),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _settings(seed, newton_tol, final_tol, max_step, workers, backend) -> TrackerSettings:
    return TrackerSettings(
        newton_tol=newton_tol,
        final_tol=final_tol,
        max_step=max_step,
        initial_step=min(0.05, max_step),
        seed=seed,
        workers=workers,
        backend=None if backend == "auto" else backend,
    )


def _parse_floats(text, what):
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InputError(f"cannot parse {what} {text!r} (expected comma-separated numbers)")


@click.group()
@click.version_option(__version__)
def main():
    """Recover Gaussian mixture parameters from moments."""


# ---------------------------------------------------------------------------
# moments


@main.command("moments")
@click.argument("samples_csv", type=click.Path())
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--k", "k", type=int, default=None, help="Component count for --alg defaults.")
@click.option("--alg", type=click.Choice(["1", "2"]), default=None,
              help="Emit exactly the moment keys the chosen pipeline needs.")
@click.option("--max-order", type=int, default=None,
              help="Emit per-axis moments of orders 1..M instead.")
@click.option("--keys-json", type=click.Path(), default=None,
              help="JSON file with an explicit list of index vectors.")
def cmd_moments(samples_csv, output, k, alg, max_order, keys_json):
    """Compute sample moments from a CSV of samples."""

    def run():
        data = serialize.load_samples_csv(samples_csv)
        n = data.shape[1]
        if alg is not None:
            if k is None:
                raise InputError("--alg needs --k")
            keys = (algorithm1_required_keys(k, n) if alg == "1"
                    else algorithm2_required_keys(k, n))
        elif keys_json is not None:
            keys = [tuple(ix) for ix in serialize.load_json(keys_json)]
        elif max_order is not None:
            keys = [tuple((c if s == axis else 0) for s in range(n))
                    for axis in range(n) for c in range(1, max_order + 1)]
        else:
            raise InputError("pass one of --alg, --max-order or --keys-json")
        table = sample_moments(data, keys)
        serialize.save_moments(table, output)
        click.echo(f"wrote {len(table)} moments (n={n}, N={data.shape[0]}) to {output}")

    _guard(run)


# ---------------------------------------------------------------------------
# solve


@main.command("solve")
@click.argument("moments_json", type=click.Path())
@click.option("--model", "--class", "model_name", required=True,
              type=click.Choice(sorted(_CLASS_ALIASES)), help="Model class.")
@click.option("--k", type=int, required=True)
@click.option("--weights", default=None, help="Known weights, comma separated.")
@click.option("--variances", default=None, help="Known variances, comma separated.")
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--dump-system", is_flag=True, help="Print the constructed system.")
@click.option("--no-standardize", is_flag=True, help="Solve the raw moments directly.")
@tracker_options
def cmd_solve(moments_json, model_name, k, weights, variances, output, dump_system,
              no_standardize, **tracker):
    """Solve one univariate moment system and list every solution found."""

    def run():
        model = _CLASS_ALIASES[model_name]
        table = serialize.load_moments(moments_json)
        if table.n != 1:
            raise InputError(f"solve expects univariate moments, got n={table.n}")
        kn_weights = _parse_floats(weights, "--weights") if weights else None
        kn_vars = _parse_floats(variances, "--variances") if variances else None
        if model is ModelClass.GENERAL:
            knowns = Knowns()
        elif model is ModelClass.HOMOSCEDASTIC:
            knowns = Knowns(weights=kn_weights, equal_variances=True)
        elif model is ModelClass.MEANS_ONLY:
            if kn_vars is not None and len(kn_vars) == 1:
                kn_vars = kn_vars * k
            knowns = Knowns(weights=kn_weights, variances=kn_vars)
        else:
            knowns = Knowns(weights=kn_weights)
        settings = _settings(**tracker)
        outcome = solve_class_full(model, k, knowns, table,
                                   settings=settings, standardize=not no_standardize)
        if dump_system:
            click.echo(outcome.system.dump())
        serialize.save_json(
            serialize.solutions_to_obj(model, k, outcome.solutions, outcome.stats), output
        )
        meaningful = sum(1 for s in outcome.solutions if s.meaningful)
        click.echo(json.dumps(outcome.stats, sort_keys=True))
        click.echo(
            f"{len(outcome.solutions)} distinct solutions, {meaningful} meaningful -> {output}"
        )
        if meaningful == 0:
            sys.exit(EXIT_NO_MEANINGFUL)

    _guard(run)


# ---------------------------------------------------------------------------
# recover


@main.command("recover")
@click.argument("input_path", type=click.Path())
@click.option("--k", type=int, required=True)
@click.option("--uniform-equal-cov", "cov_json", type=click.Path(), default=None,
              help="Known shared covariance JSON; selects the uniform pipeline.")
@click.option("--known-weights", default=None, help="Skip stage 1 of the general pipeline.")
@click.option("--allow-large", is_flag=True,
              help="Permit the 362880-path stage-1 solve at k=3.")
@click.option("--extended-selection", is_flag=True,
              help="Select stage-1 solutions on moment orders 3k..4k-2.")
@click.option("-o", "--output", type=click.Path(), required=True)
@click.option("--report", "report_path", type=click.Path(), default=None)
@tracker_options
def cmd_recover(input_path, k, cov_json, known_weights, allow_large,
                extended_selection, output, report_path, **tracker):
    """Recover mixture parameters from a moment JSON or a samples CSV."""

    def run():
        settings = _settings(**tracker)
        if input_path.endswith(".csv"):
            data = serialize.load_samples_csv(input_path)
            n = data.shape[1]
            if cov_json is not None:
                keys = algorithm2_required_keys(k, n)
            else:
                keys = algorithm1_required_keys(k, n, known_weights is not None)
            table = sample_moments(data, keys)
        else:
            table = serialize.load_moments(input_path)
        if cov_json is not None:
            cov = serialize.load_covariance(cov_json)
            report = algorithm2(table, k, cov, settings=settings)
        else:
            kw = _parse_floats(known_weights, "--known-weights") if known_weights else None
            report = algorithm1(table, k, settings=settings, known_weights=kw,
                                allow_large=allow_large,
                                extended_selection=extended_selection)
        serialize.save_params(report.params, output)
        if report_path:
            serialize.save_json(serialize.report_to_obj(report), report_path)
        click.echo(json.dumps(report.path_stats, sort_keys=True))
        click.echo(
            f"recovered k={report.params.k}, n={report.params.n} "
            f"({report.paths_tracked} paths, {report.wall_time_s:.2f}s) -> {output}"
        )

    _guard(run)


# ---------------------------------------------------------------------------
# selftest


def _random_generic_moments(rng, model: ModelClass, k: int):
    """A random target in the regime where the count theorems apply: exact
    moments of a random well-separated mixture matching the model class (the
    moment map is dominant, so these are generic targets), paired with the
    knowns the class fixes."""
    params = sample_random_model(rng, k, 1)
    weights = params.weights
    covs = params.covariances
    if model is ModelClass.HOMOSCEDASTIC:
        covs = np.full((k, 1, 1), rng.uniform(0.5, 3.0))
    elif model is ModelClass.MEANS_ONLY:
        weights = np.full(k, 1.0 / k)
        covs = np.full((k, 1, 1), rng.uniform(0.5, 3.0))
    params = MixtureParams(weights, params.means, covs)
    table = exact_moments(params, [(c,) for c in range(1, 3 * k + 1)])
    ms = [table.get((c,)) for c in range(1, 3 * k + 1)]
    if model is ModelClass.LAMBDA_WEIGHTED:
        knowns = Knowns(weights=tuple(weights))
    elif model is ModelClass.HOMOSCEDASTIC:
        knowns = Knowns(weights=tuple(weights), equal_variances=True)
    elif model is ModelClass.MEANS_ONLY:
        knowns = Knowns(weights=tuple(weights), variances=(float(covs[0, 0, 0]),) * k)
    else:
        knowns = Knowns()
    return knowns, ms


@main.command("selftest")
@click.option("--k-max", type=int, default=2, show_default=True)
@click.option("--trials", type=int, default=5, show_default=True)
@click.option("--allow-large", is_flag=True,
              help="Include the general class at k=3 (1350 of 362880 paths finite).")
@tracker_options
def cmd_selftest(k_max, trials, allow_large, **tracker):
    """Check observed distinct-solution counts against the closed forms."""

    def run():
        if k_max > 3:
            raise InputError("selftest supports k up to 3")
        settings = _settings(**tracker)
        rng = np.random.default_rng(settings.seed)
        failures = 0
        click.echo(f"{'class':28s} {'k':>2s} {'expected':>8s} {'observed':>8s}  status")
        for k in range(1, k_max + 1):
            for model in ModelClass:
                if model is ModelClass.GENERAL and k >= 3 and not allow_large:
                    click.echo(f"{model.value:28s} {k:2d} {'-':>8s} {'-':>8s}  skipped")
                    continue
                expected = expected_count(model, k)
                observed = set()
                for trial in range(trials):
                    knowns, ms = _random_generic_moments(rng, model, k)
                    trial_settings = TrackerSettings(
                        seed=settings.seed + 1000 * trial,
                        workers=settings.workers,
                        backend=settings.backend,
                        newton_tol=settings.newton_tol,
                        final_tol=settings.final_tol,
                        max_step=settings.max_step,
                        initial_step=settings.initial_step,
                    )
                    outcome = solve_class_full(model, k, knowns, ms, trial_settings)
                    observed.add(len(outcome.solutions))
                status = "ok" if observed == {expected} else "FAIL"
                failures += status == "FAIL"
                shown = ",".join(str(o) for o in sorted(observed))
                click.echo(f"{model.value:28s} {k:2d} {expected:8d} {shown:>8s}  {status}")
        if failures:
            _fail(EXIT_SOLVER, f"{failures} count mismatches")

    _guard(run)


# ---------------------------------------------------------------------------
# benchmark (random-model recovery harness)


def sample_random_model(rng, k: int, n: int, diagonal: bool = True) -> MixtureParams:
    """Seeded random mixture: weights from a floored Dirichlet (min 0.1,
    pairwise gaps >= 0.05), means uniform in [-5, 5] with per-coordinate
    pairwise gaps >= 0.5, variances uniform in [0.5, 3]."""
    while True:
        raw = rng.dirichlet(np.ones(k))
        w = 0.1 + (1.0 - 0.1 * k) * raw
        if k == 1:
            w = np.array([1.0])
            break
        gaps = np.abs(np.subtract.outer(w, w))[~np.eye(k, dtype=bool)]
        if gaps.min() >= 0.05:
            break
    means = np.empty((k, n))
    for axis in range(n):
        while True:
            col = rng.uniform(-5.0, 5.0, size=k)
            if k == 1 or np.abs(np.subtract.outer(col, col))[~np.eye(k, dtype=bool)].min() >= 0.5:
                means[:, axis] = col
                break
    covs = np.zeros((k, n, n))
    for ell in range(k):
        np.fill_diagonal(covs[ell], rng.uniform(0.5, 3.0, size=n))
        if not diagonal:
            for i in range(n):
                for j in range(i + 1, n):
                    bound = 0.3 * np.sqrt(covs[ell, i, i] * covs[ell, j, j])
                    covs[ell, i, j] = covs[ell, j, i] = rng.uniform(-bound, bound)
    return MixtureParams(w / w.sum(), means, covs)


@main.command("benchmark")
@click.option("--k", type=int, default=2, show_default=True)
@click.option("--n-list", default="10,100", show_default=True)
@click.option("--trials", type=int, default=3, show_default=True)
@click.option("--allow-large", is_flag=True)
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@tracker_options
def cmd_benchmark(k, n_list, trials, allow_large, csv_path, **tracker):
    """Recovery timing and error on random diagonal-covariance models.

    For k >= 3 the stage-1 univariate solve is skipped by passing the (known)
    generating weights unless --allow-large is given; the error metric still
    covers every parameter.
    """

    def run():
        settings = _settings(**tracker)
        ns = [int(v) for v in n_list.split(",")]
        rng = np.random.default_rng(settings.seed)
        rows = []
        for n in ns:
            times = []
            errors = []
            per_coord = []
            for _ in range(trials):
                params = sample_random_model(rng, k, n)
                keys = algorithm1_required_keys(k, n, known_weights=(k >= 3 and not allow_large))
                table = exact_moments(params, keys)
                kw = tuple(params.weights) if (k >= 3 and not allow_large) else None
                t0 = time.perf_counter()
                report = algorithm1(table, k, settings=settings, known_weights=kw,
                                    allow_large=allow_large, truth=params,
                                    diagonal_error=True)
                times.append(time.perf_counter() - t0)
                errors.append(report.normalized_error)
                per_coord.append(report.stage_times["step3_per_coordinate_s"])
            rows.append((n, float(np.mean(times)), float(np.mean(errors)),
                         float(np.mean(per_coord))))
        header = f"{'n':>8s} {'time_s':>10s} {'norm_error':>12s} {'per_coord_s':>12s}"
        click.echo(header)
        for n, t, e, pc in rows:
            click.echo(f"{n:8d} {t:10.3f} {e:12.3e} {pc:12.5f}")
        if csv_path:
            lines = ["n,time_s,normalized_error,step3_per_coordinate_s"]
            lines += [f"{n},{t!r},{e!r},{pc!r}" for n, t, e, pc in rows]
            Path(csv_path).write_text("\n".join(lines) + "\n")

    _guard(run)


# ---------------------------------------------------------------------------
# benchmark-kernels (compiled vs pure-Python backend)


@main.command("benchmark-kernels")
@click.option("--k", type=int, default=2, show_default=True)
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_benchmark_kernels(k, repeats, seed):
    """Time the known-weights solve on both kernel backends."""

    def run():
        from momentmix.modelsolve import _standardizer, build_system

        rng = np.random.default_rng(seed)
        params = sample_random_model(rng, k, 1)
        table = exact_moments(params, [(c,) for c in range(1, 2 * k + 1)])
        ms = [table.get((c,)) for c in range(1, 2 * k + 1)]
        std = _standardizer(ms)
        if std is not None:
            ms = std.moments(ms)
        knowns = Knowns(weights=tuple(params.weights))
        target = build_system(ModelClass.LAMBDA_WEIGHTED, k, knowns, ms)
        start = binomial_start("lambda_weighted", k, rng=np.random.default_rng(seed))
        gamma = draw_gamma(np.random.default_rng(seed + 1))

        names = ["python"] + (["compiled"] if HAVE_COMPILED else [])
        results = {}
        click.echo(f"{'backend':>10s} {'paths':>6s} {'best_s':>10s} {'paths/s':>10s}")
        for name in names:
            settings = TrackerSettings(seed=seed, backend=name)
            best = np.inf
            endpoints = None
            for _ in range(repeats):
                t0 = time.perf_counter()
                res = solve_system(target, start, settings, gamma=gamma)
                best = min(best, time.perf_counter() - t0)
                endpoints = res
            results[name] = (best, endpoints)
            npaths = len(start.start_points)
            click.echo(f"{name:>10s} {npaths:6d} {best:10.4f} {npaths / best:10.1f}")
        if len(results) == 2:
            t_py, ends_py = results["python"]
            t_c, ends_c = results["compiled"]
            agree = all(
                a.converged == b.converged
                and (not a.converged or np.max(np.abs(a.endpoint - b.endpoint)) < 1e-8)
                for a, b in zip(ends_py, ends_c)
            )
            click.echo(f"speedup {t_py / t_c:.1f}x, endpoints agree: {agree}")
        elif not HAVE_COMPILED:
            click.echo("compiled kernel not built; only the fallback was timed")

    _guard(run)


if __name__ == "__main__":
    main()
