"""High-dimensional recovery pipelines.

Both pipelines reduce an n-dimensional mixture to univariate solves plus
linear algebra.  The workhorse identity (verified symbolically against the
moment generating function in the test suite) is

    m_{c*e_i + e_j} = sum_l lam_l * ( mu_{l,j} * M_c(mu_{l,i}, s_{l,ii})
                                      + c * s_{l,ij} * M_{c-1}(mu_{l,i}, s_{l,ii}) ),

which is linear in the cross-covariances s_{l,ij} (and, with everything else
known, in the means mu_{l,j}).  The general pipeline solves the full
univariate problem on coordinate 1, re-solves the known-weights system on
each further coordinate, and finishes with one k x k linear solve per
coordinate pair.  The uniform-equal-covariance pipeline only ever tracks the
k! paths of its first univariate solve; everything after is linear.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
import scipy.linalg

from momentmix.errors import InputError, NoMeaningfulSolutionError, SolverError
from momentmix.homotopy import TrackerSettings, lambda_weighted_count
from momentmix.modelsolve import (
    ModelClass,
    Tolerances,
    dedup_label_swap,
    predicted_moment,
    select_by_next_moment,
    solve_class_full,
)
from momentmix.moments import (
    Knowns,
    MixtureParams,
    MomentTable,
    axis_key,
    gaussian_moment,
    pair_key,
)

CONDITION_LIMIT = 1e12


@dataclass
class RecoveryPlan:
    """What a recovery run will need: moment keys and the path budget."""

    k: int
    n: int
    algorithm: str  # "general" or "uniform_equal_cov"
    known_weights: bool = False
    moment_requirements: list = field(default_factory=list)
    path_budget: int = 0


def algorithm1_required_keys(k: int, n: int, known_weights: bool = False) -> list:
    keys = []
    first_max = 2 * k + 1 if known_weights else 3 * k
    keys += [axis_key(n, 0, c) for c in range(1, first_max + 1)]
    for i in range(1, n):
        keys += [axis_key(n, i, c) for c in range(1, 2 * k + 2)]
    for i in range(n):
        for j in range(i + 1, n):
            keys += [pair_key(n, i, j, c) for c in range(1, k + 1)]
    return keys


def algorithm2_required_keys(k: int, n: int) -> list:
    keys = [axis_key(n, 0, c) for c in range(1, k + 1)]
    for i in range(1, n):
        keys.append(axis_key(n, i, 1))
        for c in range(1, k):
            key = [0] * n
            key[0] = c
            key[i] = 1
            keys.append(tuple(key))
    return keys


def plan_algorithm1(k: int, n: int, known_weights: bool = False) -> RecoveryPlan:
    plan = RecoveryPlan(
        k, n, "general", known_weights, algorithm1_required_keys(k, n, known_weights)
    )
    plan.path_budget = path_count(plan)
    return plan


def plan_algorithm2(k: int, n: int) -> RecoveryPlan:
    plan = RecoveryPlan(k, n, "uniform_equal_cov", False, algorithm2_required_keys(k, n))
    plan.path_budget = path_count(plan)
    return plan


def path_count(plan: RecoveryPlan) -> int:
    """Exact number of homotopy paths the pipeline will track; the solvers
    assert their counters against this."""
    if plan.algorithm == "uniform_equal_cov":
        return math.factorial(plan.k)
    step1 = 0 if plan.known_weights else math.factorial(3 * plan.k)
    coords = plan.n if plan.known_weights else plan.n - 1
    return step1 + lambda_weighted_count(plan.k) * coords


@dataclass
class RecoveryReport:
    params: MixtureParams
    stage_residuals: dict
    paths_tracked: int
    wall_time_s: float
    path_stats: dict
    conditions: dict
    stage_times: dict
    normalized_error: float | None = None


def normalized_error(truth: MixtureParams, estimate: MixtureParams,
                     diagonal_only: bool = False) -> float:
    """||true - estimated||_2 / (parameter count), minimized over component
    relabelings."""
    if (truth.k, truth.n) != (estimate.k, estimate.n):
        raise InputError("mismatched shapes for error computation")
    tv = truth.parameter_vector(diagonal_only)
    best = np.inf
    for perm in permutations(range(estimate.k)):
        perm = list(perm)
        shuffled = MixtureParams(
            estimate.weights[perm], estimate.means[perm], estimate.covariances[perm]
        )
        err = np.linalg.norm(tv - shuffled.parameter_vector(diagonal_only))
        best = min(best, err)
    return float(best / tv.size)


def _pivoted_solve(a: np.ndarray, b: np.ndarray, what: str, conditions: dict):
    """Column-pivoted least-squares solve of a square system, with the
    condition number recorded; raises on (near-)singular matrices."""
    cond = float(np.linalg.cond(a))
    conditions[what] = max(conditions.get(what, 0.0), cond)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise SolverError(f"singular linear system in {what} (condition {cond:.3e})")
    x, _, rank, _ = scipy.linalg.lstsq(a, b, lapack_driver="gelsy")
    if rank < a.shape[0]:
        raise SolverError(f"rank-deficient linear system in {what}")
    return x


def _coordinate_moments(moments: MomentTable, axis: int, max_order: int):
    return moments.univariate(axis, max_order)


def _solve_coordinate(k, weights, moments, axis, settings, tolerances):
    """Known-weights solve on one coordinate plus next-moment selection."""
    knowns = Knowns(weights=tuple(weights))
    ms = _coordinate_moments(moments, axis, 2 * k + 1)
    outcome = solve_class_full(
        ModelClass.LAMBDA_WEIGHTED, k, knowns, ms[: 2 * k], settings, tolerances
    )
    meaningful = [s for s in outcome.solutions if s.meaningful]
    if not meaningful:
        raise NoMeaningfulSolutionError(
            f"no statistically meaningful solution on coordinate {axis + 1}"
        )
    chosen = select_by_next_moment(meaningful, 2 * k + 1, ms[2 * k])
    return chosen, outcome


def algorithm1(moments: MomentTable, k: int, settings: TrackerSettings | None = None,
               tolerances: Tolerances | None = None, known_weights=None,
               allow_large: bool = False, extended_selection: bool = False,
               truth: MixtureParams | None = None,
               diagonal_error: bool = False) -> RecoveryReport:
    """Full-covariance recovery from moments.

    Stage 1 solves the all-parameters-unknown univariate problem on
    coordinate 1 (skipped when known_weights is given), stage 2 selects among
    its meaningful solutions by the next moment, stages 3-4 redo the
    known-weights solve and selection per remaining coordinate, and stage 5
    recovers the cross-covariances from one small linear system per pair.
    """
    t0 = time.perf_counter()
    settings = settings or TrackerSettings()
    tolerances = tolerances or Tolerances()
    n = moments.n
    if k < 1:
        raise InputError("k must be at least 1")
    if k > 4:
        raise InputError("recovery is guaranteed only for k <= 4")
    if known_weights is None:
        if k > 3:
            raise InputError("the unknown-weights stage supports k <= 3; supply known weights")
        if k == 3 and not allow_large:
            raise InputError(
                "k=3 with unknown weights tracks 362880 paths; pass allow_large=True "
                "or supply known weights"
            )

    plan = plan_algorithm1(k, n, known_weights is not None)
    for key in plan.moment_requirements:
        moments.get(key)  # raises MissingMomentError naming the key

    paths = 0
    stats = {"paths": 0, "converged": 0, "diverged": 0, "singular": 0, "step_limit": 0}
    residuals = {}
    conditions = {}
    times = {}

    def absorb(outcome):
        nonlocal paths
        paths += outcome.stats["paths"]
        for key in stats:
            stats[key] += outcome.stats.get(key, 0)

    # stage 1-2: weights and the coordinate-1 component shapes
    if known_weights is not None:
        weights = np.asarray(known_weights, dtype=float)
        if weights.shape != (k,) or abs(weights.sum() - 1.0) > 1e-9:
            raise InputError(f"known weights must be {k} values summing to 1")
        first_coord = 0
        residuals["step1"] = 0.0
        times["step1_s"] = 0.0
    else:
        t1 = time.perf_counter()
        ms1 = _coordinate_moments(moments, 0, 3 * k)
        outcome1 = solve_class_full(
            ModelClass.GENERAL, k, Knowns(), ms1[: 3 * k - 1], settings, tolerances
        )
        absorb(outcome1)
        candidates = dedup_label_swap(
            [s for s in outcome1.solutions if s.meaningful], tolerances
        )
        if not candidates:
            raise NoMeaningfulSolutionError(
                "no statistically meaningful solution on coordinate 1"
            )
        if extended_selection:
            chosen = _select_extended(candidates, moments, k)
        else:
            chosen = select_by_next_moment(candidates, 3 * k, ms1[3 * k - 1])
        weights = chosen.weights.astype(float)
        residuals["step1"] = chosen.residual
        times["step1_s"] = time.perf_counter() - t1
        first_coord = 1

    if k > 1 and np.min(np.abs(np.subtract.outer(weights, weights))[~np.eye(k, dtype=bool)]) < 1e-6:
        raise SolverError(
            "recovered weights are (numerically) equal; component alignment across "
            "coordinates is ambiguous - use the uniform equal-covariance pipeline"
        )

    means = np.zeros((k, n))
    diag = np.zeros((k, n))
    if known_weights is None:
        means[:, 0] = chosen.means
        diag[:, 0] = chosen.vars

    # stages 3-4: per-coordinate known-weights solves (independent, pooled)
    t3 = time.perf_counter()
    coords = list(range(first_coord, n))
    step3_residual = 0.0

    def run_coord(axis):
        return axis, _solve_coordinate(k, weights, moments, axis, settings, tolerances)

    if settings.workers > 1 and len(coords) > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            coord_results = list(pool.map(run_coord, coords))
    else:
        coord_results = [run_coord(axis) for axis in coords]
    for axis, (sol, outcome) in sorted(coord_results, key=lambda it: it[0]):
        absorb(outcome)
        means[:, axis] = sol.means
        diag[:, axis] = sol.vars
        step3_residual = max(step3_residual, sol.residual)
    residuals["step3"] = step3_residual
    times["step3_s"] = time.perf_counter() - t3
    times["step3_per_coordinate_s"] = times["step3_s"] / max(1, len(coords))

    # stage 5: cross-covariances, one k x k solve per pair
    t5 = time.perf_counter()
    covs = np.zeros((k, n, n))
    for ell in range(k):
        np.fill_diagonal(covs[ell], diag[ell])
    for i in range(n):
        for j in range(i + 1, n):
            a = np.zeros((k, k))
            rhs = np.zeros(k)
            for c in range(1, k + 1):
                base = sum(
                    weights[ell]
                    * means[ell, j]
                    * gaussian_moment(c, means[ell, i], diag[ell, i])
                    for ell in range(k)
                )
                rhs[c - 1] = moments.get(pair_key(n, i, j, c)) - base
                for ell in range(k):
                    a[c - 1, ell] = (
                        weights[ell] * c * gaussian_moment(c - 1, means[ell, i], diag[ell, i])
                    )
            sigma = _pivoted_solve(a, rhs, "step5", conditions)
            for ell in range(k):
                covs[ell, i, j] = covs[ell, j, i] = sigma[ell]
    times["step5_s"] = time.perf_counter() - t5

    params = MixtureParams(weights, means, covs)
    residuals["moments"] = _moment_reproduction(params, moments, plan.moment_requirements)
    report = RecoveryReport(
        params=params,
        stage_residuals=residuals,
        paths_tracked=paths,
        wall_time_s=time.perf_counter() - t0,
        path_stats=stats,
        conditions=conditions,
        stage_times=times,
    )
    if truth is not None:
        report.normalized_error = normalized_error(truth, params, diagonal_error)
    assert paths == plan.path_budget, (paths, plan.path_budget)
    return report


def _select_extended(candidates, moments: MomentTable, k: int):
    """Selection over moments of orders 3k..4k-2, aggregated by the root sum
    of squared deviations (the single-moment rule is the default)."""
    n = moments.n
    ranked = sorted(candidates, key=lambda s: s.canonical_key())
    scores = []
    for sol in ranked:
        acc = 0.0
        for order in range(3 * k, 4 * k - 1):
            target = moments.get(axis_key(n, 0, order))
            acc += (predicted_moment(sol, order) - target) ** 2
        scores.append(math.sqrt(acc))
    return ranked[int(np.argmin(scores))]


def algorithm2(moments: MomentTable, k: int, known_cov,
               settings: TrackerSettings | None = None,
               tolerances: Tolerances | None = None,
               truth: MixtureParams | None = None) -> RecoveryReport:
    """Means recovery for uniform mixtures sharing one known covariance.

    Coordinate 1 is a means-only univariate solve (k! paths, one solution up
    to relabeling); every further coordinate is a k x k linear solve built on
    the cross-moment identity, so the whole run tracks k! paths.
    """
    t0 = time.perf_counter()
    settings = settings or TrackerSettings()
    tolerances = tolerances or Tolerances()
    n = moments.n
    cov = np.asarray(known_cov, dtype=float)
    if cov.shape != (n, n):
        raise InputError(f"known covariance must be {n} x {n}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise InputError("known covariance must be symmetric")
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise InputError("known covariance must be positive definite")
    plan = plan_algorithm2(k, n)
    for key in plan.moment_requirements:
        moments.get(key)

    weights = np.full(k, 1.0 / k)
    knowns = Knowns(weights=tuple(weights), variances=(float(cov[0, 0]),) * k)
    ms1 = _coordinate_moments(moments, 0, k)
    outcome1 = solve_class_full(
        ModelClass.MEANS_ONLY, k, knowns, ms1, settings, tolerances
    )
    candidates = dedup_label_swap(
        [s for s in outcome1.solutions if s.meaningful], tolerances
    )
    if not candidates:
        raise NoMeaningfulSolutionError(
            "no statistically meaningful solution on coordinate 1"
        )
    first = candidates[0]
    mu1_gap = (
        np.min(np.abs(np.subtract.outer(first.means, first.means))[~np.eye(k, dtype=bool)])
        if k > 1 else np.inf
    )
    if mu1_gap < 1e-6 * max(1.0, float(np.max(np.abs(first.means)))):
        raise SolverError(
            "component means coincide on coordinate 1 (non-generic); the "
            "per-coordinate linear systems are singular"
        )

    conditions = {}
    means = np.zeros((k, n))
    means[:, 0] = first.means
    mu1 = means[:, 0]
    s11 = float(cov[0, 0])
    for i in range(1, n):
        a = np.zeros((k, k))
        rhs = np.zeros(k)
        for c in range(k):
            for ell in range(k):
                a[c, ell] = gaussian_moment(c, mu1[ell], s11) / k
            key = [0] * n
            key[0] = c
            key[i] = 1
            correction = 0.0
            if c >= 1:
                correction = (
                    c * cov[0, i] * sum(gaussian_moment(c - 1, m, s11) for m in mu1) / k
                )
            rhs[c] = moments.get(tuple(key)) - correction
        means[:, i] = _pivoted_solve(a, rhs, "step2", conditions)

    params = MixtureParams(weights, means, np.repeat(cov[None, :, :], k, axis=0))
    residuals = {
        "step1": first.residual,
        "moments": _moment_reproduction(params, moments, plan.moment_requirements),
    }
    report = RecoveryReport(
        params=params,
        stage_residuals=residuals,
        paths_tracked=outcome1.stats["paths"],
        wall_time_s=time.perf_counter() - t0,
        path_stats=outcome1.stats,
        conditions=conditions,
        stage_times={"step1_s": time.perf_counter() - t0},
    )
    if truth is not None:
        report.normalized_error = normalized_error(truth, params)
    assert report.paths_tracked == plan.path_budget, (report.paths_tracked, plan.path_budget)
    return report


def _moment_reproduction(params: MixtureParams, moments: MomentTable, keys) -> float:
    """Largest relative mismatch between the input moments and the moments
    of the recovered parameters."""
    from momentmix.moments import exact_moments

    model_table = exact_moments(params, keys)
    worst = 0.0
    for key in keys:
        given = moments.get(key)
        got = model_table.get(key)
        worst = max(worst, abs(given - got) / max(1.0, abs(given)))
    return worst
