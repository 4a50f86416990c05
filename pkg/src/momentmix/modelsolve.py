"""Build and solve the univariate moment systems of the four model classes.

Classes and their square systems (orders of the moment equations used):

    lambda_weighted            unknowns (mu_1, var_1, ..., mu_k, var_k), orders 1..2k
    homoscedastic              unknowns (mu_1, ..., mu_k, var),          orders 1..k+1
    known_variance_means_only  unknowns (mu_1, ..., mu_k),               orders 1..k
    general                    unknowns (lam, mu, var blocks),           orders 0..3k-1

The first two are solved from their binomial start systems, the last two by
total-degree homotopy.  Before tracking, the target moments are affinely
standardized (shift by the mean, scale by the standard deviation) and the
endpoints are mapped back and Newton-polished on the unscaled system; this
is an exact equivariance of the Gaussian family and it keeps high-order
moments well conditioned.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache

import numpy as np

from momentmix.backend import get_backend
from momentmix.errors import InputError, SolverError
from momentmix.homotopy import (
    PathResult,
    StartSystem,
    TrackerSettings,
    binomial_start,
    draw_gamma,
    path_stats,
    solve_system,
    total_degree_start,
)
from momentmix.moments import Knowns, MomentTable, UnivariateRing, gaussian_moment, mixture_moment_poly
from momentmix.polysys import PolySystem


class ModelClass(str, Enum):
    LAMBDA_WEIGHTED = "lambda_weighted"
    HOMOSCEDASTIC = "homoscedastic"
    MEANS_ONLY = "known_variance_means_only"
    GENERAL = "general"


@dataclass(frozen=True)
class Tolerances:
    """Solution filtering knobs, sized to the tracker's final tolerance."""

    imag_tol: float = 1e-6
    var_floor: float = 1e-8
    dedup_tol: float = 1e-6


@dataclass
class UnivariateSolution:
    """One candidate parameter set; complex until realified by the filter.

    residual is the inf-norm residual of the system that was tracked (the
    standardized one when standardization is on), where the absolute scale
    is meaningful."""

    weights: np.ndarray
    means: np.ndarray
    vars: np.ndarray
    residual: float
    meaningful: bool

    @property
    def k(self) -> int:
        return len(self.means)

    def canonical_key(self):
        def pairs(arr):
            return tuple((float(np.real(v)), float(np.imag(v))) for v in arr)

        return (
            tuple(sorted(pairs(self.means))),
            tuple(sorted(pairs(self.vars))),
            pairs(self.weights),
        )

    def coordinate_vector(self) -> np.ndarray:
        return np.concatenate([self.weights, self.means, self.vars])


def expected_count(model: ModelClass, k: int) -> int | None:
    """Generic number of complex solutions of the class's moment system."""
    model = ModelClass(model)
    if model is ModelClass.LAMBDA_WEIGHTED:
        out = math.factorial(k)
        for odd in range(1, 2 * k, 2):
            out *= odd
        return out
    if model is ModelClass.HOMOSCEDASTIC:
        return math.factorial(k + 1) // 2
    if model is ModelClass.MEANS_ONLY:
        return math.factorial(k)
    known = {1: 1, 2: 9, 3: 225, 4: 10350}
    return known[k] * math.factorial(k) if k in known else None


def required_orders(model: ModelClass, k: int) -> list:
    model = ModelClass(model)
    if model is ModelClass.LAMBDA_WEIGHTED:
        return list(range(1, 2 * k + 1))
    if model is ModelClass.HOMOSCEDASTIC:
        return list(range(1, k + 2))
    if model is ModelClass.MEANS_ONLY:
        return list(range(1, k + 1))
    return list(range(0, 3 * k))


def _check_knowns(model: ModelClass, k: int, knowns: Knowns):
    if knowns.means is not None:
        raise InputError("no model class fixes the component means")
    if model is ModelClass.LAMBDA_WEIGHTED:
        ok = knowns.weights is not None and knowns.variances is None and not knowns.equal_variances
    elif model is ModelClass.HOMOSCEDASTIC:
        ok = knowns.weights is not None and knowns.equal_variances
    elif model is ModelClass.MEANS_ONLY:
        ok = knowns.weights is not None and knowns.variances is not None
    else:
        ok = knowns.weights is None and knowns.variances is None and not knowns.equal_variances
    if not ok:
        raise InputError(f"knowns {knowns} do not match model class {model.value}")
    if knowns.weights is not None and len(knowns.weights) != k:
        raise InputError(f"need {k} weights, got {len(knowns.weights)}")
    if knowns.variances is not None and len(knowns.variances) != k:
        raise InputError(f"need {k} variances, got {len(knowns.variances)}")


@lru_cache(maxsize=256)
def _symbolic_polys(model: ModelClass, k: int, knowns: Knowns):
    """Moment polynomials of the class without their target constants."""
    return tuple(mixture_moment_poly(i, k, knowns) for i in required_orders(model, k))


def _moment_list(target_moments, max_order: int, axis: int = 0):
    if isinstance(target_moments, MomentTable):
        return target_moments.univariate(axis, max_order)
    vals = [float(v) for v in target_moments]
    if len(vals) < max_order:
        raise InputError(f"need moments of orders 1..{max_order}, got {len(vals)} values")
    return vals[:max_order]


def build_system(model: ModelClass, k: int, knowns: Knowns, target_moments) -> PolySystem:
    """Square moment system of the class, with targets folded in.

    target_moments holds the values m_1, m_2, ... (a list or a univariate
    MomentTable); the order-zero equation of the general class uses the
    constant 1 and consumes no entry.
    """
    model = ModelClass(model)
    if k < 1:
        raise InputError("k must be at least 1")
    _check_knowns(model, k, knowns)
    orders = required_orders(model, k)
    moments = _moment_list(target_moments, max(orders))
    ring = UnivariateRing(k, knowns)
    polys = []
    for base, i in zip(_symbolic_polys(model, k, knowns), orders):
        if i == 0:
            polys.append(base)
        else:
            polys.append(base - moments[i - 1])
    return PolySystem(polys, var_names=ring.names)


@dataclass
class _Standardizer:
    shift: float
    scale: float

    def moments(self, ms):
        """Moments of (X - shift)/scale from the raw moments m_1..m_d."""
        full = [1.0] + list(ms)
        out = []
        for r in range(1, len(full)):
            acc = sum(
                math.comb(r, j) * ((-self.shift) ** (r - j)) * full[j] for j in range(r + 1)
            )
            out.append(acc / self.scale**r)
        return out

    def unmap(self, x: np.ndarray, ring: UnivariateRing) -> np.ndarray:
        out = np.array(x, dtype=np.complex128)
        seen = set()
        for ell in range(ring.k):
            mi = ring.mu_index(ell)
            if mi is not None and mi not in seen:
                out[mi] = self.shift + self.scale * out[mi]
                seen.add(mi)
            vi = ring.var_index(ell)
            if vi is not None and vi not in seen:
                out[vi] = self.scale**2 * out[vi]
                seen.add(vi)
        return out


def _standardizer(moments) -> _Standardizer | None:
    if len(moments) < 2:
        return None
    m1, m2 = moments[0], moments[1]
    s2 = m2 - m1 * m1
    if not (s2 > 1e-10 * max(1.0, abs(m2))):
        return None
    return _Standardizer(m1, math.sqrt(s2))


def _solution_from_vector(x, ring: UnivariateRing, knowns: Knowns, residual: float):
    k = ring.k
    weights = np.empty(k, dtype=np.complex128)
    means = np.empty(k, dtype=np.complex128)
    varis = np.empty(k, dtype=np.complex128)
    for ell in range(k):
        li, mi, vi = ring.lam_index(ell), ring.mu_index(ell), ring.var_index(ell)
        weights[ell] = x[li] if li is not None else knowns.weights[ell]
        means[ell] = x[mi] if mi is not None else knowns.means[ell]
        varis[ell] = x[vi] if vi is not None else knowns.variances[ell]
    return UnivariateSolution(weights, means, varis, residual, meaningful=False)


def _dedup_points(results, tol):
    """Cluster converged endpoints; keep the lowest-residual representative."""
    keep = []
    for res in results:
        merged = False
        for kept in keep:
            scale = np.maximum(1.0, np.maximum(np.abs(res.endpoint), np.abs(kept.endpoint)))
            if np.max(np.abs(res.endpoint - kept.endpoint) / scale) < tol:
                if res.residual < kept.residual:
                    kept.endpoint[:] = res.endpoint
                    kept.residual = res.residual
                merged = True
                break
        if not merged:
            keep.append(PathResult(res.endpoint.copy(), res.residual, res.status, res.steps_taken))
    return keep


def _tag_meaningful(sol: UnivariateSolution, tol: Tolerances) -> UnivariateSolution:
    coords = sol.coordinate_vector()
    if np.max(np.abs(coords.imag)) >= tol.imag_tol:
        return sol
    varis = sol.vars.real
    if np.any(varis <= tol.var_floor):
        return sol
    w = sol.weights.real
    # k = 1 legitimately has weight exactly 1
    if np.any(w <= 1e-9) or np.any(w >= 1.0 + 1e-9):
        return sol
    if abs(w.sum() - 1.0) > 1e-6:
        return sol
    sol.weights = w.astype(float)
    sol.means = sol.means.real.astype(float)
    sol.vars = varis.astype(float)
    sol.meaningful = True
    return sol


def filter_meaningful(solutions, tolerances: Tolerances | None = None) -> list:
    """Keep real solutions with positive variances and admissible weights;
    kept solutions are realified.  An empty result is a legitimate outcome."""
    tol = tolerances or Tolerances()
    out = []
    for sol in solutions:
        sol = _tag_meaningful(sol, tol)
        if sol.meaningful:
            out.append(sol)
    return out


def is_exchangeable(model: ModelClass, knowns: Knowns) -> bool:
    """Whether relabeling components maps solutions to solutions."""
    model = ModelClass(model)
    if model is ModelClass.GENERAL:
        return True
    w = knowns.weights
    uniform_w = w is not None and max(w) - min(w) < 1e-12
    if model is ModelClass.MEANS_ONLY:
        v = knowns.variances
        return uniform_w and (max(v) - min(v) < 1e-12)
    return uniform_w


def dedup_label_swap(solutions, tolerances: Tolerances | None = None) -> list:
    """Keep one representative per relabeling orbit.

    Orbit membership is decided by comparing against every component
    permutation (k is small), which is immune to sort-key ties between
    conjugate components.  Only call this for exchangeable classes; with
    distinct known weights the component slots carry meaning and must not be
    reordered.
    """
    tol = tolerances or Tolerances()

    def canon(sol: UnivariateSolution) -> UnivariateSolution:
        order = sorted(
            range(sol.k),
            key=lambda ell: (
                round(float(np.real(sol.means[ell])), 9),
                round(float(np.imag(sol.means[ell])), 9),
                round(float(np.real(sol.vars[ell])), 9),
                round(float(np.imag(sol.vars[ell])), 9),
                round(float(np.real(sol.weights[ell])), 9),
            ),
        )
        return UnivariateSolution(
            sol.weights[order], sol.means[order], sol.vars[order], sol.residual, sol.meaningful
        )

    def same_orbit(a: UnivariateSolution, b: UnivariateSolution) -> bool:
        avec = a.coordinate_vector()
        for perm in itertools.permutations(range(b.k)):
            perm = list(perm)
            bvec = np.concatenate([b.weights[perm], b.means[perm], b.vars[perm]])
            scale = np.maximum(1.0, np.maximum(np.abs(avec), np.abs(bvec)))
            if np.max(np.abs(avec - bvec) / scale) < tol.dedup_tol:
                return True
        return False

    out = []
    for sol in solutions:
        if not any(same_orbit(kept, sol) for kept in out):
            out.append(canon(sol))
    return out


def predicted_moment(sol: UnivariateSolution, order: int) -> float:
    """Mixture moment of the given order implied by a candidate solution."""
    val = sum(
        sol.weights[ell] * gaussian_moment(order, sol.means[ell], sol.vars[ell])
        for ell in range(sol.k)
    )
    return float(np.real(val))


def select_by_next_moment(candidates, order: int, target_value: float) -> UnivariateSolution:
    """Candidate whose implied next moment is closest to the observed one;
    ties break toward the earlier candidate in canonical order."""
    if not candidates:
        raise InputError("no candidates to select from")
    ranked = sorted(candidates, key=lambda s: s.canonical_key())
    errors = [abs(predicted_moment(s, order) - target_value) for s in ranked]
    return ranked[int(np.argmin(errors))]


@dataclass
class SolveOutcome:
    solutions: list
    stats: dict
    system: PolySystem
    start_kind: str

    @property
    def paths(self) -> int:
        return self.stats["paths"]


def solve_class_full(model: ModelClass, k: int, knowns: Knowns, target_moments,
                     settings: TrackerSettings | None = None,
                     tolerances: Tolerances | None = None,
                     standardize: bool = True) -> SolveOutcome:
    """Solve the class's moment system and return tagged solutions plus
    path statistics.  Raises SolverError when every path fails, which is the
    symptom of degenerate (non-generic) target moments."""
    model = ModelClass(model)
    settings = settings or TrackerSettings()
    tol = tolerances or Tolerances()
    orders = required_orders(model, k)
    moments = _moment_list(target_moments, max(orders))
    ring = UnivariateRing(k, knowns)

    std = _standardizer(moments) if standardize else None
    if std is None:
        solve_knowns, solve_moments = knowns, moments
    else:
        solve_moments = std.moments(moments)
        if model is ModelClass.MEANS_ONLY:
            solve_knowns = Knowns(
                weights=knowns.weights,
                variances=tuple(v / std.scale**2 for v in knowns.variances),
            )
        else:
            solve_knowns = knowns

    target = build_system(model, k, solve_knowns, solve_moments)
    original = target if std is None else build_system(model, k, knowns, moments)
    target_args = target.compile().args
    kern = get_backend(settings.backend)
    expected = expected_count(model, k)

    # a path can collide with a near-passing neighbor for an unlucky gamma,
    # and extreme solutions (vanishing weight, large coordinates) can defeat
    # the default step floor; when the distinct-endpoint count disagrees with
    # the known generic root count, rerun the whole batch with fresh random
    # draws and progressively more careful tracking
    attempt = 0
    while True:
        attempt += 1
        rng = np.random.default_rng(settings.seed + 7919 * (attempt - 1))
        if model in (ModelClass.LAMBDA_WEIGHTED, ModelClass.HOMOSCEDASTIC):
            start = binomial_start(model.value, k, rng=rng)
        else:
            start = total_degree_start(target, rng=rng)
        gamma = draw_gamma(rng)
        attempt_settings = settings if attempt == 1 else replace(
            settings,
            min_step=settings.min_step * 0.01 ** (attempt - 1),
            max_step=max(settings.max_step * 0.5 ** (attempt - 1), settings.min_step),
            initial_step=min(
                settings.initial_step, settings.max_step * 0.5 ** (attempt - 1)
            ),
            max_newton_iters=settings.max_newton_iters + (attempt - 1),
        )
        results = solve_system(target, start, attempt_settings, gamma=gamma)
        stats = path_stats(results)
        stats["restarts"] = attempt - 1

        polished = []
        for r in results:
            if not r.converged:
                continue
            x, resid, _ = kern.newton_refine(target_args, r.endpoint, 1e-14, 4)
            polished.append(PathResult(np.asarray(x), resid, "converged", r.steps_taken))
        unique = _dedup_points(polished, tol.dedup_tol)
        if expected is None or len(unique) == expected or attempt >= 3:
            break

    if not unique:
        raise SolverError(
            f"all {len(results)} paths failed for {model.value} (k={k}); "
            "the target moments look degenerate or non-generic"
        )

    solutions = []
    for r in unique:
        x = r.endpoint if std is None else std.unmap(r.endpoint, ring)
        solutions.append(
            _tag_meaningful(_solution_from_vector(x, ring, knowns, r.residual), tol)
        )
    solutions.sort(key=lambda s: s.canonical_key())
    return SolveOutcome(solutions, stats, original, start.kind)


def solve_class(model: ModelClass, k: int, knowns: Knowns, target_moments,
                settings: TrackerSettings | None = None,
                tolerances: Tolerances | None = None,
                standardize: bool = True) -> list:
    """Convenience wrapper over solve_class_full returning just the solutions."""
    return solve_class_full(
        model, k, knowns, target_moments, settings, tolerances, standardize
    ).solutions
