"""Start systems and path tracking for H(x;t) = gamma*(1-t)*G(x) + t*F(x).

Two start-system families are provided: the binomial systems tailored to the
univariate moment systems (their root counts match the mixed volume of the
target, so no path is wasted) and classical total-degree systems.  Paths are
tracked independently and may be spread over a thread pool; the compiled
kernel releases the GIL, so threads give real parallelism.
"""

from __future__ import annotations

import cmath
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from momentmix.backend import get_backend
from momentmix.errors import InputError
from momentmix.polysys import LineSegmentSupport, PolySystem, SparsePoly

START_RESIDUAL_TOL = 1e-12
SINGULAR_COND = 1e14
_STATUS_NAMES = ("converged", "diverged", "singular", "step_limit")


@dataclass
class TrackerSettings:
    """Knobs of the predictor-corrector tracker; defaults suit the moment
    systems at hand.  seed drives every random draw (gamma, start system
    coefficients) so runs are reproducible."""

    newton_tol: float = 1e-12
    max_newton_iters: int = 4
    initial_step: float = 0.05
    min_step: float = 1e-8
    max_step: float = 0.2
    divergence_norm: float = 1e10
    endgame_start: float = 0.9
    final_tol: float = 1e-10
    seed: int = 0
    workers: int = 1
    backend: str | None = None

    def __post_init__(self):
        if not (0 < self.min_step <= self.initial_step <= self.max_step < 1):
            raise InputError("need 0 < min_step <= initial_step <= max_step < 1")
        if min(self.newton_tol, self.final_tol) <= 0:
            raise InputError("tolerances must be positive")
        if self.max_newton_iters < 1 or self.workers < 1:
            raise InputError("max_newton_iters and workers must be at least 1")

    def opts_vector(self) -> np.ndarray:
        return np.array(
            [
                self.newton_tol,
                self.max_newton_iters,
                self.initial_step,
                self.min_step,
                self.max_step,
                self.divergence_norm,
                self.endgame_start,
                self.final_tol,
            ],
            dtype=np.float64,
        )


@dataclass
class PathResult:
    endpoint: np.ndarray
    residual: float
    status: str
    steps_taken: int

    @property
    def converged(self) -> bool:
        return self.status == "converged"


@dataclass
class StartSystem:
    """A start system with its complete solution list.

    Construction verifies that the points solve the system; for very large
    point sets a seeded sample is checked (the constructors in this module
    additionally verify every per-variable root they generate).
    """

    system: PolySystem
    start_points: list = field(default_factory=list)
    kind: str = "binomial"

    def __post_init__(self):
        pts = self.start_points
        if not pts:
            raise InputError("start system has no start points")
        if len(pts) <= 20000:
            check = pts
        else:
            idx = np.random.default_rng(0).choice(len(pts), size=2000, replace=False)
            check = [pts[i] for i in idx]
        for p in check:
            res = np.abs(self.system.evaluate(p)).max()
            if res > START_RESIDUAL_TOL:
                raise InputError(f"start point {p} has residual {res:.3e}")


def unit_complex(rng) -> complex:
    return cmath.exp(2j * math.pi * rng.random())


def draw_gamma(rng) -> complex:
    """Unit-modulus gamma avoiding a small band around the real axis."""
    while True:
        theta = 2.0 * math.pi * rng.random() - math.pi
        if abs(theta) > 1e-3 and abs(abs(theta) - math.pi) > 1e-3:
            return cmath.exp(1j * theta)


def _roots_of(value: complex, degree: int) -> list:
    """All degree-th roots of value, ordered by angle index."""
    r = abs(value) ** (1.0 / degree)
    base = cmath.phase(value) / degree
    return [r * cmath.exp(1j * (base + 2.0 * math.pi * j / degree)) for j in range(degree)]


def _product_points(root_lists) -> list:
    return [np.array(combo, dtype=np.complex128) for combo in itertools.product(*root_lists)]


def lambda_weighted_segments(k: int) -> LineSegmentSupport:
    """Origin-rooted segments matching the known-weights moment system:
    (2l-1)*e_{2l-1} for the means, l*e_{2l} for the variances."""
    verts = []
    for ell in range(1, k + 1):
        v = [0] * (2 * k)
        v[2 * ell - 2] = 2 * ell - 1
        verts.append(tuple(v))
        v = [0] * (2 * k)
        v[2 * ell - 1] = ell
        verts.append(tuple(v))
    return LineSegmentSupport(verts)


def homoscedastic_segments(k: int) -> LineSegmentSupport:
    """Segments for the shared-variance system: e_1, e_{k+1}, then i*e_{i-1}."""
    verts = []
    v = [0] * (k + 1)
    v[0] = 1
    verts.append(tuple(v))
    v = [0] * (k + 1)
    v[k] = 1
    verts.append(tuple(v))
    for i in range(3, k + 2):
        v = [0] * (k + 1)
        v[i - 2] = i
        verts.append(tuple(v))
    return LineSegmentSupport(verts)


def lambda_weighted_count(k: int) -> int:
    """(2k-1)!! * k!, the root count of the known-weights system."""
    out = math.factorial(k)
    for odd in range(1, 2 * k, 2):
        out *= odd
    return out


def homoscedastic_count(k: int) -> int:
    """(k+1)!/2, the root count of the shared-variance system."""
    return math.factorial(k + 1) // 2


def binomial_start(model_class: str, k: int, rng=None, coefficients=None) -> StartSystem:
    """Binomial start system for the two model classes that admit one.

    Each equation is lead*x^d + const in its own variable, so the roots are
    scaled roots of unity and come in closed form.  Coefficients are random
    unit-modulus complex numbers unless an explicit (lead, const) list is
    given (handy for pinning down textbook instances in tests).
    """
    if k < 1:
        raise InputError("k must be at least 1")
    if model_class == "lambda_weighted":
        nvars = 2 * k
        # per equation: (variable index, degree)
        shape = []
        names = []
        for ell in range(1, k + 1):
            shape.append((2 * ell - 2, 2 * ell - 1))
            shape.append((2 * ell - 1, ell))
            names += [f"mu{ell}", f"var{ell}"]
    elif model_class == "homoscedastic":
        nvars = k + 1
        shape = [(0, 1), (k, 1)] + [(i - 2, i) for i in range(3, k + 2)]
        names = [f"mu{ell}" for ell in range(1, k + 1)] + ["var"]
    else:
        raise InputError(f"no binomial start system for model class {model_class!r}")

    if coefficients is None:
        if rng is None:
            rng = np.random.default_rng(0)
        coefficients = [(unit_complex(rng), unit_complex(rng)) for _ in shape]
    elif len(coefficients) != len(shape):
        raise InputError(f"need {len(shape)} coefficient pairs, got {len(coefficients)}")

    polys = []
    roots_per_var = [None] * nvars
    for (var, deg), (lead, const) in zip(shape, coefficients):
        e = [0] * nvars
        e[var] = deg
        polys.append(SparsePoly(nvars, {tuple(e): lead, (0,) * nvars: const}))
        roots = _roots_of(-const / lead, deg)
        for r in roots:
            if abs(lead * r**deg + const) > START_RESIDUAL_TOL:
                raise InputError("binomial root fails its equation")
        roots_per_var[var] = roots
    system = PolySystem(polys, var_names=names)
    return StartSystem(system, _product_points(roots_per_var), kind="binomial")


def total_degree_start(target: PolySystem, rng=None) -> StartSystem:
    """Start system x_i^{d_i} - c_i with unit-modulus c_i; its solutions are
    all tuples of (rotated) roots of unity."""
    if not target.is_square:
        raise InputError("total-degree start needs a square target system")
    degrees = target.degrees()
    if any(d < 1 for d in degrees):
        raise InputError(f"zero-degree polynomial in target (degrees {degrees})")
    if rng is None:
        rng = np.random.default_rng(0)
    nvars = target.nvars
    polys = []
    roots_per_var = []
    for i, d in enumerate(degrees):
        c = unit_complex(rng)
        e = [0] * nvars
        e[i] = d
        polys.append(SparsePoly(nvars, {tuple(e): 1, (0,) * nvars: -c}))
        roots = _roots_of(c, d)
        for r in roots:
            if abs(r**d - c) > START_RESIDUAL_TOL:
                raise InputError("start root fails its equation")
        roots_per_var.append(roots)
    system = PolySystem(polys, var_names=target.var_names)
    return StartSystem(system, _product_points(roots_per_var), kind="total_degree")


def _compiled_args(system):
    if isinstance(system, PolySystem):
        return system.compile().args
    return system.args


def _classify(code, cond, t_final) -> str:
    if code == 0:
        # a small residual at a numerically singular Jacobian is an endpoint
        # on an asymptotic branch (e.g. vanishing weight with exploding
        # mean), not an isolated regular solution
        return "converged" if cond <= SINGULAR_COND else "singular"
    if code == 1:
        return "diverged"
    if code == 2:
        return "singular" if cond > SINGULAR_COND else "step_limit"
    # step underflow: blame a singularity only when it happened at the end
    if t_final > 0.99 and cond > SINGULAR_COND:
        return "singular"
    return "step_limit"


def track_path(start_system, target_system, start_point, settings: TrackerSettings,
               gamma: complex | None = None) -> PathResult:
    """Track one path from a start-system solution to the target system."""
    kern = get_backend(settings.backend)
    g_args = _compiled_args(start_system.system if isinstance(start_system, StartSystem) else start_system)
    f_args = _compiled_args(target_system)
    if f_args[0] != g_args[0] or f_args[1] != g_args[1] or f_args[0] != f_args[1]:
        raise InputError("start and target must be square systems of equal shape")
    if gamma is None:
        gamma = draw_gamma(np.random.default_rng(settings.seed))
    x0 = np.asarray(start_point, dtype=np.complex128)
    if x0.shape != (f_args[0],):
        raise InputError(f"start point has shape {x0.shape}, expected ({f_args[0]},)")
    endpoint, code, steps, resid, cond, t_final = kern.track_one(
        f_args, g_args, gamma, x0, settings.opts_vector()
    )
    return PathResult(endpoint, resid, _classify(code, cond, t_final), steps)


def solve_system(target, start: StartSystem, settings: TrackerSettings,
                 gamma: complex | None = None) -> list:
    """Track every start point; one PathResult per path, in start order.

    Endpoint deduplication is the caller's business: excess total-degree
    paths legitimately diverge, and converged duplicates only happen for
    non-generic targets.
    """
    kern = get_backend(settings.backend)
    f_args = _compiled_args(target)
    g_args = _compiled_args(start.system)
    if f_args[0] != g_args[0] or f_args[1] != g_args[1] or f_args[0] != f_args[1]:
        raise InputError("start and target must be square systems of equal shape")
    if gamma is None:
        gamma = draw_gamma(np.random.default_rng(settings.seed))
    opts = settings.opts_vector()

    def run(point):
        x0 = np.asarray(point, dtype=np.complex128)
        endpoint, code, steps, resid, cond, t_final = kern.track_one(
            f_args, g_args, gamma, x0, opts
        )
        return PathResult(endpoint, resid, _classify(code, cond, t_final), steps)

    points = start.start_points
    if settings.workers > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=settings.workers) as pool:
            return list(pool.map(run, points))
    return [run(p) for p in points]


def path_stats(results) -> dict:
    """Counter summary emitted alongside solutions."""
    stats = {"paths": len(results), "converged": 0, "diverged": 0,
             "singular": 0, "step_limit": 0}
    for r in results:
        stats[r.status] += 1
    return stats
