"""Acceptance criteria, one test (and one printed pass/fail line) each.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
"""

import math
import time

import numpy as np
import pytest
from click.testing import CliRunner

from momentmix import serialize
from momentmix.backend import get_backend
from momentmix.cli import _random_generic_moments, main, sample_random_model
from momentmix.homotopy import (
    TrackerSettings,
    binomial_start,
    draw_gamma,
    homoscedastic_count,
    homoscedastic_segments,
    lambda_weighted_count,
    lambda_weighted_segments,
    solve_system,
    total_degree_start,
)
from momentmix.modelsolve import (
    ModelClass,
    build_system,
    dedup_label_swap,
    expected_count,
    solve_class,
    solve_class_full,
)
from momentmix.moments import (
    Knowns,
    MixtureParams,
    _MultivariateRing,
    exact_moments,
    gaussian_moment,
    multivariate_moment_poly,
)
from momentmix.polysys import PolySystem, SparsePoly, segment_mixed_volume
from momentmix.recover import (
    algorithm1,
    algorithm1_required_keys,
    algorithm2,
    algorithm2_required_keys,
    path_count,
    plan_algorithm1,
    plan_algorithm2,
)


def report(criterion: int, ok: bool, detail: str):
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def test_criterion_1_worked_example(worked_moments, worked_truth, tmp_path):
    mpath = tmp_path / "moments.json"
    serialize.save_moments(worked_moments, mpath)
    out = tmp_path / "params.json"
    t0 = time.perf_counter()
    res = CliRunner().invoke(main, ["recover", str(mpath), "--k", "2", "-o", str(out)])
    elapsed = time.perf_counter() - t0
    assert res.exit_code == 0, res.output
    got = serialize.load_params(out)
    worst = max(
        np.max(np.abs(got.weights - worked_truth.weights)),
        np.max(np.abs(got.means - worked_truth.means)),
        np.max(np.abs(got.covariances - worked_truth.covariances)),
    )
    report(1, worst < 1e-6 and elapsed < 30.0,
           f"worked 2-D example: max parameter error {worst:.2e}, {elapsed:.2f}s")


def _count_case(model, k, trials=20, seed0=31000):
    rng = np.random.default_rng(seed0)
    expected = expected_count(model, k)
    bad = []
    max_resid = 0.0
    outs = []
    for trial in range(trials):
        knowns, ms = _random_generic_moments(rng, model, k)
        out = solve_class_full(model, k, knowns, ms, TrackerSettings(seed=seed0 + trial))
        outs.append(out)
        max_resid = max(max_resid, max(s.residual for s in out.solutions))
        if len(out.solutions) != expected:
            bad.append((trial, len(out.solutions)))
        if model is not ModelClass.GENERAL and out.stats["converged"] != out.stats["paths"]:
            # start counts match the root count, so no path may be wasted
            bad.append((trial, "lost paths"))
    return expected, bad, max_resid, outs


def test_criterion_2_solution_counts():
    checks = []
    ok = True
    for model, k in [
        (ModelClass.LAMBDA_WEIGHTED, 2), (ModelClass.LAMBDA_WEIGHTED, 3),
        (ModelClass.HOMOSCEDASTIC, 2), (ModelClass.HOMOSCEDASTIC, 3),
        (ModelClass.MEANS_ONLY, 2), (ModelClass.MEANS_ONLY, 3),
    ]:
        expected, bad, max_resid, outs = _count_case(model, k)
        good = not bad and max_resid < 1e-10
        ok = ok and good
        checks.append(f"{model.value}/k={k}:{expected}{'' if good else ' FAIL'}")
        if model is ModelClass.MEANS_ONLY:
            # solution sets closed under component permutation
            for out in outs[:5]:
                vecs = [np.concatenate([s.weights, s.means, s.vars]) for s in out.solutions]
                for s in out.solutions:
                    perm = np.argsort(-s.means.real)
                    image = np.concatenate([s.weights[perm], s.means[perm], s.vars[perm]])
                    hit = any(np.max(np.abs(image - v)) < 1e-6 for v in vecs)
                    ok = ok and hit

    t0 = time.perf_counter()
    expected, bad, max_resid, outs = _count_case(ModelClass.GENERAL, 2)
    general_time = time.perf_counter() - t0
    swap_ok = all(len(dedup_label_swap(out.solutions)) == 9 for out in outs)
    good = not bad and max_resid < 1e-10 and swap_ok and general_time < 60.0
    ok = ok and good
    checks.append(f"general/k=2:18(9 after swap, {general_time:.0f}s){'' if good else ' FAIL'}")
    report(2, ok, "; ".join(checks))


def test_criterion_3_mixed_volumes():
    rows = []
    ok = True
    for k in range(1, 7):
        lw = segment_mixed_volume(lambda_weighted_segments(k))
        hs = segment_mixed_volume(homoscedastic_segments(k))
        ok = ok and lw == lambda_weighted_count(k) and hs == homoscedastic_count(k)
        rows.append(f"k={k}:{lw},{hs}")
    report(3, ok, "segment mixed volumes " + " ".join(rows))


def test_criterion_4_means_only_closed_form():
    rng = np.random.default_rng(4004)
    worst = 0.0
    ok = True
    for _ in range(100):
        m1 = rng.uniform(-2.0, 2.0)
        var = rng.uniform(0.3, 3.0)
        rad = rng.uniform(0.1, 4.0)
        m2 = m1 * m1 + var + rad
        sols = solve_class(
            ModelClass.MEANS_ONLY, 2, Knowns(weights=(0.5, 0.5), variances=(var, var)),
            [m1, m2], TrackerSettings(seed=int(rng.integers(1 << 30))),
        )
        meaningful = [s for s in sols if s.meaningful]
        root = math.sqrt(rad)
        expect = sorted([m1 - root, m1 + root])
        ok = ok and len(meaningful) >= 1
        for s in meaningful:
            err = np.max(np.abs(np.sort(s.means.real) - expect))
            worst = max(worst, err)
    ok = ok and worst < 1e-10
    for _ in range(20):
        m1 = rng.uniform(-2.0, 2.0)
        var = rng.uniform(0.5, 3.0)
        rad = -rng.uniform(0.1, 0.9) * var
        m2 = m1 * m1 + var + rad
        sols = solve_class(
            ModelClass.MEANS_ONLY, 2, Knowns(weights=(0.5, 0.5), variances=(var, var)),
            [m1, m2], TrackerSettings(seed=int(rng.integers(1 << 30))),
        )
        ok = ok and not any(s.meaningful for s in sols)
    report(4, ok, f"closed-form means agree to {worst:.2e}; negative radicand yields none")


def test_criterion_5_round_trip_scaling():
    rng = np.random.default_rng(5005)
    details = []
    ok = True
    per_coord = {}
    for k in (2, 3):
        for n in (10, 100):
            truth = sample_random_model(rng, k, n)
            known = None if k == 2 else tuple(truth.weights)
            keys = algorithm1_required_keys(k, n, known_weights=known is not None)
            table = exact_moments(truth, keys)
            report_obj = algorithm1(
                table, k, settings=TrackerSettings(seed=50 + n + k),
                known_weights=known, truth=truth, diagonal_error=True,
            )
            per_coord[(k, n)] = report_obj.stage_times["step3_per_coordinate_s"]
            ok = ok and report_obj.normalized_error <= 1e-8
            details.append(f"k={k},n={n}:err={report_obj.normalized_error:.1e}")
    for k in (2, 3):
        ratio = per_coord[(k, 100)] / per_coord[(k, 10)]
        ok = ok and ratio < 3.0
        details.append(f"k={k} per-coord time ratio {ratio:.2f}")
    report(5, ok, "; ".join(details))


def test_criterion_6_path_accounting():
    rng = np.random.default_rng(6006)
    ok = True
    details = []
    for k, n in [(1, 4), (2, 5)]:
        truth = sample_random_model(rng, k, n)
        table = exact_moments(truth, algorithm1_required_keys(k, n))
        rep = algorithm1(table, k, settings=TrackerSettings(seed=60 + k))
        plan = plan_algorithm1(k, n)
        ok = ok and rep.paths_tracked == path_count(plan)
        details.append(f"alg1 k={k},n={n}: {rep.paths_tracked}=={path_count(plan)}")
    for k, n in [(2, 3), (3, 4)]:
        cov = np.diag(rng.uniform(0.5, 2.0, n))
        means = np.array([rng.uniform(-4, 4, n) for _ in range(k)])
        means[:, 0] = np.linspace(-2, 2, k)
        truth = MixtureParams(np.full(k, 1 / k), means, [cov] * k)
        table = exact_moments(truth, algorithm2_required_keys(k, n))
        rep = algorithm2(table, k, cov, settings=TrackerSettings(seed=70 + k))
        ok = ok and rep.paths_tracked == math.factorial(k) == path_count(plan_algorithm2(k, n))
        details.append(f"alg2 k={k}: {rep.paths_tracked}=={math.factorial(k)}")
    report(6, ok, "; ".join(details))


def test_criterion_7_property_suites():
    ok = True
    details = []

    # Jacobian against central finite differences, 100 instances
    rng = np.random.default_rng(7007)
    h = 1e-6
    worst = 0.0
    for _ in range(100):
        nvars = int(rng.integers(2, 5))
        polys = []
        for _ in range(nvars):
            terms = {}
            for _ in range(5):
                e = tuple(int(rng.integers(0, 3)) for _ in range(nvars))
                terms[e] = complex(rng.standard_normal(), rng.standard_normal())
            polys.append(SparsePoly(nvars, terms))
        F = PolySystem(polys)
        x = rng.standard_normal(nvars) + 1j * rng.standard_normal(nvars)
        jac = F.jacobian(x)
        for j in range(nvars):
            step = np.zeros(nvars, dtype=complex)
            step[j] = h
            fd = (F.evaluate(x + step) - F.evaluate(x - step)) / (2 * h)
            rel = np.max(np.abs(fd - jac[:, j]) / np.maximum(1.0, np.abs(jac[:, j])))
            worst = max(worst, rel)
    ok = ok and worst < 1e-6
    details.append(f"jacobian fd {worst:.1e}")

    # derivative identities, symbolic, orders up to 10
    mu = SparsePoly.variable(2, 0)
    var = SparsePoly.variable(2, 1)
    ms = [gaussian_moment(i, mu, var) for i in range(11)]
    ident = all(
        (ms[i] if isinstance(ms[i], SparsePoly) else SparsePoly.constant(2, ms[i])).diff(0)
        == i * ms[i - 1]
        and (ms[i] if isinstance(ms[i], SparsePoly) else SparsePoly.constant(2, ms[i])).diff(1)
        == math.comb(i, 2) * ms[i - 2]
        for i in range(2, 11)
    )
    ok = ok and ident
    details.append(f"derivative identities {'ok' if ident else 'FAIL'}")

    # gamma independence and start-system cross-validation on one instance
    truth = MixtureParams([0.35, 0.65], [[-1.1], [0.8]], [[[0.9]], [[1.6]]])
    t = exact_moments(truth, [(c,) for c in range(1, 5)], max_order=4)
    F = build_system(ModelClass.LAMBDA_WEIGHTED, 2, Knowns(weights=(0.35, 0.65)),
                     [t.get((c,)) for c in range(1, 5)])
    key = lambda v: tuple(np.round(np.concatenate([v.real, v.imag]), 8))

    def endpoint_set(seed, kind):
        srng = np.random.default_rng(seed)
        start = (binomial_start("lambda_weighted", 2, rng=srng) if kind == "b"
                 else total_degree_start(F, rng=srng))
        res = solve_system(F, start, TrackerSettings(seed=seed), gamma=draw_gamma(srng))
        ends = [r.endpoint for r in res if r.converged]
        uniq = []
        for e in ends:
            if not any(np.max(np.abs(e - u)) < 1e-6 for u in uniq):
                uniq.append(e)
        return sorted(uniq, key=key), len(res)

    base, _ = endpoint_set(900, "b")
    gamma_ok = True
    for seed in range(901, 905):
        other, _ = endpoint_set(seed, "b")
        gamma_ok = gamma_ok and len(other) == 6 and all(
            np.max(np.abs(a - b)) < 1e-8 for a, b in zip(base, other)
        )
    ok = ok and gamma_ok
    details.append(f"gamma independence {'ok' if gamma_ok else 'FAIL'}")

    td, npaths = endpoint_set(906, "t")
    cross_ok = npaths == 24 and len(td) == 6 and all(
        np.max(np.abs(a - b)) < 1e-8 for a, b in zip(base, td)
    )
    ok = ok and cross_ok
    details.append(f"total-degree cross-validation {'ok' if cross_ok else 'FAIL'}")

    # cross-moment linearity identity against the generating function
    mgf_ok = True
    for k in (1, 2, 3):
        for c in (1, 2, 3, 4):
            lhs = multivariate_moment_poly((c, 1), k, max_order=max(3 * k + 1, c + 1))
            ring = _MultivariateRing(k, 2)
            rhs = SparsePoly.constant(ring.nvars, 0)
            for ell in range(k):
                term = ring.mu(ell, 1) * gaussian_moment(c, ring.mu(ell, 0), ring.sig(ell, 0, 0))
                term = term + c * ring.sig(ell, 0, 1) * gaussian_moment(
                    c - 1, ring.mu(ell, 0), ring.sig(ell, 0, 0))
                rhs = rhs + ring.lam(ell) * term
            mgf_ok = mgf_ok and lhs == rhs
    ok = ok and mgf_ok
    details.append(f"cross-moment linearity {'ok' if mgf_ok else 'FAIL'}")
    report(7, ok, "; ".join(details))


def test_criterion_8_meaningful_filtering(worked_moments, component_matcher):
    ms = [worked_moments.get((c, 0)) for c in range(1, 6)]
    out = solve_class_full(ModelClass.GENERAL, 2, Knowns(), ms, TrackerSettings(seed=8008))
    meaningful = dedup_label_swap([s for s in out.solutions if s.meaningful])
    chosen = None
    if len(meaningful) == 2:
        from momentmix.modelsolve import select_by_next_moment

        chosen = select_by_next_moment(meaningful, 6, worked_moments.get((6, 0)))
    ok = chosen is not None and component_matcher(
        chosen.weights.real, chosen.means.real, chosen.vars.real,
        [(0.25, -1.0, 1.0), (0.75, 0.0, 3.0)],
    )
    report(8, ok,
           f"{len(meaningful)} meaningful solutions up to symmetry; "
           "sixth-moment selection recovers the generating components")
