"""Parity between the compiled kernel and the NumPy fallback."""

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from momentmix import _kernel_py
from momentmix.backend import HAVE_COMPILED, get_backend
from momentmix.homotopy import TrackerSettings, binomial_start, draw_gamma
from momentmix.modelsolve import ModelClass, build_system
from momentmix.moments import Knowns
from momentmix.polysys import PolySystem, SparsePoly

pytestmark = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernel not built")


@pytest.fixture(scope="module")
def instance():
    knowns = Knowns(weights=(0.4, 0.6))
    target = build_system(ModelClass.LAMBDA_WEIGHTED, 2, knowns, [0.3, 1.4, 1.1, 5.0])
    rng = np.random.default_rng(12)
    start = binomial_start("lambda_weighted", 2, rng=rng)
    gamma = draw_gamma(rng)
    return target, start, gamma


def test_eval_and_jacobian_parity(instance):
    target, _, _ = instance
    args = target.compile().args
    compiled = get_backend("compiled")
    rng = np.random.default_rng(0)
    for _ in range(30):
        x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        vc = compiled.eval_system(args, x)
        vp = _kernel_py.eval_system(args, x)
        assert np.allclose(vc, vp, rtol=1e-13, atol=1e-13)
        jc = compiled.eval_jacobian(args, x)
        jp = _kernel_py.eval_jacobian(args, x)
        assert np.allclose(jc, jp, rtol=1e-13, atol=1e-13)


def test_eval_matches_reference_evaluation(instance):
    target, _, _ = instance
    args = target.compile().args
    compiled = get_backend("compiled")
    rng = np.random.default_rng(1)
    x = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    assert np.allclose(compiled.eval_system(args, x), target.evaluate(x), atol=1e-13)


def test_track_parity(instance):
    target, start, gamma = instance
    opts = TrackerSettings().opts_vector()
    f_args = target.compile().args
    g_args = start.system.compile().args
    compiled = get_backend("compiled")
    for pt in start.start_points:
        xc, cc, _, rc, _, tc = compiled.track_one(f_args, g_args, gamma, np.asarray(pt), opts)
        xp, cp, _, rp, _, tp = _kernel_py.track_one(f_args, g_args, gamma, np.asarray(pt), opts)
        assert cc == cp
        if cc == 0:
            assert np.max(np.abs(xc - xp)) < 1e-8


def test_newton_refine_parity(instance):
    target, start, gamma = instance
    args = target.compile().args
    compiled = get_backend("compiled")
    rng = np.random.default_rng(2)
    x0 = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    xc, rc, okc = compiled.newton_refine(args, x0, 1e-12, 20)
    xp, rp, okp = _kernel_py.newton_refine(args, x0, 1e-12, 20)
    assert okc == okp
    if okc:
        assert np.max(np.abs(xc - xp)) < 1e-8


def test_compiled_tracker_thread_safe(instance):
    target, start, gamma = instance
    opts = TrackerSettings().opts_vector()
    f_args = target.compile().args
    g_args = start.system.compile().args
    compiled = get_backend("compiled")

    def run(pt):
        return compiled.track_one(f_args, g_args, gamma, np.asarray(pt), opts)

    serial = [run(p) for p in start.start_points]
    with ThreadPoolExecutor(max_workers=4) as pool:
        threaded = list(pool.map(run, start.start_points))
    for (xs, cs, *_), (xt, ct, *_) in zip(serial, threaded):
        assert cs == ct
        assert np.allclose(xs, xt, atol=1e-12)


def test_deterministic_repeatability(instance):
    target, start, gamma = instance
    opts = TrackerSettings().opts_vector()
    f_args = target.compile().args
    g_args = start.system.compile().args
    compiled = get_backend("compiled")
    pt = np.asarray(start.start_points[3])
    a = compiled.track_one(f_args, g_args, gamma, pt, opts)
    b = compiled.track_one(f_args, g_args, gamma, pt, opts)
    assert np.array_equal(a[0], b[0]) and a[1:] == b[1:]
