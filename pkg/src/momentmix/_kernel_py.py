"""Pure NumPy implementation of the tracking kernels.

Selected at import time when the compiled extension is unavailable.  The
compiled module in ``_kernel.pyx`` implements the same four entry points with
identical semantics; anything changed here must be mirrored there.

A system is passed around as the flat-array tuple produced by
``CompiledSystem.args``:

    (nvars, npolys, offsets, exps, coeffs, jac_offsets, jac_exps,
     jac_coeffs, max_deg)

Tracking follows H(x; t) = gamma*(1-t)*G(x) + t*F(x) from t=0 (start system
G) to t=1 (target F) with a 4th-order predictor on the Davidenko ODE and a
Newton corrector.  Step control: halve on corrector failure, double after
three consecutive accepted steps.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

# status codes returned by track_one
TRACK_OK = 0
TRACK_DIVERGED = 1
TRACK_END_NEWTON_FAIL = 2
TRACK_STEP_UNDERFLOW = 3

# target local truncation error (relative) used to cap the step size
PATH_TOL = 1e-5


def _pow_table(x, max_deg):
    return np.asarray(x, dtype=np.complex128)[:, None] ** np.arange(max_deg + 1)


def _eval_packed(npolys, nvars, offsets, exps, coeffs, pows):
    counts = np.diff(offsets)
    nterms = int(offsets[-1])
    out = np.zeros(npolys, dtype=np.complex128)
    if nterms == 0:
        return out
    mono = np.prod(pows[np.arange(nvars)[None, :], exps[:nterms]], axis=1)
    seg = np.repeat(np.arange(npolys), counts)
    np.add.at(out, seg, coeffs[:nterms] * mono)
    return out


def eval_system(args, x):
    nvars, npolys, offsets, exps, coeffs, _, _, _, max_deg = args
    pows = _pow_table(x, max_deg)
    return _eval_packed(npolys, nvars, offsets, exps, coeffs, pows)


def eval_jacobian(args, x):
    nvars, npolys, _, _, _, joffs, jexps, jcoefs, max_deg = args
    pows = _pow_table(x, max_deg)
    flat = _eval_packed(npolys * nvars, nvars, joffs, jexps, jcoefs, pows)
    return flat.reshape(npolys, nvars)


def _lu_diag_ratio(a):
    """max/min modulus of the U diagonal after partially pivoted LU; a cheap
    proxy for the condition number, used only to classify failed endpoints."""
    u = np.array(a, dtype=np.complex128)
    n = u.shape[0]
    for k in range(n):
        p = k + int(np.argmax(np.abs(u[k:, k])))
        if p != k:
            u[[k, p]] = u[[p, k]]
        piv = u[k, k]
        if piv == 0:
            return np.inf
        u[k + 1 :, k + 1 :] -= np.outer(u[k + 1 :, k] / piv, u[k, k + 1 :])
    d = np.abs(np.diag(u))
    lo = d.min()
    return np.inf if lo == 0 else float(d.max() / lo)


def newton_refine(args, x, tol, max_iters):
    """Plain Newton on one system; returns (x, inf-norm residual, converged)."""
    x = np.array(x, dtype=np.complex128)
    res = float(np.abs(eval_system(args, x)).max())
    for _ in range(int(max_iters)):
        if res < tol:
            return x, res, True
        fv = eval_system(args, x)
        jac = eval_jacobian(args, x)
        try:
            delta = np.linalg.solve(jac, -fv)
        except np.linalg.LinAlgError:
            return x, res, False
        xn = x + delta
        if not np.all(np.isfinite(xn.view(np.float64))):
            return x, res, False
        x = xn
        res = float(np.abs(eval_system(args, x)).max())
    return x, res, res < tol


def _homotopy_parts(f_args, g_args, x):
    fv = eval_system(f_args, x)
    gv = eval_system(g_args, x)
    jf = eval_jacobian(f_args, x)
    jg = eval_jacobian(g_args, x)
    return fv, gv, jf, jg


def _tangent(f_args, g_args, gamma, x, t):
    fv, gv, jf, jg = _homotopy_parts(f_args, g_args, x)
    hx = gamma * (1.0 - t) * jg + t * jf
    rhs = gamma * gv - fv  # = -dH/dt
    try:
        return np.linalg.solve(hx, rhs)
    except np.linalg.LinAlgError:
        return None


def _newton_h(f_args, g_args, gamma, x, t, tol, max_iters):
    # converged on small residual or on a small relative Newton update; the
    # absolute residual alone is unreachable at large-norm path excursions
    # where evaluation rounding exceeds it
    for _ in range(max_iters):
        fv = eval_system(f_args, x)
        gv = eval_system(g_args, x)
        hv = gamma * (1.0 - t) * gv + t * fv
        if np.abs(hv).max() < tol:
            return x, True
        jf = eval_jacobian(f_args, x)
        jg = eval_jacobian(g_args, x)
        hx = gamma * (1.0 - t) * jg + t * jf
        try:
            delta = np.linalg.solve(hx, -hv)
        except np.linalg.LinAlgError:
            return x, False
        x = x + delta
        if not np.all(np.isfinite(x.view(np.float64))):
            return x, False
        if np.abs(delta).max() <= tol * (1.0 + np.abs(x).max()):
            return x, True
    fv = eval_system(f_args, x)
    gv = eval_system(g_args, x)
    hv = gamma * (1.0 - t) * gv + t * fv
    return x, bool(np.abs(hv).max() < tol)


def track_one(f_args, g_args, gamma, x0, opts):
    """Track a single path.

    opts is a float64 vector: (newton_tol, max_newton_iters, initial_step,
    min_step, max_step, divergence_norm, endgame_start, final_tol).

    Returns (endpoint, code, steps, residual, cond_proxy, t_final).
    """
    with np.errstate(all="ignore"):  # overflow during divergence is expected
        return _track_one(f_args, g_args, gamma, x0, opts)


def _track_one(f_args, g_args, gamma, x0, opts):
    (newton_tol, max_newton_iters, initial_step, min_step, max_step,
     divergence_norm, endgame_start, final_tol) = (float(v) for v in opts)
    max_newton_iters = int(max_newton_iters)

    x = np.array(x0, dtype=np.complex128)
    t = 0.0
    h = min(initial_step, max_step)
    consec = 0
    steps = 0

    def finish(code, xf, tf):
        resid = float(np.abs(eval_system(f_args, xf)).max()) if np.all(
            np.isfinite(xf.view(np.float64))
        ) else np.inf
        if np.all(np.isfinite(xf.view(np.float64))):
            cond = _lu_diag_ratio(eval_jacobian(f_args, xf))
        else:
            cond = np.inf
        return xf, code, steps, resid, cond, tf

    while t < 1.0 - 1e-14:
        steps += 1
        if steps > 2_000_000:
            return finish(TRACK_STEP_UNDERFLOW, x, t)
        if t >= endgame_start:
            rem = 1.0 - t
            if rem > 4.0 * min_step:
                h = min(h, 0.5 * rem)
        h = min(h, 1.0 - t)

        ok = True
        k1 = _tangent(f_args, g_args, gamma, x, t)
        ok = k1 is not None
        if ok:
            k2 = _tangent(f_args, g_args, gamma, x + 0.5 * h * k1, t + 0.5 * h)
            ok = k2 is not None
        if ok:
            k3 = _tangent(f_args, g_args, gamma, x + 0.5 * h * k2, t + 0.5 * h)
            ok = k3 is not None
        if ok:
            k4 = _tangent(f_args, g_args, gamma, x + h * k3, t + h)
            ok = k4 is not None
        if ok:
            xp = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            ok = bool(np.all(np.isfinite(xp.view(np.float64))))
        if ok:
            xc, ok = _newton_h(f_args, g_args, gamma, xp.copy(), t + h, newton_tol, max_newton_iters)
        if ok:
            # a correction comparable to the predictor displacement means the
            # corrector likely landed on a neighboring path; reject the step
            corr = np.abs(xc - xp).max()
            pred = np.abs(xp - x).max()
            ok = corr <= 0.25 * pred + 100.0 * newton_tol * (1.0 + np.abs(xc).max())

        if ok:
            x = xc
            t = t + h
            consec += 1
            if consec >= 3:
                h = min(2.0 * h, max_step)
                consec = 0
            # cap the next step from the corrector displacement, read as a
            # local-error estimate of the order-4 predictor
            scale = PATH_TOL * (1.0 + np.abs(x).max())
            if corr > 0:
                h = min(h, h * max(0.3, 0.8 * (scale / corr) ** 0.2), max_step)
            if np.abs(x).max() > divergence_norm:
                return finish(TRACK_DIVERGED, x, t)
        else:
            h *= 0.5
            consec = 0
            if h < min_step:
                return finish(TRACK_STEP_UNDERFLOW, x, t)

    x, resid, ok = newton_refine(f_args, x, 0.01 * final_tol, 3 * max_newton_iters)
    if resid < final_tol:
        return finish(TRACK_OK, x, 1.0)
    return finish(TRACK_END_NEWTON_FAIL, x, 1.0)
