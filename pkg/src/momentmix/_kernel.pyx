# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tracking kernels.

Mirrors ``_kernel_py`` exactly: same entry points, same status codes, same
step-control rules.  The path loop runs without the GIL so callers can spread
paths over a thread pool.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, isfinite, pow, sqrt

cnp.import_array()

BACKEND_NAME = "compiled"

cdef enum:
    C_TRACK_OK = 0
    C_TRACK_DIVERGED = 1
    C_TRACK_END_NEWTON_FAIL = 2
    C_TRACK_STEP_UNDERFLOW = 3

TRACK_OK = C_TRACK_OK
TRACK_DIVERGED = C_TRACK_DIVERGED
TRACK_END_NEWTON_FAIL = C_TRACK_END_NEWTON_FAIL
TRACK_STEP_UNDERFLOW = C_TRACK_STEP_UNDERFLOW

ctypedef double complex zdub

# target local truncation error (relative) used to cap the step size
cdef double PATH_TOL = 1e-5


cdef inline double _abs2(zdub z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef inline double _mag1(zdub z) noexcept nogil:
    # cheap monotone magnitude for pivot selection
    return (z.real if z.real >= 0 else -z.real) + (z.imag if z.imag >= 0 else -z.imag)


cdef void _fill_pows(zdub* pows, int nv, int md, zdub* x) noexcept nogil:
    cdef int v, p, base
    for v in range(nv):
        base = v * (md + 1)
        pows[base] = 1.0
        for p in range(1, md + 1):
            pows[base + p] = pows[base + p - 1] * x[v]


cdef void _eval_packed(int npolys, int nv, int md, int* offs, int* exps,
                       zdub* coefs, zdub* pows, zdub* out) noexcept nogil:
    # Kahan-compensated accumulation in the stored (graded-lex) term order
    cdef int i, t, v, e
    cdef zdub s, comp, y, tt, term
    for i in range(npolys):
        s = 0
        comp = 0
        for t in range(offs[i], offs[i + 1]):
            term = coefs[t]
            for v in range(nv):
                e = exps[t * nv + v]
                if e:
                    term = term * pows[v * (md + 1) + e]
            y = term - comp
            tt = s + y
            comp = (tt - s) - y
            s = tt
        out[i] = s


cdef int _lu_solve(int n, zdub* a, zdub* b, int* piv) noexcept nogil:
    """Partially pivoted LU solve, in place; returns 0 or -1 (singular)."""
    cdef int i, j, k, p
    cdef double amax, m
    cdef zdub tmp, mult
    for k in range(n):
        amax = _mag1(a[k * n + k])
        p = k
        for i in range(k + 1, n):
            m = _mag1(a[i * n + k])
            if m > amax:
                amax = m
                p = i
        if amax == 0.0:
            return -1
        if p != k:
            for j in range(k, n):
                tmp = a[k * n + j]
                a[k * n + j] = a[p * n + j]
                a[p * n + j] = tmp
            tmp = b[k]
            b[k] = b[p]
            b[p] = tmp
        for i in range(k + 1, n):
            mult = a[i * n + k] / a[k * n + k]
            a[i * n + k] = mult
            for j in range(k + 1, n):
                a[i * n + j] = a[i * n + j] - mult * a[k * n + j]
            b[i] = b[i] - mult * b[k]
    for i in range(n - 1, -1, -1):
        tmp = b[i]
        for j in range(i + 1, n):
            tmp = tmp - a[i * n + j] * b[j]
        b[i] = tmp / a[i * n + i]
        if not (isfinite(b[i].real) and isfinite(b[i].imag)):
            return -1
    return 0


cdef double _lu_cond_proxy(int n, zdub* a) noexcept nogil:
    """max/min |U_ii| after LU factorization of a (destroyed)."""
    cdef int i, j, k, p
    cdef double amax, m, dmin, dmax, d
    cdef zdub tmp, mult
    for k in range(n):
        amax = _mag1(a[k * n + k])
        p = k
        for i in range(k + 1, n):
            m = _mag1(a[i * n + k])
            if m > amax:
                amax = m
                p = i
        if amax == 0.0:
            return INFINITY
        if p != k:
            for j in range(k, n):
                tmp = a[k * n + j]
                a[k * n + j] = a[p * n + j]
                a[p * n + j] = tmp
        for i in range(k + 1, n):
            mult = a[i * n + k] / a[k * n + k]
            for j in range(k + 1, n):
                a[i * n + j] = a[i * n + j] - mult * a[k * n + j]
    dmin = INFINITY
    dmax = 0.0
    for i in range(n):
        d = sqrt(_abs2(a[i * n + i]))
        if d < dmin:
            dmin = d
        if d > dmax:
            dmax = d
    if dmin == 0.0:
        return INFINITY
    return dmax / dmin


cdef struct SysView:
    int npolys
    int nv
    int md
    int* offs
    int* exps
    zdub* coefs
    int* joffs
    int* jexps
    zdub* jcoefs


cdef struct Work:
    zdub* powsF
    zdub* powsG
    zdub* fv
    zdub* gv
    zdub* hv
    zdub* jf
    zdub* jg
    zdub* hx
    zdub* k1
    zdub* k2
    zdub* k3
    zdub* k4
    zdub* xs
    zdub* xp
    int* piv


cdef int _h_tangent(SysView* F, SysView* G, zdub gamma, double t,
                    zdub* x, Work* w, zdub* out) noexcept nogil:
    cdef int nv = F.nv
    cdef int i
    _fill_pows(w.powsF, nv, F.md, x)
    _fill_pows(w.powsG, nv, G.md, x)
    _eval_packed(nv, nv, F.md, F.offs, F.exps, F.coefs, w.powsF, w.fv)
    _eval_packed(nv, nv, G.md, G.offs, G.exps, G.coefs, w.powsG, w.gv)
    _eval_packed(nv * nv, nv, F.md, F.joffs, F.jexps, F.jcoefs, w.powsF, w.jf)
    _eval_packed(nv * nv, nv, G.md, G.joffs, G.jexps, G.jcoefs, w.powsG, w.jg)
    for i in range(nv * nv):
        w.hx[i] = gamma * (1.0 - t) * w.jg[i] + t * w.jf[i]
    for i in range(nv):
        out[i] = gamma * w.gv[i] - w.fv[i]
    return _lu_solve(nv, w.hx, out, w.piv)


cdef int _newton_h(SysView* F, SysView* G, zdub gamma, double t, zdub* x,
                   double tol, int max_iters, Work* w) noexcept nogil:
    # converged on small residual or on a small relative Newton update; the
    # absolute residual alone is unreachable at large-norm path excursions
    # where evaluation rounding exceeds it
    cdef int nv = F.nv
    cdef int it, i
    cdef double res, m, dnorm, xnorm
    for it in range(max_iters + 1):
        _fill_pows(w.powsF, nv, F.md, x)
        _fill_pows(w.powsG, nv, G.md, x)
        _eval_packed(nv, nv, F.md, F.offs, F.exps, F.coefs, w.powsF, w.fv)
        _eval_packed(nv, nv, G.md, G.offs, G.exps, G.coefs, w.powsG, w.gv)
        res = 0.0
        for i in range(nv):
            w.hv[i] = gamma * (1.0 - t) * w.gv[i] + t * w.fv[i]
            m = _abs2(w.hv[i])
            if m > res:
                res = m
        if res < tol * tol:
            return 0
        if it == max_iters:
            return -1
        _eval_packed(nv * nv, nv, F.md, F.joffs, F.jexps, F.jcoefs, w.powsF, w.jf)
        _eval_packed(nv * nv, nv, G.md, G.joffs, G.jexps, G.jcoefs, w.powsG, w.jg)
        for i in range(nv * nv):
            w.hx[i] = gamma * (1.0 - t) * w.jg[i] + t * w.jf[i]
        for i in range(nv):
            w.hv[i] = -w.hv[i]
        if _lu_solve(nv, w.hx, w.hv, w.piv) != 0:
            return -1
        dnorm = 0.0
        xnorm = 0.0
        for i in range(nv):
            x[i] = x[i] + w.hv[i]
            if not (isfinite(x[i].real) and isfinite(x[i].imag)):
                return -1
            m = _abs2(w.hv[i])
            if m > dnorm:
                dnorm = m
            m = _abs2(x[i])
            if m > xnorm:
                xnorm = m
        if sqrt(dnorm) <= tol * (1.0 + sqrt(xnorm)):
            return 0
    return -1


cdef int _newton_f(SysView* F, zdub* x, double tol, int max_iters,
                   Work* w, double* res_out) noexcept nogil:
    cdef int nv = F.nv
    cdef int it, i, ok
    cdef double res, m
    for it in range(max_iters + 1):
        _fill_pows(w.powsF, nv, F.md, x)
        _eval_packed(nv, nv, F.md, F.offs, F.exps, F.coefs, w.powsF, w.fv)
        res = 0.0
        for i in range(nv):
            m = _abs2(w.fv[i])
            if m > res:
                res = m
        res_out[0] = sqrt(res)
        if res_out[0] < tol:
            return 0
        if it == max_iters:
            return -1
        _eval_packed(nv * nv, nv, F.md, F.joffs, F.jexps, F.jcoefs, w.powsF, w.jf)
        for i in range(nv):
            w.hv[i] = -w.fv[i]
        for i in range(nv * nv):
            w.hx[i] = w.jf[i]
        if _lu_solve(nv, w.hx, w.hv, w.piv) != 0:
            return -1
        # validate the step before committing so a failed refine keeps
        # the last finite iterate (matches the fallback backend)
        ok = 1
        for i in range(nv):
            w.xs[i] = x[i] + w.hv[i]
            if not (isfinite(w.xs[i].real) and isfinite(w.xs[i].imag)):
                ok = 0
                break
        if not ok:
            return -1
        for i in range(nv):
            x[i] = w.xs[i]
    return -1


cdef int _track_loop(SysView* F, SysView* G, zdub gamma, zdub* x,
                     double* opts, Work* w, long* steps_out,
                     double* resid_out, double* cond_out,
                     double* t_out) noexcept nogil:
    cdef double newton_tol = opts[0]
    cdef int max_newton_iters = <int> opts[1]
    cdef double initial_step = opts[2]
    cdef double min_step = opts[3]
    cdef double max_step = opts[4]
    cdef double divergence_norm = opts[5]
    cdef double endgame_start = opts[6]
    cdef double final_tol = opts[7]

    cdef int nv = F.nv
    cdef double t = 0.0
    cdef double h = initial_step if initial_step < max_step else max_step
    cdef double rem, m, big, corr, pred
    cdef int consec = 0
    cdef long steps = 0
    cdef int i, ok, code
    cdef double dn2 = divergence_norm * divergence_norm
    cdef double resid = INFINITY

    code = -1
    while t < 1.0 - 1e-14:
        steps += 1
        if steps > 2000000:
            code = C_TRACK_STEP_UNDERFLOW
            break
        if t >= endgame_start:
            rem = 1.0 - t
            if rem > 4.0 * min_step and h > 0.5 * rem:
                h = 0.5 * rem
        if h > 1.0 - t:
            h = 1.0 - t

        # 4th-order predictor on the path ODE
        ok = 1
        if _h_tangent(F, G, gamma, t, x, w, w.k1) != 0:
            ok = 0
        if ok:
            for i in range(nv):
                w.xs[i] = x[i] + 0.5 * h * w.k1[i]
            if _h_tangent(F, G, gamma, t + 0.5 * h, w.xs, w, w.k2) != 0:
                ok = 0
        if ok:
            for i in range(nv):
                w.xs[i] = x[i] + 0.5 * h * w.k2[i]
            if _h_tangent(F, G, gamma, t + 0.5 * h, w.xs, w, w.k3) != 0:
                ok = 0
        if ok:
            for i in range(nv):
                w.xs[i] = x[i] + h * w.k3[i]
            if _h_tangent(F, G, gamma, t + h, w.xs, w, w.k4) != 0:
                ok = 0
        if ok:
            for i in range(nv):
                w.xp[i] = x[i] + (h / 6.0) * (w.k1[i] + 2.0 * w.k2[i] + 2.0 * w.k3[i] + w.k4[i])
                w.xs[i] = w.xp[i]
                if not (isfinite(w.xp[i].real) and isfinite(w.xp[i].imag)):
                    ok = 0
                    break
        if ok:
            if _newton_h(F, G, gamma, t + h, w.xp, newton_tol, max_newton_iters, w) != 0:
                ok = 0
        if ok:
            # a correction comparable to the predictor displacement means the
            # corrector likely landed on a neighboring path; reject the step
            corr = 0.0
            pred = 0.0
            big = 0.0
            for i in range(nv):
                m = _abs2(w.xp[i] - w.xs[i])
                if m > corr:
                    corr = m
                m = _abs2(w.xs[i] - x[i])
                if m > pred:
                    pred = m
                m = _abs2(w.xp[i])
                if m > big:
                    big = m
            if sqrt(corr) > 0.25 * sqrt(pred) + 100.0 * newton_tol * (1.0 + sqrt(big)):
                ok = 0

        if ok:
            for i in range(nv):
                x[i] = w.xp[i]
            t = t + h
            consec += 1
            if consec >= 3:
                h = 2.0 * h
                if h > max_step:
                    h = max_step
                consec = 0
            big = 0.0
            for i in range(nv):
                m = _abs2(x[i])
                if m > big:
                    big = m
            # cap the next step from the corrector displacement, read as a
            # local-error estimate of the order-4 predictor
            corr = sqrt(corr)
            if corr > 0.0:
                m = PATH_TOL * (1.0 + sqrt(big)) / corr
                m = 0.8 * pow(m, 0.2)
                if m < 0.3:
                    m = 0.3
                if h * m < h:
                    h = h * m
                if h > max_step:
                    h = max_step
            if big > dn2:
                code = C_TRACK_DIVERGED
                break
        else:
            h = 0.5 * h
            consec = 0
            if h < min_step:
                code = C_TRACK_STEP_UNDERFLOW
                break

    if code == -1:
        t = 1.0
        if _newton_f(F, x, 0.01 * final_tol, 3 * max_newton_iters, w, &resid) == 0:
            code = C_TRACK_OK
        else:
            code = C_TRACK_OK if resid < final_tol else C_TRACK_END_NEWTON_FAIL

    # final residual and condition proxy at the exit point
    ok = 1
    for i in range(nv):
        if not (isfinite(x[i].real) and isfinite(x[i].imag)):
            ok = 0
            break
    if ok:
        _fill_pows(w.powsF, nv, F.md, x)
        _eval_packed(nv, nv, F.md, F.offs, F.exps, F.coefs, w.powsF, w.fv)
        resid = 0.0
        for i in range(nv):
            m = _abs2(w.fv[i])
            if m > resid:
                resid = m
        resid = sqrt(resid)
        _eval_packed(nv * nv, nv, F.md, F.joffs, F.jexps, F.jcoefs, w.powsF, w.jf)
        for i in range(nv * nv):
            w.hx[i] = w.jf[i]
        cond_out[0] = _lu_cond_proxy(nv, w.hx)
    else:
        resid = INFINITY
        cond_out[0] = INFINITY

    steps_out[0] = steps
    resid_out[0] = resid
    t_out[0] = t
    return code


cdef class _SysHandle:
    """Keeps the backing numpy arrays alive and exposes a SysView."""
    cdef SysView view
    cdef object _refs

    def __init__(self, args):
        nvars, npolys, offsets, exps, coeffs, joffs, jexps, jcoefs, max_deg = args
        cdef int[::1] o = offsets
        cdef int[:, ::1] e = exps
        cdef zdub[::1] c = coeffs
        cdef int[::1] jo = joffs
        cdef int[:, ::1] je = jexps
        cdef zdub[::1] jc = jcoefs
        self._refs = (offsets, exps, coeffs, joffs, jexps, jcoefs)
        self.view.npolys = npolys
        self.view.nv = nvars
        self.view.md = max_deg
        self.view.offs = &o[0]
        self.view.exps = &e[0, 0]
        self.view.coefs = &c[0]
        self.view.joffs = &jo[0]
        self.view.jexps = &je[0, 0]
        self.view.jcoefs = &jc[0]


def _alloc_work(int nv, int mdF, int mdG):
    z = np.empty(nv * (mdF + 1) + nv * (mdG + 1) + 7 * nv + 3 * nv * nv + 2 * nv,
                 dtype=np.complex128)
    piv = np.empty(nv, dtype=np.int32)
    return z, piv


cdef void _bind_work(Work* w, zdub* z, int* piv, int nv, int mdF, int mdG) noexcept nogil:
    cdef long p = 0
    w.powsF = z + p; p += nv * (mdF + 1)
    w.powsG = z + p; p += nv * (mdG + 1)
    w.fv = z + p; p += nv
    w.gv = z + p; p += nv
    w.hv = z + p; p += nv
    w.k1 = z + p; p += nv
    w.k2 = z + p; p += nv
    w.k3 = z + p; p += nv
    w.k4 = z + p; p += nv
    w.xs = z + p; p += nv
    w.xp = z + p; p += nv
    w.jf = z + p; p += nv * nv
    w.jg = z + p; p += nv * nv
    w.hx = z + p; p += nv * nv
    w.piv = piv


def eval_system(args, x):
    cdef _SysHandle h = _SysHandle(args)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(h.view.npolys, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] pows = np.empty(
        h.view.nv * (h.view.md + 1), dtype=np.complex128)
    _fill_pows(<zdub*> pows.data, h.view.nv, h.view.md, <zdub*> xv.data)
    _eval_packed(h.view.npolys, h.view.nv, h.view.md, h.view.offs, h.view.exps,
                 h.view.coefs, <zdub*> pows.data, <zdub*> out.data)
    return out


def eval_jacobian(args, x):
    cdef _SysHandle h = _SysHandle(args)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] xv = np.ascontiguousarray(x, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(
        h.view.npolys * h.view.nv, dtype=np.complex128)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] pows = np.empty(
        h.view.nv * (h.view.md + 1), dtype=np.complex128)
    _fill_pows(<zdub*> pows.data, h.view.nv, h.view.md, <zdub*> xv.data)
    _eval_packed(h.view.npolys * h.view.nv, h.view.nv, h.view.md, h.view.joffs,
                 h.view.jexps, h.view.jcoefs, <zdub*> pows.data, <zdub*> out.data)
    return out.reshape(h.view.npolys, h.view.nv)


def newton_refine(args, x, double tol, int max_iters):
    cdef _SysHandle h = _SysHandle(args)
    cdef int nv = h.view.nv
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] xv = np.array(x, dtype=np.complex128)
    z, piv = _alloc_work(nv, h.view.md, h.view.md)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] zz = z
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pv = piv
    cdef Work w
    _bind_work(&w, <zdub*> zz.data, <int*> pv.data, nv, h.view.md, h.view.md)
    cdef double resid = INFINITY
    cdef int rc
    with nogil:
        rc = _newton_f(&h.view, <zdub*> xv.data, tol, max_iters, &w, &resid)
    return xv, float(resid), bool(resid < tol)


def track_one(f_args, g_args, gamma, x0, opts):
    """Same contract as _kernel_py.track_one."""
    cdef _SysHandle fh = _SysHandle(f_args)
    cdef _SysHandle gh = _SysHandle(g_args)
    cdef int nv = fh.view.nv
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] xv = np.array(x0, dtype=np.complex128)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ov = np.ascontiguousarray(opts, dtype=np.float64)
    z, piv = _alloc_work(nv, fh.view.md, gh.view.md)
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] zz = z
    cdef cnp.ndarray[cnp.int32_t, ndim=1] pv = piv
    cdef Work w
    _bind_work(&w, <zdub*> zz.data, <int*> pv.data, nv, fh.view.md, gh.view.md)
    cdef zdub g = gamma
    cdef long steps = 0
    cdef double resid = INFINITY
    cdef double cond = INFINITY
    cdef double t_final = 0.0
    cdef int code
    with nogil:
        code = _track_loop(&fh.view, &gh.view, g, <zdub*> xv.data,
                           <double*> ov.data, &w, &steps, &resid, &cond, &t_final)
    return xv, int(code), int(steps), float(resid), float(cond), float(t_final)
