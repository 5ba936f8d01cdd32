# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels (same contract as ``conewatch._pykernels``)."""

from libc.math cimport sqrt, fabs, tanh, cosh, isfinite, pow, floor, INFINITY, NAN
from libc.stdlib cimport malloc, free

import numpy as np
cimport numpy as cnp

cnp.import_array()

from conewatch._pykernels import sample_grid

cdef enum:
    KIND_POLY = 0
    KIND_CYCLIC = 1
    STATUS_OK = 0
    STATUS_STEP_FAILURE = 1
    STATUS_BLOWUP = 2
    STATUS_MAX_STEPS = 3

cdef double C2 = 1.0 / 5, C3 = 3.0 / 10, C4 = 4.0 / 5, C5 = 8.0 / 9
cdef double A21 = 1.0 / 5
cdef double A31 = 3.0 / 40, A32 = 9.0 / 40
cdef double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9
cdef double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729
cdef double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176, A65 = -5103.0 / 18656
cdef double A71 = 35.0 / 384, A73 = 500.0 / 1113, A74 = 125.0 / 192, A75 = -2187.0 / 6784, A76 = 11.0 / 84
cdef double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920
cdef double E5 = -17253.0 / 339200, E6 = 22.0 / 525, E7 = -1.0 / 40
cdef double D1 = -12715105075.0 / 11282082432
cdef double D3 = 87487479700.0 / 32700410799
cdef double D4 = -10690763975.0 / 1880347072
cdef double D5 = 701980252875.0 / 199316789632
cdef double D6 = -1453857185.0 / 822651844
cdef double D7 = 69997945.0 / 29380423

cdef double SAFE = 0.9
cdef double FAC_MIN = 0.2
cdef double FAC_MAX = 10.0
cdef double BETA = 0.04
cdef double EXPO = 0.2 - 0.04 * 0.75


cdef struct Model:
    int kind
    int n
    int p
    int n_terms
    long *exps
    double *coefs
    double *params
    double *jac


cdef inline double ipow(double x, long e) nogil:
    cdef double r = 1.0
    while e > 0:
        r *= x
        e -= 1
    return r


cdef void field(Model *m, const double *x, double *out) nogil:
    cdef int n = m.n, i, j, t
    cdef double mono, g
    if m.kind == KIND_POLY:
        for i in range(n):
            out[i] = 0.0
        for t in range(m.n_terms):
            mono = 1.0
            for j in range(n):
                mono *= ipow(x[j], m.exps[t * n + j])
            for i in range(n):
                out[i] += mono * m.coefs[t * n + i]
    else:
        g = m.params[0]
        for i in range(n):
            out[i] = -x[i] + m.params[1 + i] * tanh(g * x[(i - 1 + n) % n])


cdef void jacobian(Model *m, const double *x, double *jac) nogil:
    cdef int n = m.n, i, j, l, t, prev
    cdef long e
    cdef double d, g, ch
    for i in range(n * n):
        jac[i] = 0.0
    if m.kind == KIND_POLY:
        for t in range(m.n_terms):
            for j in range(n):
                e = m.exps[t * n + j]
                if e == 0:
                    continue
                d = e * ipow(x[j], e - 1)
                for l in range(n):
                    if l != j and m.exps[t * n + l] != 0:
                        d *= ipow(x[l], m.exps[t * n + l])
                for i in range(n):
                    jac[i * n + j] += m.coefs[t * n + i] * d
    else:
        g = m.params[0]
        for i in range(n):
            jac[i * n + i] = -1.0
            prev = (i - 1 + n) % n
            ch = cosh(g * x[prev])
            jac[i * n + prev] += m.params[1 + i] * g / (ch * ch)


cdef void rhs(Model *m, const double *y, double *out) nogil:
    cdef int n = m.n, p = m.p, i, j, c
    cdef double acc
    field(m, y, out)
    if p == 0:
        return
    jacobian(m, y, m.jac)
    for i in range(n):
        for c in range(p):
            acc = 0.0
            for j in range(n):
                acc += m.jac[i * n + j] * y[n + j * p + c]
            out[n + i * p + c] = acc


cdef double rms_scaled(const double *v, const double *a, const double *b,
                       int size, double rtol, double atol) nogil:
    cdef int i
    cdef double s, sc, acc = 0.0, fa, fb
    for i in range(size):
        fa = fabs(a[i])
        fb = fabs(b[i])
        sc = atol + rtol * (fa if fa > fb else fb)
        s = v[i] / sc
        acc += s * s
    return sqrt(acc / size)


def integrate_native(int kind, exps, coefs, params, int n, int p, y0,
                     double t0, double t_end, double sample_dt, double rtol,
                     double atol, double max_step, double norm_cap,
                     long max_steps):
    cdef cnp.ndarray[long, ndim=2, mode="c"] e_arr = np.ascontiguousarray(exps, dtype=np.int64).reshape(-1, n)
    cdef cnp.ndarray[double, ndim=2, mode="c"] c_arr = np.ascontiguousarray(coefs, dtype=float).reshape(-1, n)
    cdef cnp.ndarray[double, ndim=1, mode="c"] p_arr = np.ascontiguousarray(params, dtype=float).reshape(-1)
    if p_arr.shape[0] == 0:
        p_arr = np.zeros(1)
    cdef int size = n * (1 + p)
    cdef cnp.ndarray[double, ndim=1, mode="c"] grid = np.asarray(sample_grid(t0, t_end, sample_dt), dtype=float)
    cdef int n_grid = grid.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n_grid, size))
    cdef double[:, ::1] out_v = out
    cdef double[::1] grid_v = grid
    cdef cnp.ndarray[double, ndim=1, mode="c"] y0_arr = np.ascontiguousarray(y0, dtype=float).reshape(-1)
    if y0_arr.shape[0] != size:
        raise ValueError("initial state has wrong size")

    cdef Model m
    m.kind = kind
    m.n = n
    m.p = p
    m.n_terms = e_arr.shape[0]
    m.exps = &e_arr[0, 0] if m.n_terms > 0 else NULL
    m.coefs = &c_arr[0, 0] if m.n_terms > 0 else NULL
    m.params = &p_arr[0]

    cdef double *work = <double *> malloc(sizeof(double) * (13 * size + n * n))
    if work == NULL:
        raise MemoryError()
    cdef double *y = work
    cdef double *ynew = work + size
    cdef double *k1 = work + 2 * size
    cdef double *k2 = work + 3 * size
    cdef double *k3 = work + 4 * size
    cdef double *k4 = work + 5 * size
    cdef double *k5 = work + 6 * size
    cdef double *k6 = work + 7 * size
    cdef double *k7 = work + 8 * size
    cdef double *tmp = work + 9 * size
    cdef double *errv = work + 10 * size
    cdef double *ydiff = work + 11 * size
    cdef double *sc = work + 12 * size
    m.jac = work + 13 * size

    cdef int i, n_out = 1, status = STATUS_OK
    cdef long steps = 0
    cdef double t = t0, h, hs, t_new, err, fac, fac11, h_new, facold = 1e-4
    cdef double direction, d0, d1, d2, dmax, h0, h1, s, s1, bspl, r4, r5, nrm, scale
    cdef bint last, reject = False

    for i in range(size):
        y[i] = y0_arr[i]
        out_v[0, i] = y[i]

    if n_grid == 1:
        free(work)
        return grid, out, STATUS_OK, t0

    direction = 1.0 if t_end > t0 else -1.0
    with nogil:
        rhs(&m, y, k1)
        # initial step (Hairer's heuristic, same as the Python kernel)
        d0 = 0.0
        d1 = 0.0
        for i in range(size):
            scale = atol + rtol * fabs(y[i])
            d0 += (y[i] / scale) * (y[i] / scale)
            d1 += (k1[i] / scale) * (k1[i] / scale)
        d0 = sqrt(d0 / size)
        d1 = sqrt(d1 / size)
        if d0 < 1e-5 or d1 < 1e-5:
            h0 = 1e-6
        else:
            h0 = 0.01 * d0 / d1
        if h0 > max_step:
            h0 = max_step
        for i in range(size):
            tmp[i] = y[i] + direction * h0 * k1[i]
        rhs(&m, tmp, k2)
        d2 = 0.0
        for i in range(size):
            scale = atol + rtol * fabs(y[i])
            d2 += ((k2[i] - k1[i]) / scale) * ((k2[i] - k1[i]) / scale)
        d2 = sqrt(d2 / size) / h0
        dmax = d1 if d1 > d2 else d2
        if dmax <= 1e-15:
            h1 = h0 * 1e-3
            if h1 < 1e-6:
                h1 = 1e-6
        else:
            h1 = pow(0.01 / dmax, 0.2)
        h = 100 * h0
        if h1 < h:
            h = h1
        if max_step < h:
            h = max_step

        while direction * (t_end - t) > 0.0:
            if steps >= max_steps:
                status = STATUS_MAX_STEPS
                break
            if h < 1e-14 * (fabs(t) if fabs(t) > 1.0 else 1.0):
                status = STATUS_STEP_FAILURE
                break
            last = False
            if direction * (t + direction * h - t_end) >= 0.0:
                h = direction * (t_end - t)
                last = True
            hs = direction * h
            steps += 1
            for i in range(size):
                tmp[i] = y[i] + hs * (A21 * k1[i])
            rhs(&m, tmp, k2)
            for i in range(size):
                tmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i])
            rhs(&m, tmp, k3)
            for i in range(size):
                tmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
            rhs(&m, tmp, k4)
            for i in range(size):
                tmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
            rhs(&m, tmp, k5)
            for i in range(size):
                tmp[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
            rhs(&m, tmp, k6)
            for i in range(size):
                ynew[i] = y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
            t_new = t_end if last else t + hs
            rhs(&m, ynew, k7)
            for i in range(size):
                errv[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            err = rms_scaled(errv, y, ynew, size, rtol, atol)
            if not isfinite(err):
                h *= FAC_MIN
                reject = True
                continue
            fac11 = pow(err, EXPO)
            fac = fac11 / pow(facold, BETA)
            fac = fac / SAFE
            if fac > 1.0 / FAC_MIN:
                fac = 1.0 / FAC_MIN
            if fac < 1.0 / FAC_MAX:
                fac = 1.0 / FAC_MAX
            h_new = h / fac
            if err <= 1.0:
                facold = err if err > 1e-4 else 1e-4
                while n_out < n_grid and direction * (grid_v[n_out] - t_new) < 0.0:
                    s = (grid_v[n_out] - t) / hs
                    s1 = 1.0 - s
                    for i in range(size):
                        ydiff[i] = ynew[i] - y[i]
                        bspl = hs * k1[i] - ydiff[i]
                        r4 = ydiff[i] - hs * k7[i] - bspl
                        r5 = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
                        out_v[n_out, i] = y[i] + s * (ydiff[i] + s1 * (bspl + s * (r4 + s1 * r5)))
                    n_out += 1
                if last:
                    for i in range(size):
                        out_v[n_out, i] = ynew[i]
                    n_out += 1
                t = t_new
                for i in range(size):
                    y[i] = ynew[i]
                    k1[i] = k7[i]
                nrm = 0.0
                for i in range(n):
                    nrm += y[i] * y[i]
                if sqrt(nrm) > norm_cap:
                    status = STATUS_BLOWUP
                    break
                if h_new > max_step:
                    h_new = max_step
                if reject and h_new > h:
                    h_new = h
                reject = False
                h = h_new
            else:
                fac = fac11 / SAFE
                if fac > 1.0 / FAC_MIN:
                    fac = 1.0 / FAC_MIN
                h = h / fac
                reject = True
    free(work)
    return grid[:n_out], out[:n_out], status, t


def first_ordered_pair(points, qmat, double delta_sep, double tol):
    cdef cnp.ndarray[double, ndim=2, mode="c"] pts = np.ascontiguousarray(points, dtype=float)
    cdef cnp.ndarray[double, ndim=2, mode="c"] q = np.ascontiguousarray(qmat, dtype=float)
    cdef double[:, ::1] pv = pts
    cdef double[:, ::1] qv = q
    cdef int m = pts.shape[0], n = pts.shape[1]
    cdef int i = 0, j, a, b, hit_j = -1, best_i = -1, best_j = -1
    cdef double sep2 = delta_sep * delta_sep, norm2, form, ratio, row
    cdef double best = INFINITY, hit_form = NAN
    cdef double *d = <double *> malloc(sizeof(double) * (n if n > 0 else 1))
    if d == NULL:
        raise MemoryError()
    with nogil:
        for i in range(m - 1):
            hit_j = -1
            for j in range(i + 1, m):
                norm2 = 0.0
                for a in range(n):
                    d[a] = pv[j, a] - pv[i, a]
                    norm2 += d[a] * d[a]
                if norm2 <= sep2:
                    continue
                form = 0.0
                for a in range(n):
                    row = 0.0
                    for b in range(n):
                        row += qv[a, b] * d[b]
                    form += d[a] * row
                ratio = form / norm2
                if ratio < best:
                    best = ratio
                    best_i = i
                    best_j = j
                if hit_j < 0 and form <= -tol * norm2:
                    hit_j = j
                    hit_form = form
            if hit_j >= 0:
                break
    free(d)
    if hit_j >= 0:
        return i, hit_j, hit_form, best_i, best_j, best
    return -1, -1, NAN, best_i, best_j, best
