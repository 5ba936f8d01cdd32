"""Pure-Python numerical kernels.

Reference implementation of the hot loops, used whenever the compiled
extension ``conewatch._ckernels`` is unavailable.  Both modules expose the
same two entry points, :func:`integrate_native` and
:func:`first_ordered_pair`, with identical signatures and return values.

Native models are described by a small integer ``kind`` plus arrays:

``KIND_POLY``
    ``F_i(x) = sum_t coefs[t, i] * prod_j x_j ** exps[t, j]``
``KIND_CYCLIC``
    ``F_i(x) = -x_i + params[1 + i] * tanh(params[0] * x_{i-1})``
"""

import math

import numpy as np

KIND_POLY = 0
KIND_CYCLIC = 1

STATUS_OK = 0
STATUS_STEP_FAILURE = 1
STATUS_BLOWUP = 2
STATUS_MAX_STEPS = 3

# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_A71, _A73, _A74, _A75, _A76 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                                -17253 / 339200, 22 / 525, -1 / 40)
# continuous extension (Hairer, Norsett & Wanner, DOPRI5)
_D1 = -12715105075 / 11282082432
_D3 = 87487479700 / 32700410799
_D4 = -10690763975 / 1880347072
_D5 = 701980252875 / 199316789632
_D6 = -1453857185 / 822651844
_D7 = 69997945 / 29380423

_SAFE = 0.9
_FAC_MIN = 0.2
_FAC_MAX = 10.0
_BETA = 0.04
_EXPO = 0.2 - _BETA * 0.75


def sample_grid(t0, t_end, sample_dt):
    """Uniform output times from ``t0`` to ``t_end``; ``t_end`` always included."""
    span = t_end - t0
    if sample_dt <= 0.0 or span == 0.0:
        return np.array([t0, t_end]) if span != 0.0 else np.array([t0])
    direction = 1.0 if span > 0 else -1.0
    count = int(math.floor(abs(span) / sample_dt + 1e-9))
    times = t0 + direction * sample_dt * np.arange(count + 1)
    if abs(t_end - times[-1]) > 1e-9 * sample_dt:
        times = np.append(times, t_end)
    else:
        times[-1] = t_end
    return times


def _initial_step(rhs, t0, y0, f0, direction, rtol, atol, max_step):
    sc = atol + rtol * np.abs(y0)
    d0 = math.sqrt(np.mean((y0 / sc) ** 2))
    d1 = math.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    h0 = min(h0, max_step)
    y1 = y0 + direction * h0 * f0
    f1 = rhs(t0 + direction * h0, y1)
    d2 = math.sqrt(np.mean(((f1 - f0) / sc) ** 2)) / h0
    dmax = max(d1, d2)
    if dmax <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dmax) ** 0.2
    return min(100 * h0, h1, max_step)


def dopri5(rhs, y0, t0, t_end, sample_dt, rtol, atol, max_step,
           norm_cap, max_steps, n_norm):
    """Integrate ``y' = rhs(t, y)`` with an adaptive Dormand-Prince 5(4) pair.

    Returns ``(times, samples, status, t_reached)``.  On failure the sample
    arrays are truncated at the last output time reached.  ``n_norm`` is the
    number of leading components whose Euclidean norm is checked against
    ``norm_cap``.
    """
    y = np.array(y0, dtype=float)
    grid = sample_grid(t0, t_end, sample_dt)
    out = np.empty((len(grid), y.size))
    out[0] = y
    n_out = 1
    if len(grid) == 1:
        return grid, out, STATUS_OK, t0
    direction = 1.0 if t_end > t0 else -1.0
    t = t0
    k1 = rhs(t, y)
    h = _initial_step(rhs, t, y, k1, direction, rtol, atol, max_step)
    facold = 1e-4
    reject = False
    steps = 0
    status = STATUS_OK
    while direction * (t_end - t) > 0.0:
        if steps >= max_steps:
            status = STATUS_MAX_STEPS
            break
        if h < 1e-14 * max(1.0, abs(t)):
            status = STATUS_STEP_FAILURE
            break
        last = False
        if direction * (t + direction * h - t_end) >= 0.0:
            h = direction * (t_end - t)
            last = True
        hs = direction * h
        steps += 1
        k2 = rhs(t + _C2 * hs, y + hs * (_A21 * k1))
        k3 = rhs(t + _C3 * hs, y + hs * (_A31 * k1 + _A32 * k2))
        k4 = rhs(t + _C4 * hs, y + hs * (_A41 * k1 + _A42 * k2 + _A43 * k3))
        k5 = rhs(t + _C5 * hs, y + hs * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
        k6 = rhs(t + hs, y + hs * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
        y_new = y + hs * (_A71 * k1 + _A73 * k3 + _A74 * k4 + _A75 * k5 + _A76 * k6)
        t_new = t_end if last else t + hs
        k7 = rhs(t_new, y_new)
        err_vec = hs * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err = math.sqrt(np.mean((err_vec / sc) ** 2))
        if not math.isfinite(err):
            h *= _FAC_MIN
            reject = True
            continue
        fac11 = err ** _EXPO
        fac = fac11 / facold ** _BETA
        fac = max(1.0 / _FAC_MAX, min(1.0 / _FAC_MIN, fac / _SAFE))
        h_new = h / fac
        if err <= 1.0:
            facold = max(err, 1e-4)
            # dense output between t and t_new
            while n_out < len(grid) and direction * (grid[n_out] - t_new) < 0.0:
                s = (grid[n_out] - t) / hs
                s1 = 1.0 - s
                ydiff = y_new - y
                bspl = hs * k1 - ydiff
                r4 = ydiff - hs * k7 - bspl
                r5 = hs * (_D1 * k1 + _D3 * k3 + _D4 * k4 + _D5 * k5 + _D6 * k6 + _D7 * k7)
                out[n_out] = y + s * (ydiff + s1 * (bspl + s * (r4 + s1 * r5)))
                n_out += 1
            if last:
                out[n_out] = y_new
                n_out += 1
            t, y, k1 = t_new, y_new, k7
            if math.sqrt(float(np.dot(y[:n_norm], y[:n_norm]))) > norm_cap:
                status = STATUS_BLOWUP
                break
            h_new = min(h_new, max_step)
            if reject:
                h_new = min(h_new, h)
            reject = False
            h = h_new
        else:
            h = h / min(1.0 / _FAC_MIN, fac11 / _SAFE)
            reject = True
    return grid[:n_out], out[:n_out], status, t


def native_field(kind, exps, coefs, params, x):
    x = np.asarray(x, dtype=float)
    if kind == KIND_POLY:
        mono = np.prod(x[None, :] ** exps, axis=1)
        return mono @ coefs
    if kind == KIND_CYCLIC:
        g = params[0]
        return -x + params[1:1 + x.size] * np.tanh(g * np.roll(x, 1))
    raise ValueError(f"unknown native kind {kind}")


def native_jacobian(kind, exps, coefs, params, x):
    x = np.asarray(x, dtype=float)
    n = x.size
    if kind == KIND_POLY:
        jac = np.zeros((n, n))
        for t in range(exps.shape[0]):
            e = exps[t]
            c = coefs[t]
            if not np.any(c):
                continue
            for j in range(n):
                if e[j] == 0:
                    continue
                d = e[j] * x[j] ** (e[j] - 1)
                for l in range(n):
                    if l != j and e[l]:
                        d *= x[l] ** e[l]
                jac[:, j] += c * d
        return jac
    if kind == KIND_CYCLIC:
        g = params[0]
        jac = -np.eye(n)
        for i in range(n):
            prev = (i - 1) % n
            jac[i, prev] += params[1 + i] * g / math.cosh(g * x[prev]) ** 2
        return jac
    raise ValueError(f"unknown native kind {kind}")


def _native_rhs(kind, exps, coefs, params, n, p):
    if p == 0:
        def rhs(t, y):
            return native_field(kind, exps, coefs, params, y)
        return rhs

    def rhs_tangent(t, y):
        x = y[:n]
        frame = y[n:].reshape(n, p)
        out = np.empty_like(y)
        out[:n] = native_field(kind, exps, coefs, params, x)
        out[n:] = (native_jacobian(kind, exps, coefs, params, x) @ frame).ravel()
        return out
    return rhs_tangent


def integrate_native(kind, exps, coefs, params, n, p, y0, t0, t_end,
                     sample_dt, rtol, atol, max_step, norm_cap, max_steps):
    """Integrate a native model, optionally with ``p`` tangent columns.

    The state is ``[x, vec(M)]`` where ``M`` is an ``n x p`` row-major
    matrix evolving by ``M' = DF(x) M``.
    """
    exps = np.asarray(exps, dtype=np.int64)
    coefs = np.asarray(coefs, dtype=float)
    params = np.asarray(params, dtype=float)
    rhs = _native_rhs(kind, exps, coefs, params, n, p)
    return dopri5(rhs, y0, t0, t_end, sample_dt, rtol, atol, max_step,
                  norm_cap, max_steps, n)


def first_ordered_pair(points, qmat, delta_sep, tol):
    """Scan pairs ``i < j`` in lexicographic order for an ordered difference.

    Returns ``(i, j, form, best_i, best_j, best_ratio)``.  ``(i, j)`` is the
    first pair with ``|p_i - p_j| > delta_sep`` and
    ``form <= -tol * |p_i - p_j|**2``, or ``(-1, -1, nan)`` when none exists.
    ``best_*`` track the separated pair minimising ``form / |d|**2`` among
    the pairs visited, for local refinement by the caller.
    """
    pts = np.asarray(points, dtype=float)
    m = pts.shape[0]
    sep2 = delta_sep * delta_sep
    best = (-1, -1, math.inf)
    for i in range(m - 1):
        d = pts[i + 1:] - pts[i]
        norm2 = np.einsum("ij,ij->i", d, d)
        form = np.einsum("ij,jk,ik->i", d, qmat, d)
        ok = norm2 > sep2
        if not np.any(ok):
            continue
        ratio = np.where(ok, form / np.where(ok, norm2, 1.0), math.inf)
        jbest = int(np.argmin(ratio))
        if ratio[jbest] < best[2]:
            best = (i, i + 1 + jbest, float(ratio[jbest]))
        hit = np.nonzero(ok & (form <= -tol * norm2))[0]
        if hit.size:
            j = int(hit[0])
            return i, i + 1 + j, float(form[j]), best[0], best[1], best[2]
    return -1, -1, math.nan, best[0], best[1], best[2]
