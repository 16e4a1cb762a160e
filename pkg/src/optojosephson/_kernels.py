"""Compiled inner loops: vector field, Jacobian and a Dormand-Prince 5(4) stepper.

Parameters travel as a float64 array ``(g, lambda, n0, kappa, gamma, n_th)``.

``base_field`` and ``jacobian_into`` work in the public chart
``(x, p, z, phi, q)``, which has a pole where all light sits in one mode
(W = sqrt(q^2 - z^2) = 0).  Chaotic orbits brush past that point now and
then, so the stepper switches to a polar cap chart ``(x, p, u, v, q)`` with
``u + iv = W exp(i phi)`` and ``z = s sqrt(q^2 - u^2 - v^2)`` while W is small.
Each stored copy of the state is six numbers ``[x, p, a, b, q, s]``: the chart
flag ``s`` is 0 for ``(a, b) = (z, phi)`` and +-1 for ``(a, b) = (u, v)`` on
the cap with that sign of z.  The flag has zero derivative, so steps and the
interpolant carry it through unchanged; charts change only between steps.

Integrated layouts, selected by ``mode``:

* ``MODE_TANGENT`` - ``[copy, V...]`` where the optional tail holds ``k``
  tangent vectors as a row-major 5 x k block (k may be 0), expressed in the
  chart of the copy.
* ``MODE_PAIR`` - two copies, co-integrated.
"""
import math

import numpy as np
from numba import njit

MODE_TANGENT = 0
MODE_PAIR = 1

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_NONFINITE = 2

EPS_REG = 1e-12
H_MIN = 1e-14

# Dormand-Prince 5(4) tableau
C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
# difference between the 5th and embedded 4th order weights
E1, E3, E4, E5, E6, E7 = (71 / 57600, -71 / 16695, 71 / 1920,
                          -17253 / 339200, 22 / 525, -1 / 40)

# quartic continuous extension (Shampine), rows = stages, cols = sigma^1..sigma^4
DENSE_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@njit(cache=True)
def base_field(x, p, z, ph, q, par):
    g, lam, n0, kappa, gamma, n_th = par[0], par[1], par[2], par[3], par[4], par[5]
    w = math.sqrt(max(q * q - z * z, 0.0))
    wr = max(w, EPS_REG)
    dx = p - 0.5 * gamma * x
    dp = -x - 0.5 * gamma * p - lam * n0 * z
    dz = 2.0 * g * w * math.sin(ph) - kappa * z
    dph = 2.0 * lam * x - 2.0 * g * z * math.cos(ph) / wr
    dq = -kappa * q + 2.0 * kappa * n_th / n0
    return dx, dp, dz, dph, dq


@njit(cache=True)
def jacobian_into(x, p, z, ph, q, par, jac):
    g, lam, n0, kappa, gamma = par[0], par[1], par[2], par[3], par[4]
    w = math.sqrt(max(q * q - z * z, 0.0))
    wr = max(w, EPS_REG)
    s = math.sin(ph)
    c = math.cos(ph)
    for i in range(5):
        for j in range(5):
            jac[i, j] = 0.0
    jac[0, 0] = -0.5 * gamma
    jac[0, 1] = 1.0
    jac[1, 0] = -1.0
    jac[1, 1] = -0.5 * gamma
    jac[1, 2] = -lam * n0
    jac[3, 0] = 2.0 * lam
    jac[4, 4] = -kappa
    if w > EPS_REG:
        jac[2, 2] = -2.0 * g * s * z / w - kappa
        jac[2, 3] = 2.0 * g * w * c
        jac[2, 4] = 2.0 * g * s * q / w
        w3 = w * w * w
        jac[3, 2] = -2.0 * g * c * q * q / w3
        jac[3, 3] = 2.0 * g * z * s / w
        jac[3, 4] = 2.0 * g * z * c * q / w3
    else:
        # regularized branch: sqrt(q^2 - z^2) clamped, so its derivatives vanish
        jac[2, 2] = -kappa
        jac[3, 2] = -2.0 * g * c / wr
        jac[3, 3] = 2.0 * g * z * s / wr


CS = 6
# enter the cap chart below W = CAP_ENTER q, leave it above CAP_LEAVE q
CAP_ENTER = 0.01
CAP_LEAVE = 0.02


@njit(cache=True)
def cap_field(x, p, u, v, q, sgn, par):
    g, lam, n0, kappa, gamma, n_th = par[0], par[1], par[2], par[3], par[4], par[5]
    pump = 2.0 * kappa * n_th / n0
    w2 = u * u + v * v
    z = sgn * math.sqrt(max(q * q - w2, 0.0))
    dx = p - 0.5 * gamma * x
    dp = -x - 0.5 * gamma * p - lam * n0 * z
    du = -2.0 * lam * x * v - kappa * u
    dv = 2.0 * lam * x * u - 2.0 * g * z - kappa * v
    if pump != 0.0:
        sc = pump * q / max(w2, EPS_REG * EPS_REG)
        du += sc * u
        dv += sc * v
    dq = -kappa * q + pump
    return dx, dp, du, dv, dq


@njit(cache=True)
def cap_jacobian_into(x, p, u, v, q, sgn, par, jac):
    g, lam, n0, kappa, gamma, n_th = par[0], par[1], par[2], par[3], par[4], par[5]
    pump = 2.0 * kappa * n_th / n0
    w2 = u * u + v * v
    z = sgn * math.sqrt(max(q * q - w2, 0.0))
    zr = z if abs(z) > EPS_REG else sgn * EPS_REG
    zu, zv, zq = -u / zr, -v / zr, q / zr
    for i in range(5):
        for j in range(5):
            jac[i, j] = 0.0
    jac[0, 0] = -0.5 * gamma
    jac[0, 1] = 1.0
    jac[1, 0] = -1.0
    jac[1, 1] = -0.5 * gamma
    jac[1, 2] = -lam * n0 * zu
    jac[1, 3] = -lam * n0 * zv
    jac[1, 4] = -lam * n0 * zq
    jac[2, 0] = -2.0 * lam * v
    jac[2, 2] = -kappa
    jac[2, 3] = -2.0 * lam * x
    jac[3, 0] = 2.0 * lam * u
    jac[3, 2] = 2.0 * lam * x - 2.0 * g * zu
    jac[3, 3] = -kappa - 2.0 * g * zv
    jac[3, 4] = -2.0 * g * zq
    jac[4, 4] = -kappa
    if pump != 0.0:
        wr = max(w2, EPS_REG * EPS_REG)
        sc = pump * q / wr
        if w2 > EPS_REG * EPS_REG:
            jac[2, 2] += sc * (1.0 - 2.0 * u * u / wr)
            jac[2, 3] += -2.0 * sc * u * v / wr
            jac[3, 2] += -2.0 * sc * u * v / wr
            jac[3, 3] += sc * (1.0 - 2.0 * v * v / wr)
        else:
            jac[2, 2] += sc
            jac[3, 3] += sc
        jac[2, 4] += pump * u / wr
        jac[3, 4] += pump * v / wr


@njit(cache=True)
def chart_jacobian_into(y, par, jac):
    if y[5] == 0.0:
        jacobian_into(y[0], y[1], y[2], y[3], y[4], par, jac)
    else:
        cap_jacobian_into(y[0], y[1], y[2], y[3], y[4], y[5], par, jac)


@njit(cache=True)
def polar_to_cap_jac(y, out):
    """d(x, p, u, v, q) / d(x, p, z, phi, q) at the polar-chart copy ``y``."""
    z, ph, q = y[2], y[3], y[4]
    w2 = max(q * q - z * z, EPS_REG * EPS_REG)
    w = math.sqrt(w2)
    u, v = w * math.cos(ph), w * math.sin(ph)
    for i in range(5):
        for j in range(5):
            out[i, j] = 0.0
    out[0, 0] = out[1, 1] = out[4, 4] = 1.0
    out[2, 2], out[3, 2] = -z * u / w2, -z * v / w2
    out[2, 3], out[3, 3] = -v, u
    out[2, 4], out[3, 4] = q * u / w2, q * v / w2


@njit(cache=True)
def cap_to_polar_jac(y, out):
    """d(x, p, z, phi, q) / d(x, p, u, v, q) at the cap-chart copy ``y``."""
    u, v, q, sgn = y[2], y[3], y[4], y[5]
    w2 = max(u * u + v * v, EPS_REG * EPS_REG)
    z = sgn * math.sqrt(max(q * q - u * u - v * v, 0.0))
    zr = z if abs(z) > EPS_REG else sgn * EPS_REG
    for i in range(5):
        for j in range(5):
            out[i, j] = 0.0
    out[0, 0] = out[1, 1] = out[4, 4] = 1.0
    out[2, 2], out[2, 3], out[2, 4] = -u / zr, -v / zr, q / zr
    out[3, 2], out[3, 3] = -v / w2, u / w2


@njit(cache=True)
def copy_to_public(y, off, out):
    """Public ``(x, p, z, phi, q)`` of the copy at ``off``; phi is not wrapped."""
    out[0] = y[off]
    out[1] = y[off + 1]
    out[4] = y[off + 4]
    sgn = y[off + 5]
    if sgn == 0.0:
        out[2] = y[off + 2]
        out[3] = y[off + 3]
    else:
        u, v, q = y[off + 2], y[off + 3], y[off + 4]
        out[2] = sgn * math.sqrt(max(q * q - u * u - v * v, 0.0))
        out[3] = math.atan2(v, u)


@njit(cache=True)
def public_to_copy(s, y, off):
    """Store public state ``s`` as a copy at ``off``, picking the chart by W / q."""
    z, ph, q = s[2], s[3], s[4]
    w = math.sqrt(max(q * q - z * z, 0.0))
    y[off] = s[0]
    y[off + 1] = s[1]
    y[off + 4] = q
    if w < CAP_ENTER * q:
        y[off + 2] = w * math.cos(ph)
        y[off + 3] = w * math.sin(ph)
        y[off + 5] = 1.0 if z >= 0.0 else -1.0
    else:
        y[off + 2] = z
        y[off + 3] = ph
        y[off + 5] = 0.0


@njit(cache=True)
def _switch_copy(y, off, k):
    """Change chart of one copy if W has crossed a threshold; tangents follow."""
    sgn = y[off + 5]
    q = y[off + 4]
    tmat = np.empty((5, 5))
    if sgn == 0.0:
        z, ph = y[off + 2], y[off + 3]
        w = math.sqrt(max(q * q - z * z, 0.0))
        if not w < CAP_ENTER * q:
            return False
        if k > 0:
            polar_to_cap_jac(y[off:off + CS], tmat)
        y[off + 2] = w * math.cos(ph)
        y[off + 3] = w * math.sin(ph)
        y[off + 5] = 1.0 if z >= 0.0 else -1.0
    else:
        u, v = y[off + 2], y[off + 3]
        w = math.sqrt(u * u + v * v)
        if not w > CAP_LEAVE * q:
            return False
        if k > 0:
            cap_to_polar_jac(y[off:off + CS], tmat)
        y[off + 2] = sgn * math.sqrt(max(q * q - u * u - v * v, 0.0))
        y[off + 3] = math.atan2(v, u)
        y[off + 5] = 0.0
    if k > 0:
        vec = np.empty((5, k))
        for i in range(5):
            for c in range(k):
                vec[i, c] = y[CS + i * k + c]
        for i in range(5):
            for c in range(k):
                acc = 0.0
                for j in range(5):
                    acc += tmat[i, j] * vec[j, c]
                y[CS + i * k + c] = acc
    return True


@njit(cache=True)
def switch_charts(y, mode):
    n = y.shape[0]
    if mode == MODE_PAIR:
        a = _switch_copy(y, 0, 0)
        b = _switch_copy(y, CS, 0)
        return a or b
    return _switch_copy(y, 0, (n - CS) // 5)


@njit(cache=True)
def _copy_field_into(y, off, par, out):
    if y[off + 5] == 0.0:
        d0, d1, d2, d3, d4 = base_field(y[off], y[off + 1], y[off + 2], y[off + 3],
                                        y[off + 4], par)
    else:
        d0, d1, d2, d3, d4 = cap_field(y[off], y[off + 1], y[off + 2], y[off + 3],
                                       y[off + 4], y[off + 5], par)
    out[off] = d0
    out[off + 1] = d1
    out[off + 2] = d2
    out[off + 3] = d3
    out[off + 4] = d4
    out[off + 5] = 0.0


@njit(cache=True)
def full_field(y, par, mode, out):
    _copy_field_into(y, 0, par, out)
    n = y.shape[0]
    if mode == MODE_PAIR:
        _copy_field_into(y, CS, par, out)
    elif n > CS:
        k = (n - CS) // 5
        jac = np.empty((5, 5))
        chart_jacobian_into(y, par, jac)
        for i in range(5):
            for c in range(k):
                acc = 0.0
                for j in range(5):
                    acc += jac[i, j] * y[CS + j * k + c]
                out[CS + i * k + c] = acc


@njit(cache=True)
def _dense_eval(y_old, h, kst, sigma, out):
    n = y_old.shape[0]
    s1 = sigma
    s2 = s1 * sigma
    s3 = s2 * sigma
    s4 = s3 * sigma
    for i in range(n):
        acc = 0.0
        for st in range(7):
            coef = (DENSE_P[st, 0] * s1 + DENSE_P[st, 1] * s2
                    + DENSE_P[st, 2] * s3 + DENSE_P[st, 3] * s4)
            acc += kst[st, i] * coef
        out[i] = y_old[i] + h * acc


@njit(cache=True)
def dopri5(y0, t0, t1, h, par, mode, rtol, atol, h_max, sample_t, keep_dense):
    """Integrate from t0 to t1, sampling the dense interpolant at ``sample_t``.

    Returns ``(y, t, h_next, n_acc, n_rej, status, samples, n_samples,
    dense_t, dense_h, dense_y, dense_k, n_dense)``.
    """
    n = y0.shape[0]
    y = y0.copy()
    t = t0
    ns = sample_t.shape[0]
    samples = np.empty((ns, n))
    i_s = 0
    while i_s < ns and sample_t[i_s] <= t0:
        samples[i_s, :] = y
        i_s += 1

    cap = 256 if keep_dense else 1
    dense_t = np.empty(cap)
    dense_h = np.empty(cap)
    dense_y = np.empty((cap, n))
    dense_k = np.empty((cap, 7, n))
    n_dense = 0

    kst = np.empty((7, n))
    ytmp = np.empty(n)
    ynew = np.empty(n)
    yint = np.empty(n)
    f1 = np.empty(n)
    full_field(y, par, mode, f1)
    n_acc = 0
    n_rej = 0
    status = STATUS_OK
    h = min(h, h_max)
    last_rejected = False
    direction_span = t1 - t0
    if direction_span <= 0.0:
        return (y, t, h, n_acc, n_rej, status, samples, i_s,
                dense_t, dense_h, dense_y, dense_k, n_dense)

    while t < t1:
        if h < H_MIN * max(1.0, abs(t)):
            status = STATUS_STEP_UNDERFLOW
            break
        # land exactly on the next sample time (or t1) so samples are step nodes
        t_stop = t1
        if i_s < ns and sample_t[i_s] < t1:
            t_stop = sample_t[i_s]
        final = False
        hs = h
        if t + h >= t_stop:
            hs = t_stop - t
            final = True
        for i in range(n):
            kst[0, i] = f1[i]
        for i in range(n):
            ytmp[i] = y[i] + hs * A21 * kst[0, i]
        full_field(ytmp, par, mode, kst[1])
        for i in range(n):
            ytmp[i] = y[i] + hs * (A31 * kst[0, i] + A32 * kst[1, i])
        full_field(ytmp, par, mode, kst[2])
        for i in range(n):
            ytmp[i] = y[i] + hs * (A41 * kst[0, i] + A42 * kst[1, i] + A43 * kst[2, i])
        full_field(ytmp, par, mode, kst[3])
        for i in range(n):
            ytmp[i] = y[i] + hs * (A51 * kst[0, i] + A52 * kst[1, i] + A53 * kst[2, i]
                                  + A54 * kst[3, i])
        full_field(ytmp, par, mode, kst[4])
        for i in range(n):
            ytmp[i] = y[i] + hs * (A61 * kst[0, i] + A62 * kst[1, i] + A63 * kst[2, i]
                                  + A64 * kst[3, i] + A65 * kst[4, i])
        full_field(ytmp, par, mode, kst[5])
        for i in range(n):
            ynew[i] = y[i] + hs * (B1 * kst[0, i] + B3 * kst[2, i] + B4 * kst[3, i]
                                  + B5 * kst[4, i] + B6 * kst[5, i])
        full_field(ynew, par, mode, kst[6])

        err = 0.0
        finite = True
        for i in range(n):
            e = hs * (E1 * kst[0, i] + E3 * kst[2, i] + E4 * kst[3, i]
                     + E5 * kst[4, i] + E6 * kst[5, i] + E7 * kst[6, i])
            sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
            r = e / sc
            err = max(err, abs(r))
            if not (math.isfinite(ynew[i]) and math.isfinite(kst[6, i])):
                finite = False
        if not finite or not math.isfinite(err):
            if hs > H_MIN * 16:
                h = hs * 0.2
                n_rej += 1
                last_rejected = True
                continue
            status = STATUS_NONFINITE
            break

        if err <= 1.0:
            t_new = t_stop if final else t + hs
            if keep_dense:
                if n_dense == dense_t.shape[0]:
                    cap2 = 2 * n_dense
                    dt2 = np.empty(cap2)
                    dh2 = np.empty(cap2)
                    dy2 = np.empty((cap2, n))
                    dk2 = np.empty((cap2, 7, n))
                    dt2[:n_dense] = dense_t
                    dh2[:n_dense] = dense_h
                    dy2[:n_dense] = dense_y
                    dk2[:n_dense] = dense_k
                    dense_t, dense_h, dense_y, dense_k = dt2, dh2, dy2, dk2
                dense_t[n_dense] = t
                dense_h[n_dense] = hs
                dense_y[n_dense, :] = y
                dense_k[n_dense, :, :] = kst
                n_dense += 1
            while i_s < ns and sample_t[i_s] <= t_new:
                if sample_t[i_s] == t_new:
                    samples[i_s, :] = ynew
                else:
                    _dense_eval(y, hs, kst, (sample_t[i_s] - t) / hs, yint)
                    samples[i_s, :] = yint
                i_s += 1
            for i in range(n):
                y[i] = ynew[i]
                f1[i] = kst[6, i]
            if switch_charts(y, mode):
                full_field(y, par, mode, f1)
            t = t_new
            n_acc += 1
            if err == 0.0:
                fac = 10.0
            else:
                fac = min(10.0, max(0.2, 0.9 * err ** -0.2))
            if last_rejected:
                fac = min(fac, 1.0)
            last_rejected = False
            if not final or hs >= h:
                h = min(hs * fac, h_max)
        else:
            n_rej += 1
            last_rejected = True
            h = hs * max(0.2, 0.9 * err ** -0.2)

    return (y, t, h, n_acc, n_rej, status, samples, i_s,
            dense_t, dense_h, dense_y, dense_k, n_dense)


@njit(cache=True)
def dense_eval_many(dense_t, dense_h, dense_y, dense_k, n_dense, times, out):
    """Evaluate a stored piecewise interpolant at sorted ``times``."""
    j = 0
    for m in range(times.shape[0]):
        tm = times[m]
        while j < n_dense - 1 and tm > dense_t[j] + dense_h[j]:
            j += 1
        _dense_eval(dense_y[j], dense_h[j], dense_k[j], (tm - dense_t[j]) / dense_h[j], out[m])
