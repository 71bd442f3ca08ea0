"""Compiled inner loops: power-sum updates, the direct ellipse solve and the
per-row segmentation pass.

Power sums are kept in a length-15 float64 vector, index order::

    0 x^4   1 x^3y  2 x^2y^2  3 xy^3  4 y^4
    5 x^3   6 x^2y  7 xy^2    8 y^3
    9 x^2  10 xy   11 y^2    12 x    13 y    14 n
"""
import math

import numpy as np
from numba import njit

NSUMS = 15
# conditioning floor for the linear-moment block, relative to its diagonal
S3_RCOND = 1e-13


@njit(cache=True, nogil=True)
def sums_update(s, x, y, sign):
    xx = x * x
    yy = y * y
    xy = x * y
    s[0] += sign * (xx * xx)
    s[1] += sign * (xx * xy)
    s[2] += sign * (xx * yy)
    s[3] += sign * (xy * yy)
    s[4] += sign * (yy * yy)
    s[5] += sign * (xx * x)
    s[6] += sign * (xx * y)
    s[7] += sign * (x * yy)
    s[8] += sign * (yy * y)
    s[9] += sign * xx
    s[10] += sign * xy
    s[11] += sign * yy
    s[12] += sign * x
    s[13] += sign * y
    s[14] += sign


@njit(cache=True, nogil=True)
def _largest_cubic_root(b, c, d):
    """Largest real root of ``l^3 + b l^2 + c l + d``."""
    p = c - b * b / 3.0
    q = 2.0 * b * b * b / 27.0 - b * c / 3.0 + d
    shift = -b / 3.0
    if p < 0.0:
        m = 2.0 * math.sqrt(-p / 3.0)
        arg = 3.0 * q / (p * m)
        if arg > 1.0:
            arg = 1.0
        elif arg < -1.0:
            arg = -1.0
        root = m * math.cos(math.acos(arg) / 3.0) + shift
    else:
        disc = q * q / 4.0 + p * p * p / 27.0
        sq = math.sqrt(max(disc, 0.0))
        u = -q / 2.0 + sq
        v = -q / 2.0 - sq
        root = math.copysign(abs(u) ** (1.0 / 3.0), u) + math.copysign(abs(v) ** (1.0 / 3.0), v) + shift
    for _ in range(3):
        f = ((root + b) * root + c) * root + d
        df = (3.0 * root + 2.0 * b) * root + c
        if df == 0.0:
            break
        step = f / df
        root -= step
        if abs(step) <= 1e-16 * (abs(root) + 1e-300):
            break
    return root


@njit(cache=True, nogil=True)
def _largest_cubic_root_near(b, c, d, guess):
    """Largest real root by Newton from ``guess``; NaN when that is not certain.

    A converged root with positive slope right of the inflection point is
    the largest of three real roots; with a single real root any root is.
    """
    infl = -b / 3.0
    x = guess
    if not x > infl:
        return math.nan
    for _ in range(8):
        f = ((x + b) * x + c) * x + d
        df = (3.0 * x + 2.0 * b) * x + c
        if not df > 0.0:
            return math.nan
        step = f / df
        x -= step
        if abs(step) <= 1e-15 * abs(x):
            if x > infl:
                return x
            return math.nan
    return math.nan


@njit(cache=True, nogil=True)
def _null_vector(n11, n12, n13, n22, n23, n33, lam):
    """Largest pairwise row cross product of ``M - lam C`` (unnormalized)."""
    r11 = n11
    r12 = n12
    r13 = n13 - 2.0 * lam
    r21 = n12
    r22 = n22 + lam
    r23 = n23
    r31 = n13 - 2.0 * lam
    r32 = n23
    r33 = n33
    vx = r12 * r23 - r13 * r22
    vy = r13 * r21 - r11 * r23
    vz = r11 * r22 - r12 * r21
    best = vx * vx + vy * vy + vz * vz
    wx = r12 * r33 - r13 * r32
    wy = r13 * r31 - r11 * r33
    wz = r11 * r32 - r12 * r31
    nw = wx * wx + wy * wy + wz * wz
    if nw > best:
        vx, vy, vz, best = wx, wy, wz, nw
    wx = r22 * r33 - r23 * r32
    wy = r23 * r31 - r21 * r33
    wz = r21 * r32 - r22 * r31
    nw = wx * wx + wy * wy + wz * wz
    if nw > best:
        vx, vy, vz, best = wx, wy, wz, nw
    return vx, vy, vz, best


@njit(cache=True, nogil=True)
def solve_conic(s, coef):
    """Ellipse-specific direct least-squares fit from power sums.

    Writes ``(a, b, c, d, e, f)`` into ``coef`` (frame of the sums) and
    returns the RMS Sampson residual, or -1.0 when no ellipse fit exists.
    """
    state = np.full(1, np.nan)
    return solve_conic_warm(s, coef, state)


@njit(cache=True, nogil=True)
def solve_conic_warm(s, coef, state):
    """:func:`solve_conic` that starts the root search from ``state[0]``.

    ``state[0]`` holds the previous fit's generalized eigenvalue (NaN for
    none) and is overwritten with the new one.
    """
    if s[14] < 5.0:
        return -1.0
    # linear block S3 = [[x2, xy, x], [xy, y2, y], [x, y, n]]
    a11 = s[9]
    a12 = s[10]
    a13 = s[12]
    a22 = s[11]
    a23 = s[13]
    a33 = s[14]
    c11 = a22 * a33 - a23 * a23
    c12 = a13 * a23 - a12 * a33
    c13 = a12 * a23 - a13 * a22
    c22 = a11 * a33 - a13 * a13
    c23 = a12 * a13 - a11 * a23
    c33 = a11 * a22 - a12 * a12
    det3 = a11 * c11 + a12 * c12 + a13 * c13
    if not det3 > S3_RCOND * a11 * a22 * a33:
        return -1.0
    inv = 1.0 / det3
    i11 = c11 * inv
    i12 = c12 * inv
    i13 = c13 * inv
    i22 = c22 * inv
    i23 = c23 * inv
    i33 = c33 * inv
    # S2 rows (x^2, xy, y^2) against columns (x, y, 1)
    b11 = s[5]
    b12 = s[6]
    b13 = s[9]
    b21 = s[6]
    b22 = s[7]
    b23 = s[10]
    b31 = s[7]
    b32 = s[8]
    b33 = s[11]
    # T = -S3^-1 S2^T ; column j of T solves for row j of S2
    t11 = -(i11 * b11 + i12 * b12 + i13 * b13)
    t21 = -(i12 * b11 + i22 * b12 + i23 * b13)
    t31 = -(i13 * b11 + i23 * b12 + i33 * b13)
    t12 = -(i11 * b21 + i12 * b22 + i13 * b23)
    t22 = -(i12 * b21 + i22 * b22 + i23 * b23)
    t32 = -(i13 * b21 + i23 * b22 + i33 * b23)
    t13 = -(i11 * b31 + i12 * b32 + i13 * b33)
    t23 = -(i12 * b31 + i22 * b32 + i23 * b33)
    t33 = -(i13 * b31 + i23 * b32 + i33 * b33)
    # reduced scatter M = S1 + S2 T (symmetric)
    m11 = s[0] + b11 * t11 + b12 * t21 + b13 * t31
    m12 = s[1] + b11 * t12 + b12 * t22 + b13 * t32
    m13 = s[2] + b11 * t13 + b12 * t23 + b13 * t33
    m22 = s[2] + b21 * t12 + b22 * t22 + b23 * t32
    m23 = s[3] + b21 * t13 + b22 * t23 + b23 * t33
    m33 = s[4] + b31 * t13 + b32 * t23 + b33 * t33
    m21 = s[1] + b21 * t11 + b22 * t21 + b23 * t31
    m31 = s[2] + b31 * t11 + b32 * t21 + b33 * t31
    m32 = s[3] + b31 * t12 + b32 * t22 + b33 * t32
    m12 = 0.5 * (m12 + m21)
    m13 = 0.5 * (m13 + m31)
    m23 = 0.5 * (m23 + m32)
    scale = abs(m11) + abs(m22) + abs(m33)
    if not scale > 0.0:
        return -1.0
    inv = 1.0 / scale
    n11 = m11 * inv
    n12 = m12 * inv
    n13 = m13 * inv
    n22 = m22 * inv
    n23 = m23 * inv
    n33 = m33 * inv
    # det(M - l C) with C = [[0,0,2],[0,-1,0],[2,0,0]], divided by -4
    detm = (
        n11 * (n22 * n33 - n23 * n23)
        - n12 * (n12 * n33 - n23 * n13)
        + n13 * (n12 * n23 - n22 * n13)
    )
    cb = -(n13 - n22)
    cc = (n12 * n23 - n13 * n22) - 0.25 * (n11 * n33 - n13 * n13)
    cd = -0.25 * detm
    lam = math.nan
    if state[0] == state[0]:
        lam = _largest_cubic_root_near(cb, cc, cd, state[0])
    if lam != lam:
        lam = _largest_cubic_root(cb, cc, cd)
    state[0] = lam
    # null vector of M - lam C, then one Rayleigh-quotient refinement of lam
    vx = 0.0
    vy = 0.0
    vz = 0.0
    best = 0.0
    for sweep in range(2):
        vx, vy, vz, best = _null_vector(n11, n12, n13, n22, n23, n33, lam)
        if not best > 0.0:
            return -1.0
        quad = (
            n11 * vx * vx + n22 * vy * vy + n33 * vz * vz
            + 2.0 * (n12 * vx * vy + n13 * vx * vz + n23 * vy * vz)
        )
        cq = 4.0 * vx * vz - vy * vy
        if sweep == 0 and cq > 0.0:
            lam = quad / cq
    inv = 1.0 / math.sqrt(best)
    a = vx * inv
    b = vy * inv
    c = vz * inv
    if not 4.0 * a * c - b * b > 0.0:
        return -1.0
    if a + c < 0.0:
        a = -a
        b = -b
        c = -c
    d = t11 * a + t12 * b + t13 * c
    e = t21 * a + t22 * b + t23 * c
    f = t31 * a + t32 * b + t33 * c
    coef[0] = a
    coef[1] = b
    coef[2] = c
    coef[3] = d
    coef[4] = e
    coef[5] = f
    # summed squared algebraic residual and summed squared gradient norm
    sse = (
        m11 * a * a + m22 * b * b + m33 * c * c
        + 2.0 * (m12 * a * b + m13 * a * c + m23 * b * c)
    )
    g1x = 2.0 * a
    g1y = b
    g1z = d
    g2x = b
    g2y = 2.0 * c
    g2z = e
    grad = (
        a11 * (g1x * g1x + g2x * g2x)
        + a22 * (g1y * g1y + g2y * g2y)
        + a33 * (g1z * g1z + g2z * g2z)
        + 2.0 * a12 * (g1x * g1y + g2x * g2y)
        + 2.0 * a13 * (g1x * g1z + g2x * g2z)
        + 2.0 * a23 * (g1y * g1z + g2y * g2z)
    )
    if not grad > 0.0:
        return -1.0
    return math.sqrt(max(sse, 0.0) / grad)


@njit(cache=True, nogil=True)
def conic_to_geometric(coef, out):
    """Center, principal semi-axes, orientation and axis-aligned half-extents.

    ``out`` receives ``(cx, cy, r_major, r_minor, theta, half_x, half_y)``.
    Returns False when the conic is not a real ellipse.
    """
    a = coef[0]
    b = coef[1]
    c = coef[2]
    d = coef[3]
    e = coef[4]
    f = coef[5]
    den = 4.0 * a * c - b * b
    if not den > 0.0:
        return False
    x0 = (b * e - 2.0 * c * d) / den
    y0 = (b * d - 2.0 * a * e) / den
    f0 = f + 0.5 * (d * x0 + e * y0)
    if a < 0.0:
        a = -a
        b = -b
        c = -c
        f0 = -f0
    k = -f0
    if not k > 0.0:
        return False
    mean = 0.5 * (a + c)
    rad = math.sqrt(0.25 * (a - c) * (a - c) + 0.25 * b * b)
    mu_small = mean - rad
    mu_big = mean + rad
    if not mu_small > 0.0:
        return False
    r_major = math.sqrt(k / mu_small)
    r_minor = math.sqrt(k / mu_big)
    if rad <= 1e-12 * mean:
        theta = 0.0
    else:
        theta = 0.5 * math.atan2(b, a - c) + 0.5 * math.pi
        if theta >= math.pi:
            theta -= math.pi
        elif theta < 0.0:
            theta += math.pi
    out[0] = x0
    out[1] = y0
    out[2] = r_major
    out[3] = r_minor
    out[4] = theta
    out[5] = math.sqrt(k * 4.0 * c / den)
    out[6] = math.sqrt(k * 4.0 * a / den)
    return True


@njit(cache=True, nogil=True)
def circle_from_sums(s, out):
    """Algebraic circle fit ``x^2 + y^2 + D x + E y + F = 0`` from power sums.

    ``out`` receives ``(cx, cy, radius, rms_residual)``; returns False when
    the points are collinear or coincident.
    """
    a11 = s[9]
    a12 = s[10]
    a13 = s[12]
    a22 = s[11]
    a23 = s[13]
    a33 = s[14]
    c11 = a22 * a33 - a23 * a23
    c12 = a13 * a23 - a12 * a33
    c13 = a12 * a23 - a13 * a22
    c22 = a11 * a33 - a13 * a13
    c23 = a12 * a13 - a11 * a23
    c33 = a11 * a22 - a12 * a12
    det3 = a11 * c11 + a12 * c12 + a13 * c13
    if not det3 > S3_RCOND * a11 * a22 * a33:
        return False
    r1 = -(s[5] + s[7])
    r2 = -(s[6] + s[8])
    r3 = -(s[9] + s[11])
    dd = (c11 * r1 + c12 * r2 + c13 * r3) / det3
    ee = (c12 * r1 + c22 * r2 + c23 * r3) / det3
    ff = (c13 * r1 + c23 * r2 + c33 * r3) / det3
    cx = -0.5 * dd
    cy = -0.5 * ee
    rr = cx * cx + cy * cy - ff
    if not rr > 0.0:
        return False
    radius = math.sqrt(rr)
    # sum (x^2+y^2 + D x + E y + F)^2 expanded over the power sums
    w2 = s[0] + 2.0 * s[2] + s[4]
    sse = (
        w2
        + dd * dd * s[9] + ee * ee * s[11] + ff * ff * s[14]
        + 2.0 * dd * (s[5] + s[7]) + 2.0 * ee * (s[6] + s[8]) + 2.0 * ff * (s[9] + s[11])
        + 2.0 * dd * ee * s[10] + 2.0 * dd * ff * s[12] + 2.0 * ee * ff * s[13]
    )
    out[0] = cx
    out[1] = cy
    out[2] = radius
    out[3] = math.sqrt(max(sse, 0.0) / s[14]) / (2.0 * radius)
    return True


# fields of one emitted row ellipse
E_CX, E_CY, E_RMAJ, E_RMIN, E_THETA, E_R1, E_R2, E_RES, E_SUP, E_U0, E_U1, E_FRONT = range(12)
NFIELDS = 12


@njit(cache=True, nogil=True)
def _emit(xs, ys, us, start, stop, ox, oy, coef, err, min_support, out, count, geo):
    n = stop - start
    if n < min_support or count >= out.shape[0]:
        return count
    if not conic_to_geometric(coef, geo):
        return count
    cx = geo[0] + ox
    cy = geo[1] + oy
    # points on either side of the center bearing as seen from the sensor
    left = 0
    right = 0
    for j in range(start, stop):
        side = xs[j] * cy - ys[j] * cx
        if side < 0.0:
            left += 1
        elif side > 0.0:
            right += 1
    out[count, E_CX] = cx
    out[count, E_CY] = cy
    out[count, E_RMAJ] = geo[2]
    out[count, E_RMIN] = geo[3]
    out[count, E_THETA] = geo[4]
    out[count, E_R1] = geo[5]
    out[count, E_R2] = geo[6]
    out[count, E_RES] = err
    out[count, E_SUP] = n
    out[count, E_U0] = us[start]
    out[count, E_U1] = us[stop - 1]
    out[count, E_FRONT] = min(left, right)
    return count + 1


@njit(cache=True, nogil=True)
def segment_points(xs, ys, us, threshold, min_support, max_gap, max_jump, out, ops):
    """One left-to-right pass growing, testing and splitting ellipse models.

    ``xs, ys`` are row coordinates of valid points in column order and
    ``us`` their column indices. Consecutive points are disconnected when
    more than ``max_gap`` columns are missing between them or when their
    distance exceeds ``max_jump`` times their depth (``max_jump <= 0``
    disables the latter). Emitted models go to ``out`` (one row per
    model, fields ``E_*``); ``ops`` accumulates ``(adds, removes, fits)``.
    Returns the number of emitted models.
    """
    m = xs.shape[0]
    s = np.zeros(NSUMS)
    coef = np.zeros(6)
    good = np.zeros(6)
    geo = np.zeros(7)
    warm = np.full(1, np.nan)
    count = 0
    n = 0
    start = 0
    ox = 0.0
    oy = 0.0
    good_err = -1.0
    for i in range(m):
        broken = False
        if n > 0:
            if us[i] - us[i - 1] - 1 > max_gap:
                broken = True
            elif max_jump > 0.0:
                dx = xs[i] - xs[i - 1]
                dy = ys[i] - ys[i - 1]
                lim = max_jump * max(abs(ys[i]), abs(ys[i - 1]))
                broken = dx * dx + dy * dy > lim * lim
        if broken:
            if good_err >= 0.0:
                count = _emit(xs, ys, us, start, i, ox, oy, good, good_err, min_support, out, count, geo)
            n = 0
        if n == 0:
            s[:] = 0.0
            warm[0] = np.nan
            ox = xs[i]
            oy = ys[i]
            start = i
            good_err = -1.0
        sums_update(s, xs[i] - ox, ys[i] - oy, 1.0)
        n += 1
        ops[0] += 1
        if n < 6:
            continue
        err = solve_conic_warm(s, coef, warm)
        ops[2] += 1
        if err >= 0.0 and err <= threshold:
            good[:] = coef
            good_err = err
            continue
        # split: drop the offending point, keep the last good model, restart at it
        sums_update(s, xs[i] - ox, ys[i] - oy, -1.0)
        ops[1] += 1
        if good_err >= 0.0:
            count = _emit(xs, ys, us, start, i, ox, oy, good, good_err, min_support, out, count, geo)
        s[:] = 0.0
        warm[0] = np.nan
        ox = xs[i]
        oy = ys[i]
        start = i
        good_err = -1.0
        sums_update(s, 0.0, 0.0, 1.0)
        ops[0] += 1
        n = 1
    if n > 0 and good_err >= 0.0:
        count = _emit(xs, ys, us, start, m, ox, oy, good, good_err, min_support, out, count, geo)
    return count


@njit(cache=True, nogil=True)
def segment_frame(x, d, threshold, min_support, max_gap, max_jump, max_per_row, out, counts, ops):
    """Run :func:`segment_points` on every row of a projected frame.

    ``x, d`` are ``(H, W)`` row coordinates with NaN for invalid pixels.
    ``out`` has shape ``(H, max_per_row, NFIELDS)``; ``counts[v]`` receives
    the number of models of row ``v``.
    """
    h, w = x.shape
    xs = np.empty(w)
    ys = np.empty(w)
    us = np.empty(w, dtype=np.int64)
    for v in range(h):
        m = 0
        for u in range(w):
            dv = d[v, u]
            if dv == dv:
                xs[m] = x[v, u]
                ys[m] = dv
                us[m] = u
                m += 1
        counts[v] = segment_points(
            xs[:m], ys[:m], us[:m], threshold, min_support, max_gap, max_jump, out[v], ops
        )
