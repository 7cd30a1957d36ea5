"""Compiled numerical kernels shared by the public modules.

Earth parameters travel as one array ``ep = [a, e2, omega, g_e, g_p, free_air]``
so that the kernels stay free of Python objects.
"""

import math

import numpy as np
from numba import njit

A, E2, OMEGA, GE, GP, FREE_AIR = range(6)


@njit(cache=True)
def radii(lat, ep):
    s = math.sin(lat)
    den = 1.0 - ep[E2] * s * s
    return ep[A] / math.sqrt(den), ep[A] * (1.0 - ep[E2]) / den**1.5


@njit(cache=True)
def earth_rate(lat, ep):
    out = np.empty(3)
    out[0] = ep[OMEGA] * math.cos(lat)
    out[1] = 0.0
    out[2] = -ep[OMEGA] * math.sin(lat)
    return out


@njit(cache=True)
def transport(v, lat, h, ep):
    r_n, r_m = radii(lat, ep)
    out = np.empty(3)
    out[0] = v[1] / (r_n + h)
    out[1] = -v[0] / (r_m + h)
    out[2] = -v[1] * math.tan(lat) / (r_n + h)
    return out


@njit(cache=True)
def transport_jacobian(lat, h, ep):
    r_n, r_m = radii(lat, ep)
    out = np.zeros((3, 3))
    out[0, 1] = 1.0 / (r_n + h)
    out[1, 0] = -1.0 / (r_m + h)
    out[2, 1] = -math.tan(lat) / (r_n + h)
    return out


@njit(cache=True)
def gravity_down(lat, h, ep):
    e2 = ep[E2]
    k = math.sqrt(1.0 - e2) * ep[GP] / ep[GE] - 1.0
    s2 = math.sin(lat) ** 2
    return ep[GE] * (1.0 + k * s2) / math.sqrt(1.0 - e2 * s2) - ep[FREE_AIR] * h


@njit(cache=True)
def skew(v):
    out = np.zeros((3, 3))
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]
    return out


@njit(cache=True)
def cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@njit(cache=True)
def rotation_from_vector(phi):
    theta2 = phi[0] * phi[0] + phi[1] * phi[1] + phi[2] * phi[2]
    if theta2 < 1e-16:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        theta = math.sqrt(theta2)
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    k = skew(phi)
    return np.eye(3) + a * k + b * (k @ k)


@njit(cache=True)
def orthonormalize(t):
    return t @ (1.5 * np.eye(3) - 0.5 * (t.T @ t))


@njit(cache=True)
def propagate(lat, lon, h, v, t_old, f, w, dt, ep):
    """One strapdown step; returns ``(lat, lon, h, v, T)``."""
    w_ie = earth_rate(lat, ep)
    w_en = transport(v, lat, h, ep)
    t_new = rotation_from_vector(-(w_ie + w_en) * dt) @ t_old @ rotation_from_vector(w * dt)
    t_new = orthonormalize(t_new)

    acc = 0.5 * (t_old + t_new) @ f
    acc[2] += gravity_down(lat, h, ep)
    cor_old = cross(2.0 * w_ie + w_en, v)
    v_pred = v + dt * (acc - cor_old)
    cor_new = cross(2.0 * w_ie + transport(v_pred, lat, h, ep), v_pred)
    v_new = v + dt * (acc - 0.5 * (cor_old + cor_new))

    r_n, r_m = radii(lat, ep)
    lat_new = lat + dt * 0.5 * (v[0] + v_new[0]) / (r_m + h)
    lon_new = lon + dt * 0.5 * (v[1] + v_new[1]) / ((r_n + h) * math.cos(lat))
    h_new = h - dt * 0.5 * (v[2] + v_new[2])
    return lat_new, lon_new, h_new, v_new, t_new


@njit(cache=True)
def nav_error_jacobian(lat, h, v, t, f, ep):
    """6x6 attitude/velocity block of the error-state system matrix."""
    w_ie = earth_rate(lat, ep)
    w_en = transport(v, lat, h, ep)
    d_wen = transport_jacobian(lat, h, ep)
    out = np.zeros((6, 6))
    out[0:3, 0:3] = -skew(w_ie + w_en)
    out[0:3, 3:6] = -d_wen
    out[3:6, 0:3] = -skew(t @ f)
    out[3:6, 3:6] = skew(v) @ d_wen - skew(2.0 * w_ie + w_en)
    return out


@njit(cache=True)
def system_matrix(lat, h, v, t, f_mean, n_imu, ep):
    """Error-state system matrix for ``n_imu`` bias pairs (12 states for one IMU)."""
    n = 6 + 6 * n_imu
    out = np.zeros((n, n))
    out[0:6, 0:6] = nav_error_jacobian(lat, h, v, t, f_mean, ep)
    tj = t / n_imu
    for j in range(n_imu):
        c = 6 + 6 * j
        out[3:6, c : c + 3] = tj
        out[0:3, c + 3 : c + 6] = tj
    return out


@njit(cache=True)
def shaping_matrix(t, n_imu):
    """Noise shaping matrix; noise order is ``[w_a.., w_g.., w_ba.., w_bg..]``."""
    n = 6 + 6 * n_imu
    m = 3 * n_imu
    out = np.zeros((n, 4 * m))
    tj = t / n_imu
    for j in range(n_imu):
        c = 6 + 6 * j
        out[3:6, 3 * j : 3 * j + 3] = tj
        out[0:3, m + 3 * j : m + 3 * j + 3] = tj
        for i in range(3):
            out[c + i, 2 * m + 3 * j + i] = 1.0
            out[c + 3 + i, 3 * m + 3 * j + i] = 1.0
    return out


@njit(cache=True)
def covariance_predict(p, f_mat, g_mat, q_diag, dt):
    n = p.shape[0]
    phi = np.eye(n) + f_mat * dt
    gq = g_mat * q_diag
    p_new = phi @ p @ phi.T + (gq @ g_mat.T) * dt
    return 0.5 * (p_new + p_new.T)


@njit(cache=True)
def psd_ok(p, rel_tol):
    """True when the smallest eigenvalue of ``p`` is at least ``-rel_tol * trace(p)``."""
    n = p.shape[0]
    tr = 0.0
    for i in range(n):
        tr += p[i, i]
    if tr <= 0.0:
        for i in range(n):
            for k in range(n):
                if p[i, k] != 0.0:
                    return False
        return True
    try:
        np.linalg.cholesky(p + rel_tol * tr * np.eye(n))
    except Exception:  # noqa: BLE001
        return False
    return True


@njit(cache=True)
def velocity_update(p, dz, r, joseph, max_cond):
    """Kalman update for a direct velocity observation (states 3:6).

    Returns ``(dx, p_new, ok)``; ``ok`` is False when the innovation
    covariance condition number exceeds ``max_cond``.
    """
    n = p.shape[0]
    s = p[3:6, 3:6] + r
    s = 0.5 * (s + s.T)
    if not np.linalg.cond(s) <= max_cond:
        return np.zeros(n), p, False
    ph = np.ascontiguousarray(p[:, 3:6])
    k = np.linalg.solve(s, ph.T).T
    dx = k @ dz
    if joseph:
        ikh = np.eye(n)
        ikh[:, 3:6] -= k
        p_new = ikh @ p @ ikh.T + k @ r @ k.T
    else:
        p_new = p - k @ np.ascontiguousarray(p[3:6, :])
    return dx, 0.5 * (p_new + p_new.T), True


# status codes returned by the run loops
OK, POLE, NONFINITE, NOT_PSD, INNOVATION = range(5)
POLE_TOL = 1e-6


@njit(cache=True)
def corrected_means(f, w, biases):
    """Bias-corrected array means; ``f, w`` are ``(J, 3)`` and ``biases`` is ``(J, 6)``."""
    n_imu = f.shape[0]
    fs = f[0].copy()
    ws = w[0].copy()
    bas = biases[0, 0:3].copy()
    bgs = biases[0, 3:6].copy()
    for j in range(1, n_imu):
        fs += f[j]
        ws += w[j]
        bas += biases[j, 0:3]
        bgs += biases[j, 3:6]
    return fs / n_imu - bas / n_imu, ws / n_imu - bgs / n_imu


@njit(cache=True)
def predict_step(lat, lon, h, v, t, p, f, w, biases, dt, q_diag, ep):
    """Navigation and covariance prediction over one frame."""
    n_imu = f.shape[0]
    fm, wm = corrected_means(f, w, biases)
    lat2, lon2, h2, v2, t2 = propagate(lat, lon, h, v, t, fm, wm, dt, ep)
    f_mat = system_matrix(lat2, h2, v2, t2, fm, n_imu, ep)
    g_mat = shaping_matrix(t2, n_imu)
    p2 = covariance_predict(p, f_mat, g_mat, q_diag, dt)
    return lat2, lon2, h2, v2, t2, p2


@njit(cache=True)
def correct_nav(v, t, dx):
    return v - dx[3:6], rotation_from_vector(-dx[0:3]) @ t


@njit(cache=True)
def update_step(v, t, p, biases, z, r, joseph, max_cond):
    """Velocity update and closed-loop reset; returns ``(v, T, P, biases, dx, ok)``."""
    dx, p2, ok = velocity_update(p, v - z, r, joseph, max_cond)
    if not ok:
        return v, t, p, biases, dx, False
    v2, t2 = correct_nav(v, t, dx)
    n_imu = biases.shape[0]
    b2 = biases.copy()
    for j in range(n_imu):
        for i in range(6):
            b2[j, i] += dx[6 + 6 * j + i]
    return v2, t2, p2, b2, dx, True


@njit(cache=True)
def bvr_redistribute(p, sums, count, n_channels, squared, tol):
    """Rescale the bias variances of the first ``n_channels`` channels.

    Returns the new covariance and a boolean mask of skipped channels.
    """
    n_imu = sums.shape[0]
    out = p.copy()
    skipped = np.zeros(6, dtype=np.bool_)
    n = p.shape[0]
    for i in range(n_channels):
        e = np.empty(n_imu)
        total = 0.0
        var_total = 0.0
        for j in range(n_imu):
            e[j] = abs(sums[j, i] / count)
            if squared:
                e[j] = e[j] * e[j]
            total += e[j]
            var_total += out[6 + 6 * j + i, 6 + 6 * j + i]
        if not total >= tol:
            skipped[i] = True
            continue
        kappa = var_total / total
        scale = np.ones(n)
        for j in range(n_imu):
            idx = 6 + 6 * j + i
            old = out[idx, idx]
            # a zero variance has a zero row; only its diagonal is set below
            if old > 0.0:
                scale[idx] = math.sqrt(kappa * e[j] / old)
        for a in range(n):
            for b in range(n):
                out[a, b] *= scale[a] * scale[b]
        for j in range(n_imu):
            idx = 6 + 6 * j + i
            out[idx, idx] = kappa * e[j]
    return 0.5 * (out + out.T), skipped


@njit(cache=True)
def bvr_accumulate(acc, f, w, biases):
    """Add one frame's per-sensor error estimates to ``acc`` (shape ``(J, 6)``)."""
    n_imu = f.shape[0]
    corr = np.empty((n_imu, 6))
    for j in range(n_imu):
        for i in range(3):
            corr[j, i] = f[j, i] - biases[j, i]
            corr[j, 3 + i] = w[j, i] - biases[j, 3 + i]
    for i in range(6):
        m = corr[0, i]
        for j in range(1, n_imu):
            m += corr[j, i]
        m /= n_imu
        for j in range(n_imu):
            acc[j, i] += corr[j, i] - m


@njit(cache=True)
def _finite_nav(lat, lon, h, v, t):
    if not (math.isfinite(lat) and math.isfinite(lon) and math.isfinite(h)):
        return False
    for i in range(3):
        if not math.isfinite(v[i]):
            return False
        for k in range(3):
            if not math.isfinite(t[i, k]):
                return False
    return True


@njit(cache=True)
def _record(k, lat, lon, h, v, t, biases, p, pos, vel, att, bias, sig):
    pos[k, 0] = lat
    pos[k, 1] = lon
    pos[k, 2] = h
    vel[k] = v
    att[k] = t
    bias[k] = biases
    for i in range(p.shape[0]):
        sig[k, i] = math.sqrt(max(p[i, i], 0.0))


@njit(cache=True)
def run_filter(
    f, w, times, t0, aid_index, aid_v, aid_r, lat, lon, h, v, t, p, q_diag,
    bvr, n_bvr_channels, squared, joseph, ep, psd_tol, monitor_tol, max_cond, degenerate_tol,
):
    """Whole-log driver shared by the single, virtual and unified filters.

    ``f, w`` are ``(N, J, 3)``; ``aid_index[k]`` is the aiding row applied
    after frame ``k`` or -1. Returns the recorded histories, counters
    ``[psd_violations, trace_increases, bvr_skipped]``, a status code and the
    frame index at which a failure occurred (-1 when none).
    """
    n = times.shape[0]
    n_imu = f.shape[1]
    n_states = p.shape[0]
    pos = np.full((n + 1, 3), np.nan)
    vel = np.full((n + 1, 3), np.nan)
    att = np.full((n + 1, 3, 3), np.nan)
    bias = np.full((n + 1, n_imu, 6), np.nan)
    sig = np.full((n + 1, n_states), np.nan)
    counters = np.zeros(3, dtype=np.int64)
    biases = np.zeros((n_imu, 6))
    acc = np.zeros((n_imu, 6))
    count = 0
    _record(0, lat, lon, h, v, t, biases, p, pos, vel, att, bias, sig)
    t_prev = t0
    for k in range(n):
        if abs(lat) > math.pi / 2 - POLE_TOL:
            return pos, vel, att, bias, sig, counters, POLE, k
        if bvr:
            bvr_accumulate(acc, f[k], w[k], biases)
            count += 1
        dt = times[k] - t_prev
        t_prev = times[k]
        lat, lon, h, v, t, p = predict_step(lat, lon, h, v, t, p, f[k], w[k], biases, dt, q_diag, ep)
        if not _finite_nav(lat, lon, h, v, t):
            return pos, vel, att, bias, sig, counters, NONFINITE, k
        if not psd_ok(p, psd_tol):
            return pos, vel, att, bias, sig, counters, NOT_PSD, k
        if monitor_tol > 0 and not psd_ok(p, monitor_tol):
            counters[0] += 1
        i = aid_index[k]
        if i >= 0:
            if bvr and count > 0:
                p, skipped = bvr_redistribute(p, acc, count, n_bvr_channels, squared, degenerate_tol)
                for c in range(6):
                    if skipped[c]:
                        counters[2] += 1
                if not psd_ok(p, psd_tol):
                    return pos, vel, att, bias, sig, counters, NOT_PSD, k
            acc[:] = 0.0
            count = 0
            trace_before = p[3, 3] + p[4, 4] + p[5, 5]
            v, t, p, biases, dx, ok = update_step(v, t, p, biases, aid_v[i], aid_r[i], joseph, max_cond)
            if not ok:
                return pos, vel, att, bias, sig, counters, INNOVATION, k
            for c in range(dx.shape[0]):
                if not math.isfinite(dx[c]):
                    return pos, vel, att, bias, sig, counters, NONFINITE, k
            if not psd_ok(p, psd_tol):
                return pos, vel, att, bias, sig, counters, NOT_PSD, k
            if monitor_tol > 0 and not psd_ok(p, monitor_tol):
                counters[0] += 1
            if p[3, 3] + p[4, 4] + p[5, 5] > trace_before * (1.0 + 1e-12):
                counters[1] += 1
        _record(k + 1, lat, lon, h, v, t, biases, p, pos, vel, att, bias, sig)
    return pos, vel, att, bias, sig, counters, OK, -1


@njit(cache=True)
def wrap(a):
    if -math.pi < a <= math.pi:
        return a
    out = (a + math.pi) % (2.0 * math.pi) - math.pi
    if out == -math.pi:
        return math.pi
    return out


@njit(cache=True)
def dcm_to_euler(t):
    out = np.empty(3)
    out[0] = math.atan2(t[2, 1], t[2, 2])
    out[1] = -math.asin(min(1.0, max(-1.0, t[2, 0])))
    out[2] = math.atan2(t[1, 0], t[0, 0])
    return out


@njit(cache=True)
def euler_to_dcm(e):
    cr, sr = math.cos(e[0]), math.sin(e[0])
    cp, sp = math.cos(e[1]), math.sin(e[1])
    cy, sy = math.cos(e[2]), math.sin(e[2])
    out = np.empty((3, 3))
    out[0, 0] = cy * cp
    out[0, 1] = cy * sp * sr - sy * cr
    out[0, 2] = cy * sp * cr + sy * sr
    out[1, 0] = sy * cp
    out[1, 1] = sy * sp * sr + cy * cr
    out[1, 2] = sy * sp * cr - cy * sr
    out[2, 0] = -sp
    out[2, 1] = cp * sr
    out[2, 2] = cp * cr
    return out


@njit(cache=True)
def wls_fuse(ys, blocks, max_cond):
    """Weighted least-squares fusion of ``J`` local ``[euler, v]`` solutions.

    ``blocks`` are the local 6x6 attitude/velocity covariances. With the
    block-diagonal weight matrix the normal equations reduce to an
    information-weighted mean, solved here as a correction to the first local
    so that agreeing locals are returned exactly. Yaw is unwrapped to the
    branch of the first local. Returns ``(beta, covariance, ok)``.
    """
    n_loc = ys.shape[0]
    lo = np.inf
    hi = 0.0
    for j in range(n_loc):
        ev = np.linalg.eigvalsh(blocks[j])
        lo = min(lo, ev[0])
        hi = max(hi, ev[-1])
    if not (lo > 0.0 and hi / lo <= max_cond):
        return ys[0].copy(), blocks[0].copy(), False
    if n_loc == 1:
        return ys[0].copy(), blocks[0].copy(), True
    info = np.zeros((6, 6))
    rhs = np.zeros(6)
    for j in range(n_loc):
        wj = np.linalg.inv(blocks[j])
        d = ys[j] - ys[0]
        d[2] = wrap(d[2])
        info += wj
        rhs += wj @ d
    beta = ys[0] + np.linalg.solve(info, rhs)
    beta[2] = wrap(beta[2])
    cov = np.linalg.inv(info)
    return beta, 0.5 * (cov + cov.T), True


@njit(cache=True)
def federated_reset(v, t, p, beta, alpha):
    """Overwrite one local with the global solution and deflate its nav covariance."""
    v2 = beta[3:6].copy()
    e = dcm_to_euler(t)
    if e[0] == beta[0] and e[1] == beta[1] and e[2] == beta[2]:
        t2 = t.copy()
    else:
        t2 = euler_to_dcm(beta[0:3])
    p2 = p.copy()
    if alpha != 1.0:
        s = math.sqrt(alpha)
        p2[0:6, 0:6] *= alpha
        p2[0:6, 6:] *= s
        p2[6:, 0:6] *= s
    return v2, t2, p2


@njit(cache=True)
def _fuse_locals(vs, ts, ps, max_cond):
    n_loc = vs.shape[0]
    ys = np.empty((n_loc, 6))
    blocks = np.empty((n_loc, 6, 6))
    for j in range(n_loc):
        ys[j, 0:3] = dcm_to_euler(ts[j])
        ys[j, 3:6] = vs[j]
        blocks[j] = ps[j, 0:6, 0:6]
    return wls_fuse(ys, blocks, max_cond)


@njit(cache=True)
def run_federated(
    f, w, times, t0, aid_index, aid_v, aid_r, aid_sigma, lat, lon, h, v, t, p, q_diag,
    alpha, joseph, ep, psd_tol, monitor_tol, max_cond, max_wls_cond, div_factor, div_epochs,
):
    """Bank of single-IMU filters fused at every aiding epoch.

    ``q_diag`` is ``(J, 12)``. The recorded navigation solution is the fused
    one (exactly the local solution for ``J = 1``); ``sig`` holds the fused
    attitude/velocity sigma followed by each local's bias sigma. Returns the
    histories, counters, status, failing frame (-1 when none) and the aiding
    epoch at which divergence was declared (-1 when none).
    """
    n = times.shape[0]
    n_loc = f.shape[1]
    pos = np.full((n + 1, 3), np.nan)
    vel = np.full((n + 1, 3), np.nan)
    att = np.full((n + 1, 3, 3), np.nan)
    bias = np.full((n + 1, n_loc, 6), np.nan)
    sig = np.full((n + 1, 6 + 6 * n_loc), np.nan)
    counters = np.zeros(3, dtype=np.int64)
    lats = np.full(n_loc, lat)
    lons = np.full(n_loc, lon)
    hs = np.full(n_loc, h)
    vs = np.empty((n_loc, 3))
    ts = np.empty((n_loc, 3, 3))
    ps = np.empty((n_loc, 12, 12))
    bs = np.zeros((n_loc, 1, 6))
    for j in range(n_loc):
        vs[j] = v
        ts[j] = t
        ps[j] = p
    streak = 0
    diverged_at = -1
    n_aid = 0
    t_prev = t0

    beta, cov, ok = _fuse_locals(vs, ts, ps, max_wls_cond)
    _record_federated(0, lats, lons, hs, vs, ts, bs, ps, beta, cov, pos, vel, att, bias, sig)
    for k in range(n):
        dt = times[k] - t_prev
        t_prev = times[k]
        for j in range(n_loc):
            if abs(lats[j]) > math.pi / 2 - POLE_TOL:
                return pos, vel, att, bias, sig, counters, POLE, k, diverged_at
            lats[j], lons[j], hs[j], vs[j], ts[j], ps[j] = predict_step(
                lats[j], lons[j], hs[j], vs[j], ts[j], ps[j], f[k, j : j + 1], w[k, j : j + 1], bs[j], dt, q_diag[j], ep
            )
            if not _finite_nav(lats[j], lons[j], hs[j], vs[j], ts[j]):
                return pos, vel, att, bias, sig, counters, NONFINITE, k, diverged_at
            if not psd_ok(ps[j], psd_tol):
                return pos, vel, att, bias, sig, counters, NOT_PSD, k, diverged_at
            if monitor_tol > 0 and not psd_ok(ps[j], monitor_tol):
                counters[0] += 1
        i = aid_index[k]
        if i >= 0:
            beta, cov, ok = _fuse_locals(vs, ts, ps, max_wls_cond)
            if not ok:
                return pos, vel, att, bias, sig, counters, INNOVATION, k, diverged_at
            bad = False
            for c in range(3):
                if abs(beta[3 + c] - aid_v[i, c]) > div_factor * aid_sigma[i]:
                    bad = True
            streak = streak + 1 if bad else 0
            if streak >= div_epochs and diverged_at < 0:
                diverged_at = n_aid
            n_aid += 1
            for j in range(n_loc):
                trace_before = ps[j, 3, 3] + ps[j, 4, 4] + ps[j, 5, 5]
                vs[j], ts[j], ps[j], bs[j], dx, ok = update_step(
                    vs[j], ts[j], ps[j], bs[j], aid_v[i], aid_r[i], joseph, max_cond
                )
                if not ok:
                    return pos, vel, att, bias, sig, counters, INNOVATION, k, diverged_at
                if not psd_ok(ps[j], psd_tol):
                    return pos, vel, att, bias, sig, counters, NOT_PSD, k, diverged_at
                if monitor_tol > 0 and not psd_ok(ps[j], monitor_tol):
                    counters[0] += 1
                if ps[j, 3, 3] + ps[j, 4, 4] + ps[j, 5, 5] > trace_before * (1.0 + 1e-12):
                    counters[1] += 1
            beta, cov, ok = _fuse_locals(vs, ts, ps, max_wls_cond)
            if not ok:
                return pos, vel, att, bias, sig, counters, INNOVATION, k, diverged_at
            for j in range(n_loc):
                vs[j], ts[j], ps[j] = federated_reset(vs[j], ts[j], ps[j], beta, alpha)
            beta, cov, ok = _fuse_locals(vs, ts, ps, max_wls_cond)
        else:
            beta, cov, ok = _fuse_locals(vs, ts, ps, max_wls_cond)
        if not ok:
            return pos, vel, att, bias, sig, counters, INNOVATION, k, diverged_at
        _record_federated(k + 1, lats, lons, hs, vs, ts, bs, ps, beta, cov, pos, vel, att, bias, sig)
    return pos, vel, att, bias, sig, counters, OK, -1, diverged_at


@njit(cache=True)
def _record_federated(k, lats, lons, hs, vs, ts, bs, ps, beta, cov, pos, vel, att, bias, sig):
    n_loc = vs.shape[0]
    if n_loc == 1:
        pos[k, 0] = lats[0]
        pos[k, 1] = lons[0]
        pos[k, 2] = hs[0]
        vel[k] = vs[0]
        att[k] = ts[0]
    else:
        pos[k, 0] = lats.mean()
        pos[k, 1] = lons.mean()
        pos[k, 2] = hs.mean()
        vel[k] = beta[3:6]
        att[k] = euler_to_dcm(beta[0:3])
    for i in range(6):
        sig[k, i] = math.sqrt(max(cov[i, i], 0.0))
    for j in range(n_loc):
        bias[k, j] = bs[j, 0]
        for i in range(6):
            sig[k, 6 + 6 * j + i] = math.sqrt(max(ps[j, 6 + i, 6 + i], 0.0))


@njit(cache=True)
def radii_many(lat, ep):
    r_n = np.empty(lat.shape[0])
    r_m = np.empty(lat.shape[0])
    for i in range(lat.shape[0]):
        r_n[i], r_m[i] = radii(lat[i], ep)
    return r_n, r_m


@njit(cache=True)
def ideal_outputs(euler, euler_rate, vel, acc, pos, ep):
    """Attitude, specific force and angular rate that reproduce a kinematic trajectory."""
    n = euler.shape[0]
    att = np.empty((n, 3, 3))
    f_b = np.empty((n, 3))
    w_ib = np.empty((n, 3))
    w_nb = np.empty(3)
    g = np.zeros(3)
    for i in range(n):
        tbn = euler_to_dcm(euler[i])
        att[i] = tbn
        sr, cr = math.sin(euler[i, 0]), math.cos(euler[i, 0])
        sp, cp = math.sin(euler[i, 1]), math.cos(euler[i, 1])
        rolld, pitchd, yawd = euler_rate[i, 0], euler_rate[i, 1], euler_rate[i, 2]
        w_nb[0] = rolld - yawd * sp
        w_nb[1] = pitchd * cr + yawd * sr * cp
        w_nb[2] = -pitchd * sr + yawd * cr * cp
        v = vel[i].copy()
        w_ie = earth_rate(pos[i, 0], ep)
        w_en = transport(v, pos[i, 0], pos[i, 2], ep)
        w_ib[i] = w_nb + tbn.T @ (w_ie + w_en)
        g[2] = gravity_down(pos[i, 0], pos[i, 2], ep)
        a = acc[i] - g + cross(2.0 * w_ie + w_en, v)
        f_b[i] = tbn.T @ a
    return att, f_b, w_ib
