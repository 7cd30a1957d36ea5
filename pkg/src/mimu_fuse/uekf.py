"""Unified EKF for an IMU array: shared attitude/velocity errors, per-sensor biases.

The error state is ``[dpsi, dv, db_a1, db_g1, ..., db_aJ, db_gJ]`` with the
sign conventions of :mod:`mimu_fuse.eskf`; for ``J = 1`` the layout and every
arithmetic step coincide with the 12-state filter.

Bias variance redistribution (BVR) reallocates the bias variances of the
sensors in proportion to how far each sensor's bias-corrected output has
strayed from the array mean since the last aiding epoch, keeping the total
variance of each channel fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from . import geodesy
from .eskf import (
    DEGENERATE_TOL,
    MAX_INNOVATION_COND,
    _check_finite,
    check_psd,
    process_noise_diagonal,
    run_compiled,
    start_time,
)
from .errors import DegenerateErrors, EmptyFrame, InnovationNotInvertible, NonFiniteState
from .geodesy import WGS84
from .mechanization import NavState, attitude_rate, body_rate, velocity_rate
from .vimu import array_mean

CHANNELS = ("ax", "ay", "az", "gx", "gy", "gz")


@dataclass
class UekfState:
    """Navigation solution, ``(6 + 6J)``-dimensional covariance and per-sensor biases.

    ``biases[j] = [b_a, b_g]`` of sensor ``j`` (0-based).
    """

    nav: NavState
    P: np.ndarray
    biases: np.ndarray
    correction: np.ndarray | None = None
    skipped: tuple = ()

    def __post_init__(self):
        self.biases = np.asarray(self.biases, dtype=float).reshape(-1, 6)
        n = 6 + 6 * self.biases.shape[0]
        if self.P.shape != (n, n):
            raise ValueError(f"P must be {n}x{n} for {self.n_imu} IMUs, got {self.P.shape}")

    @property
    def n_imu(self):
        return self.biases.shape[0]

    @property
    def error_mean(self):
        return np.zeros(self.P.shape[0])


@dataclass
class BvrAccumulator:
    """Running sums of per-sensor error estimates since the last aiding update.

    ``sums[j, i]`` accumulates ``e_j = (y_j - b_j) - mean_k(y_k - b_k)`` for
    channel ``i`` in ``ax, ay, az, gx, gy, gz``.
    """

    sums: np.ndarray
    count: int = 0

    @classmethod
    def zeros(cls, n_imu):
        return cls(np.zeros((n_imu, 6)))

    def add(self, specific_force, angular_rate, biases):
        _k.bvr_accumulate(
            self.sums,
            np.asarray(specific_force, dtype=float),
            np.asarray(angular_rate, dtype=float),
            np.asarray(biases, dtype=float),
        )
        self.count += 1

    def mean_errors(self):
        if self.count == 0:
            raise ValueError("no samples accumulated")
        return self.sums / self.count

    def reset(self):
        self.sums[:] = 0.0
        self.count = 0


def _corrected_means(frame, biases):
    f = np.asarray(frame.specific_force, dtype=float)
    w = np.asarray(frame.angular_rate, dtype=float)
    if f.shape[0] == 0:
        raise EmptyFrame("frame holds no samples")
    if f.shape[0] != biases.shape[0]:
        raise ValueError(f"frame has {f.shape[0]} IMUs, filter has {biases.shape[0]}")
    return array_mean(f) - array_mean(biases[:, :3]), array_mean(w) - array_mean(biases[:, 3:])


def unified_rates(frame, nav, biases, em=WGS84):
    """
    Attitude and velocity rates driven by the bias-corrected array means.

    Parameters
    ----------
    frame : MimuFrame
    nav : NavState
    biases : array_like, shape (J, 6)

    Returns
    -------
    attitude_rate : ndarray, shape (3, 3)
        Time derivative of the body-to-NED rotation.
    velocity_rate : ndarray, shape (3,)
    """
    biases = np.asarray(biases, dtype=float).reshape(-1, 6)
    f_mean, w_mean = _corrected_means(frame, biases)
    return attitude_rate(nav, body_rate(w_mean, nav, em)), velocity_rate(nav, f_mean, em)


def build_F_uekf(nav, f_mean, n_imu, em=WGS84):
    """System matrix; each sensor's bias columns carry ``T / J``."""
    lat, _, h = nav.position
    geodesy._check_pole(lat)
    return _k.system_matrix(
        float(lat), float(h), nav.velocity, nav.attitude, np.asarray(f_mean, dtype=float), int(n_imu), em.params
    )


def build_G_uekf(nav, n_imu):
    """Noise shaping matrix, ``(6 + 6J) x 12J``.

    Noise ordering is ``[w_a1..w_aJ, w_g1..w_gJ, w_ba1..w_baJ, w_bg1..w_bgJ]``.
    """
    return _k.shaping_matrix(nav.attitude, int(n_imu))


def measurement_matrix(n_imu):
    h = np.zeros((3, 6 + 6 * n_imu))
    h[:, 3:6] = np.eye(3)
    return h


def uekf_predict(state, frame, dt, noise, em=WGS84, acc=None):
    """
    Propagate the unified filter over one array frame.

    Parameters
    ----------
    state : UekfState
    frame : MimuFrame
        Raw outputs of all ``J`` sensors.
    dt : float
    noise : list of NoiseSpec
        Per-sensor noise model assumed by the filter.
    acc : BvrAccumulator, optional
        Updated in place with this frame's error estimates.

    Returns
    -------
    UekfState
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    f = np.asarray(frame.specific_force, dtype=float)
    w = np.asarray(frame.angular_rate, dtype=float)
    if f.shape[0] == 0:
        raise EmptyFrame("frame holds no samples")
    if f.shape[0] != state.n_imu:
        raise ValueError(f"frame has {f.shape[0]} IMUs, filter has {state.n_imu}")
    lat, lon, h = state.nav.position
    geodesy._check_pole(lat)
    if acc is not None:
        acc.add(f, w, state.biases)
    lat, lon, h, v, t, p = _k.predict_step(
        float(lat), float(lon), float(h), state.nav.velocity, state.nav.attitude, state.P,
        f, w, state.biases, float(dt), process_noise_diagonal(noise), em.params,
    )
    nav = NavState(geodesy.GeodeticPosition(lat, lon, h), v, t)
    _check_finite(nav, frame.t)
    check_psd(p)
    return UekfState(nav, p, state.biases)


def redistribute_variances(variances, mean_abs_errors, squared=False):
    """
    New bias variances for one channel, proportional to the mean error magnitudes.

    The total variance is preserved: ``kappa = sum(var) / sum(|e|)`` and the
    new variances are ``kappa * |e|`` (``|e|^2`` in place of ``|e|`` when
    ``squared``).

    Raises
    ------
    DegenerateErrors
        If the error magnitudes sum to less than ``DEGENERATE_TOL``.

    Examples
    --------
    >>> redistribute_variances([1.0, 1.0], [3.0, 1.0])
    array([1.5, 0.5])
    """
    var = np.asarray(variances, dtype=float)
    e = np.abs(np.asarray(mean_abs_errors, dtype=float))
    if squared:
        e = e * e
    total = e.sum()
    if not total >= DEGENERATE_TOL:
        raise DegenerateErrors(f"mean error magnitudes sum to {total:.3e}")
    return (var.sum() / total) * e


def bvr_redistribute(state, acc, gyro=True, squared=False):
    """
    Redistribute the bias variances of every channel and reset the accumulator.

    Each channel (accelerometer and, when ``gyro`` is set, gyro axes) is
    handled independently with the rule of :func:`redistribute_variances`.
    Covariances involving a rescaled bias are scaled by the square root of
    its variance ratio, so correlation coefficients and positive
    semidefiniteness are preserved. Channels whose sensors show no error
    spread are left alone.

    Returns
    -------
    UekfState
        State with the adjusted covariance and ``skipped`` naming the
        degenerate channels.
    """
    if acc.count < 1:
        raise ValueError("BVR needs at least one accumulated sample")
    p, skipped = _k.bvr_redistribute(state.P, acc.sums, acc.count, 6 if gyro else 3, squared, DEGENERATE_TOL)
    acc.reset()
    check_psd(p)
    names = tuple(c for c, s in zip(CHANNELS, skipped) if s)
    return UekfState(state.nav, p, state.biases, state.correction, names)


def uekf_update(state, z, acc=None, bvr=True, joseph=False, gyro=True, squared=False):
    """
    Velocity-aided correction with optional BVR ahead of the gain.

    Returns
    -------
    UekfState
        Corrected state; the error mean is reset to zero and ``skipped``
        lists the channels BVR left alone.
    """
    skipped = ()
    if bvr and acc is not None and acc.count > 0:
        state = bvr_redistribute(state, acc, gyro, squared)
        skipped = state.skipped
    elif acc is not None:
        acc.reset()
    v, t, p, biases, dx, ok = _k.update_step(
        state.nav.velocity, state.nav.attitude, state.P, state.biases, np.asarray(z.v_meas, dtype=float),
        np.asarray(z.R, dtype=float), joseph, MAX_INNOVATION_COND,
    )
    if not ok:
        raise InnovationNotInvertible(f"innovation covariance singular at t={z.t}")
    if not np.isfinite(dx).all():
        raise NonFiniteState(f"non-finite correction at t={z.t}")
    check_psd(p)
    return UekfState(NavState(state.nav.position, v, t), p, biases, correction=dx, skipped=skipped)


def initial_uekf_state(cfg, n_imu):
    return UekfState(cfg.initial_nav.copy(), cfg.init.covariance(n_imu), np.zeros((n_imu, 6)))


def run_uekf(mimu_log, aiding_log, cfg, bvr=None, name=None):
    """
    Unified-filter solution of an array log.

    ``bvr`` overrides ``cfg.bvr`` when given. ``extras["bvr_skipped"]`` counts
    the channel redistributions skipped as degenerate.
    """
    bvr = cfg.bvr if bvr is None else bool(bvr)
    n_imu = mimu_log.count
    noise = list(cfg.noise[:n_imu])
    if len(noise) != n_imu:
        raise ValueError(f"need {n_imu} noise specs, got {len(cfg.noise)}")
    return run_compiled(
        name or ("uekf_bvr" if bvr else "uekf"), mimu_log.specific_force, mimu_log.angular_rate, mimu_log.t,
        start_time(mimu_log), aiding_log, noise, cfg, bvr=bvr,
    )
