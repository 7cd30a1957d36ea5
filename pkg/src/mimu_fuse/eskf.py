"""Twelve-state closed-loop error-state EKF for one IMU aided by NED velocity.

Error state ordering is ``[dpsi, dv, db_a, db_g]``:

* ``dpsi`` is the NED-frame misalignment, ``T_est = exp(skew(dpsi)) T_true``;
* ``dv = v_est - v_true``;
* ``db_a, db_g`` are the residual sensor biases, ``b_true - b_est``.

With this convention the bias columns of the system matrix are ``+T_b^n`` and
the closed-loop reset subtracts the navigation errors and adds the residual
biases to the estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as _k
from . import geodesy
from .errors import CovarianceNotPSD, InnovationNotInvertible, NonFiniteState, PoleSingularityError
from .geodesy import WGS84, EarthModel
from .mechanization import NavState
from .solution import NavSolutionLog

#: Predict/update raise when the smallest eigenvalue drops below -PSD_TOL * trace(P).
PSD_TOL = 1e-8
#: Largest innovation-covariance condition number accepted by an update.
MAX_INNOVATION_COND = 1e12
#: BVR leaves a channel alone when its sensors' mean error magnitudes sum below this.
DEGENERATE_TOL = 1e-15


@dataclass
class VelocityMeasurement:
    t: float
    v_meas: np.ndarray
    R: np.ndarray


@dataclass
class FilterState12:
    """Navigation solution, error covariance and bias estimates.

    ``correction`` keeps the last error-state estimate folded into the
    solution; the error mean itself is always zero after a reset.
    """

    nav: NavState
    P: np.ndarray
    bias_a_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_g_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))
    correction: np.ndarray | None = None

    @property
    def error_mean(self):
        return np.zeros(12)

    @property
    def biases(self):
        return np.concatenate([self.bias_a_hat, self.bias_g_hat])[None, :]


@dataclass
class InitialUncertainty:
    """Initial 1-sigma of the error states (angles in rad)."""

    attitude: float = math.radians(0.5)
    yaw: float = math.radians(2.0)
    velocity: float = 0.1
    bias_a: float = 0.05
    bias_g: float = math.radians(0.2)

    def covariance(self, n_imu=1, bias_scale=1.0):
        nav = [self.attitude**2] * 2 + [self.yaw**2] + [self.velocity**2] * 3
        bias = [(bias_scale * self.bias_a) ** 2] * 3 + [(bias_scale * self.bias_g) ** 2] * 3
        return np.diag(nav + bias * n_imu)


@dataclass
class FilterConfig:
    """Settings shared by all filter runners.

    ``noise`` lists the error model the filter assumes for each IMU; single-IMU
    filters use the first entry.
    """

    initial_nav: NavState
    noise: list
    init: InitialUncertainty = field(default_factory=InitialUncertainty)
    joseph: bool = False
    bvr: bool = True
    bvr_gyro: bool = False
    bvr_squared: bool = False
    alpha_f: float = 0.9
    divergence_factor: float = 10.0
    divergence_epochs: int = 5
    vimu_scale_bias_noise: bool = False
    monitor_tol: float | None = 1e-10
    em: EarthModel = WGS84

    def with_(self, **changes):
        return replace(self, **changes)


def process_noise_diagonal(noise):
    """Diagonal of ``Q_w`` for a list of per-IMU noise specs.

    Ordering matches the shaping matrix: all accelerometer white noises, all
    gyro white noises, then the accelerometer and gyro bias driving noises.
    """
    out = []
    for attr in ("sigma_a", "sigma_g", "sigma_ba", "sigma_bg"):
        for ns in noise:
            out.extend([getattr(ns, attr) ** 2] * 3)
    return np.array(out)


def build_F(nav, f_b_corrected, em=WGS84):
    """12x12 error-state system matrix at ``nav`` for the bias-corrected specific force."""
    lat, _, h = nav.position
    geodesy._check_pole(lat)
    return _k.system_matrix(
        float(lat), float(h), nav.velocity, nav.attitude, np.asarray(f_b_corrected, dtype=float), 1, em.params
    )


def build_G(nav):
    """12x12 noise shaping matrix for noise ordering ``[w_a, w_g, w_ba, w_bg]``."""
    return _k.shaping_matrix(nav.attitude, 1)


def measurement_matrix(n_states):
    """``H = [0 I 0 ... 0]``: the velocity error block of the state."""
    h = np.zeros((3, n_states))
    h[:, 3:6] = np.eye(3)
    return h


def check_psd(p, tol=PSD_TOL):
    if not _k.psd_ok(p, tol):
        raise CovarianceNotPSD(f"min eigenvalue {np.linalg.eigvalsh(p)[0]:.3e} below -{tol} * trace")


def predict_covariance(p, f_mat, g_mat, q_diag, dt):
    """``P <- Phi P Phi^T + G Q G^T dt`` with ``Phi = I + F dt``, symmetrized."""
    return _k.covariance_predict(p, f_mat, g_mat, q_diag, float(dt))


def _check_finite(nav, t):
    lat, lon, h = nav.position
    if not (math.isfinite(lat + lon + h) and np.isfinite(nav.velocity).all() and np.isfinite(nav.attitude).all()):
        raise NonFiniteState(f"non-finite navigation state at t={t}")


def predict(fs, sample, dt, noise, em=WGS84):
    """
    Propagate the navigation solution and the error covariance over one sample.

    Parameters
    ----------
    fs : FilterState12
    sample : ImuSample
        Raw IMU output; the current bias estimates are removed internally.
    dt : float
    noise : NoiseSpec
        Noise model assumed by the filter.

    Returns
    -------
    FilterState12

    Notes
    -----
    The system matrix is evaluated at the propagated state with the
    bias-corrected specific force of the sample.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    lat, lon, h = fs.nav.position
    geodesy._check_pole(lat)
    lat, lon, h, v, t, p = _k.predict_step(
        float(lat), float(lon), float(h), fs.nav.velocity, fs.nav.attitude, fs.P,
        np.asarray(sample.specific_force, dtype=float)[None, :],
        np.asarray(sample.angular_rate, dtype=float)[None, :],
        fs.biases, float(dt), process_noise_diagonal([noise]), em.params,
    )
    nav = NavState(geodesy.GeodeticPosition(lat, lon, h), v, t)
    _check_finite(nav, sample.t)
    check_psd(p)
    return FilterState12(nav, p, fs.bias_a_hat, fs.bias_g_hat)


def correct_nav(nav, dx):
    """Fold the attitude and velocity errors of ``dx`` into ``nav`` (position untouched)."""
    v, t = _k.correct_nav(nav.velocity, nav.attitude, np.asarray(dx, dtype=float))
    return NavState(nav.position, v, t)


def kalman_velocity_update(p, v_pred, z, joseph=False):
    """Gain, error estimate and posterior covariance for a velocity fix.

    Returns ``(dx, p_new)``.
    """
    dz = v_pred - z.v_meas
    dx, p_new, ok = _k.velocity_update(p, dz, np.asarray(z.R, dtype=float), joseph, MAX_INNOVATION_COND)
    if not ok:
        raise InnovationNotInvertible(f"innovation covariance singular at t={z.t}")
    if not np.isfinite(dx).all():
        raise NonFiniteState(f"non-finite correction at t={z.t}")
    return dx, p_new


def update(fs, z, joseph=False):
    """Velocity-aided correction followed by the closed-loop reset."""
    v, t, p, biases, dx, ok = _k.update_step(
        fs.nav.velocity, fs.nav.attitude, fs.P, fs.biases, np.asarray(z.v_meas, dtype=float),
        np.asarray(z.R, dtype=float), joseph, MAX_INNOVATION_COND,
    )
    if not ok:
        raise InnovationNotInvertible(f"innovation covariance singular at t={z.t}")
    if not np.isfinite(dx).all():
        raise NonFiniteState(f"non-finite correction at t={z.t}")
    check_psd(p)
    return FilterState12(NavState(fs.nav.position, v, t), p, biases[0, 0:3], biases[0, 3:6], correction=dx)


def aiding_schedule(frame_times, aiding_log):
    """Map frame index -> aiding index (nearest frame within half a sample)."""
    if len(aiding_log) == 0:
        return {}
    frame_times = np.asarray(frame_times, dtype=float)
    if len(frame_times) < 2:
        nearest = np.zeros(len(aiding_log), dtype=int)
        dt = 1.0
    else:
        dt = float(np.median(np.diff(frame_times)))
        idx = np.clip(np.searchsorted(frame_times, aiding_log.t), 1, len(frame_times) - 1)
        left = frame_times[idx - 1]
        right = frame_times[idx]
        nearest = np.where(np.abs(aiding_log.t - left) <= np.abs(aiding_log.t - right), idx - 1, idx)
    ok = np.abs(frame_times[nearest] - aiding_log.t) <= 0.5 * dt
    return {int(k): i for i, (k, good) in enumerate(zip(nearest, ok)) if good}


def aiding_arrays(frame_times, aiding_log):
    """Per-frame aiding row index (-1 for none), measurements and covariances."""
    index = np.full(len(frame_times), -1, dtype=np.int64)
    for k, i in aiding_schedule(frame_times, aiding_log).items():
        index[k] = i
    sigma = np.asarray(aiding_log.sigma, dtype=float)
    r = sigma[:, None, None] ** 2 * np.eye(3)[None, :, :]
    return index, np.ascontiguousarray(aiding_log.velocity, dtype=float).reshape(-1, 3), r, sigma


def initial_filter_state(cfg, bias_scale=1.0):
    return FilterState12(cfg.initial_nav.copy(), cfg.init.covariance(1, bias_scale))


_FAILURES = {
    _k.POLE: PoleSingularityError,
    _k.NONFINITE: NonFiniteState,
    _k.NOT_PSD: CovarianceNotPSD,
    _k.INNOVATION: InnovationNotInvertible,
}


def failure(code, t):
    """Exception matching a kernel status code."""
    cls = _FAILURES[code]
    return cls(f"{cls.__name__} at t={t}")


def run_compiled(name, f, w, times, t0, aiding_log, noise, cfg, p0=None, bvr=False):
    """
    Run the single/virtual/unified filter over whole arrays.

    Parameters
    ----------
    f, w : ndarray, shape (N, J, 3)
        Raw specific force and angular rate of every sensor.
    times : ndarray, shape (N,)
    t0 : float
        Time of the initial state.
    noise : list of NoiseSpec
        ``J`` noise models assumed by the filter.
    p0 : ndarray, optional
        Initial covariance; ``cfg.init`` is used when omitted.

    Raises
    ------
    MimuFuseError
        Numerical failures are raised as the matching exception.
    """
    n_imu = f.shape[1]
    p0 = cfg.init.covariance(n_imu) if p0 is None else p0
    index, aid_v, aid_r, _ = aiding_arrays(times, aiding_log)
    nav = cfg.initial_nav
    lat, lon, h = nav.position
    pos, vel, att, bias, sig, counters, status, k_fail = _k.run_filter(
        np.ascontiguousarray(f, dtype=float), np.ascontiguousarray(w, dtype=float),
        np.asarray(times, dtype=float), float(t0), index, aid_v, aid_r,
        float(lat), float(lon), float(h), np.array(nav.velocity, dtype=float), np.array(nav.attitude, dtype=float),
        np.array(p0, dtype=float), process_noise_diagonal(noise),
        bool(bvr), 6 if cfg.bvr_gyro else 3, bool(cfg.bvr_squared), bool(cfg.joseph), cfg.em.params,
        PSD_TOL, -1.0 if cfg.monitor_tol is None else float(cfg.monitor_tol), MAX_INNOVATION_COND,
        DEGENERATE_TOL,
    )
    if status != _k.OK:
        raise failure(status, times[k_fail])
    t = np.concatenate([[t0], times])
    return NavSolutionLog(
        name, t, pos, vel, att, bias, sig,
        psd_violations=int(counters[0]), velocity_trace_increases=int(counters[1]),
        extras={"bvr_skipped": int(counters[2])} if bvr else {},
    )


def run_simu(mimu_log, aiding_log, cfg, imu=0):
    """Single-IMU baseline using column ``imu`` of the array."""
    f = mimu_log.specific_force[:, imu : imu + 1]
    w = mimu_log.angular_rate[:, imu : imu + 1]
    return run_compiled("simu", f, w, mimu_log.t, start_time(mimu_log), aiding_log, [cfg.noise[imu]], cfg)


def start_time(mimu_log):
    """Time of the initial state: one sample interval before the first frame."""
    if len(mimu_log) > 1:
        return float(mimu_log.t[0] - (mimu_log.t[1] - mimu_log.t[0]))
    return 0.0
