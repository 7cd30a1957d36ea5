"""Virtual IMU: average a co-located array into one stream and run the 12-state filter."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import eskf
from .errors import EmptyFrame, TimestampMismatch
from .mechanization import ImuSample


def check_frame_samples(samples, tol=1e-9):
    """Validate one frame's samples and return them sorted by IMU index.

    Raises
    ------
    EmptyFrame
        If there are no samples.
    TimestampMismatch
        If the timestamps differ by more than ``tol``.
    ValueError
        If the IMU indices are not exactly ``1..J``.
    """
    samples = sorted(samples, key=lambda s: s.imu_index)
    if not samples:
        raise EmptyFrame("frame holds no samples")
    indices = [s.imu_index for s in samples]
    if indices != list(range(1, len(samples) + 1)):
        raise ValueError(f"IMU indices must be 1..J without gaps, got {indices}")
    t0 = samples[0].t
    for s in samples[1:]:
        if abs(s.t - t0) > tol:
            raise TimestampMismatch(f"sample of IMU {s.imu_index} at t={s.t} differs from t={t0}")
    return samples


def array_mean(x, axis=0, keepdims=False):
    """Mean over the IMU axis, independent of the IMU order.

    Values are sorted and their deviations from the smallest one averaged,
    so equal inputs average to themselves exactly.
    """
    s = np.sort(x, axis=axis)
    lo = np.take(s, [0], axis=axis)
    m = lo + (s - lo).mean(axis=axis, keepdims=True)
    return m if keepdims else m.squeeze(axis)


def average_frame(frame):
    """
    Arithmetic mean of the specific forces and angular rates of one frame.

    ``frame`` may be a :class:`~mimu_fuse.simulator.MimuFrame` or a sequence
    of :class:`ImuSample`. Rows holding NaN (dropped samples) are left out of
    the mean.

    Returns
    -------
    ImuSample
        Virtual sample with ``imu_index = 0``.
    """
    if not hasattr(frame, "specific_force"):
        samples = check_frame_samples(frame)
        t = samples[0].t
        f = np.array([s.specific_force for s in samples], dtype=float)
        w = np.array([s.angular_rate for s in samples], dtype=float)
    else:
        t, f, w = frame.t, frame.specific_force, frame.angular_rate
        if f.shape[0] == 0:
            raise EmptyFrame("frame holds no samples")
    present = ~(np.isnan(f).any(axis=1) | np.isnan(w).any(axis=1))
    if not present.all():
        if not present.any():
            raise EmptyFrame(f"all samples dropped at t={t}")
        f, w = f[present], w[present]
    return ImuSample(t, array_mean(f, 0), array_mean(w, 0), 0)


def virtual_noise(noise, n_imu, scale_bias_noise=False):
    """Noise model of the averaged stream: white noise shrinks by ``1/sqrt(J)``."""
    root = math.sqrt(n_imu)
    out = replace(noise, sigma_a=noise.sigma_a / root, sigma_g=noise.sigma_g / root)
    if scale_bias_noise:
        out = replace(out, sigma_ba=noise.sigma_ba / root, sigma_bg=noise.sigma_bg / root)
    return out


def average_log(mimu_log):
    """Virtual stream of a whole log as ``(N, 1, 3)`` arrays, dropouts excluded."""
    f = mimu_log.specific_force
    w = mimu_log.angular_rate
    missing = np.isnan(f).any(axis=2) | np.isnan(w).any(axis=2)
    if not missing.any():
        return array_mean(f, 1, True), array_mean(w, 1, True)
    if missing.all(axis=1).any():
        k = int(np.argmax(missing.all(axis=1)))
        raise EmptyFrame(f"all samples dropped at t={mimu_log.t[k]}")
    f_avg = np.empty((len(f), 1, 3))
    w_avg = np.empty((len(f), 1, 3))
    for k in range(len(f)):
        s = average_frame(mimu_log.frame(k))
        f_avg[k, 0] = s.specific_force
        w_avg[k, 0] = s.angular_rate
    return f_avg, w_avg


def run_vimu(mimu_log, aiding_log, cfg):
    """
    Virtual-IMU solution of an array log.

    The filter's white-noise densities are those of the first IMU divided by
    ``sqrt(J)``. Bias driving noise and initial bias uncertainty are scaled
    the same way only when ``cfg.vimu_scale_bias_noise`` is set. The reported
    bias is the single virtual bias.
    """
    n_imu = mimu_log.count
    noise = virtual_noise(cfg.noise[0], n_imu, cfg.vimu_scale_bias_noise)
    bias_scale = 1.0 / math.sqrt(n_imu) if cfg.vimu_scale_bias_noise else 1.0
    f, w = average_log(mimu_log)
    return eskf.run_compiled(
        "vimu", f, w, mimu_log.t, eskf.start_time(mimu_log), aiding_log, [noise], cfg,
        p0=cfg.init.covariance(1, bias_scale),
    )
