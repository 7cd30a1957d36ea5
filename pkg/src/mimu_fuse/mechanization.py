"""Strapdown inertial navigation in the local-level NED frame.

The continuous-time kinematics are exposed as rate functions
(:func:`body_rate`, :func:`attitude_rate`, :func:`velocity_rate`,
:func:`position_rate`); :func:`propagate` is the discrete per-sample update used
by every filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from . import geodesy
from .errors import NonFiniteState
from .geodesy import WGS84, GeodeticPosition


@dataclass
class ImuSample:
    """One IMU output.

    ``specific_force`` [m/s^2] and ``angular_rate`` [rad/s] are body-frame
    averages over the interval ending at ``t``. ``imu_index`` is 1-based; 0
    marks a virtual (averaged) IMU.
    """

    t: float
    specific_force: np.ndarray
    angular_rate: np.ndarray
    imu_index: int = 0


@dataclass
class NavState:
    """Position, NED velocity and body-to-NED rotation matrix."""

    position: GeodeticPosition
    velocity: np.ndarray
    attitude: np.ndarray = field(default_factory=lambda: np.eye(3))

    @classmethod
    def from_euler(cls, position, velocity, roll, pitch, yaw):
        return cls(
            GeodeticPosition(*position),
            np.asarray(velocity, dtype=float),
            geodesy.euler_to_dcm(roll, pitch, yaw),
        )

    @property
    def euler(self):
        """``(roll, pitch, yaw)`` in radians."""
        return geodesy.dcm_to_euler(self.attitude)

    def copy(self):
        return NavState(self.position, self.velocity.copy(), self.attitude.copy())

    def orthonormality_error(self):
        return float(np.linalg.norm(self.attitude @ self.attitude.T - np.eye(3)))


def nav_frame_rate(state, em=WGS84):
    """Rate of the NED frame with respect to inertial space, in NED."""
    pos = state.position
    return geodesy.earth_rate_nav(pos, em) + geodesy.transport_rate(state.velocity, pos, em)


def body_rate(omega_ib, state, em=WGS84):
    """Body rate with respect to the NED frame, in body axes."""
    return np.asarray(omega_ib) - state.attitude.T @ nav_frame_rate(state, em)


def attitude_rate(state, omega_nb):
    """Time derivative of the body-to-NED rotation matrix."""
    return state.attitude @ geodesy.skew(omega_nb)


def velocity_rate(state, f_b, em=WGS84):
    """Time derivative of the NED velocity for a body-frame specific force."""
    pos = state.position
    v = state.velocity
    w = 2.0 * geodesy.earth_rate_nav(pos, em) + geodesy.transport_rate(v, pos, em)
    return state.attitude @ np.asarray(f_b) + geodesy.gravity_nav(pos, em) - geodesy.cross(w, v)


def position_rate(state, em=WGS84):
    """Latitude, longitude and height rates ``(dlat, dlon, dh)``."""
    lat, _, h = state.position
    geodesy._check_pole(lat)
    r_n, r_m = geodesy.radii_of_curvature(state.position, em)
    v = state.velocity
    return (v[0] / (r_m + h), v[1] / ((r_n + h) * math.cos(lat)), -v[2])


def propagate(state, sample, dt, bias_a=None, bias_g=None, em=WGS84):
    """
    Advance a navigation state over one IMU interval.

    Parameters
    ----------
    state : NavState
        State at the start of the interval.
    sample : ImuSample
        Measurements averaged over the interval.
    dt : float
        Interval length [s].
    bias_a, bias_g : array-like, optional
        Current bias estimates, removed from the measurements first.

    Returns
    -------
    NavState
        State at the end of the interval.

    Notes
    -----
    Attitude is advanced as ``exp(-skew(w_in dt)) T exp(skew(w_ib dt))``, which
    solves the attitude kinematics exactly for constant body and frame rates.
    Velocity uses the mean of the start and end attitudes for the specific
    force and a predictor-corrector Coriolis term; position is trapezoidal.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    f = sample.specific_force
    w = sample.angular_rate
    if bias_a is not None:
        f = f - bias_a
    if bias_g is not None:
        w = w - bias_g

    lat, lon, h = state.position
    geodesy._check_pole(lat)
    lat_new, lon_new, h_new, v_new, t_new = _k.propagate(
        float(lat), float(lon), float(h), state.velocity, state.attitude,
        np.asarray(f, dtype=float), np.asarray(w, dtype=float), float(dt), em.params,
    )
    if not (
        math.isfinite(lat_new + lon_new + h_new) and np.isfinite(v_new).all() and np.isfinite(t_new).all()
    ):
        raise NonFiniteState(f"non-finite navigation state at t={sample.t}")
    return NavState(GeodeticPosition(lat_new, lon_new, h_new), v_new, t_new)
