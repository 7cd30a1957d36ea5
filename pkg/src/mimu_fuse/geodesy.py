"""Earth model, navigation-frame rates, gravity and rotation helpers.

All vectors are expressed in the local North-East-Down (NED) frame unless noted
otherwise. Angles are in radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import _kernels as _k
from .errors import PoleSingularityError

#: Latitudes closer than this to +-pi/2 are rejected where tan/sec blow up.
POLE_TOLERANCE = 1e-6


class GeodeticPosition(NamedTuple):
    """Latitude [rad], longitude [rad] and ellipsoidal height [m]."""

    latitude: float
    longitude: float
    height: float

    @classmethod
    def normalized(cls, latitude, longitude, height):
        if abs(latitude) > math.pi / 2:
            raise ValueError(f"latitude {latitude} outside [-pi/2, pi/2]")
        if not math.isfinite(height):
            raise ValueError("height must be finite")
        return cls(float(latitude), wrap_angle(float(longitude)), float(height))


@dataclass(frozen=True)
class EarthModel:
    """Reference ellipsoid, rotation rate and normal-gravity parameters.

    ``gravity_model_params`` holds ``(g_equator, g_pole, free_air_gradient)``,
    the normal gravity on the ellipsoid at the equator and at the poles [m/s^2]
    and the linear decrease of gravity with height [1/s^2].
    """

    semi_major_axis: float = 6378137.0
    eccentricity_squared: float = 6.69437999014e-3
    earth_rate: float = 7.292115e-5
    gravity_model_params: tuple[float, float, float] = (9.7803253359, 9.8321849378, 3.086e-6)

    def __post_init__(self):
        if self.semi_major_axis <= 0 or self.earth_rate <= 0:
            raise ValueError("semi-major axis and earth rate must be positive")
        if not 0 <= self.eccentricity_squared < 1:
            raise ValueError("eccentricity squared must lie in [0, 1)")
        if any(p <= 0 for p in self.gravity_model_params):
            raise ValueError("gravity parameters must be positive")

    @cached_property
    def params(self):
        """Flat parameter array consumed by the compiled kernels."""
        return np.array(
            [self.semi_major_axis, self.eccentricity_squared, self.earth_rate, *self.gravity_model_params]
        )


WGS84 = EarthModel()


def _check_pole(lat):
    if abs(lat) > math.pi / 2 - POLE_TOLERANCE:
        raise PoleSingularityError(f"latitude {lat!r} rad is within {POLE_TOLERANCE} rad of a pole")


def radii_of_curvature(pos, em=WGS84):
    """
    Normal (prime vertical) and meridian radii of curvature.

    Parameters
    ----------
    pos : GeodeticPosition or sequence
        Position; only the latitude is used.
    em : EarthModel
        Reference ellipsoid.

    Returns
    -------
    R_N, R_M : float
        Normal and meridian radii of curvature [m].
    """
    return _k.radii(float(pos[0]), em.params)


def earth_rate_nav(pos, em=WGS84):
    """Earth rotation rate with respect to the inertial frame, in NED."""
    return _k.earth_rate(float(pos[0]), em.params)


def transport_rate(v, pos, em=WGS84):
    """
    Turn rate of the NED frame with respect to the Earth.

    Raises
    ------
    PoleSingularityError
        If the latitude is within ``POLE_TOLERANCE`` of a pole.
    """
    lat, _, h = pos
    _check_pole(lat)
    return _k.transport(np.asarray(v, dtype=float), float(lat), float(h), em.params)


def transport_rate_jacobian(pos, em=WGS84):
    """Partial derivatives of :func:`transport_rate` with respect to velocity."""
    lat, _, h = pos
    _check_pole(lat)
    return _k.transport_jacobian(float(lat), float(h), em.params)


def gravity_nav(pos, em=WGS84):
    """
    Normal gravity vector in NED.

    Uses the Somigliana closed form on the reference ellipsoid with a linear
    free-air height correction::

        g = g_e * (1 + k sin^2(lat)) / sqrt(1 - e^2 sin^2(lat)) - c * h
    """
    return np.array([0.0, 0.0, _k.gravity_down(float(pos[0]), float(pos[2]), em.params)])


def skew(v):
    """Skew-symmetric cross-product matrix, ``skew(a) @ b == a x b``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m):
    """Inverse of :func:`skew` applied to the antisymmetric part of ``m``."""
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def cross(a, b):
    """Cross product of two 3-vectors (much faster than ``np.cross`` for one pair)."""
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def rotation_from_vector(phi):
    """Rotation matrix ``exp(skew(phi))`` via the Rodrigues formula."""
    return _k.rotation_from_vector(np.asarray(phi, dtype=float))


def vector_from_rotation(r):
    """Rotation vector ``phi`` such that ``exp(skew(phi)) == r``."""
    c = min(1.0, max(-1.0, 0.5 * (r[0, 0] + r[1, 1] + r[2, 2] - 1.0)))
    theta = math.acos(c)
    w = vee(r)
    if theta < 1e-8:
        return w
    if math.pi - theta < 1e-6:
        # near pi the antisymmetric part vanishes; use the symmetric part
        m = 0.5 * (r + np.eye(3))
        axis = m[np.argmax(np.diag(m))]
        axis = axis / np.linalg.norm(axis)
        if axis @ w < 0:
            axis = -axis
        return theta * axis
    return w * (theta / math.sin(theta))


def orthonormalize(t):
    """Project a nearly orthonormal matrix onto the nearest rotation matrix.

    One Newton step of the polar decomposition, ``T (3I - T^T T) / 2``; it is
    quadratically convergent, so a matrix already orthonormal to 1e-8 comes
    out orthonormal to machine precision.
    """
    return _k.orthonormalize(np.asarray(t, dtype=float))


def euler_to_dcm(roll, pitch, yaw):
    """Body-to-NED rotation for aerospace Z-Y-X Euler angles."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def dcm_to_euler(t):
    """Z-Y-X Euler angles ``(roll, pitch, yaw)`` of a body-to-NED rotation.

    Accepts a single ``(3, 3)`` matrix or a stack of shape ``(..., 3, 3)``.
    """
    t = np.asarray(t)
    roll = np.arctan2(t[..., 2, 1], t[..., 2, 2])
    pitch = -np.arcsin(np.clip(t[..., 2, 0], -1.0, 1.0))
    yaw = np.arctan2(t[..., 1, 0], t[..., 0, 0])
    return np.stack([roll, pitch, yaw], axis=-1)


def wrap_angle(angle):
    """Wrap angles to the interval (-pi, pi]."""
    angle = np.asarray(angle, dtype=float)
    wrapped = np.mod(angle + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped == -np.pi, np.pi, wrapped)
    # angles already in range pass through untouched
    wrapped = np.where((angle > -np.pi) & (angle <= np.pi), angle, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped
