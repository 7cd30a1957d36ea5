"""Ground-truth trajectories and synthetic multi-IMU / velocity-aiding logs.

The truth is built from analytic heading, speed, heave and roll/pitch
profiles. Ideal IMU outputs are obtained by inverting the strapdown kinematics
along that trajectory and averaging over each sample interval (Simpson's rule),
which is what an increment-integrating IMU reports.

Noise densities follow the continuous-time convention: a white-noise density
``sigma`` [unit/sqrt(Hz)] becomes a per-sample standard deviation of
``sigma * sqrt(rate)``; a bias random-walk density ``sigma_b`` [unit/sqrt(s)]
adds ``sigma_b * sqrt(dt)`` per sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from . import geodesy
from .errors import UnsupportedSpec
from .geodesy import WGS84, GeodeticPosition
from .mechanization import ImuSample, NavState

TRAJECTORY_KINDS = ("stationary", "line", "square", "s_curve", "circle")


@dataclass
class NoiseSpec:
    """Sensor error model of one IMU.

    Attributes
    ----------
    sigma_a, sigma_g : float
        Accelerometer [m/s^2/sqrt(Hz)] and gyro [rad/s/sqrt(Hz)] white-noise
        densities.
    sigma_ba, sigma_bg : float
        Bias random-walk densities [m/s^2/sqrt(s)], [rad/s/sqrt(s)].
    initial_bias_a, initial_bias_g : array-like
        Biases at t = 0.
    seed : int
        Seed of this sensor's private random generator.
    """

    sigma_a: float = 0.0
    sigma_g: float = 0.0
    sigma_ba: float = 0.0
    sigma_bg: float = 0.0
    initial_bias_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_bias_g: np.ndarray = field(default_factory=lambda: np.zeros(3))
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_a", "sigma_g", "sigma_ba", "sigma_bg"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        self.initial_bias_a = np.asarray(self.initial_bias_a, dtype=float).reshape(3)
        self.initial_bias_g = np.asarray(self.initial_bias_g, dtype=float).reshape(3)


@dataclass(frozen=True)
class WaveModel:
    """Sinusoidal heave [m] plus small roll/pitch oscillations [rad]."""

    amplitude: float = 0.2
    period: float = 6.0
    roll_amplitude: float = math.radians(1.0)
    pitch_amplitude: float = math.radians(0.5)


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "line"
    duration: float = 120.0
    speed: float = 2.0
    turn_rate: float = math.radians(10.0)
    wave_model: WaveModel | None = None
    origin: GeodeticPosition = GeodeticPosition(math.radians(32.82), math.radians(34.95), 0.0)
    heading: float = 0.0

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise UnsupportedSpec(f"unknown trajectory kind {self.kind!r}")
        if not self.duration > 0:
            raise UnsupportedSpec("duration must be positive")
        if self.speed < 0:
            raise UnsupportedSpec("speed must be non-negative")
        if self.kind in ("square", "s_curve", "circle") and not self.turn_rate > 0:
            raise UnsupportedSpec(f"{self.kind} needs a positive turn rate")
        if self.kind == "square" and self.duration / 4 <= math.pi / self.turn_rate:
            raise UnsupportedSpec("square legs too short for the requested turn rate")


@dataclass
class Truth:
    """Reference trajectory sampled at the IMU rate.

    ``position``, ``velocity`` and ``attitude`` hold ``N + 1`` epochs;
    ``specific_force`` and ``angular_rate`` hold the ``N`` ideal IMU samples,
    sample ``k`` covering ``(t[k], t[k + 1]]``.
    """

    t: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    specific_force: np.ndarray
    angular_rate: np.ndarray
    rate: float

    @property
    def dt(self):
        return 1.0 / self.rate

    def __len__(self):
        return len(self.t)

    def nav(self, k):
        return NavState(GeodeticPosition(*self.position[k]), self.velocity[k].copy(), self.attitude[k].copy())

    @property
    def euler(self):
        return geodesy.dcm_to_euler(self.attitude)

    def samples(self):
        for k in range(len(self.t) - 1):
            yield ImuSample(self.t[k + 1], self.specific_force[k], self.angular_rate[k], 1)


@dataclass
class MimuFrame:
    """Synchronised outputs of ``J`` IMUs at one timestamp.

    Rows of ``specific_force`` / ``angular_rate`` follow the IMU index
    ``1..J``; a row of NaN marks a dropped sample.
    """

    t: float
    specific_force: np.ndarray
    angular_rate: np.ndarray

    @property
    def count(self):
        return self.specific_force.shape[0]

    @property
    def samples(self):
        return [
            ImuSample(self.t, self.specific_force[j], self.angular_rate[j], j + 1) for j in range(self.count)
        ]

    @classmethod
    def from_samples(cls, samples, tol=1e-9):
        from .vimu import check_frame_samples

        samples = check_frame_samples(samples, tol)
        return cls(
            samples[0].t,
            np.array([s.specific_force for s in samples], dtype=float),
            np.array([s.angular_rate for s in samples], dtype=float),
        )


@dataclass
class MimuLog:
    """``N`` synchronised frames from ``J`` IMUs, plus the injected biases."""

    t: np.ndarray
    specific_force: np.ndarray
    angular_rate: np.ndarray
    bias_a: np.ndarray | None = None
    bias_g: np.ndarray | None = None

    @property
    def count(self):
        return self.specific_force.shape[1]

    @property
    def dt(self):
        return float(np.median(np.diff(self.t))) if len(self.t) > 1 else float("nan")

    def __len__(self):
        return len(self.t)

    def frame(self, k):
        return MimuFrame(self.t[k], self.specific_force[k], self.angular_rate[k])

    def __iter__(self):
        for k in range(len(self.t)):
            yield self.frame(k)

    def select(self, imus):
        """Sub-array with the given 0-based IMU columns."""
        imus = list(imus)
        return MimuLog(
            self.t,
            self.specific_force[:, imus],
            self.angular_rate[:, imus],
            None if self.bias_a is None else self.bias_a[:, imus],
            None if self.bias_g is None else self.bias_g[:, imus],
        )


@dataclass
class AidingLog:
    """Noisy NED velocity fixes with per-axis standard deviation ``sigma``."""

    t: np.ndarray
    velocity: np.ndarray
    sigma: np.ndarray

    def __len__(self):
        return len(self.t)

    def measurement(self, i):
        from .eskf import VelocityMeasurement

        return VelocityMeasurement(self.t[i], self.velocity[i], self.sigma[i] ** 2 * np.eye(3))


@dataclass
class ScenarioRun:
    truth: Truth
    mimu_log: MimuLog
    aiding_log: AidingLog
    spec: TrajectorySpec
    noise: list


def _heading_profile(spec, t):
    """Heading and its first two derivatives."""
    psi0 = spec.heading
    r = spec.turn_rate
    zeros = np.zeros_like(t)
    if spec.kind in ("stationary", "line"):
        return psi0 + zeros, zeros, zeros
    if spec.kind == "circle":
        return psi0 + r * t, r + zeros, zeros
    if spec.kind == "s_curve":
        period = math.pi**2 / r
        w = 2.0 * math.pi / period
        return psi0 + 0.5 * math.pi * np.sin(w * t), 0.5 * math.pi * w * np.cos(w * t), -0.5 * math.pi * w * w * np.sin(w * t)
    # square: four (leg, raised-cosine 90 deg turn) blocks
    turn = math.pi / r
    block = spec.duration / 4.0
    leg = block - turn
    n_done = np.clip(np.floor(t / block), 0, 3)
    tau = np.clip(t - n_done * block - leg, 0.0, turn)
    in_turn = (tau > 0) & (tau < turn)
    w = 2.0 * math.pi / turn
    psi = psi0 + 0.5 * math.pi * n_done + 0.5 * r * (tau - np.sin(w * tau) / w)
    psid = np.where(in_turn, 0.5 * r * (1.0 - np.cos(w * tau)), 0.0)
    psidd = np.where(in_turn, 0.5 * r * w * np.sin(w * tau), 0.0)
    return psi, psid, psidd


def _kinematics(spec, t):
    psi, psid, _ = _heading_profile(spec, t)
    speed = 0.0 if spec.kind == "stationary" else spec.speed
    vn = speed * np.cos(psi)
    ve = speed * np.sin(psi)
    an = -speed * psid * np.sin(psi)
    ae = speed * psid * np.cos(psi)
    zeros = np.zeros_like(t)
    wave = spec.wave_model
    if wave is None or spec.kind == "stationary":
        heave = vd = ad = roll = rolld = pitch = pitchd = zeros
    else:
        w = 2.0 * math.pi / wave.period
        heave = wave.amplitude * np.sin(w * t)
        vd = wave.amplitude * w * np.cos(w * t)
        ad = -wave.amplitude * w * w * np.sin(w * t)
        # roll and pitch at incommensurate periods so the motion is not purely coning
        wr, wp = w * 0.9, w * 1.3
        roll = wave.roll_amplitude * np.sin(wr * t)
        rolld = wave.roll_amplitude * wr * np.cos(wr * t)
        pitch = wave.pitch_amplitude * np.sin(wp * t + 0.7)
        pitchd = wave.pitch_amplitude * wp * np.cos(wp * t + 0.7)
    return {
        "vel": np.stack([vn, ve, vd], axis=1),
        "acc": np.stack([an, ae, ad], axis=1),
        "heave": heave,
        "euler": np.stack([roll, pitch, psi], axis=1),
        "euler_rate": np.stack([rolld, pitchd, psid], axis=1),
    }


def _integrate_position(spec, t, vel, heave, em):
    lat0, lon0, h0 = spec.origin
    h = h0 - heave
    lat = np.full_like(t, lat0)
    dt = np.diff(t)
    for _ in range(3):
        r_n, r_m = _k.radii_many(lat, em.params)
        dlat = vel[:, 0] / (r_m + h)
        lat = lat0 + np.concatenate([[0.0], np.cumsum(0.5 * dt * (dlat[1:] + dlat[:-1]))])
    dlon = vel[:, 1] / ((r_n + h) * np.cos(lat))
    lon = lon0 + np.concatenate([[0.0], np.cumsum(0.5 * dt * (dlon[1:] + dlon[:-1]))])
    return np.stack([lat, lon, h], axis=1)


def generate_truth(spec, imu_rate=100.0, em=WGS84):
    """
    Kinematically consistent reference trajectory and ideal IMU outputs.

    Parameters
    ----------
    spec : TrajectorySpec
    imu_rate : float
        IMU sampling rate [Hz].

    Returns
    -------
    Truth
    """
    if not imu_rate > 0:
        raise UnsupportedSpec("IMU rate must be positive")
    n = int(round(spec.duration * imu_rate))
    if n < 1:
        raise UnsupportedSpec("duration shorter than one IMU interval")
    # half-step grid: even indices are IMU epochs, odd ones interval midpoints
    th = np.arange(2 * n + 1) / (2.0 * imu_rate)
    kin = _kinematics(spec, th)
    pos = _integrate_position(spec, th, kin["vel"], kin["heave"], em)

    geodesy._check_pole(float(np.max(np.abs(pos[:, 0]))))
    att, f_b, w_ib = _k.ideal_outputs(
        np.ascontiguousarray(kin["euler"]), np.ascontiguousarray(kin["euler_rate"]),
        np.ascontiguousarray(kin["vel"]), np.ascontiguousarray(kin["acc"]), np.ascontiguousarray(pos), em.params,
    )

    def simpson(x):
        return (x[0:-1:2] + 4.0 * x[1::2] + x[2::2]) / 6.0

    return Truth(
        t=th[::2].copy(),
        position=pos[::2].copy(),
        velocity=kin["vel"][::2].copy(),
        attitude=att[::2].copy(),
        specific_force=simpson(f_b),
        angular_rate=simpson(w_ib),
        rate=float(imu_rate),
    )


def corrupt(truth, noise):
    """
    Synthesize ``J`` IMU streams from the ideal outputs.

    Each IMU ``j`` reports ``truth + b_j(t) + w`` where ``b_j`` is a random walk
    started at the specified initial bias and ``w`` is white noise; all draws
    come from the generator seeded by ``noise[j].seed``.

    Returns
    -------
    MimuLog
    """
    if len(noise) < 1:
        raise ValueError("at least one NoiseSpec is required")
    n = len(truth.t) - 1
    dt = truth.dt
    sqrt_rate = math.sqrt(truth.rate)
    j_count = len(noise)
    f = np.empty((n, j_count, 3))
    w = np.empty((n, j_count, 3))
    b_a = np.empty((n, j_count, 3))
    b_g = np.empty((n, j_count, 3))
    for j, ns in enumerate(noise):
        rng = np.random.default_rng(ns.seed)
        white = rng.standard_normal((n, 6))
        walk = rng.standard_normal((n, 6))
        b_a[:, j] = ns.initial_bias_a + np.cumsum(ns.sigma_ba * math.sqrt(dt) * walk[:, :3], axis=0)
        b_g[:, j] = ns.initial_bias_g + np.cumsum(ns.sigma_bg * math.sqrt(dt) * walk[:, 3:], axis=0)
        f[:, j] = truth.specific_force + b_a[:, j] + ns.sigma_a * sqrt_rate * white[:, :3]
        w[:, j] = truth.angular_rate + b_g[:, j] + ns.sigma_g * sqrt_rate * white[:, 3:]
    return MimuLog(truth.t[1:].copy(), f, w, b_a, b_g)


def make_aiding(truth, rate, sigma_v, seed=0):
    """Velocity fixes at ``rate`` Hz with white noise ``sigma_v`` per axis."""
    if not rate > 0:
        raise ValueError(f"aiding rate must be positive, got {rate}")
    ratio = truth.rate / rate
    step = int(round(ratio))
    if step < 1 or abs(ratio - step) > 1e-9:
        raise ValueError(f"aiding rate {rate} Hz does not divide IMU rate {truth.rate} Hz")
    idx = np.arange(step, len(truth.t), step)
    rng = np.random.default_rng(seed)
    v = truth.velocity[idx] + sigma_v * rng.standard_normal((len(idx), 3))
    return AidingLog(truth.t[idx].copy(), v, np.full(len(idx), float(sigma_v)))


def simulate(spec, noise, imu_rate=100.0, aiding_rate=1.0, sigma_v=0.05, seed=0, truth=None):
    """Build a complete :class:`ScenarioRun` (truth may be passed in to reuse it)."""
    if truth is None:
        truth = generate_truth(spec, imu_rate)
    mimu = corrupt(truth, noise)
    aiding = make_aiding(truth, aiding_rate, sigma_v, seed)
    return ScenarioRun(truth, mimu, aiding, spec, list(noise))
