"""CSV readers and writers for IMU, aiding, truth and solution streams.

Every value is written with 17 significant digits so a write/read round trip
is bit-exact. Formats (header row mandatory)::

    IMU       t,imu_index,fx,fy,fz,wx,wy,wz
    aiding    t,vn,ve,vd,sigma
    truth     t,lat,lon,h,vn,ve,vd,roll,pitch,yaw
    solution  t,lat,lon,h,vn,ve,vd,roll,pitch,yaw[,extra columns]

Solution files carry ``# status = ok`` or ``# status = diverged`` and, for a
diverged run, ``# diverged_epoch = <n>`` comment lines ahead of the header.
Extra solution columns hold per-sensor bias estimates (``bax_1`` ...) and the
reported error-state sigmas (``sigma_1`` ...).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import geodesy
from ..errors import LogFormatError
from ..simulator import AidingLog, MimuLog

IMU_HEADER = ("t", "imu_index", "fx", "fy", "fz", "wx", "wy", "wz")
AIDING_HEADER = ("t", "vn", "ve", "vd", "sigma")
NAV_HEADER = ("t", "lat", "lon", "h", "vn", "ve", "vd", "roll", "pitch", "yaw")
BIAS_NAMES = ("bax", "bay", "baz", "bgx", "bgy", "bgz")


def fmt(x):
    return format(float(x), ".17g")


@dataclass
class NavTrack:
    """Time series of position, NED velocity and Euler angles.

    The common currency of truth and solution CSV files; ``extras`` maps any
    additional column names to their values.
    """

    t: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    euler: np.ndarray
    status: str = "ok"
    diverged_epoch: int | None = None
    name: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def diverged(self):
        return self.status == "diverged"

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_solution(cls, sol):
        """Track of a :class:`~mimu_fuse.solution.NavSolutionLog` with biases and sigmas as extras."""
        extras = {}
        n_imu = sol.biases.shape[1]
        for j in range(n_imu):
            for i, b in enumerate(BIAS_NAMES):
                extras[f"{b}_{j + 1}"] = sol.biases[:, j, i]
        for i in range(sol.sigma.shape[1]):
            extras[f"sigma_{i + 1}"] = sol.sigma[:, i]
        return cls(sol.t, sol.position, sol.velocity, sol.euler, sol.status, sol.diverged_epoch, sol.name, extras)

    @classmethod
    def from_truth(cls, truth):
        return cls(truth.t, truth.position, truth.velocity, truth.euler, name="truth")


def _as_track(obj):
    if isinstance(obj, NavTrack):
        return obj
    if hasattr(obj, "sigma"):
        return NavTrack.from_solution(obj)
    return NavTrack.from_truth(obj)


def _write_rows(path, header, rows, comments=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _read_rows(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise LogFormatError(f"cannot read {path}: {exc.strerror}") from None
    comments = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            comments[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise LogFormatError(f"{path}: missing header row")
    return tuple(h.strip() for h in rows[0]), rows[1:], comments


def _numeric(path, header, rows):
    try:
        data = np.array([[float(x) for x in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise LogFormatError(f"{path}: {exc}") from None
    if data.size == 0:
        data = np.empty((0, len(header)))
    if data.shape[1] != len(header):
        raise LogFormatError(f"{path}: rows must have {len(header)} columns")
    return data


def _check_header(path, header, expected, prefix_only=False):
    got = header[: len(expected)] if prefix_only else header
    if tuple(got) != tuple(expected):
        raise LogFormatError(f"{path}: header must start with {','.join(expected)}, got {','.join(header)}")


def write_imu_csv(path, mimu_log):
    """One row per IMU per frame, ``imu_index`` 1-based."""
    n, n_imu = len(mimu_log), mimu_log.count
    rows = []
    for k in range(n):
        tk = fmt(mimu_log.t[k])
        for j in range(n_imu):
            f = mimu_log.specific_force[k, j]
            w = mimu_log.angular_rate[k, j]
            rows.append([tk, str(j + 1), *map(fmt, f), *map(fmt, w)])
    return _write_rows(path, IMU_HEADER, rows)


def resample(t, values, grid, dt):
    """
    Nearest-neighbour samples of ``values`` on ``grid``.

    A grid point with no sample within ``dt / 2`` yields a NaN row (dropout).

    Raises
    ------
    LogFormatError
        If consecutive samples are more than ``2 dt`` apart.
    """
    if len(t) > 1 and np.max(np.diff(t)) > 2.0 * dt:
        k = int(np.argmax(np.diff(t)))
        raise LogFormatError(f"gap of {t[k + 1] - t[k]:.6g} s after t={t[k]:.6g} exceeds twice the sample interval")
    idx = np.clip(np.searchsorted(t, grid), 0, len(t) - 1)
    prev = np.clip(idx - 1, 0, len(t) - 1)
    idx = np.where(np.abs(grid - t[prev]) <= np.abs(t[idx] - grid), prev, idx)
    out = values[idx].astype(float)
    out[np.abs(t[idx] - grid) > 0.5 * dt] = np.nan
    return out


def read_imu_csv(path):
    """
    Read an IMU CSV into a :class:`~mimu_fuse.simulator.MimuLog`.

    When every IMU reports on identical timestamps the values are used as
    they are. Otherwise each IMU is resampled onto the timestamps of IMU 1
    that fall within the span all IMUs cover, by nearest neighbour within
    half the median interval of IMU 1.
    """
    header, rows, _ = _read_rows(path)
    _check_header(path, header, IMU_HEADER)
    data = _numeric(path, header, rows)
    if len(data) == 0:
        raise LogFormatError(f"{path}: no samples")
    index = data[:, 1].astype(int)
    if not np.array_equal(index, data[:, 1]) or index.min() < 1:
        raise LogFormatError(f"{path}: imu_index must be a positive integer")
    n_imu = int(index.max())
    if set(np.unique(index)) != set(range(1, n_imu + 1)):
        raise LogFormatError(f"{path}: imu_index values must be dense in 1..J")
    streams = []
    for j in range(1, n_imu + 1):
        s = data[index == j]
        s = s[np.argsort(s[:, 0], kind="stable")]
        if np.any(np.diff(s[:, 0]) <= 0):
            raise LogFormatError(f"{path}: IMU {j} timestamps not strictly increasing")
        streams.append(s)
    same = all(len(s) == len(streams[0]) and np.array_equal(s[:, 0], streams[0][:, 0]) for s in streams)
    if same:
        t = streams[0][:, 0].copy()
        f = np.stack([s[:, 2:5] for s in streams], axis=1)
        w = np.stack([s[:, 5:8] for s in streams], axis=1)
        return MimuLog(t, f, w)
    if len(streams[0]) < 2:
        raise LogFormatError(f"{path}: cannot infer a sample interval")
    dt = float(np.median(np.diff(streams[0][:, 0])))
    start = max(s[0, 0] for s in streams)
    stop = min(s[-1, 0] for s in streams)
    if stop < start:
        raise LogFormatError(f"{path}: IMU streams do not overlap in time")
    t1 = streams[0][:, 0]
    grid = t1[(t1 >= start - 0.5 * dt) & (t1 <= stop + 0.5 * dt)]
    f = np.stack([resample(s[:, 0], s[:, 2:5], grid, dt) for s in streams], axis=1)
    w = np.stack([resample(s[:, 0], s[:, 5:8], grid, dt) for s in streams], axis=1)
    return MimuLog(grid, f, w)


def write_aiding_csv(path, aiding_log):
    rows = [
        [fmt(aiding_log.t[i]), *map(fmt, aiding_log.velocity[i]), fmt(aiding_log.sigma[i])]
        for i in range(len(aiding_log))
    ]
    return _write_rows(path, AIDING_HEADER, rows)


def read_aiding_csv(path):
    header, rows, _ = _read_rows(path)
    _check_header(path, header, AIDING_HEADER)
    data = _numeric(path, header, rows)
    if np.any(np.diff(data[:, 0]) <= 0):
        raise LogFormatError(f"{path}: timestamps not strictly increasing")
    if np.any(data[:, 4] <= 0):
        raise LogFormatError(f"{path}: sigma must be positive")
    return AidingLog(data[:, 0].copy(), data[:, 1:4].copy(), data[:, 4].copy())


def write_nav_csv(path, obj):
    """
    Write a truth or solution stream.

    ``obj`` may be a :class:`NavTrack`, a
    :class:`~mimu_fuse.solution.NavSolutionLog` or a
    :class:`~mimu_fuse.simulator.Truth`.
    """
    track = _as_track(obj)
    extra_names = list(track.extras)
    comments = []
    if hasattr(obj, "sigma") or isinstance(obj, NavTrack) and track.name != "truth":
        comments.append(f"status = {track.status}")
        if track.diverged_epoch is not None:
            comments.append(f"diverged_epoch = {track.diverged_epoch}")
        if track.name:
            comments.append(f"name = {track.name}")
    cols = [
        track.t[:, None],
        track.position,
        track.velocity,
        track.euler,
        *[np.asarray(track.extras[n])[:, None] for n in extra_names],
    ]
    table = np.hstack(cols)
    rows = [[fmt(x) for x in r] for r in table]
    return _write_rows(path, NAV_HEADER + tuple(extra_names), rows, comments)


def read_nav_csv(path):
    header, rows, comments = _read_rows(path)
    _check_header(path, header, NAV_HEADER, prefix_only=True)
    data = _numeric(path, header, rows)
    if np.any(np.diff(data[:, 0]) <= 0):
        raise LogFormatError(f"{path}: timestamps not strictly increasing")
    status = comments.get("status", "ok")
    if status not in ("ok", "diverged"):
        raise LogFormatError(f"{path}: unknown status {status!r}")
    epoch = comments.get("diverged_epoch")
    extras = {name: data[:, 10 + i].copy() for i, name in enumerate(header[10:])}
    return NavTrack(
        data[:, 0].copy(),
        data[:, 1:4].copy(),
        data[:, 4:7].copy(),
        data[:, 7:10].copy(),
        status,
        None if epoch is None else int(epoch),
        comments.get("name", ""),
        extras,
    )


def track_attitude(track):
    """Body-to-NED rotation matrices of a track's Euler angles."""
    return np.array([geodesy.euler_to_dcm(*e) for e in track.euler])
