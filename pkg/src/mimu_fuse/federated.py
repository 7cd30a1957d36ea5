"""Federated filter: one 12-state filter per IMU, fused by weighted least squares.

At every aiding epoch each local filter is corrected, the local attitude
(Euler angles) and velocity solutions are fused with weights from their 6x6
attitude/velocity covariances, and every local is then reset to the fused
solution with its attitude/velocity covariance deflated by ``alpha_F``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from . import _kernels as _k
from .eskf import (
    MAX_INNOVATION_COND,
    PSD_TOL,
    FilterState12,
    aiding_arrays,
    process_noise_diagonal,
    start_time,
)
from .errors import SingularWeightMatrix
from .mechanization import NavState
from .solution import NavSolutionLog

#: Largest condition number of the fused weight matrix.
MAX_WEIGHT_COND = 1e12

_REASONS = {
    _k.POLE: "pole singularity",
    _k.NONFINITE: "non-finite state",
    _k.NOT_PSD: "covariance not PSD",
    _k.INNOVATION: "singular innovation or weight matrix",
}


@dataclass
class FederatedBank:
    locals: list
    alpha_f: float = 0.9

    def __post_init__(self):
        if not 0 < self.alpha_f <= 1:
            raise ValueError(f"alpha_f must lie in (0, 1], got {self.alpha_f}")
        if not self.locals:
            raise ValueError("a federated bank needs at least one local filter")


@dataclass
class GlobalSolution:
    """Fused Euler angles ``(roll, pitch, yaw)`` [rad] and NED velocity [m/s]."""

    attitude: np.ndarray
    velocity: np.ndarray
    covariance: np.ndarray | None = None

    @property
    def beta(self):
        return np.concatenate([self.attitude, self.velocity])


def build_PF(locals_):
    """Block-diagonal ``6J x 6J`` matrix of the locals' attitude/velocity covariances."""
    return block_diag(*[np.asarray(fs.P)[0:6, 0:6] for fs in locals_])


def local_observations(locals_):
    """Stacked ``[roll, pitch, yaw, vn, ve, vd]`` of each local, shape ``(J, 6)``."""
    return np.array([np.concatenate([_k.dcm_to_euler(fs.nav.attitude), fs.nav.velocity]) for fs in locals_])


def wls_fuse(locals_, max_cond=MAX_WEIGHT_COND):
    """
    Weighted least-squares fusion of the local solutions.

    Solves ``beta = (X^T P_F^-1 X)^-1 X^T P_F^-1 y`` where ``X`` stacks one
    ``6 x 6`` identity per local. Because ``P_F`` is block diagonal this is an
    information-weighted mean of the local ``[euler, v]`` vectors. Local yaw
    angles are first moved to the branch nearest the first local's yaw.

    Raises
    ------
    SingularWeightMatrix
        If ``P_F`` is not positive definite or its condition number exceeds
        ``max_cond``.
    """
    ys = local_observations(locals_)
    blocks = np.array([np.asarray(fs.P)[0:6, 0:6] for fs in locals_])
    beta, cov, ok = _k.wls_fuse(ys, blocks, max_cond)
    if not ok:
        raise SingularWeightMatrix("federated weight matrix is singular or ill-conditioned")
    return GlobalSolution(beta[0:3], beta[3:6], cov)


def federated_reset(locals_, solution, alpha_f):
    """
    Reset every local to the global solution.

    Attitude and velocity are overwritten; the attitude/velocity covariance
    block is multiplied by ``alpha_f`` and its cross-covariance with the
    biases by ``sqrt(alpha_f)``, which keeps each covariance positive
    semidefinite. Bias estimates and their covariance are untouched.
    """
    if not 0 < alpha_f <= 1:
        raise ValueError(f"alpha_f must lie in (0, 1], got {alpha_f}")
    beta = solution.beta
    out = []
    for fs in locals_:
        v, t, p = _k.federated_reset(fs.nav.velocity, fs.nav.attitude, fs.P, beta, float(alpha_f))
        out.append(FilterState12(NavState(fs.nav.position, v, t), p, fs.bias_a_hat, fs.bias_g_hat))
    return out


def run_federated(mimu_log, aiding_log, cfg, alpha_f=None):
    """
    Federated solution of an array log.

    Numerical failures and divergence are reported through ``status`` rather
    than raised. The run is declared diverged when the fused velocity differs
    from the aiding velocity by more than ``cfg.divergence_factor`` aiding
    sigmas on some axis for ``cfg.divergence_epochs`` consecutive aiding
    epochs; ``diverged_epoch`` is then the aiding epoch index.
    """
    alpha_f = cfg.alpha_f if alpha_f is None else alpha_f
    if not 0 < alpha_f <= 1:
        raise ValueError(f"alpha_f must lie in (0, 1], got {alpha_f}")
    n_imu = mimu_log.count
    if len(cfg.noise) < n_imu:
        raise ValueError(f"need {n_imu} noise specs, got {len(cfg.noise)}")
    q = np.array([process_noise_diagonal([cfg.noise[j]]) for j in range(n_imu)])
    index, aid_v, aid_r, aid_sigma = aiding_arrays(mimu_log.t, aiding_log)
    nav = cfg.initial_nav
    lat, lon, h = nav.position
    t0 = start_time(mimu_log)
    pos, vel, att, bias, sig, counters, status, k_fail, diverged_at = _k.run_federated(
        np.ascontiguousarray(mimu_log.specific_force, dtype=float),
        np.ascontiguousarray(mimu_log.angular_rate, dtype=float),
        np.asarray(mimu_log.t, dtype=float), float(t0), index, aid_v, aid_r, aid_sigma,
        float(lat), float(lon), float(h), np.array(nav.velocity, dtype=float), np.array(nav.attitude, dtype=float),
        cfg.init.covariance(1), q, float(alpha_f), bool(cfg.joseph), cfg.em.params, PSD_TOL,
        -1.0 if cfg.monitor_tol is None else float(cfg.monitor_tol), MAX_INNOVATION_COND, MAX_WEIGHT_COND,
        float(cfg.divergence_factor), int(cfg.divergence_epochs),
    )
    extras = {"alpha_f": alpha_f}
    diverged_epoch = int(diverged_at) if diverged_at >= 0 else None
    if status != _k.OK:
        extras["failure"] = _REASONS[status]
        extras["failure_time"] = float(mimu_log.t[k_fail])
        if diverged_epoch is None:
            # aiding epochs completed before the failing frame
            diverged_epoch = int(np.count_nonzero(index[: k_fail + 1] >= 0))
    t = np.concatenate([[t0], mimu_log.t])
    return NavSolutionLog(
        "federated", t, pos, vel, att, bias, sig,
        status="diverged" if diverged_epoch is not None else "ok",
        diverged_epoch=diverged_epoch,
        psd_violations=int(counters[0]),
        velocity_trace_increases=int(counters[1]),
        extras=extras,
    )
