"""Filter output container shared by all fusion schemes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geodesy


@dataclass
class NavSolutionLog:
    """Time history produced by one filter run.

    Epoch 0 is the initial state; epoch ``k`` follows the ``k``-th IMU frame
    (and the aiding update at that time, if any).

    Attributes
    ----------
    biases : ndarray, shape (N + 1, J, 6)
        Per-sensor ``[b_a, b_g]`` estimates (``J = 1`` for single/virtual IMU).
    sigma : ndarray, shape (N + 1, n_states)
        Square roots of the error-state covariance diagonal.
    status : {"ok", "diverged"}
    diverged_epoch : int or None
        Aiding epoch index at which divergence was declared.
    """

    name: str
    t: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    biases: np.ndarray
    sigma: np.ndarray
    status: str = "ok"
    diverged_epoch: int | None = None
    psd_violations: int = 0
    velocity_trace_increases: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def euler(self):
        return geodesy.dcm_to_euler(self.attitude)

    @property
    def diverged(self):
        return self.status == "diverged"

    def __len__(self):
        return len(self.t)
