import math

import numpy as np
import pytest

from mimu_fuse import eskf, geodesy
from mimu_fuse import mechanization as mech
from mimu_fuse import simulator as sim
from mimu_fuse.geodesy import GeodeticPosition
from mimu_fuse.simulator import MimuFrame


def random_nav(rng, max_lat=1.2):
    pos = GeodeticPosition(rng.uniform(-max_lat, max_lat), rng.uniform(-3, 3), rng.uniform(-100, 1000))
    return mech.NavState(pos, rng.normal(0, 30, 3), geodesy.rotation_from_vector(rng.normal(0, 1.5, 3)))


def error_rate(nav, f_m, w_m, bhat, dx):
    """Nonlinear error dynamics: time derivative of [psi, dv] for a perturbed estimate.

    ``dx`` holds [psi, dv, residual biases]; the estimate is
    ``exp(skew(psi)) T``, ``v + dv`` and the true biases are ``bhat + dx[6:]``.
    """
    t = nav.attitude
    t_hat = geodesy.rotation_from_vector(dx[0:3]) @ t
    nav_hat = mech.NavState(nav.position, nav.velocity + dx[3:6], t_hat)
    b_true = bhat + dx[6:]
    t_dot = mech.attitude_rate(nav, mech.body_rate(w_m - b_true[3:6], nav))
    v_dot = mech.velocity_rate(nav, f_m - b_true[0:3])
    th_dot = mech.attitude_rate(nav_hat, mech.body_rate(w_m - bhat[3:6], nav_hat))
    vh_dot = mech.velocity_rate(nav_hat, f_m - bhat[0:3])
    psi_dot = th_dot @ t_hat.T + t_hat @ t_dot.T @ t @ t_hat.T
    return np.concatenate([geodesy.vee(psi_dot), vh_dot - v_dot])


def random_frame(rng, n_imu, nav):
    f = nav.attitude.T @ [0, 0, -9.8] + rng.normal(0, 2, (n_imu, 3))
    return MimuFrame(0.0, f, rng.normal(0, 0.3, (n_imu, 3)))


def unified_error_rate(nav, frame, bhat, dx):
    """Error dynamics of the array: only the mean bias and mean residual enter."""
    n = bhat.shape[0]
    resid = dx[6:].reshape(n, 6)
    d = np.concatenate([dx[:6], resid.mean(axis=0)])
    return error_rate(nav, frame.specific_force.mean(axis=0), frame.angular_rate.mean(axis=0), bhat.mean(axis=0), d)


def fd_steps(n):
    steps = np.full(n, 1e-5)
    steps[0:3] = 1e-4
    steps[3:6] = 1e-3
    return steps


def assert_jacobian_close(analytic, numeric, tol=1e-4, floor=1e-7):
    """Entrywise relative error with an absolute floor for structurally small entries."""
    rel = np.abs(analytic - numeric) / np.maximum(np.abs(numeric), floor)
    assert rel.max() < tol, f"worst entry {np.unravel_index(rel.argmax(), rel.shape)}: {rel.max():.3e}"


def noise_specs(n, sigma_a=0.002, sigma_g=math.radians(0.005), sigma_ba=1e-4, sigma_bg=math.radians(1e-3), biases=None, seed=0):
    out = []
    for j in range(n):
        ba = np.zeros(3) if biases is None else np.asarray(biases[j], dtype=float)
        out.append(sim.NoiseSpec(sigma_a, sigma_g, sigma_ba, sigma_bg, ba, np.zeros(3), seed=seed * 100 + j))
    return out


@pytest.fixture(scope="session")
def square_run():
    """Short noisy three-IMU square run shared by the filter tests."""
    spec = sim.TrajectorySpec(kind="square", duration=120.0, wave_model=sim.WaveModel())
    ns = [
        sim.NoiseSpec(0.01, math.radians(0.01), 1e-4, 1e-5, np.array([0.03, -0.02, 0.01]) * (j + 1), np.radians([0.05, 0.02, -0.03]), seed=j)
        for j in range(3)
    ]
    run = sim.simulate(spec, ns, seed=1)
    cfg = eskf.FilterConfig(initial_nav=run.truth.nav(0), noise=ns)
    return run, cfg


_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance verdict; the lines are printed in the terminal summary."""
    lines = request.config.stash.setdefault(_CRITERIA, [])

    def record(number, ok, detail):
        lines.append(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
