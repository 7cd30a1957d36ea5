
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mimu_fuse import eskf, geodesy, uekf, vimu
from mimu_fuse import mechanization as mech
from mimu_fuse import simulator as sim
from mimu_fuse.errors import DegenerateErrors
from mimu_fuse.geodesy import GeodeticPosition
from mimu_fuse.simulator import MimuFrame

from conftest import assert_jacobian_close, fd_steps, random_frame, random_nav, unified_error_rate

positive = st.floats(1e-6, 1e3)


def test_unified_rates_single_imu():
    rng = np.random.default_rng(0)
    nav = random_nav(rng)
    frame = random_frame(rng, 1, nav)
    b = rng.normal(0, 0.01, (1, 6))
    t_dot, v_dot = uekf.unified_rates(frame, nav, b)
    np.testing.assert_array_equal(t_dot, mech.attitude_rate(nav, mech.body_rate(frame.angular_rate[0] - b[0, 3:], nav)))
    np.testing.assert_array_equal(v_dot, mech.velocity_rate(nav, frame.specific_force[0] - b[0, :3]))


def test_unified_rates_identical_samples():
    rng = np.random.default_rng(1)
    nav = random_nav(rng)
    one = random_frame(rng, 1, nav)
    three = MimuFrame(0.0, np.repeat(one.specific_force, 3, axis=0), np.repeat(one.angular_rate, 3, axis=0))
    b1 = rng.normal(0, 0.01, (1, 6))
    for a, b in zip(uekf.unified_rates(one, nav, b1), uekf.unified_rates(three, nav, np.repeat(b1, 3, axis=0))):
        np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("n_imu", [2, 3, 7])
def test_unified_rates_equal_mechanization_on_average(n_imu):
    rng = np.random.default_rng(n_imu)
    for _ in range(200):
        nav = random_nav(rng)
        frame = random_frame(rng, n_imu, nav)
        b = rng.normal(0, 0.02, (n_imu, 6))
        avg = vimu.average_frame(frame)
        mb = vimu.array_mean(b)
        t_dot, v_dot = uekf.unified_rates(frame, nav, b)
        np.testing.assert_array_equal(t_dot, mech.attitude_rate(nav, mech.body_rate(avg.angular_rate - mb[3:], nav)))
        np.testing.assert_array_equal(v_dot, mech.velocity_rate(nav, avg.specific_force - mb[:3]))


def test_F_single_imu_equals_12_state():
    nav = random_nav(np.random.default_rng(2))
    f = np.array([0.3, -0.1, -9.7])
    np.testing.assert_array_equal(uekf.build_F_uekf(nav, f, 1), eskf.build_F(nav, f))


def test_F_bias_blocks_scale_with_array_size():
    nav = random_nav(np.random.default_rng(3))
    F = uekf.build_F_uekf(nav, np.array([0.0, 0.0, -9.8]), 3)
    assert F.shape == (24, 24)
    for j in range(3):
        c = 6 + 6 * j
        np.testing.assert_allclose(F[0:3, c + 3 : c + 6], nav.attitude / 3, rtol=1e-15)
        np.testing.assert_allclose(F[3:6, c : c + 3], nav.attitude / 3, rtol=1e-15)
    assert np.all(F[6:] == 0)


@pytest.mark.parametrize("n_imu", [1, 2, 3])
def test_F_matches_finite_differences(n_imu):
    rng = np.random.default_rng(10 + n_imu)
    n = 6 + 6 * n_imu
    steps = fd_steps(n)
    for _ in range(30):
        nav = random_nav(rng)
        frame = random_frame(rng, n_imu, nav)
        bhat = rng.normal(0, 0.05, (n_imu, 6))
        F = uekf.build_F_uekf(nav, frame.specific_force.mean(axis=0) - bhat[:, :3].mean(axis=0), n_imu)
        fd = np.zeros((6, n))
        for i, eps in enumerate(steps):
            e = np.zeros(n)
            e[i] = eps
            fd[:, i] = (unified_error_rate(nav, frame, bhat, e) - unified_error_rate(nav, frame, bhat, -e)) / (2 * eps)
        assert_jacobian_close(F[:6], fd)


def test_G_single_imu_equals_12_state():
    nav = random_nav(np.random.default_rng(4))
    np.testing.assert_array_equal(uekf.build_G_uekf(nav, 1), eskf.build_G(nav))


def test_G_noise_routing():
    nav = mech.NavState(GeodeticPosition(0.3, 0, 0), np.zeros(3))
    n = 3
    G = uekf.build_G_uekf(nav, n)
    assert G.shape == (24, 36)
    w = np.zeros(36)
    w[3:6] = [1.0, 2.0, 3.0]  # accel white noise of the second IMU
    out = G @ w
    np.testing.assert_allclose(out[3:6], w[3:6] / n)
    assert np.all(out[6:] == 0) and np.all(out[:3] == 0)
    wb = np.zeros(36)
    wb[18 + 3 : 18 + 6] = 1.0  # accel bias driving noise of the second IMU
    out = G @ wb
    np.testing.assert_array_equal(np.nonzero(out)[0], [12, 13, 14])


def test_G_velocity_noise_follows_variance_law():
    nav = mech.NavState(GeodeticPosition(0.3, 0, 0), np.zeros(3))
    n, sa = 3, 0.02
    q = eskf.process_noise_diagonal([sim.NoiseSpec(sa, 1e-3, 1e-4, 1e-5)] * n)
    G = uekf.build_G_uekf(nav, n)
    np.testing.assert_allclose((G @ np.diag(q) @ G.T)[3:6, 3:6], sa**2 / n * np.eye(3), rtol=1e-14)


def test_H_layout():
    h = uekf.measurement_matrix(3)
    assert h.shape == (3, 24)
    np.testing.assert_array_equal(h[:, 3:6], np.eye(3))
    assert np.count_nonzero(h) == 3


def _rest_frame(nav, n_imu):
    g = geodesy.gravity_nav(nav.position)
    f = np.tile(-nav.attitude.T @ g, (n_imu, 1))
    w = np.tile(nav.attitude.T @ geodesy.earth_rate_nav(nav.position), (n_imu, 1))
    return MimuFrame(0.01, f, w)


def test_predict_single_imu_matches_eskf():
    rng = np.random.default_rng(5)
    nav = random_nav(rng)
    a = rng.normal(size=(12, 12))
    p = a @ a.T * 1e-3
    b = rng.normal(0, 0.01, 6)
    noise = sim.NoiseSpec(0.01, 1e-3, 1e-4, 1e-5)
    frame = random_frame(rng, 1, nav)
    fs = eskf.predict(eskf.FilterState12(nav, p, b[:3], b[3:]), frame.samples[0], 0.01, noise)
    us = uekf.uekf_predict(uekf.UekfState(nav, p, b[None]), frame, 0.01, [noise])
    np.testing.assert_array_equal(us.P, fs.P)
    np.testing.assert_array_equal(us.nav.attitude, fs.nav.attitude)
    np.testing.assert_array_equal(us.nav.velocity, fs.nav.velocity)


def test_predict_without_noise_is_pure_transition():
    rng = np.random.default_rng(6)
    nav = random_nav(rng)
    a = rng.normal(size=(24, 24))
    p = a @ a.T * 1e-3
    frame = random_frame(rng, 3, nav)
    out = uekf.uekf_predict(uekf.UekfState(nav, p, np.zeros((3, 6))), frame, 0.01, [sim.NoiseSpec()] * 3)
    F = uekf.build_F_uekf(out.nav, frame.specific_force.mean(axis=0), 3)
    phi = np.eye(24) + F * 0.01
    np.testing.assert_allclose(out.P, phi @ p @ phi.T, rtol=1e-12, atol=1e-18)


def test_shared_velocity_variance_grows_at_one_third():
    nav = mech.NavState(GeodeticPosition(0.6, 0, 0), np.zeros(3))
    growth = {}
    for n in (1, 3):
        s = uekf.UekfState(nav, np.zeros((6 + 6 * n, 6 + 6 * n)), np.zeros((n, 6)))
        frame = _rest_frame(nav, n)
        for _ in range(1000):
            s = uekf.uekf_predict(s, frame, 0.01, [sim.NoiseSpec(sigma_a=0.01)] * n)
        growth[n] = np.diag(s.P)[3:6]
    np.testing.assert_allclose(growth[3] / growth[1], 1 / 3, rtol=0.02)


def test_redistribute_hand_example():
    np.testing.assert_array_equal(uekf.redistribute_variances([1.0, 1.0], [3.0, 1.0]), [1.5, 0.5])


def test_redistribute_fixed_point():
    var = np.array([0.2, 0.5, 0.3])
    np.testing.assert_allclose(uekf.redistribute_variances(var, [0.7, 0.7, 0.7]), [1 / 3] * 3, rtol=1e-15)
    np.testing.assert_allclose(uekf.redistribute_variances([0.4, 0.4], [2.0, 2.0]), [0.4, 0.4], rtol=1e-15)


def test_redistribute_degenerate():
    with pytest.raises(DegenerateErrors):
        uekf.redistribute_variances([1.0, 1.0], [0.0, 0.0])


@settings(max_examples=300)
@given(st.integers(2, 7).flatmap(lambda n: st.tuples(arrays(np.float64, n, elements=positive), arrays(np.float64, n, elements=positive))), st.booleans())
def test_redistribute_conserves_and_ranks(data, squared):
    var, e = data
    new = uekf.redistribute_variances(var, e, squared)
    assert new.sum() == pytest.approx(var.sum(), rel=1e-12)
    order = np.argsort(e, kind="stable")
    assert np.all(np.diff(new[order]) >= 0)


def _random_state(rng, n):
    dim = 6 + 6 * n
    a = rng.normal(size=(dim, dim))
    return uekf.UekfState(random_nav(rng), a @ a.T / dim, rng.normal(0, 0.01, (n, 6)))


@pytest.mark.parametrize("gyro", [False, True])
def test_bvr_on_state(gyro):
    rng = np.random.default_rng(7)
    n = 3
    s = _random_state(rng, n)
    acc = uekf.BvrAccumulator(rng.normal(0, 1.0, (n, 6)) * 20, 20)
    sums = acc.sums.copy()
    out = uekf.bvr_redistribute(s, acc, gyro=gyro)
    assert acc.count == 0 and np.all(acc.sums == 0)
    d0, d1 = np.diag(s.P), np.diag(out.P)
    for c in range(6):
        idx = [6 + 6 * j + c for j in range(n)]
        if c < 3 or gyro:
            assert d1[idx].sum() == pytest.approx(d0[idx].sum(), rel=1e-12)
            np.testing.assert_array_equal(np.argsort(d1[idx]), np.argsort(np.abs(sums[:, c])))
        else:
            np.testing.assert_array_equal(d1[idx], d0[idx])
    corr = lambda p: p / np.sqrt(np.outer(np.diag(p), np.diag(p)))  # noqa: E731
    np.testing.assert_allclose(corr(out.P), corr(s.P), atol=1e-12)
    np.testing.assert_array_equal(out.P, out.P.T)
    assert np.linalg.eigvalsh(out.P)[0] >= -1e-10 * np.trace(out.P)


def test_bvr_skips_degenerate_channel():
    rng = np.random.default_rng(8)
    s = _random_state(rng, 2)
    sums = rng.normal(size=(2, 6))
    sums[:, 1] = 0.0
    out = uekf.bvr_redistribute(s, uekf.BvrAccumulator(sums, 4), gyro=False)
    assert out.skipped == ("ay",)
    idx = [7, 13]
    np.testing.assert_array_equal(np.diag(out.P)[idx], np.diag(s.P)[idx])


def test_bvr_needs_samples():
    with pytest.raises(ValueError):
        uekf.bvr_redistribute(_random_state(np.random.default_rng(0), 2), uekf.BvrAccumulator.zeros(2))


def test_accumulator_errors():
    acc = uekf.BvrAccumulator.zeros(2)
    b = np.zeros((2, 6))
    b[1, 0] = 1.0
    acc.add(np.array([[1.0, 0, 0], [4.0, 0, 0]]), np.zeros((2, 3)), b)
    acc.add(np.array([[3.0, 0, 0], [6.0, 0, 0]]), np.zeros((2, 3)), b)
    # corrected x: (1, 3) then (3, 5); mean 2 then 4; errors -1, +1 twice
    np.testing.assert_allclose(acc.mean_errors()[:, 0], [-1.0, 1.0])
    assert acc.count == 2


def test_update_single_imu_matches_eskf():
    rng = np.random.default_rng(9)
    nav = random_nav(rng)
    a = rng.normal(size=(12, 12))
    p = a @ a.T * 1e-2
    b = rng.normal(0, 0.01, 6)
    z = eskf.VelocityMeasurement(1.0, nav.velocity + rng.normal(0, 0.1, 3), 0.01 * np.eye(3))
    fs = eskf.update(eskf.FilterState12(nav, p, b[:3], b[3:]), z)
    us = uekf.uekf_update(uekf.UekfState(nav, p, b[None]), z, bvr=False)
    np.testing.assert_array_equal(us.P, fs.P)
    np.testing.assert_array_equal(us.correction, fs.correction)
    np.testing.assert_array_equal(us.biases[0], np.concatenate([fs.bias_a_hat, fs.bias_g_hat]))
    np.testing.assert_array_equal(us.nav.attitude, fs.nav.attitude)


def test_update_with_bvr_contracts_velocity():
    rng = np.random.default_rng(10)
    s = _random_state(rng, 3)
    acc = uekf.BvrAccumulator(rng.normal(size=(3, 6)), 5)
    z = eskf.VelocityMeasurement(1.0, s.nav.velocity + 0.1, 0.01 * np.eye(3))
    out = uekf.uekf_update(s, z, acc, bvr=True)
    assert np.trace(out.P[3:6, 3:6]) <= np.trace(s.P[3:6, 3:6])
    assert np.all(out.error_mean == 0)


def test_run_single_imu_matches_simu(square_run):
    run, cfg = square_run
    log = run.mimu_log.select([0])
    a = eskf.run_simu(log, run.aiding_log, cfg)
    for bvr in (False, True):
        b = uekf.run_uekf(log, run.aiding_log, cfg, bvr=bvr)
        for name in ("position", "velocity", "attitude", "biases", "sigma"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_run_reports_covariance_discipline(square_run):
    run, cfg = square_run
    sol = uekf.run_uekf(run.mimu_log, run.aiding_log, cfg, bvr=True)
    assert sol.status == "ok"
    assert sol.psd_violations == 0 and sol.velocity_trace_increases == 0
    assert sol.biases.shape == (len(sol.t), 3, 6)
    assert sol.sigma.shape[1] == 24
