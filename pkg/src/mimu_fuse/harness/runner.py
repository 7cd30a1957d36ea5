"""Scenario construction, filter dispatch, Monte Carlo batches and the array-size sweep."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import eskf, federated, geodesy, simulator, uekf, vimu
from ..errors import ConfigError, MimuFuseError, UnsupportedSpec
from ..geodesy import GeodeticPosition
from ..mechanization import NavState
from .metrics import RmseReport, RmseRow, aggregate, improvement, rmse

THREADS_ENV = "MIMU_FUSE_THREADS"

# fixed sub-stream keys so every random draw is a pure function of the seed
_AIDING_KEY = 1_000_001
_INIT_KEY = 1_000_002


def trajectory_spec(cfg):
    wave = simulator.WaveModel(cfg.wave_amplitude, cfg.wave_period) if cfg.waves else None
    return simulator.TrajectorySpec(
        kind=cfg.kind,
        duration=cfg.duration,
        speed=cfg.speed,
        turn_rate=cfg.turn_rate,
        wave_model=wave,
        origin=GeodeticPosition(cfg.latitude, cfg.longitude, 0.0),
    )


_TRUTH_CACHE = {}


def truth_for(cfg):
    """Reference trajectory of ``cfg`` (cached; truth does not depend on the seed)."""
    try:
        spec = trajectory_spec(cfg)
    except UnsupportedSpec as exc:
        raise ConfigError("scenario", str(exc)) from None
    key = (repr(spec), float(cfg.imu_rate))
    if key not in _TRUTH_CACHE:
        if len(_TRUTH_CACHE) >= 8:
            _TRUTH_CACHE.pop(next(iter(_TRUTH_CACHE)))
        _TRUTH_CACHE[key] = simulator.generate_truth(spec, cfg.imu_rate)
    return _TRUTH_CACHE[key]


def build_noise(cfg, seed, n_imu=None):
    """
    Per-IMU noise specs for one Monte Carlo seed.

    IMU ``j`` draws its initial biases and its noise-stream seed from
    ``SeedSequence([seed, j])`` only, so its data do not depend on the other
    sensors or on the array size.
    """
    n_imu = cfg.n_imu if n_imu is None else n_imu
    out = []
    for j in range(n_imu):
        ss = np.random.SeedSequence([seed, j])
        rng = np.random.default_rng(ss)
        ba = rng.normal(0.0, cfg.bias_a_std, 3)
        bg = rng.normal(0.0, cfg.bias_g_std, 3)
        ba = np.asarray(cfg.bias_a.get(j + 1, ba), dtype=float)
        bg = np.asarray(cfg.bias_g.get(j + 1, bg), dtype=float)
        stream = int(ss.spawn(1)[0].generate_state(1, np.uint64)[0])
        out.append(simulator.NoiseSpec(cfg.sigma_a, cfg.sigma_g, cfg.sigma_ba, cfg.sigma_bg, ba, bg, stream))
    return out


def build_run(cfg, seed, n_imu=None):
    """Complete synthetic :class:`~mimu_fuse.simulator.ScenarioRun` for one seed."""
    truth = truth_for(cfg)
    noise = build_noise(cfg, seed, n_imu)
    aid_seed = int(np.random.SeedSequence([seed, _AIDING_KEY]).generate_state(1, np.uint64)[0])
    return simulator.simulate(
        trajectory_spec(cfg), noise, cfg.imu_rate, cfg.aiding_rate, cfg.aiding_sigma, aid_seed, truth=truth
    )


def initial_uncertainty(cfg):
    return eskf.InitialUncertainty(cfg.init_attitude, cfg.init_yaw, cfg.init_velocity, cfg.init_bias_a, cfg.init_bias_g)


def initial_nav(cfg, truth_nav, seed):
    """Truth perturbed by draws from the initial attitude and velocity uncertainty.

    Returns the truth unchanged when ``cfg.init_perturb`` is off.
    """
    if not cfg.init_perturb:
        return truth_nav.copy()
    rng = np.random.default_rng(np.random.SeedSequence([seed, _INIT_KEY]))
    psi = rng.standard_normal(3) * np.array([cfg.init_attitude, cfg.init_attitude, cfg.init_yaw])
    dv = rng.standard_normal(3) * cfg.init_velocity
    att = geodesy.rotation_from_vector(psi) @ truth_nav.attitude
    return NavState(truth_nav.position, truth_nav.velocity + dv, att)


def filter_config(cfg, noise, nav0):
    return eskf.FilterConfig(
        initial_nav=nav0,
        noise=list(noise),
        init=initial_uncertainty(cfg),
        joseph=cfg.joseph,
        bvr=cfg.bvr,
        bvr_gyro=cfg.bvr_gyro,
        bvr_squared=cfg.bvr_squared,
        alpha_f=cfg.alpha_f,
        divergence_factor=cfg.divergence_factor,
        divergence_epochs=cfg.divergence_epochs,
        vimu_scale_bias_noise=cfg.vimu_scale_bias_noise,
    )


def run_filter(name, mimu_log, aiding_log, fcfg):
    """Dispatch one filter by name."""
    if name == "simu":
        return eskf.run_simu(mimu_log, aiding_log, fcfg)
    if name == "vimu":
        return vimu.run_vimu(mimu_log, aiding_log, fcfg)
    if name == "federated":
        return federated.run_federated(mimu_log, aiding_log, fcfg)
    if name == "uekf":
        return uekf.run_uekf(mimu_log, aiding_log, fcfg, bvr=False)
    if name == "uekf_bvr":
        return uekf.run_uekf(mimu_log, aiding_log, fcfg, bvr=True)
    raise ConfigError("filter", f"unknown filter {name!r}")


@dataclass
class ScenarioResult:
    seed: int
    run: simulator.ScenarioRun
    solutions: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    @property
    def report(self):
        return RmseReport(self.rows)

    @property
    def any_diverged(self):
        return any(s.diverged for s in self.solutions.values()) or bool(self.failures)


def run_scenario(cfg, seed=None, filters=None, n_imu=None):
    """
    Simulate one seed of ``cfg`` and run the requested filters on it.

    Numerical failures of a filter are recorded in ``failures`` (and as a
    diverged row) instead of aborting the other filters.
    """
    seed = cfg.seed if seed is None else seed
    run = build_run(cfg, seed, n_imu)
    fcfg = filter_config(cfg, run.noise, initial_nav(cfg, run.truth.nav(0), seed))
    result = ScenarioResult(seed, run)
    for name in filters or cfg.filters:
        try:
            sol = run_filter(name, run.mimu_log, run.aiding_log, fcfg)
        except (FloatingPointError, MimuFuseError) as exc:
            if isinstance(exc, ConfigError):
                raise
            result.failures[name] = f"{type(exc).__name__}: {exc}"
            result.rows.append(RmseRow(cfg.kind, name, duration=cfg.duration, diverged_seeds=1))
            continue
        result.solutions[name] = sol
        result.rows.append(rmse(sol, run.truth, cfg.kind, name))
    return result


def _trial(args):
    cfg, seed, filters = args
    res = run_scenario(cfg, seed, filters)
    return seed, res.rows, res.failures


def worker_count(n_jobs):
    try:
        cap = int(os.environ.get(THREADS_ENV, "1"))
    except ValueError:
        raise ConfigError(THREADS_ENV, "must be an integer") from None
    return max(1, min(cap, n_jobs))


@dataclass
class MonteCarloResult:
    report: RmseReport
    per_seed: dict
    failures: dict

    @property
    def any_diverged(self):
        return self.report.any_diverged


def montecarlo(cfg, seeds=None, filters=None):
    """
    Run ``cfg`` over several seeds and average the RMSE rows.

    Trials run in up to ``MIMU_FUSE_THREADS`` worker processes (default 1);
    results are merged in seed order, so the report does not depend on the
    worker count.
    """
    seeds = list(range(cfg.seed, cfg.seed + cfg.seeds)) if seeds is None else list(seeds)
    jobs = [(cfg, s, filters) for s in seeds]
    workers = worker_count(len(jobs))
    if workers == 1:
        results = [_trial(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial, jobs))
    results.sort(key=lambda r: r[0])
    rows = [row for _, rs, _ in results for row in rs]
    failures = {s: f for s, _, f in results if f}
    return MonteCarloResult(aggregate(rows), {s: rs for s, rs, _ in results}, failures)


@dataclass
class SweepRow:
    n_imu: int
    rmse: float
    improvement: float
    marginal: float | None = None
    samples: tuple = ()
    psd_violations: int = 0
    velocity_trace_increases: int = 0


def sweep_array_size(cfg, j_range=None, seeds=None, filter_name=None):
    """
    Roll/pitch RMSE improvement over the single IMU as a function of array size.

    Every seed simulates the largest array once; smaller arrays use its first
    ``J`` sensors, so sizes are compared on common random numbers. The
    improvement at each ``J`` is ``(1 - mean RMSE_J / mean RMSE_simu) * 100``
    with means over seeds; ``marginal`` is the gain over the previous size.
    ``samples`` keeps the per-seed RMSE (NaN for a diverged run).
    """
    j_range = sorted(set(cfg.sweep_imus if j_range is None else j_range))
    if not j_range or j_range[0] < 2 or j_range[-1] > 7:
        raise ConfigError("sweep.imus", "array sizes must lie in 2..7")
    seeds = list(range(cfg.seed, cfg.seed + cfg.seeds)) if seeds is None else list(seeds)
    name = filter_name or cfg.sweep_filter
    simu_rmse = []
    per_j = {j: [] for j in j_range}
    counters = {j: [0, 0] for j in j_range}
    for seed in seeds:
        run = build_run(cfg, seed, n_imu=j_range[-1])
        fcfg = filter_config(cfg, run.noise, initial_nav(cfg, run.truth.nav(0), seed))
        simu_rmse.append(rmse(eskf.run_simu(run.mimu_log, run.aiding_log, fcfg), run.truth).roll_pitch)
        for j in j_range:
            sub = run.mimu_log.select(range(j))
            sol = run_filter(name, sub, run.aiding_log, fcfg.with_(noise=run.noise[:j]))
            per_j[j].append(math.nan if sol.diverged else rmse(sol, run.truth).roll_pitch)
            counters[j][0] += sol.psd_violations
            counters[j][1] += sol.velocity_trace_increases
    ref = float(np.mean(simu_rmse))
    rows = []
    for j in j_range:
        m = float(np.nanmean(per_j[j]))
        imp = improvement(m, ref)
        marginal = imp - rows[-1].improvement if rows and rows[-1].n_imu == j - 1 else None
        rows.append(SweepRow(j, m, imp, marginal, tuple(per_j[j]), *counters[j]))
    return rows, ref


def sweep_text(rows, ref, name):
    lines = [f"roll/pitch RMSE vs array size ({name}); single IMU {ref:.4g} deg", "J  rmse[deg]  improvement  marginal"]
    for r in rows:
        marg = "" if r.marginal is None else f"{r.marginal:+.2f}%"
        lines.append(f"{r.n_imu}  {r.rmse:9.4g}  {r.improvement:+10.2f}%  {marg:>8}")
    return "\n".join(lines) + "\n"
