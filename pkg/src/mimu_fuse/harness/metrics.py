"""RMSE evaluation against truth and the comparison report."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ..errors import EmptyOverlap
from ..geodesy import wrap_angle
from .logs import NavTrack, _as_track

GROUPS = ("roll_pitch", "yaw", "horizontal_velocity", "vertical_velocity")
UNITS = {"roll_pitch": "deg", "yaw": "deg", "horizontal_velocity": "m/s", "vertical_velocity": "m/s"}
X = "X"


@dataclass
class RmseRow:
    """RMSE of one filter on one scenario (angles in degrees, velocities in m/s).

    ``seeds`` counts the runs averaged; ``diverged_seeds`` those excluded
    because the filter diverged or failed. A row with any diverged seed is
    shown as ``X``. ``psd_violations`` and ``velocity_trace_increases`` sum
    the covariance monitor counters of the runs.
    """

    scenario: str
    filter: str
    roll_pitch: float = math.nan
    yaw: float = math.nan
    horizontal_velocity: float = math.nan
    vertical_velocity: float = math.nan
    duration: float = 0.0
    seeds: int = 1
    diverged_seeds: int = 0
    psd_violations: int = 0
    velocity_trace_increases: int = 0

    @property
    def diverged(self):
        return self.diverged_seeds > 0

    def value(self, group):
        return getattr(self, group)


def align(solution, truth):
    """
    Pair every truth epoch with the nearest solution epoch within half a truth interval.

    Returns
    -------
    sol_idx, truth_idx : ndarray of int

    Raises
    ------
    EmptyOverlap
        If no truth epoch has a finite solution sample close enough.
    """
    ts = np.asarray(solution.t, dtype=float)
    tt = np.asarray(truth.t, dtype=float)
    if len(ts) == 0 or len(tt) == 0:
        raise EmptyOverlap("empty solution or truth")
    half = 0.5 * (float(np.median(np.diff(tt))) if len(tt) > 1 else math.inf)
    idx = np.clip(np.searchsorted(ts, tt), 0, len(ts) - 1)
    prev = np.clip(idx - 1, 0, len(ts) - 1)
    idx = np.where(np.abs(tt - ts[prev]) <= np.abs(ts[idx] - tt), prev, idx)
    finite = np.isfinite(solution.velocity).all(axis=1) & np.isfinite(solution.euler).all(axis=1)
    ok = (np.abs(ts[idx] - tt) <= half) & finite[idx]
    if not ok.any():
        raise EmptyOverlap("solution and truth share no epochs")
    return idx[ok], np.nonzero(ok)[0]


def _rms(x):
    return float(np.sqrt(np.mean(np.square(x))))


def rmse(solution, truth, scenario="", name=None):
    """
    RMSE of a solution against truth.

    Angle errors are wrapped to ``(-pi, pi]`` before squaring. ``roll_pitch``
    pools the roll and pitch error samples, ``horizontal_velocity`` pools
    the north and east errors.

    Parameters
    ----------
    solution : NavSolutionLog or NavTrack
    truth : Truth or NavTrack

    Returns
    -------
    RmseRow
    """
    sol = _as_track(solution)
    tru = _as_track(truth)
    i, k = align(sol, tru)
    de = np.degrees(wrap_angle(sol.euler[i] - tru.euler[k]))
    dv = sol.velocity[i] - tru.velocity[k]
    return RmseRow(
        scenario,
        name if name is not None else sol.name,
        roll_pitch=_rms(de[:, :2]),
        yaw=_rms(de[:, 2]),
        horizontal_velocity=_rms(dv[:, :2]),
        vertical_velocity=_rms(dv[:, 2]),
        duration=float(tru.t[k[-1]] - tru.t[k[0]]),
        diverged_seeds=int(sol.diverged),
        psd_violations=int(getattr(solution, "psd_violations", 0)),
        velocity_trace_increases=int(getattr(solution, "velocity_trace_increases", 0)),
    )


def improvement(value, reference):
    """Relative improvement ``(1 - value / reference) * 100``; negative means worse."""
    return (1.0 - value / reference) * 100.0


def aggregate(rows):
    """
    Average per-seed rows of the same scenario and filter.

    Diverged seeds are counted but left out of the means; if every seed
    diverged the values are NaN.
    """
    groups = {}
    for r in rows:
        groups.setdefault((r.scenario, r.filter), []).append(r)
    out = []
    for (scenario, name), rs in groups.items():
        good = [r for r in rs if not r.diverged]
        vals = {g: float(np.mean([r.value(g) for r in good])) if good else math.nan for g in GROUPS}
        out.append(
            RmseRow(
                scenario, name, **vals,
                duration=float(np.mean([r.duration for r in rs])),
                seeds=len(rs),
                diverged_seeds=sum(r.diverged_seeds > 0 for r in rs),
                psd_violations=sum(r.psd_violations for r in rs),
                velocity_trace_increases=sum(r.velocity_trace_increases for r in rs),
            )
        )
    return RmseReport(out)


@dataclass
class RmseReport:
    """RMSE table over scenarios and filters with improvement percentages."""

    rows: list = field(default_factory=list)

    @property
    def scenarios(self):
        return list(dict.fromkeys(r.scenario for r in self.rows))

    @property
    def filters(self):
        return list(dict.fromkeys(r.filter for r in self.rows))

    def get(self, scenario, name):
        for r in self.rows:
            if r.scenario == scenario and r.filter == name:
                return r
        raise KeyError((scenario, name))

    def improvement(self, scenario, name, reference, group):
        """Percentage change of ``name`` relative to ``reference``; ``None`` when either diverged."""
        try:
            row, ref = self.get(scenario, name), self.get(scenario, reference)
        except KeyError:
            return None
        if row.diverged or ref.diverged:
            return None
        return improvement(row.value(group), ref.value(group))

    def mean_improvement(self, name, reference, group, weighted=False):
        """Mean percentage over scenarios, optionally weighted by scenario duration.

        Scenarios where either filter diverged are skipped.
        """
        vals, weights = [], []
        for s in self.scenarios:
            p = self.improvement(s, name, reference, group)
            if p is not None:
                vals.append(p)
                weights.append(self.get(s, reference).duration if weighted else 1.0)
        if not vals:
            return None
        return float(np.average(vals, weights=weights))

    @property
    def any_diverged(self):
        return any(r.diverged for r in self.rows)

    def to_csv(self, path):
        refs = [r for r in ("simu", "vimu") if r in self.filters]
        header = [f.name for f in fields(RmseRow)] + ["status"]
        header += [f"pct_vs_{ref}_{g}" for ref in refs for g in GROUPS]
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in self.rows:
                line = [getattr(r, f.name) for f in fields(RmseRow)]
                line = [format(v, ".17g") if isinstance(v, float) else v for v in line]
                line.append("diverged" if r.diverged else "ok")
                for ref in refs:
                    for g in GROUPS:
                        p = self.improvement(r.scenario, r.filter, ref, g)
                        line.append(X if p is None else format(p, ".17g"))
                w.writerow(line)
        return path

    def _table(self, title, cell):
        names = self.filters
        body = [[s] + [cell(s, n) for n in names] for s in self.scenarios]
        head = [title] + names
        widths = [max(len(str(row[c])) for row in [head] + body) for c in range(len(head))]
        fmt_row = lambda row: "  ".join(str(v).rjust(w) if i else str(v).ljust(w) for i, (v, w) in enumerate(zip(row, widths)))  # noqa: E731
        return "\n".join([fmt_row(head), "  ".join("-" * w for w in widths)] + [fmt_row(r) for r in body])

    def to_text(self, groups=GROUPS):
        parts = []
        for g in groups:
            def absolute(s, n, g=g):
                try:
                    r = self.get(s, n)
                except KeyError:
                    return ""
                return X if r.diverged else f"{r.value(g):.4g}"

            parts.append(self._table(f"{g} RMSE [{UNITS[g]}]", absolute))
            for ref in ("simu", "vimu"):
                if ref not in self.filters:
                    continue

                def pct(s, n, g=g, ref=ref):
                    if n == ref:
                        return "-"
                    p = self.improvement(s, n, ref, g)
                    return X if p is None else f"{p:+.1f}%"

                parts.append(self._table(f"{g} %RMSE vs {ref}", pct))
                means = []
                for n in self.filters:
                    if n == ref:
                        continue
                    u = self.mean_improvement(n, ref, g)
                    d = self.mean_improvement(n, ref, g, weighted=True)
                    if u is not None:
                        means.append(f"  {n}: mean {u:+.1f}%, duration-weighted mean {d:+.1f}%")
                if means:
                    parts.append("\n".join(means))
        return "\n\n".join(parts) + "\n"


def report_from_tracks(solutions, truth, scenario=""):
    """Single-run report of several solutions against one truth track."""
    return RmseReport([rmse(s, truth, scenario) for s in solutions])


__all__ = ["GROUPS", "RmseRow", "RmseReport", "NavTrack", "aggregate", "align", "improvement", "rmse"]
