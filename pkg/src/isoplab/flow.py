"""
Normalized Ricci flow in conformal gauge.

On S^2 the flow ``dg/dt = -2 (K - Kbar) g`` keeps the conformal class, so with
``g = exp(2u) g_round`` it reduces to the scalar equation ``du/dt = Kbar - K``.
Time stepping is classical RK4 under an explicit diffusion-type step bound.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (
    RotSymMetric,
    curvature,
    integrate,
    laplacian,
    load_metric,
    save_metric,
    total_area,
)

STABILITY_FACTOR = 0.4
CONVERGED_TOL = 1e-6
AREA_DRIFT_TOL = 1e-6
KMIN_FLOOR_TOL = 1e-4
MONITOR_FIELDS = ("area", "K_min", "K_max", "K_bar", "sup_lapK", "sup_absKdiff")


class StabilityError(ValueError):
    """Requested time step exceeds the explicit stability bound."""


def mean_curvature(m: RotSymMetric) -> float:
    """Area-weighted mean of ``K``; by Gauss-Bonnet close to ``4 pi / |M|``."""
    return integrate(m, curvature(m).values) / total_area(m)


def dt_max(m: RotSymMetric) -> float:
    return STABILITY_FACTOR * m.dtheta**2 * float(np.exp(2.0 * m.u.min()))


def _rhs(m_like: RotSymMetric, u: np.ndarray) -> np.ndarray:
    m = RotSymMetric(u, m_like.label)
    K = curvature(m).values
    Kbar = integrate(m, K) / integrate(m, np.ones_like(K))
    return Kbar - K


def step(m: RotSymMetric, dt: float) -> RotSymMetric:
    """One RK4 step of ``du/dt = Kbar - K``."""
    limit = dt_max(m)
    if not 0.0 < dt <= limit * (1.0 + 1e-12):
        raise StabilityError(f"dt={dt:.3g} outside (0, {limit:.3g}]")
    u = m.u
    k1 = _rhs(m, u)
    k2 = _rhs(m, u + 0.5 * dt * k1)
    k3 = _rhs(m, u + 0.5 * dt * k2)
    k4 = _rhs(m, u + dt * k3)
    return RotSymMetric(u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4), m.label)


@dataclass
class Monitor:
    area: float
    K_min: float
    K_max: float
    K_bar: float
    sup_lapK: float
    sup_absKdiff: float


def monitor(m: RotSymMetric) -> Monitor:
    K = curvature(m)
    area = total_area(m)
    Kbar = integrate(m, K.values) / area
    return Monitor(
        area=area,
        K_min=float(K.values.min()),
        K_max=float(K.values.max()),
        K_bar=Kbar,
        sup_lapK=float(laplacian(m, K).values.max()),
        sup_absKdiff=float(np.max(np.abs(K.values - Kbar))),
    )


@dataclass
class FlowTrace:
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    monitors: list = field(default_factory=list)
    status: str = "completed"
    breach: str | None = None

    @property
    def K0(self) -> float:
        """``min(inf K(g0), 0)``."""
        return min(self.monitors[0].K_min, 0.0)

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(mon, name) for mon in self.monitors])

    def monitor_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t",) + MONITOR_FIELDS)
        for t, mon in zip(self.times, self.monitors):
            w.writerow([_f(t)] + [_f(getattr(mon, k)) for k in MONITOR_FIELDS])
        return buf.getvalue()

    def save(self, directory) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {
            "label": self.snapshots[0].label if self.snapshots else "",
            "status": self.status,
            "breach": self.breach,
            "times": [float(t) for t in self.times],
            "monitors": {k: [float(getattr(m, k)) for m in self.monitors] for k in MONITOR_FIELDS},
        }
        (d / "trace.json").write_text(json.dumps(meta, indent=1) + "\n")
        for i, m in enumerate(self.snapshots):
            save_metric(m, d / f"snap_{i}.json")
        (d / "monitors.csv").write_text(self.monitor_csv())
        return d

    @classmethod
    def load(cls, directory) -> "FlowTrace":
        d = Path(directory)
        if not (d / "trace.json").is_file():
            raise FileNotFoundError(f"no trace.json in {d}")
        meta = json.loads((d / "trace.json").read_text())
        times = meta["times"]
        snaps = [load_metric(d / f"snap_{i}.json") for i in range(len(times))]
        mons = [Monitor(**{k: meta["monitors"][k][i] for k in MONITOR_FIELDS}) for i in range(len(times))]
        return cls(times, snaps, mons, meta.get("status", "completed"), meta.get("breach"))


def _f(x: float) -> str:
    return format(float(x), ".17g")


def evolve(m0: RotSymMetric, t_end: float, record_every: float, max_steps: int = 10_000_000) -> FlowTrace:
    """Run the flow to ``t_end`` recording snapshots every ``record_every``.

    Stops early with status ``converged`` once ``max|K - Kbar| < 1e-6``.  A
    breach of the area or curvature-floor invariants stops the run with
    status ``failed`` and a description in ``breach``.
    """
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    if record_every <= 0:
        raise ValueError("record_every must be positive")
    trace = FlowTrace()
    mon0 = monitor(m0)
    trace.times.append(0.0)
    trace.snapshots.append(m0)
    trace.monitors.append(mon0)
    floor = min(mon0.K_min, 0.0) - KMIN_FLOOR_TOL
    if mon0.sup_absKdiff < CONVERGED_TOL:
        trace.status = "converged"
        return trace
    if t_end == 0:
        return trace

    m, t, n_rec = m0, 0.0, 1
    next_rec = min(record_every, t_end)
    for _ in range(max_steps):
        dt = 0.5 * dt_max(m)
        landing = t + dt >= next_rec - 1e-12 * max(1.0, next_rec)
        if landing:
            dt = next_rec - t
        m = step(m, dt)
        t = next_rec if landing else t + dt
        converged = np.max(np.abs(_rhs(m, m.u))) < CONVERGED_TOL
        if landing or converged:
            mon = monitor(m)
            trace.times.append(t)
            trace.snapshots.append(m)
            trace.monitors.append(mon)
            drift = abs(mon.area - mon0.area) / mon0.area
            if drift > AREA_DRIFT_TOL:
                trace.status, trace.breach = "failed", f"area drift {drift:.3g} at t={t:.6g}"
                return trace
            if mon.K_min < floor:
                trace.status, trace.breach = "failed", f"K_min {mon.K_min:.6g} below floor {floor:.6g} at t={t:.6g}"
                return trace
            if converged:
                trace.status = "converged"
                return trace
            if landing:
                n_rec += 1
                if t >= t_end * (1 - 1e-12):
                    return trace
                next_rec = min(n_rec * record_every, t_end)
    trace.status, trace.breach = "failed", f"step budget exhausted at t={t:.6g}"
    return trace
