"""
Quantitative checks of isoperimetric-profile bounds along normalized Ricci flow.

Every check returns an :class:`Entry`; :func:`run_all` assembles them into a
:class:`VerificationReport` in a fixed order.  A failing component never
aborts the batch, it becomes a failed entry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry as geo
from .flow import FlowTrace, evolve
from .profile import (
    ProfileCurve,
    Region,
    comparability_check,
    profile_curve,
    profile_sample,
    region_measures,
    uniform_xi_grid,
)

# theorem_ref values name the statement a check exercises
REF_CURVATURE = "Gauss-Bonnet for the conformal curvature identity"
REF_MEAN_CURV = "mean curvature Kbar = int K dA / |M|"
REF_PROFILE = "isoperimetric profile as an infimum over regions of area xi|M|"
REF_SYMMETRY = "h(xi) = h(1 - xi) with continuous extension h(0) = h(1) = 0"
REF_COMPARABILITY = "perimeter comparability under C-equivalent metrics"
REF_CONTINUITY = "joint continuity of h in (t, xi) along the flow"
REF_FLOW = "normalized Ricci flow dg/dt = -2(K - Kbar)g and convergence to constant curvature"
REF_KMIN_FLOOR = "curvature floor K >= min(inf K(g0), 0) along the flow"
REF_INEQUALITY = "L^2 >= 4 pi A - (sup K) A^2 for simply connected domains"
REF_ASYMPTOTICS = "small-area expansion h = sqrt(4 pi |M| xi) - |M|^(3/2) sup K xi^(3/2) / (4 sqrt(pi)) + O(xi^2)"
REF_LIPSCHITZ = "uniform Lipschitz bound 4 pi |M|_g0 + 4 |K0| |M|_g0^2 for h^2"
REF_LOCAL_LIPSCHITZ = "local Lipschitz bound 2 alpha^-1 (pi |M|_g0 + |K0| |M|_g0^2) for h and geodesic curvature"
REF_CONCAVITY = "concavity of h^2 + (inf K)(xi |M|)^2 and h'(xi) = kappa |M|"

DEFAULT_TOLERANCES = {
    "bound": 0.05,
    "concavity": 1e-4,
    "equality": 1e-3,
    "gauss_bonnet": 1e-5,
    "mean_curvature": 1e-5,
    "symmetry": 1e-6,
    "minimality": 1e-9,
    "scaling": 1e-9,
    "derivative": 0.01,
    "comparability": 1e-12,
    "area_drift": 1e-6,
    "kmin_floor": 1e-4,
    "convergence": 1e-3,
    "inequality": 1e-6,
    "asymptotic": 0.05,
}


@dataclass
class Entry:
    check_name: str
    theorem_ref: str
    measured: float
    bound: float
    tolerance: float
    passed: bool
    details: str = ""
    asserted: bool = True

    def to_dict(self) -> dict:
        return {
            "check_name": self.check_name,
            "theorem_ref": self.theorem_ref,
            "measured": _num(self.measured),
            "bound": _num(self.bound),
            "tolerance": _num(self.tolerance),
            "pass": bool(self.passed),
            "details": self.details,
            "asserted": self.asserted,
        }


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else repr(x)


@dataclass
class VerificationReport:
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries if e.asserted)

    def failures(self) -> list:
        return [e for e in self.entries if e.asserted and not e.passed]

    def to_json(self) -> str:
        return json.dumps([e.to_dict() for e in self.entries], indent=1) + "\n"

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            flag = "PASS" if e.passed else ("FAIL" if e.asserted else "info")
            lines.append(f"{flag:4s} {e.check_name:34s} measured={e.measured:.6g} bound={e.bound:.6g}")
        return "\n".join(lines)


def _upper(name, ref, measured, bound, tol, details="") -> Entry:
    return Entry(name, ref, measured, bound, tol, bool(measured <= bound * (1.0 + tol)), details)


def _relerr(name, ref, err, tol, details="") -> Entry:
    return Entry(name, ref, err, tol, tol, bool(err <= tol), details)


# -- helpers ------------------------------------------------------------------------


def trace_curves(trace: FlowTrace, xi_grid, jobs: int = 1) -> list:
    return [profile_curve(m, xi_grid, jobs=jobs) for m in trace.snapshots]


def _initial_bound_terms(trace: FlowTrace) -> tuple[float, float]:
    """``(|M|_g0, K0)`` with ``K0 = min(inf K(g0), 0)``; never from later snapshots."""
    m0 = trace.snapshots[0]
    M0 = geo.total_area(m0)
    K0 = min(float(geo.curvature(m0).values.min()), 0.0)
    return M0, K0


def fit_small_xi(xi, h) -> np.ndarray:
    """Least-squares ``(a, b, c)`` of ``h = a xi^1/2 + b xi^3/2 + c xi^5/2``."""
    xi, h = np.asarray(xi, dtype=float), np.asarray(h, dtype=float)
    X = np.column_stack([xi**0.5, xi**1.5, xi**2.5])
    if xi.size < 3 or np.linalg.matrix_rank(X / np.abs(X).max(axis=0)) < 3:
        raise ValueError("small-xi fit is rank deficient; need >= 3 distinct points")
    return np.linalg.lstsq(X, h, rcond=None)[0]


def xi52_coefficient(K: float, lapK: float, area_M: float) -> float:
    """xi^(5/2) coefficient of the perimeter of the geodesic disk of area ``xi |M|``.

    Obtained by inverting the small-ball area series for the radius and
    substituting into the perimeter series.
    """
    return -(area_M**2.5) * (4.0 * lapK + 3.0 * K * K) / (192.0 * math.pi**1.5)


# -- checks ----------------------------------------------------------------------------


def check_lipschitz_hsq(trace: FlowTrace, xi_grid, curves=None, tolerance: float = 0.05) -> Entry:
    """Largest difference quotient of ``h^2`` over all snapshots vs the initial-data bound."""
    xi_grid = np.asarray(xi_grid, dtype=float)
    if len(trace.snapshots) < 1 or xi_grid.size < 2:
        raise ValueError("need a trace and at least two xi points")
    curves = curves if curves is not None else trace_curves(trace, xi_grid)
    M0, K0 = _initial_bound_terms(trace)
    bound = 4.0 * math.pi * M0 + 4.0 * abs(K0) * M0**2
    per_snap = []
    for c in curves:
        x, h = c.extended()
        per_snap.append(float(np.max(np.abs(np.diff(h**2) / np.diff(x)))))
    measured = max(per_snap)
    worst = int(np.argmax(per_snap))
    return _upper("lipschitz_hsq", REF_LIPSCHITZ, measured, bound, tolerance,
                  f"K0={K0:.6g} |M|_g0={M0:.10g} worst snapshot t={trace.times[worst]:.6g}")


def _central_slopes(xi: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Centered difference quotients at interior points (nan at the ends)."""
    d = np.full_like(h, np.nan)
    d[1:-1] = (h[2:] - h[:-2]) / (xi[2:] - xi[:-2])
    return d


def check_local_lipschitz_h(trace: FlowTrace, xi0: float, xi1: float, xi_grid=None,
                            curves=None, tolerance: float = 0.05) -> Entry:
    if not 0.0 < xi0 < xi1 < 1.0:
        raise ValueError("window must satisfy 0 < xi0 < xi1 < 1")
    xi_grid = uniform_xi_grid() if xi_grid is None else np.asarray(xi_grid, dtype=float)
    curves = curves if curves is not None else trace_curves(trace, xi_grid)
    M0, K0 = _initial_bound_terms(trace)
    alpha, dh, kap = math.inf, 0.0, 0.0
    for m, c in zip(trace.snapshots, curves):
        x, h = c.extended()
        slopes = _central_slopes(x, h)
        inwin = (x >= xi0 - 1e-12) & (x <= xi1 + 1e-12)
        if not np.any(inwin):
            raise ValueError("window contains no grid points")
        alpha = min(alpha, float(h[inwin].min()))
        dh = max(dh, float(np.nanmax(np.abs(slopes[inwin]))))
        pin = (c.xi >= xi0 - 1e-12) & (c.xi <= xi1 + 1e-12)
        kap = max(kap, float(np.max(np.abs(c.kappa[pin]))) * geo.total_area(m))
    if not alpha > 0:
        return Entry("local_lipschitz_h", REF_LOCAL_LIPSCHITZ, math.inf, 0.0, tolerance, False,
                     f"alpha={alpha} is not positive")
    bound = 2.0 / alpha * (math.pi * M0 + abs(K0) * M0**2)
    measured = max(dh, kap)
    return _upper("local_lipschitz_h", REF_LOCAL_LIPSCHITZ, measured, bound, tolerance,
                  f"alpha={alpha:.10g} max|dh/dxi|={dh:.10g} max|kappa||M|={kap:.10g}")


def concavity_defect(curve: ProfileCurve, infK: float, area_M: float) -> tuple[float, float]:
    """Largest centered second difference of ``Q = h^2 + infK (xi |M|)^2`` and ``max|Q|``."""
    xi, h = curve.xi, curve.h
    Q = h**2 + infK * (xi * area_M) ** 2
    dx = np.diff(xi)
    slope = np.diff(Q) / dx
    # scaled to a raw second difference on uniform grids
    second = (slope[1:] - slope[:-1]) * 0.5 * (dx[1:] + dx[:-1])
    return float(second.max()), float(np.abs(Q).max())


def check_concavity(curve: ProfileCurve, infK: float, area_M: float, tolerance: float = 1e-4) -> Entry:
    if len(curve.points) < 5:
        raise ValueError("concavity check needs at least 5 points")
    measured, qmax = concavity_defect(curve, infK, area_M)
    bound = tolerance * qmax
    return Entry("concavity", REF_CONCAVITY, measured, bound, tolerance, bool(measured <= bound),
                 f"infK={infK:.10g} max|Q|={qmax:.10g}")


def check_derivative_identity(curve: ProfileCurve, area_M: float, xi0: float = 0.25, xi1: float = 0.75,
                              tolerance: float = 0.01) -> Entry:
    """Centered slopes of ``h`` against ``kappa |M|`` where the minimizer family is unchanged."""
    xi, h, kap = curve.xi, curve.h, curve.kappa
    slopes = _central_slopes(xi, h)
    kinds = [p.region.kind for p in curve.points]
    scale = 1e-3 * float(h.max())
    worst, n = 0.0, 0
    for i in range(1, xi.size - 1):
        if not xi0 - 1e-12 <= xi[i] <= xi1 + 1e-12 or not kinds[i - 1] == kinds[i] == kinds[i + 1]:
            continue
        target = kap[i] * area_M
        worst = max(worst, abs(slopes[i] - target) / (abs(target) + scale))
        n += 1
    return _relerr("derivative_identity", REF_CONCAVITY, worst, tolerance, f"{n} interior points compared")


def check_asymptotics(m: geo.RotSymMetric, xi_small_grid, tolerance: float = 0.05) -> Entry:
    xs = np.asarray(xi_small_grid, dtype=float)
    if xs.min() < 1e-4 - 1e-15 or xs.max() > 1e-2 + 1e-15:
        raise ValueError("small-xi grid must lie within [1e-4, 1e-2]")
    h = np.array([profile_sample(m, float(x)).h for x in xs])
    a, b, c = fit_small_xi(xs, h)
    M = geo.total_area(m)
    K = geo.curvature(m)
    i = int(np.argmax(K.values))
    supK = float(K.values[i])
    lapK = float(geo.laplacian(m, K).values[i])
    a_pred = math.sqrt(4.0 * math.pi * M)
    b_pred = -(M**1.5) * supK / (4.0 * math.sqrt(math.pi))
    err_a = abs(a - a_pred) / a_pred
    err_b = abs(b - b_pred) / abs(b_pred) if abs(supK) > 1e-12 else abs(b) / a
    return _relerr("asymptotics", REF_ASYMPTOTICS, max(err_a, err_b), tolerance,
                   f"a={a:.10g} (pred {a_pred:.10g}) b={b:.10g} (pred {b_pred:.10g}) "
                   f"c={c:.6g} (disk at argmax K: {xi52_coefficient(supK, lapK, M):.6g}, not asserted)")


def remainder_coefficients(trace: FlowTrace, xi_small_grid) -> np.ndarray:
    xs = np.asarray(xi_small_grid, dtype=float)
    out = []
    for m in trace.snapshots:
        h = np.array([profile_sample(m, float(x)).h for x in xs])
        out.append(fit_small_xi(xs, h)[2])
    return np.array(out)


def check_remainder_bound(trace: FlowTrace, xi_small_grid) -> Entry:
    """Fitted xi^(5/2) coefficients stay within ``2|c(0)| + 1`` along the trace."""
    c = remainder_coefficients(trace, xi_small_grid)
    measured = float(np.max(np.abs(c)))
    bound = 2.0 * abs(c[0]) + 1.0
    return Entry("remainder_coefficient", REF_ASYMPTOTICS, measured, bound, 0.0, bool(measured <= bound),
                 "c(t)=" + ",".join(f"{x:.6g}" for x in c))


def continuity_modulus(times, xi, H, delta: float) -> float:
    """``max |h(t, x) - h(t', x')|`` over grid pairs with ``|t - t'| + |x - x'| <= delta``."""
    times, xi, H = np.asarray(times), np.asarray(xi), np.asarray(H)
    dxi = np.abs(xi[:, None] - xi[None, :])
    best = 0.0
    for j in range(times.size):
        for k in range(j, times.size):
            dt = abs(times[k] - times[j])
            if dt > delta:
                break
            mask = dxi <= delta - dt + 1e-12
            diff = np.abs(H[j][:, None] - H[k][None, :])
            best = max(best, float(diff[mask].max()))
    return best


def check_joint_continuity(trace: FlowTrace, xi_grid, curves=None, delta: float = 0.1) -> Entry:
    if len(trace.snapshots) < 3:
        raise ValueError("joint continuity needs at least 3 snapshots")
    curves = curves if curves is not None else trace_curves(trace, xi_grid)
    x = curves[0].extended()[0]
    H = np.array([c.extended()[1] for c in curves])
    w_full = continuity_modulus(trace.times, x, H, delta)
    w_half = continuity_modulus(trace.times, x, H, delta / 2)
    bound = 0.75 * w_full + 1e-6
    return Entry("joint_continuity", REF_CONTINUITY, w_half, bound, 0.0, bool(w_half <= bound),
                 f"omega({delta:g})={w_full:.10g} omega({delta / 2:g})={w_half:.10g}")


def inequality_slacks(curve: ProfileCurve, m: geo.RotSymMetric) -> np.ndarray:
    """``(L^2 - 4 pi A + supK A^2) / (4 pi A)`` for simply connected minimizers."""
    M = geo.total_area(m)
    supK = float(geo.curvature(m).values.max())
    out = []
    for p in curve.points:
        if not p.region.simply_connected:
            continue
        A = p.xi * M
        out.append((p.h**2 - 4.0 * math.pi * A + supK * A * A) / (4.0 * math.pi * A))
    return np.array(out)


def check_isoperimetric_inequality(curve: ProfileCurve, m: geo.RotSymMetric, tolerance: float = 1e-6) -> Entry:
    s = inequality_slacks(curve, m)
    measured = float(-s.min()) if s.size else 0.0
    return Entry("isoperimetric_inequality", REF_INEQUALITY, measured, tolerance, tolerance,
                 bool(measured <= tolerance), f"{s.size} simply connected minimizers")


def check_isoperimetric_equality(curve: ProfileCurve, m: geo.RotSymMetric, tolerance: float = 1e-3) -> Entry:
    """On constant curvature the caps attain the inequality."""
    s = inequality_slacks(curve, m)
    measured = float(np.abs(s).max()) if s.size else math.inf
    return _relerr("isoperimetric_equality", REF_INEQUALITY, measured, tolerance)


# -- batch -------------------------------------------------------------------------------


@dataclass
class VerifyConfig:
    metric: dict = field(default_factory=lambda: {"builtin": "round"})
    n_grid: int = 512
    flow_n_grid: int = 64
    t_end: float = 10.0
    record_every: float = 0.5
    xi_points: int = 63
    small_xi: tuple = (1e-4, 1e-2, 12)
    window: tuple = (0.25, 0.75)
    continuity_delta: float = 0.1
    n_random: int = 50
    seed: int = 0
    jobs: int = 1
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @classmethod
    def from_dict(cls, d: dict) -> "VerifyConfig":
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        tol = dict(DEFAULT_TOLERANCES)
        tol.update(d.pop("tolerances", {}) or {})
        bad = set(tol) - set(DEFAULT_TOLERANCES)
        if bad:
            raise ValueError(f"unknown tolerance keys: {sorted(bad)}")
        cfg = cls(**d, tolerances=tol)
        cfg.validate()
        return cfg

    def validate(self):
        if self.n_grid < geo.MIN_GRID or self.flow_n_grid < geo.MIN_GRID:
            raise ValueError(f"grids must have at least {geo.MIN_GRID} points")
        if self.t_end < 0 or self.record_every <= 0:
            raise ValueError("need t_end >= 0 and record_every > 0")
        if self.xi_points < 5:
            raise ValueError("xi_points must be >= 5")
        lo, hi, n = self.small_xi
        if not 1e-4 <= lo < hi <= 1e-2 or int(n) < 3:
            raise ValueError("small_xi must be (lo, hi, n) within [1e-4, 1e-2] with n >= 3")
        if not 0 < self.window[0] < self.window[1] < 1:
            raise ValueError("window must satisfy 0 < xi0 < xi1 < 1")
        if any(v < 0 for v in self.tolerances.values()):
            raise ValueError("tolerances must be non-negative")


def build_metric(source: dict, n_grid: int) -> geo.RotSymMetric:
    """Metric from ``{"builtin": name, "param": a}`` or ``{"path": file}``.

    A metric file on a different grid is resampled through its interpolant.
    """
    if "path" in source:
        m = geo.load_metric(source["path"])
        if m.n_grid == n_grid:
            return m
        theta = (np.arange(n_grid) + 0.5) * math.pi / n_grid
        return geo.RotSymMetric(m.u_at(theta), m.label)
    return geo.builtin_metric(source.get("builtin", "round"), n_grid, source.get("param"))


def random_regions(m: geo.RotSymMetric, rng: np.random.Generator, n: int, disks: bool = True) -> list:
    """Random caps, bands and (small) disks with area ratio in (0, 1)."""
    out = []
    while len(out) < n:
        kind = rng.choice(["cap", "band", "disk"] if disks else ["cap", "band"])
        comp = bool(rng.integers(2))
        if kind == "cap":
            r = Region("cap", (rng.uniform(0.05, math.pi - 0.05),), comp)
        elif kind == "band":
            k = int(rng.integers(2, 5))
            cuts = np.sort(rng.uniform(0.05, math.pi - 0.05, k))
            if np.min(np.diff(cuts)) < 1e-3:
                continue
            r = Region("band", tuple(cuts), comp)
        else:
            r = Region("disk", (rng.uniform(0.1, math.pi - 0.1), rng.uniform(0.05, 0.6 * m.r_max)), comp)
        out.append(r)
    return out


def smooth_perturbation(n_grid: int, rng: np.random.Generator, amplitude: float) -> np.ndarray:
    """Random even cosine polynomial with ``max|.| == amplitude``."""
    theta = (np.arange(n_grid) + 0.5) * math.pi / n_grid
    coef = rng.normal(size=6)
    v = sum(c * np.cos(k * theta) for k, c in enumerate(coef))
    return amplitude * v / np.max(np.abs(v))


def _guard(entries: list, name: str, ref: str, fn: Callable, asserted: bool = True):
    try:
        res = fn()
    except Exception as exc:  # noqa: BLE001 - failures become report entries
        entries.append(Entry(name, ref, math.nan, math.nan, 0.0, False, f"{type(exc).__name__}: {exc}", asserted))
        return None
    if isinstance(res, Entry):
        entries.append(res)
    elif isinstance(res, list):
        entries.extend(res)
    return res


def run_all(config, trace: FlowTrace | None = None) -> VerificationReport:
    """Run every check for one metric and its flow; deterministic given the config."""
    cfg = config if isinstance(config, VerifyConfig) else VerifyConfig.from_dict(config)
    tol = cfg.tolerances
    rng = np.random.default_rng(cfg.seed)
    entries: list = []
    xi_grid = uniform_xi_grid(cfg.xi_points)
    small = np.geomspace(cfg.small_xi[0], cfg.small_xi[1], int(cfg.small_xi[2]))
    state: dict = {}

    def load():
        state["m"] = build_metric(cfg.metric, cfg.n_grid)
        return []

    if _guard(entries, "build_metric", REF_PROFILE, load) is None:
        return VerificationReport(entries)
    m = state["m"]
    M = geo.total_area(m)

    def gauss_bonnet():
        err = abs(geo.gauss_bonnet_defect(m)) / (4.0 * math.pi)
        return _relerr("gauss_bonnet", REF_CURVATURE, err, tol["gauss_bonnet"], f"n_grid={m.n_grid}")

    def mean_curv():
        from .flow import mean_curvature

        kbar = mean_curvature(m)
        err = abs(kbar * M / (4.0 * math.pi) - 1.0)
        return _relerr("mean_curvature", REF_MEAN_CURV, err, tol["mean_curvature"], f"Kbar={kbar:.12g}")

    _guard(entries, "gauss_bonnet", REF_CURVATURE, gauss_bonnet)
    _guard(entries, "mean_curvature", REF_MEAN_CURV, mean_curv)

    def static_curve():
        state["curve"] = profile_curve(m, xi_grid, jobs=cfg.jobs)
        return []

    _guard(entries, "profile_curve", REF_PROFILE, static_curve)
    curve = state.get("curve")
    if curve is not None:
        def symmetry():
            h = curve.h
            err = float(np.max(np.abs(h - h[::-1]) / h))
            return _relerr("profile_symmetry", REF_SYMMETRY, err, tol["symmetry"])

        def minimality():
            worst = -math.inf
            for r in random_regions(m, rng, 20):
                area, perim = region_measures(m, r)
                xi = area / M
                if not 1e-4 < xi < 1 - 1e-4:
                    continue
                h = profile_sample(m, xi).h
                worst = max(worst, h / perim - 1.0)
            return Entry("profile_minimality", REF_PROFILE, worst, tol["minimality"], tol["minimality"],
                         bool(worst <= tol["minimality"]), "max over random regions of h(xi)/P - 1")

        def scaling():
            c = 0.37
            ms = m.shifted(c)
            err = 0.0
            for xi in (0.1, 0.3, 0.5):
                err = max(err, abs(profile_sample(ms, xi).h / (math.exp(c) * profile_sample(m, xi).h) - 1.0))
            return _relerr("profile_scaling", REF_PROFILE, err, tol["scaling"], f"shift c={c}")

        infK = float(geo.curvature(m).values.min())
        _guard(entries, "profile_symmetry", REF_SYMMETRY, symmetry)
        _guard(entries, "profile_minimality", REF_PROFILE, minimality)
        _guard(entries, "profile_scaling", REF_PROFILE, scaling)
        _guard(entries, "concavity", REF_CONCAVITY, lambda: check_concavity(curve, infK, M, tol["concavity"]))
        _guard(entries, "derivative_identity", REF_CONCAVITY,
               lambda: check_derivative_identity(curve, M, *cfg.window, tolerance=tol["derivative"]))
        _guard(entries, "isoperimetric_inequality", REF_INEQUALITY,
               lambda: check_isoperimetric_inequality(curve, m, tol["inequality"]))
        K = geo.curvature(m).values
        if K.max() - K.min() < 1e-9:
            _guard(entries, "isoperimetric_equality", REF_INEQUALITY,
                   lambda: check_isoperimetric_equality(curve, m, tol["equality"]))
    _guard(entries, "asymptotics", REF_ASYMPTOTICS, lambda: check_asymptotics(m, small, tol["asymptotic"]))

    def comparability():
        regions = random_regions(m, rng, cfg.n_random)
        C, worst_scale = comparability_check(m, m.shifted(math.log(2.0)), regions[:10])
        e1 = Entry("comparability_scaling", REF_COMPARABILITY, abs(worst_scale), tol["comparability"],
                   tol["comparability"], bool(abs(worst_scale) <= tol["comparability"]),
                   f"C={C:.12g}; ratios must equal C^(1/2)")
        m2 = geo.RotSymMetric(m.u + smooth_perturbation(m.n_grid, rng, 0.1), m.label + " perturbed")
        C2, worst = comparability_check(m, m2, regions)
        e2 = Entry("comparability_random", REF_COMPARABILITY, worst, 0.0, 0.0, bool(worst <= 0.0),
                   f"C={C2:.12g} over {len(regions)} regions")
        return [e1, e2]

    _guard(entries, "comparability", REF_COMPARABILITY, comparability)

    # flow on its own grid
    def run_flow():
        if trace is not None:
            state["trace"] = trace
        else:
            m_flow = build_metric(cfg.metric, cfg.flow_n_grid)
            state["trace"] = evolve(m_flow, cfg.t_end, cfg.record_every)
        return []

    _guard(entries, "flow", REF_FLOW, run_flow)
    tr = state.get("trace")
    if tr is None:
        return VerificationReport(entries)

    def flow_entries():
        area = tr.series("area")
        drift = float(np.max(np.abs(area / area[0] - 1.0)))
        kmin = tr.series("K_min")
        floor = min(kmin[0], 0.0)
        out = [
            _relerr("flow_area_drift", REF_FLOW, drift, tol["area_drift"], f"status={tr.status}"),
            Entry("flow_kmin_floor", REF_KMIN_FLOOR, float(floor - kmin.min()), tol["kmin_floor"], tol["kmin_floor"],
                  bool(kmin.min() >= floor - tol["kmin_floor"]), f"K0={floor:.10g} min K_min={kmin.min():.10g}"),
        ]
        final = float(tr.series("sup_absKdiff")[-1])
        out.append(Entry("flow_convergence", REF_FLOW, final, tol["convergence"], tol["convergence"],
                         bool(final < tol["convergence"]) or tr.status == "converged",
                         f"status={tr.status} t_final={tr.times[-1]:.6g}",
                         asserted=cfg.t_end >= 10.0 or tr.status == "converged"))
        lap = tr.series("sup_lapK")
        out.append(Entry("sup_lapK_nonincreasing", REF_ASYMPTOTICS, float(np.max(np.diff(lap))) if lap.size > 1 else 0.0,
                         0.0, 0.0, bool(lap.size < 2 or np.all(np.diff(lap) <= 0)),
                         "recorded only", asserted=False))
        return out

    _guard(entries, "flow_monitors", REF_FLOW, flow_entries)

    def curves():
        state["curves"] = trace_curves(tr, xi_grid, cfg.jobs)
        return []

    _guard(entries, "trace_profiles", REF_PROFILE, curves)
    cs = state.get("curves")
    if cs is not None:
        _guard(entries, "lipschitz_hsq", REF_LIPSCHITZ,
               lambda: check_lipschitz_hsq(tr, xi_grid, cs, tol["bound"]))
        _guard(entries, "local_lipschitz_h", REF_LOCAL_LIPSCHITZ,
               lambda: check_local_lipschitz_h(tr, *cfg.window, xi_grid, cs, tol["bound"]))

        def trace_concavity():
            ratios = []
            for snap, c in zip(tr.snapshots, cs):
                infK = float(geo.curvature(snap).values.min())
                d, qmax = concavity_defect(c, infK, geo.total_area(snap))
                ratios.append(d / qmax)
            worst = max(ratios)
            return Entry("trace_concavity", REF_CONCAVITY, worst, tol["concavity"], tol["concavity"],
                         bool(worst <= tol["concavity"]), f"max second difference / max|Q| over {len(cs)} snapshots")

        def trace_inequality():
            worst = 0.0
            for snap, c in zip(tr.snapshots, cs):
                s = inequality_slacks(c, snap)
                if s.size:
                    worst = max(worst, float(-s.min()))
            return Entry("trace_isoperimetric_inequality", REF_INEQUALITY, worst, tol["inequality"],
                         tol["inequality"], bool(worst <= tol["inequality"]), f"{len(cs)} snapshots")

        _guard(entries, "trace_concavity", REF_CONCAVITY, trace_concavity)
        _guard(entries, "trace_isoperimetric_inequality", REF_INEQUALITY, trace_inequality)
        if len(tr.snapshots) >= 3:
            _guard(entries, "joint_continuity", REF_CONTINUITY,
                   lambda: check_joint_continuity(tr, xi_grid, cs, cfg.continuity_delta))
    _guard(entries, "remainder_coefficient", REF_ASYMPTOTICS, lambda: check_remainder_bound(tr, small))
    return VerificationReport(entries)
