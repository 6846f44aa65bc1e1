"""
Isoperimetric profile of a rotationally symmetric metric.

``h(xi)`` is approximated by minimizing boundary length over three explicit
region families, each of which is closed under complement:

* caps about either pole,
* unions of up to two bands bounded by circles of revolution (2 to 4 cuts),
* geodesic disks (and their complements) about a sweep of centers.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import weakref
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import bisect, minimize, minimize_scalar

from .geometry import (
    DiskTable,
    RotSymMetric,
    boundary_length_in,
    curvature,
    measure_disk,
    total_area,
)

XI_MIN = 1e-5
AREA_TOL = 1e-8
THETA_TOL = 1e-10
#: relative perimeter gap below which an earlier region kind wins
TIE_RTOL = 1e-8
N_DISK_CENTERS = 32
N_COARSE_CUTS = 40
KINDS = ("cap", "band", "disk")


@dataclass(frozen=True)
class Region:
    """A candidate region.

    ``cap``: ``params = (theta_c,)``, the set ``theta <= theta_c``.
    ``band``: ``params`` are 2 to 4 increasing cuts; the set is
    ``[c1, c2] U [c3, c4]`` (an odd count closes the last band at the south pole).
    ``disk``: ``params = (center_colatitude, radius)``.

    ``complement`` swaps the region for its complement, which has the same
    boundary.
    """

    kind: str
    params: tuple
    complement: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown region kind {self.kind!r}")
        p = tuple(float(x) for x in self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "cap":
            if len(p) != 1 or not 0.0 < p[0] < math.pi:
                raise ValueError(f"cap needs one cut inside (0, pi), got {p}")
        elif self.kind == "band":
            if not 2 <= len(p) <= 4:
                raise ValueError(f"band needs 2 to 4 cuts, got {len(p)}")
            if not (0.0 < p[0] and p[-1] < math.pi and all(a < b for a, b in zip(p, p[1:]))):
                raise ValueError(f"band cuts must increase strictly inside (0, pi): {p}")
        else:
            if len(p) != 2 or not 0.0 <= p[0] <= math.pi or p[1] <= 0.0:
                raise ValueError(f"disk needs (center, radius>0), got {p}")

    @property
    def simply_connected(self) -> bool:
        """True for caps and disks (and their complements, which are also disks)."""
        return self.kind in ("cap", "disk")


@dataclass(frozen=True)
class ProfilePoint:
    xi: float
    h: float
    kappa: float
    region: Region


@dataclass
class ProfileCurve:
    label: str
    points: list = field(default_factory=list)

    @property
    def xi(self) -> np.ndarray:
        return np.array([p.xi for p in self.points])

    @property
    def h(self) -> np.ndarray:
        return np.array([p.h for p in self.points])

    @property
    def kappa(self) -> np.ndarray:
        return np.array([p.kappa for p in self.points])

    def extended(self) -> tuple[np.ndarray, np.ndarray]:
        """``(xi, h)`` with the continuous extension ``h(0) = h(1) = 0`` appended."""
        return np.concatenate([[0.0], self.xi, [1.0]]), np.concatenate([[0.0], self.h, [0.0]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["xi", "h", "kappa", "region_kind", "p1", "p2"])
        for p in self.points:
            r = p.region
            p1 = r.params[0]
            if r.kind == "cap":
                # p2 flags the pole the cap is centered on: 0 north, 1 south
                p2 = 1.0 if r.complement else 0.0
            else:
                p2 = r.params[-1]
            w.writerow([_f(p.xi), _f(p.h), _f(p.kappa), r.kind + ("-complement" if r.complement and r.kind != "cap" else ""),
                        _f(p1), _f(p2)])
        return buf.getvalue()

    def save_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())


def _f(x: float) -> str:
    return format(float(x), ".17g")


# -- region measures ------------------------------------------------------------


def _band_area(m: RotSymMetric, cuts, area_M: float) -> float:
    A = m.cumulative_area(np.asarray(cuts))
    k = len(cuts)
    signs = np.where(np.arange(1, k + 1) % 2 == 1, -1.0, 1.0)
    return float(signs @ A + (area_M if k % 2 else 0.0))


def region_measures(m: RotSymMetric, r: Region) -> tuple[float, float]:
    """``(area, perimeter)`` of a region."""
    area_M = total_area(m)
    if r.kind == "disk":
        ball = measure_disk(m, r.params[0], r.params[1])
        area, perim = ball.area, ball.perimeter
    elif r.kind == "cap":
        area = float(m.cumulative_area(r.params[0]))
        perim = float(m.circle_length(r.params[0]))
    else:
        area = _band_area(m, r.params, area_M)
        perim = float(np.sum(m.circle_length(np.asarray(r.params))))
    if r.complement:
        area = area_M - area
    return area, perim


def _cut_curvature(m: RotSymMetric, theta: float) -> float:
    """Geodesic curvature of the circle at ``theta`` w.r.t. the normal pointing to larger theta."""
    return float(np.exp(-m.u_at(theta)) * (m.du_at(theta) + 1.0 / math.tan(theta)))


def boundary_curvature(m: RotSymMetric, r: Region) -> float:
    """Geodesic curvature of the boundary w.r.t. the outward normal of ``r``.

    For bands the value at the cut nearest the equator is returned.
    """
    if r.kind == "disk":
        k = measure_disk(m, r.params[0], r.params[1]).kappa
    elif r.kind == "cap":
        k = _cut_curvature(m, r.params[0])
    else:
        cuts = np.asarray(r.params)
        j = int(np.argmin(np.abs(cuts - math.pi / 2)))
        # the region lies south of odd-numbered cuts (1-based) and north of even ones
        sign = 1.0 if j % 2 == 1 else -1.0
        k = sign * _cut_curvature(m, cuts[j])
    return -k if r.complement else k


# -- cut solving ------------------------------------------------------------------


class _Cuts:
    """Vectorized inverse of the cumulative cap area."""

    def __init__(self, m: RotSymMetric):
        self.m = m
        tab = m._tables
        self.theta = tab.theta
        self.A = tab.A_table
        self.area_M = float(self.A[-1])

    def invert(self, a: np.ndarray) -> np.ndarray:
        """Colatitudes with ``cumulative_area == a`` (``a`` inside ``(0, |M|)``)."""
        a = np.asarray(a, dtype=float)
        th = np.interp(a, self.A, self.theta)
        for _ in range(3):
            dA = 2.0 * math.pi * np.exp(2.0 * self.m.u_at(th)) * np.sin(th)
            th = np.clip(th - (self.m.cumulative_area(th) - a) / np.maximum(dA, 1e-300), 1e-14, math.pi - 1e-14)
        return th

    def invert_exact(self, a: float) -> float:
        """Bracketed bisection to ``THETA_TOL``."""
        th0 = float(self.invert(a))
        f = lambda t: float(self.m.cumulative_area(t)) - a
        lo, hi = max(th0 - 1e-6, 1e-15), min(th0 + 1e-6, math.pi - 1e-15)
        if f(lo) > 0 or f(hi) < 0:
            lo, hi = 1e-15, math.pi - 1e-15
        return bisect(f, lo, hi, xtol=THETA_TOL * 1e-2, maxiter=200)


def _last_cut_area(m: RotSymMetric, cuts_fixed: np.ndarray, k: int, complement: bool,
                   xi: float, area_M: float):
    """Cap area at which the final cut must sit; also returns the lower bound."""
    target = (1.0 - xi) * area_M if complement else xi * area_M
    N = cuts_fixed.shape[0]
    Afix = m.cumulative_area(cuts_fixed) if k > 1 else np.zeros((N, 0))
    signs = np.where(np.arange(1, k) % 2 == 1, -1.0, 1.0)
    partial = Afix @ signs + (area_M if k % 2 else 0.0)
    last_sign = -1.0 if k % 2 == 1 else 1.0
    lower = Afix[:, -1] if k > 1 else np.zeros(N)
    return (target - partial) / last_sign, lower


def _solve_last_cut(cuts_fixed: np.ndarray, k: int, complement: bool, xi: float, cs: _Cuts):
    """Solve the final cut of ``k``-cut band configurations for area ratio ``xi``.

    ``cuts_fixed`` has shape ``(N, k-1)``.  Returns ``(cuts (N, k), ok mask)``.
    """
    A_last, lower = _last_cut_area(cs.m, cuts_fixed, k, complement, xi, cs.area_M)
    ok = (A_last > lower) & (A_last < cs.area_M)
    th = np.full(cuts_fixed.shape[0], np.nan)
    if np.any(ok):
        th[ok] = cs.invert(A_last[ok])
    if k > 1:
        ok &= th > cuts_fixed[:, -1]
    ok &= th < math.pi
    return np.column_stack([cuts_fixed, th]), ok


def _enumerate_bands(m: RotSymMetric, xi: float, lattice: np.ndarray, cs: _Cuts, ks=(2, 3, 4)):
    """Best lattice configuration for each cut count and complement flag.

    Yields ``(perimeter, cuts, complement)``.
    """
    n = lattice.size
    for k in ks:
        if k == 1:
            fixed = np.zeros((1, 0))
        else:
            fixed = np.array(list(itertools.combinations(range(n), k - 1)), dtype=int)
            fixed = lattice[fixed]
        for comp in (False, True):
            cuts, ok = _solve_last_cut(fixed, k, comp, xi, cs)
            if not np.any(ok):
                continue
            cuts = cuts[ok]
            L = m.circle_length(cuts).sum(axis=1)
            i = int(np.argmin(L))
            yield float(L[i]), cuts[i], comp


def _refine_band(m: RotSymMetric, xi: float, cuts: np.ndarray, comp: bool, cs: _Cuts):
    k = cuts.size
    free0 = cuts[:-1]

    def solve(free):
        c, ok = _solve_last_cut(np.asarray(free)[None, :], k, comp, xi, cs)
        if not ok[0] or np.any(np.diff(c[0]) <= 0) or c[0, 0] <= 0:
            return None
        return c[0]

    def objective(free):
        c = solve(free)
        if c is None:
            return 1e30
        return float(m.circle_length(c).sum())

    res = minimize(objective, free0, method="Nelder-Mead",
                   options={"xatol": 1e-8, "fatol": 1e-13, "maxiter": 2000})
    best = solve(res.x) if res.fun < objective(free0) else cuts
    if best is None:
        best = cuts
    fixed = best[:-1]
    A_last, _ = _last_cut_area(m, fixed[None, :], k, comp, xi, cs.area_M)
    return np.concatenate([fixed, [cs.invert_exact(float(A_last[0]))]])


# -- disks ------------------------------------------------------------------------------

_DISK_CACHE: "weakref.WeakKeyDictionary[RotSymMetric, DiskTable]" = weakref.WeakKeyDictionary()


def disk_centers(m: RotSymMetric) -> np.ndarray:
    """31 evenly spaced interior colatitudes plus the grid location of max K."""
    K = curvature(m).values
    extra = m.theta[int(np.argmax(K))]
    return np.concatenate([np.arange(1, N_DISK_CENTERS) * math.pi / N_DISK_CENTERS, [extra]])


def disk_table(m: RotSymMetric) -> DiskTable:
    t = _DISK_CACHE.get(m)
    if t is None:
        t = DiskTable(m, disk_centers(m), extend=True)
        _DISK_CACHE[m] = t
    return t


# -- profile ---------------------------------------------------------------------------------


def _candidates(m: RotSymMetric, xi: float, cs: _Cuts, with_disks: bool = True):
    """All family minimizers as ``(perimeter, order, region)``."""
    M = cs.area_M
    out = []
    # caps: north for xi, south cap is the complement of a north cap with 1 - xi
    for order, comp in ((0, False), (1, True)):
        a = (1.0 - xi) * M if comp else xi * M
        th = cs.invert_exact(a)
        out.append((float(m.circle_length(th)), (0, order, th), Region("cap", (th,), comp)))

    lattice = (np.arange(N_COARSE_CUTS) + 0.5) * math.pi / N_COARSE_CUTS
    coarse = list(_enumerate_bands(m, xi, lattice, cs))
    if coarse:
        _, cuts, comp = min(coarse, key=lambda c: c[0])
        cuts = _refine_band(m, xi, cuts, comp, cs)
        try:
            reg = Region("band", tuple(cuts), comp)
        except ValueError:
            reg = None
        if reg is not None:
            out.append((float(m.circle_length(cuts).sum()), (1, 0, cuts[0]), reg))

    if with_disks:
        table = disk_table(m)
        for comp in (False, True):
            a = (1.0 - xi) * M if comp else xi * M
            for c in range(table.centers.size):
                r = table.radius_for_area(c, a)
                if r is None:
                    continue
                reg = Region("disk", (table.centers[c], r), comp)
                out.append((float(table.perimeter(c, r)), (2, 0, table.centers[c]), reg))
    return out


def _pick(cands):
    best = min(c[0] for c in cands)
    tied = [c for c in cands if c[0] <= best * (1.0 + TIE_RTOL)]
    return min(tied, key=lambda c: c[1])


def profile_sample(m: RotSymMetric, xi: float) -> ProfilePoint:
    """Minimal boundary length enclosing area ratio ``xi``."""
    if not XI_MIN <= xi <= 1.0 - XI_MIN:
        raise ValueError(f"xi={xi} outside [{XI_MIN}, {1 - XI_MIN}]")
    cs = _Cuts(m)
    perim, _, region = _pick(_candidates(m, xi, cs))
    if region.kind == "disk":
        kappa = measure_disk(m, *region.params).kappa
        kappa = -kappa if region.complement else kappa
    else:
        kappa = boundary_curvature(m, region)
    return ProfilePoint(float(xi), perim, kappa, region)


def leading_term(area_M: float, xi):
    """Small-area asymptote ``sqrt(4 pi |M| xi)``, used below ``XI_MIN``."""
    return np.sqrt(4.0 * math.pi * area_M * np.asarray(xi))


def uniform_xi_grid(n_points: int = 63) -> np.ndarray:
    """``k / (n + 1)`` for ``k = 1..n``; symmetric about 1/2."""
    return np.arange(1, n_points + 1) / (n_points + 1)


def _check_grid(xi_grid: np.ndarray):
    if xi_grid.ndim != 1 or xi_grid.size == 0:
        raise ValueError("xi grid must be a non-empty 1-d array")
    if np.any(np.diff(xi_grid) <= 0):
        raise ValueError("xi grid must be strictly increasing")
    if np.any(xi_grid <= 0) or np.any(xi_grid >= 1):
        raise ValueError("xi grid must lie inside (0, 1)")
    if not np.allclose(xi_grid, 1.0 - xi_grid[::-1], rtol=0, atol=1e-12):
        raise ValueError("xi grid must be symmetric about 1/2")


def _sample_task(args):
    m, xi = args
    return profile_sample(m, xi)


def profile_curve(m: RotSymMetric, xi_grid, jobs: int = 1, symmetric: bool = True) -> ProfileCurve:
    """Profile samples over ``xi_grid``, optionally on ``jobs`` worker processes."""
    xi_grid = np.asarray(xi_grid, dtype=float)
    if symmetric:
        _check_grid(xi_grid)
    if jobs and jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as ex:
            points = list(ex.map(_sample_task, [(m, float(x)) for x in xi_grid]))
    else:
        points = [profile_sample(m, float(x)) for x in xi_grid]
    return ProfileCurve(m.label, points)


# -- oracle -----------------------------------------------------------------------------------


def band_oracle(m: RotSymMetric, xi: float, n_cuts: int = 200) -> float:
    """Brute-force minimum over caps and up to two bands with cuts on a lattice.

    Every configuration of 0 to 3 lattice cuts is enumerated and the last cut
    is solved exactly for the area constraint.  Independent of the refinement
    and disk search in :func:`profile_sample`.
    """
    if n_cuts > 400:
        raise ValueError("n_cuts must be <= 400")
    M = total_area(m)
    lattice = (np.arange(n_cuts) + 0.5) * math.pi / n_cuts
    A_lat = m.cumulative_area(lattice)
    L_lat = m.circle_length(lattice)
    best = math.inf

    th_tab = np.linspace(0.0, math.pi, 8 * n_cuts + 1)
    A_tab = m.cumulative_area(th_tab)

    def last_cut(a):
        # tabulated guess, then Newton on the cumulative area
        th = np.interp(a, A_tab, th_tab)
        for _ in range(4):
            slope = 2.0 * math.pi * np.exp(2.0 * m.u_at(th)) * np.sin(th)
            th = np.clip(th - (m.cumulative_area(th) - a) / np.maximum(slope, 1e-300), 0.0, math.pi)
        return th

    for k in (1, 2, 3, 4):
        if k == 1:
            idx = np.zeros((1, 0), dtype=int)
        else:
            idx = np.array(list(itertools.combinations(range(n_cuts), k - 1)), dtype=int)
        Afix = A_lat[idx]
        Lfix = L_lat[idx].sum(axis=1)
        signs = np.where(np.arange(1, k) % 2 == 1, -1.0, 1.0)
        partial = Afix @ signs + (M if k % 2 else 0.0)
        last_sign = -1.0 if k % 2 == 1 else 1.0
        lower = Afix[:, -1] if k > 1 else np.zeros(idx.shape[0])
        for target in (xi * M, (1.0 - xi) * M):
            a_last = (target - partial) / last_sign
            ok = (a_last > lower) & (a_last < M)
            if not np.any(ok):
                continue
            th = last_cut(a_last[ok])
            L = Lfix[ok] + m.circle_length(th)
            best = min(best, float(L.min()))
    return best


# -- comparability ---------------------------------------------------------------------------


def perimeter_in(m_other: RotSymMetric, m: RotSymMetric, r: Region) -> float:
    """Perimeter in ``m_other`` of the set described by ``r`` relative to ``m``.

    Caps and bands are metric independent; a disk is the ``m``-geodesic disk.
    """
    if r.kind == "disk":
        return boundary_length_in(m_other, m, r.params[0], r.params[1])
    return region_measures(m_other, r)[1]


def sup_abs_difference(m1: RotSymMetric, m2: RotSymMetric) -> float:
    """``sup |u1 - u2|`` over ``[0, pi]`` for the interpolated exponents.

    Perimeters are measured through the interpolants, whose difference can
    peak between samples or at the poles, so the grid maximum alone can
    understate the equivalence constant.
    """
    th = np.linspace(0.0, math.pi, 16 * m1.n_grid + 1)
    d = lambda t: -abs(float(m1.u_at(t) - m2.u_at(t)))
    vals = np.abs(m1.u_at(th) - m2.u_at(th))
    best = max(float(vals.max()), float(np.max(np.abs(m1.u - m2.u))))
    i = int(np.argmax(vals))
    lo, hi = th[max(i - 1, 0)], th[min(i + 1, th.size - 1)]
    res = minimize_scalar(d, bounds=(lo, hi), method="bounded", options={"xatol": 1e-13})
    return max(best, -float(res.fun))


def comparability_check(m1: RotSymMetric, m2: RotSymMetric, regions) -> tuple[float, float]:
    """Equivalence constant ``C`` and the worst violation of the perimeter bounds.

    With ``g2 = exp(2(u2 - u1)) g1`` the metrics satisfy ``g1/C <= g2 <= C g1``
    for ``C = exp(2 max|u1 - u2|)``; in dimension 2 every perimeter ratio
    ``P2/P1`` must lie in ``[C^-1/2, C^1/2]``.  The returned violation is
    ``<= 0`` when all regions pass.
    """
    if m1.n_grid != m2.n_grid:
        raise ValueError(f"grid mismatch: {m1.n_grid} vs {m2.n_grid}")
    C = math.exp(2.0 * sup_abs_difference(m1, m2))
    lo, hi = C**-0.5, C**0.5
    worst = -math.inf
    for r in regions:
        P1 = region_measures(m1, r)[1]
        P2 = perimeter_in(m2, m1, r)
        ratio = P2 / P1
        worst = max(worst, ratio - hi, lo - ratio)
    return C, worst
