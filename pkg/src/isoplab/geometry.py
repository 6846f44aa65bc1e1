"""
Rotationally symmetric metrics on the 2-sphere.

A metric is stored as a conformal exponent ``u`` sampled on the staggered
colatitude grid ``theta_i = (i + 1/2) * pi / n``::

    g = exp(2 u(theta)) * (dtheta^2 + sin(theta)^2 dphi^2)

Grid operations (curvature, Laplacian) use second-order centered differences
with even reflection of the field at both poles.  Off-grid evaluation (cut
positions, geodesic shooting) goes through the cosine-series interpolant of
the grid samples, tabulated once per metric on a refined grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.fft import dct
from scipy.interpolate import CubicHermiteSpline, CubicSpline

MIN_GRID = 16
MAX_ABS_U = 50.0

#: geodesic-ball radii are capped at this many background units
R_MAX_BACKGROUND = 1.0
N_RAYS = 64

QUANTITIES = ("K", "lapK", "other")


class FocalRadiusExceeded(ValueError):
    """A Jacobi field vanished before the requested radius was reached."""


@dataclass(frozen=True, eq=False)
class RotSymMetric:
    """Conformal exponent of a rotationally symmetric metric on S^2.

    Instances are immutable; derived tables are cached on first use.
    """

    u: np.ndarray
    label: str = ""

    def __post_init__(self):
        u = np.array(self.u, dtype=float).ravel()
        if u.size < MIN_GRID:
            raise ValueError(f"n_grid must be >= {MIN_GRID}, got {u.size}")
        if not np.all(np.isfinite(u)):
            raise ValueError("conformal exponent has non-finite entries")
        if np.max(np.abs(u)) > MAX_ABS_U:
            raise ValueError(f"max|u| exceeds {MAX_ABS_U}")
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def n_grid(self) -> int:
        return self.u.size

    @property
    def dtheta(self) -> float:
        return math.pi / self.n_grid

    @cached_property
    def theta(self) -> np.ndarray:
        th = (np.arange(self.n_grid) + 0.5) * self.dtheta
        th.setflags(write=False)
        return th

    def shifted(self, c: float, label: str | None = None) -> "RotSymMetric":
        """Return the metric with ``u + c`` (the metric scaled by exp(2c))."""
        return RotSymMetric(self.u + c, self.label if label is None else label)

    # -- spectral interpolant -------------------------------------------------

    @cached_property
    def _tables(self) -> "_OffGrid":
        return _OffGrid(self)

    def u_at(self, theta) -> np.ndarray:
        return self._tables.u(theta)

    def du_at(self, theta) -> np.ndarray:
        return self._tables.u(theta, 1)

    def curvature_at(self, theta) -> np.ndarray:
        """Gauss curvature from the cosine-series interpolant of ``u``."""
        return self._tables.K(theta)

    def cumulative_area(self, theta) -> np.ndarray:
        """Area of the cap ``{colatitude <= theta}``."""
        return self._tables.A(theta)

    def circle_length(self, theta) -> np.ndarray:
        """Length of the circle of revolution at colatitude ``theta``."""
        th = np.asarray(theta, dtype=float)
        return 2.0 * np.pi * np.exp(self.u_at(th)) * np.sin(th)

    @property
    def r_max(self) -> float:
        """Largest admissible geodesic-ball radius."""
        return R_MAX_BACKGROUND * math.exp(float(np.max(self.u)))


@dataclass(frozen=True, eq=False)
class ScalarField:
    values: np.ndarray
    quantity: str = "other"

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("scalar field has non-finite entries")
        if self.quantity not in QUANTITIES:
            raise ValueError(f"unknown quantity {self.quantity!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class BallMeasures:
    center_colatitude: float
    radius: float
    area: float
    perimeter: float
    kappa: float


# -- quadrature ---------------------------------------------------------------


def fejer_weights(n: int) -> np.ndarray:
    """Weights of Fejer's first rule in ``z = cos(theta)`` on the staggered grid.

    ``sum(w * f(theta_i))`` approximates ``int_0^pi f(theta) sin(theta) dtheta``
    and is exact for cosine polynomials of degree < n.
    """
    theta = (np.arange(n) + 0.5) * math.pi / n
    k = np.arange(1, n // 2 + 1)
    s = np.cos(2.0 * np.outer(theta, k)) / (4.0 * k**2 - 1.0)
    return (2.0 / n) * (1.0 - 2.0 * s.sum(axis=1))


_WEIGHTS: dict[int, np.ndarray] = {}


def _weights(n: int) -> np.ndarray:
    w = _WEIGHTS.get(n)
    if w is None:
        w = fejer_weights(n)
        w.setflags(write=False)
        _WEIGHTS[n] = w
    return w


def integrate(m: RotSymMetric, f: np.ndarray) -> float:
    """``int_M f dA`` for a grid field ``f``."""
    return 2.0 * math.pi * float(np.dot(_weights(m.n_grid), f * np.exp(2.0 * m.u)))


# -- constructors -------------------------------------------------------------


def round_metric(n_grid: int, label: str = "round") -> RotSymMetric:
    if n_grid < MIN_GRID:
        raise ValueError(f"n_grid must be >= {MIN_GRID}, got {n_grid}")
    return RotSymMetric(np.zeros(n_grid), label)


def from_function(fn, n_grid: int, label: str = "") -> RotSymMetric:
    """Sample ``u = fn(theta)`` on the staggered grid."""
    if n_grid < MIN_GRID:
        raise ValueError(f"n_grid must be >= {MIN_GRID}, got {n_grid}")
    theta = (np.arange(n_grid) + 0.5) * math.pi / n_grid
    return RotSymMetric(np.broadcast_to(fn(theta), theta.shape), label)


def builtin_metric(name: str, n_grid: int, param: float | None = None) -> RotSymMetric:
    """Builtin family: ``round``, ``const c``, ``quadrupole a``, ``cos2 a``."""
    if name == "round":
        return round_metric(n_grid)
    if param is None:
        raise ValueError(f"builtin {name!r} needs a numeric parameter")
    a = float(param)
    if name == "const":
        return from_function(lambda t: np.full_like(t, a), n_grid, f"const {a:g}")
    if name == "quadrupole":
        return from_function(lambda t: a * (3 * np.cos(t) ** 2 - 1) / 2, n_grid, f"quadrupole {a:g}")
    if name == "cos2":
        return from_function(lambda t: a * np.cos(2 * t), n_grid, f"cos2 {a:g}")
    raise ValueError(f"unknown builtin metric {name!r}")


# -- grid operators -------------------------------------------------------------


def _round_laplacian(m: RotSymMetric, f: np.ndarray) -> np.ndarray:
    """Second-order finite-volume Laplacian on the unit sphere, even at the poles."""
    n, h = m.n_grid, m.dtheta
    faces = np.sin(np.arange(1, n) * h)  # sin(theta_{i+1/2}), interior faces only
    flux = np.zeros(n + 1)
    flux[1:-1] = faces * np.diff(f)
    return np.diff(flux) / (np.sin(m.theta) * h * h)


def curvature(m: RotSymMetric) -> ScalarField:
    """Gauss curvature ``K = exp(-2u) (1 - Lap0 u)`` on the grid."""
    lap0 = _round_laplacian(m, m.u)
    return ScalarField(np.exp(-2.0 * m.u) * (1.0 - lap0), "K")


def laplacian(m: RotSymMetric, f: ScalarField) -> ScalarField:
    values = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
    if values.size != m.n_grid:
        raise ValueError(f"field has {values.size} samples, metric grid has {m.n_grid}")
    quantity = "lapK" if getattr(f, "quantity", None) == "K" else "other"
    return ScalarField(np.exp(-2.0 * m.u) * _round_laplacian(m, values), quantity)


def total_area(m: RotSymMetric) -> float:
    return integrate(m, np.ones(m.n_grid))


def gauss_bonnet_defect(m: RotSymMetric) -> float:
    """``int K dA - 4 pi``."""
    return integrate(m, curvature(m).values) - 4.0 * math.pi


# -- off-grid evaluation --------------------------------------------------------


class _OffGrid:
    """Cosine-series interpolant of ``u`` tabulated on a refined grid."""

    REFINE = 4

    def __init__(self, m: RotSymMetric):
        n = m.n_grid
        a = dct(m.u, type=2) / n
        a[0] *= 0.5
        g = dct(np.exp(2.0 * m.u), type=2) / n
        g[0] *= 0.5
        k = np.arange(n, dtype=float)

        th = np.linspace(0.0, math.pi, self.REFINE * n + 1)
        ct, st = np.cos(th), np.sin(th)
        kt = np.outer(th, k)
        cos_kt, sin_kt = np.cos(kt), np.sin(kt)

        u = cos_kt @ a
        du = -(sin_kt @ (k * a))
        d2u = -(cos_kt @ (k * k * a))
        d3u = sin_kt @ (k**3 * a)
        # u'/sin(theta) is smooth; its pole limits are u''(0) and -u''(pi)
        q = np.empty_like(th)
        inner = st > 1e-12
        q[inner] = du[inner] / st[inner]
        q[~inner] = ct[~inner] * d2u[~inner]
        lap0 = d2u + ct * q
        K = np.exp(-2.0 * u) * (1.0 - lap0)

        # int_0^theta cos(k phi) sin(phi) dphi in closed form
        with np.errstate(divide="ignore", invalid="ignore"):
            kp, km = 1.0 + k, 1.0 - k
            prim = 0.5 * ((1.0 - np.cos(np.outer(th, kp))) / kp + (1.0 - np.cos(np.outer(th, km))) / km)
        if n > 1:
            prim[:, 1] = 0.25 * (1.0 - np.cos(2.0 * th))
        A = 2.0 * math.pi * (prim @ g)
        dA = 2.0 * math.pi * np.exp(2.0 * u) * st

        self.theta = th
        self._u = CubicHermiteSpline(th, u, du)
        self._du = CubicHermiteSpline(th, du, d2u)
        self._d2u = CubicHermiteSpline(th, d2u, d3u)
        self._q = CubicSpline(th, q)
        self._K = CubicSpline(th, K)
        self._A = CubicHermiteSpline(th, A, dA)
        self.A_table = A

    def u(self, theta, nu: int = 0):
        th = np.asarray(theta, dtype=float)
        return (self._u, self._du, self._d2u)[nu](th)

    def q(self, theta):
        return self._q(theta)

    def K(self, theta):
        return self._K(theta)

    def A(self, theta):
        return self._A(theta)


# -- geodesic balls ---------------------------------------------------------------


def _simpson_periodic(n: int) -> np.ndarray:
    if n % 2:
        raise ValueError("periodic Simpson rule needs an even number of rays")
    h = 2.0 * math.pi / n
    w = np.full(n, 2.0 * h / 3.0)
    w[1::2] = 4.0 * h / 3.0
    return w


def _ray_rhs(tab: _OffGrid, y: np.ndarray) -> np.ndarray:
    # y[..., :] = x(3), v(3), J, J', area
    x, v = y[..., 0:3], y[..., 3:6]
    J, Jp = y[..., 6], y[..., 7]
    z = np.clip(x[..., 2], -1.0, 1.0)
    theta = np.arccos(z)
    q = tab.q(theta)
    vv = np.einsum("...i,...i->...", v, v)
    grad = -q[..., None] * (np.array([0.0, 0.0, 1.0]) - z[..., None] * x)
    gv = np.einsum("...i,...i->...", grad, v)
    acc = -vv[..., None] * x - 2.0 * gv[..., None] * v + vv[..., None] * grad
    out = np.empty_like(y)
    out[..., 0:3] = v
    out[..., 3:6] = acc
    out[..., 6] = Jp
    out[..., 7] = -tab.K(theta) * J
    out[..., 8] = J
    return out


def _initial_rays(m: RotSymMetric, centers: np.ndarray, n_rays: int) -> np.ndarray:
    centers = np.atleast_1d(np.asarray(centers, dtype=float))
    alpha = 2.0 * math.pi * np.arange(n_rays) / n_rays
    c = centers[:, None]
    speed = np.exp(-m.u_at(centers))[:, None]
    y = np.zeros((centers.size, n_rays, 9))
    y[..., 0] = np.sin(c)
    y[..., 2] = np.cos(c)
    y[..., 3] = speed * np.cos(alpha) * np.cos(c)
    y[..., 4] = speed * np.sin(alpha)
    y[..., 5] = -speed * np.cos(alpha) * np.sin(c)
    y[..., 7] = 1.0
    return y


def _rk4(tab, y, h):
    k1 = _ray_rhs(tab, y)
    k2 = _ray_rhs(tab, y + 0.5 * h * k1)
    k3 = _ray_rhs(tab, y + 0.5 * h * k2)
    k4 = _ray_rhs(tab, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def shoot(m: RotSymMetric, center: float, radius: float, n_rays: int = N_RAYS):
    """Integrate ``n_rays`` unit-speed geodesics from ``center`` out to ``radius``.

    Returns the final ray states, shape ``(n_rays, 9)``: position and velocity
    in the embedding of the unit sphere, Jacobi field ``J``, ``J'`` and the
    radial integral of ``J``.
    """
    step = min(m.dtheta, radius / 64.0)
    n_steps = max(1, math.ceil(radius / step - 1e-9))
    h = radius / n_steps
    tab = m._tables
    y = _initial_rays(m, [center], n_rays)[0]
    for i in range(n_steps):
        y = _rk4(tab, y, h)
        if np.any(y[:, 6] <= 0.0):
            raise FocalRadiusExceeded(
                f"Jacobi field vanished at radius {(i + 1) * h:.6g} from colatitude {center:.6g}"
            )
    return y


def measure_disk(m: RotSymMetric, center_colatitude: float, radius: float,
                 n_rays: int = N_RAYS) -> BallMeasures:
    """Disk measures without the ``r_max`` cap; the caller ensures the disk is embedded."""
    if not 0.0 <= center_colatitude <= math.pi:
        raise ValueError(f"center colatitude {center_colatitude} outside [0, pi]")
    if not radius > 0.0:
        raise ValueError(f"radius must be positive, got {radius}")
    y = shoot(m, center_colatitude, radius, n_rays)
    w = _simpson_periodic(n_rays)
    J, Jp = y[:, 6], y[:, 7]
    return BallMeasures(
        center_colatitude=float(center_colatitude),
        radius=float(radius),
        area=float(w @ y[:, 8]),
        perimeter=float(w @ J),
        kappa=float(np.mean(Jp / J)),
    )


def geodesic_ball(m: RotSymMetric, center_colatitude: float, radius: float,
                  n_rays: int = N_RAYS) -> BallMeasures:
    """Area, perimeter and boundary curvature of a geodesic disk.

    A center at a pole (0 or pi) is accepted and gives a polar cap.
    """
    if not 0.0 <= center_colatitude <= math.pi:
        raise ValueError(f"center colatitude {center_colatitude} outside [0, pi]")
    if not 0.0 < radius <= m.r_max * (1 + 1e-12):
        raise ValueError(f"radius {radius} outside (0, {m.r_max:.6g}]")
    return measure_disk(m, center_colatitude, radius, n_rays)


def boundary_length_in(m_other: RotSymMetric, m: RotSymMetric, center: float, radius: float,
                       n_rays: int = N_RAYS) -> float:
    """Length, measured in ``m_other``, of the boundary of the ``m``-geodesic disk."""
    y = shoot(m, center, radius, n_rays)
    theta = np.arccos(np.clip(y[:, 2], -1.0, 1.0))
    w = _simpson_periodic(n_rays)
    return float(w @ (y[:, 6] * np.exp(m_other.u_at(theta) - m.u_at(theta))))


def _simple_boundaries(P: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """True where the closed ray-endpoint polygon of a disk does not cross itself.

    ``P`` has shape ``(centers, rays, 3)``.  Points are projected
    stereographically from the antipode of each center, so every disk that
    avoids that antipode lands in the plane.
    """
    c = centers[:, None]
    d = 1.0 + P[..., 0] * np.sin(c) + P[..., 2] * np.cos(c)
    ok = np.all(d > 1e-9, axis=1)
    d = np.maximum(d, 1e-9)
    X = (P[..., 0] * np.cos(c) - P[..., 2] * np.sin(c)) / d
    Y = P[..., 1] / d
    ax, ay = X, Y
    bx, by = np.roll(X, -1, axis=1), np.roll(Y, -1, axis=1)

    def orient(px, py, qx, qy, rx, ry):
        return (qx - px) * (ry - py) - (qy - py) * (rx - px)

    A = lambda v: v[:, :, None]
    B = lambda v: v[:, None, :]
    o1 = orient(A(ax), A(ay), A(bx), A(by), B(ax), B(ay))
    o2 = orient(A(ax), A(ay), A(bx), A(by), B(bx), B(by))
    o3 = orient(B(ax), B(ay), B(bx), B(by), A(ax), A(ay))
    o4 = orient(B(ax), B(ay), B(bx), B(by), A(bx), A(by))
    cross = (o1 * o2 < 0) & (o3 * o4 < 0)
    n = P.shape[1]
    i, j = np.indices((n, n))
    gap = np.abs(i - j)
    cross &= ((gap > 1) & (gap < n - 1))[None]
    return ok & ~np.any(cross, axis=(1, 2))


class DiskTable:
    """Geodesic-disk area and perimeter as functions of radius, for many centers.

    All centers are shot at once.  By default the rays stop at ``m.r_max``.
    With ``extend=True`` each center is followed past it until its disk holds
    more than half the total area, its boundary polygon stops being simple or
    a Jacobi field vanishes, whichever comes first.  ``A(s) / s^2`` and
    ``L(s) / s`` are smooth and even in ``s`` and are stored as Hermite
    splines, so small radii interpolate as accurately as large ones.
    """

    CHECK_EVERY = 4

    def __init__(self, m: RotSymMetric, centers, n_rays: int = N_RAYS, min_steps: int = 128,
                 extend: bool = False):
        centers = np.asarray(centers, dtype=float)
        r_max = m.r_max
        n_base = max(min_steps, math.ceil(r_max / m.dtheta))
        h = r_max / n_base
        n_steps = math.ceil(math.pi * n_base) if extend else n_base
        half = 0.5 * total_area(m) * (1.0 + 1e-3)
        w = _simpson_periodic(n_rays)
        tab = m._tables
        y = _initial_rays(m, centers, n_rays)

        area = np.zeros((centers.size, n_steps + 1))
        perim = np.zeros_like(area)
        dperim = np.zeros_like(area)
        dperim[:, 0] = 2.0 * math.pi
        last = np.full(centers.size, n_steps)
        good = np.zeros(centers.size, dtype=int)  # last step known to be embedded
        alive = np.ones(centers.size, dtype=bool)
        i = 0
        for i in range(1, n_steps + 1):
            y = _rk4(tab, y, h)
            area[:, i] = y[..., 8] @ w
            perim[:, i] = y[..., 6] @ w
            dperim[:, i] = y[..., 7] @ w
            focal = alive & np.any(y[..., 6] <= 0.0, axis=1)
            last[focal] = i - 1
            alive &= ~focal
            if extend:
                if i % self.CHECK_EVERY == 0 or i == n_steps:
                    simple = _simple_boundaries(y[..., 0:3], centers)
                    folded = alive & ~simple
                    last[folded] = good[folded]
                    alive &= ~folded
                    good[alive] = i
                full = alive & (area[:, i] > half)
                last[full] = i
                alive &= ~full
                if not alive.any():
                    break
        n_steps = i
        last = np.minimum(last, n_steps)
        if extend:
            # a center still alive at the end was last verified at ``good``
            last = np.where(alive, good, last)
        s = np.arange(n_steps + 1) * h

        self.centers = centers
        self.s = s
        self.last = last
        self._F, self._G = [], []
        for c in range(centers.size):
            k = last[c] + 1
            ss, a, L, dL = s[1:k], area[c, 1:k], perim[c, 1:k], dperim[c, 1:k]
            F = np.concatenate([[math.pi], a / ss**2])
            dF = np.concatenate([[0.0], (L * ss - 2.0 * a) / ss**3])
            G = np.concatenate([[2.0 * math.pi], L / ss])
            dG = np.concatenate([[0.0], (dL * ss - L) / ss**2])
            self._F.append(CubicHermiteSpline(s[:k], F, dF))
            self._G.append(CubicHermiteSpline(s[:k], G, dG))
        self.max_area = np.array([area[c, last[c]] for c in range(centers.size)])

    def area(self, c: int, r):
        return r * r * self._F[c](r)

    def perimeter(self, c: int, r):
        return r * self._G[c](r)

    def radius_for_area(self, c: int, target: float) -> float | None:
        """Radius of the disk about center ``c`` with the given area, if reachable."""
        if not 0.0 < target < self.max_area[c]:
            return None
        from scipy.optimize import brentq

        r_hi = self.s[self.last[c]]
        return brentq(lambda r: self.area(c, r) - target, 0.0, r_hi, xtol=1e-15)


# -- Gray expansions ----------------------------------------------------------------


def gray_series(K_at_p: float, lapK_at_p: float, radius: float) -> tuple[float, float]:
    """Truncated small-ball expansions of area and perimeter about a point."""
    r = radius
    if r <= 0:
        raise ValueError("radius must be positive")
    c4 = 2.0 * K_at_p**2 - 3.0 * lapK_at_p
    area = math.pi * r**2 * (1.0 - K_at_p / 12.0 * r**2 + c4 / 720.0 * r**4)
    perim = 2.0 * math.pi * r * (1.0 - K_at_p / 6.0 * r**2 + c4 / 240.0 * r**4)
    return area, perim


# -- serialization ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def metric_to_json(m: RotSymMetric) -> str:
    body = ", ".join(_fmt(x) for x in m.u)
    return f'{{"n_grid": {m.n_grid}, "u": [{body}], "label": {json.dumps(m.label)}}}\n'


def metric_from_json(text: str) -> RotSymMetric:
    data = json.loads(text)
    if not isinstance(data, dict) or "u" not in data:
        raise ValueError("metric JSON must be an object with a 'u' array")
    u = np.asarray(data["u"], dtype=float)
    if "n_grid" in data and int(data["n_grid"]) != u.size:
        raise ValueError(f"n_grid {data['n_grid']} does not match {u.size} samples")
    return RotSymMetric(u, str(data.get("label", "")))


def save_metric(m: RotSymMetric, path) -> None:
    Path(path).write_text(metric_to_json(m))


def load_metric(path) -> RotSymMetric:
    return metric_from_json(Path(path).read_text())
