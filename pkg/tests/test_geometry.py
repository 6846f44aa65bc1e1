import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from isoplab import geometry as geo
from isoplab.geometry import (
    FocalRadiusExceeded,
    RotSymMetric,
    ScalarField,
    builtin_metric,
    curvature,
    from_function,
    geodesic_ball,
    gray_series,
    laplacian,
    round_metric,
    total_area,
)


def test_round_fixture():
    m = round_metric(256)
    assert m.n_grid == 256
    assert np.all(m.u == 0.0)
    assert abs(total_area(round_metric(512)) - 4 * math.pi) < 1e-8
    assert np.max(np.abs(curvature(m).values - 1.0)) < 1e-6


@pytest.mark.parametrize("n", [0, 8, 15])
def test_grid_too_small(n):
    with pytest.raises(ValueError):
        round_metric(n)


def test_metric_invariants():
    with pytest.raises(ValueError):
        RotSymMetric(np.full(32, 51.0))
    with pytest.raises(ValueError):
        RotSymMetric(np.r_[np.zeros(31), np.nan])
    m = round_metric(32)
    with pytest.raises((AttributeError, TypeError)):
        m.u = np.ones(32)


def test_constant_shift_curvature():
    c = 0.3
    m = builtin_metric("const", 128, c)
    assert np.allclose(curvature(m).values, math.exp(-2 * c), rtol=0, atol=1e-12)


@pytest.mark.parametrize("name,param", [("round", None), ("const", 0.4), ("quadrupole", 0.1),
                                        ("quadrupole", 0.2), ("cos2", 0.3)])
def test_gauss_bonnet_512(name, param):
    m = builtin_metric(name, 512, param)
    K = curvature(m).values
    assert abs(geo.integrate(m, K) - 4 * math.pi) <= 1e-5 * 4 * math.pi


def test_gauss_bonnet_second_order():
    errs = []
    for n in (64, 128, 256, 512):
        m = builtin_metric("cos2", n, 0.3)
        errs.append(abs(geo.gauss_bonnet_defect(m)))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8), rates


def test_laplacian_constant():
    m = round_metric(128)
    f = ScalarField(np.full(128, 3.7), "other")
    assert np.max(np.abs(laplacian(m, f).values)) < 1e-10


def test_laplacian_first_harmonic_order2():
    errs = []
    for n in (64, 128, 256):
        m = round_metric(n)
        f = ScalarField(np.cos(m.theta), "other")
        errs.append(np.max(np.abs(laplacian(m, f).values + 2 * np.cos(m.theta))))
    assert errs[-1] < 1e-3
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.5), ratios


def test_laplacian_grid_mismatch():
    with pytest.raises(ValueError):
        laplacian(round_metric(64), ScalarField(np.zeros(32), "other"))


def test_total_area_scaling():
    m = builtin_metric("const", 256, math.log(2))
    assert abs(total_area(m) / (16 * math.pi) - 1) < 1e-12


def test_total_area_vs_adaptive_quadrature():
    m = from_function(lambda t: 0.1 * np.cos(t), 512)
    ref = 2 * math.pi * quad(lambda t: math.exp(0.2 * math.cos(t)) * math.sin(t), 0, math.pi, epsabs=1e-14)[0]
    assert abs(total_area(m) / ref - 1) < 1e-8


def test_shift_scales_area_exactly(quad512):
    for c in (-0.7, 0.25, 1.3):
        r = total_area(quad512.shifted(c)) / (math.exp(2 * c) * total_area(quad512))
        assert abs(r - 1) < 1e-12


def test_ball_round_closed_form(round512):
    b = geodesic_ball(round512, math.pi / 2, 0.5)
    # closed forms: 2pi(1 - cos r), 2pi sin r
    assert abs(b.area - 2 * math.pi * (1 - math.cos(0.5))) < 1e-5
    assert abs(b.perimeter - 2 * math.pi * math.sin(0.5)) < 1e-5
    assert abs(b.kappa - 1 / math.tan(0.5)) < 1e-6


def test_ball_homogeneous_on_round(round512):
    a = geodesic_ball(round512, 0.3, 0.7)
    b = geodesic_ball(round512, 2.0, 0.7)
    assert abs(a.area - b.area) < 1e-8
    assert abs(a.perimeter - b.perimeter) < 1e-8


def test_ball_rescaled_sphere():
    m = builtin_metric("const", 512, math.log(2))
    b = geodesic_ball(m, math.pi / 2, 1.0)
    assert abs(b.area - 8 * math.pi * (1 - math.cos(0.5))) < 1e-5
    assert abs(b.perimeter - 4 * math.pi * math.sin(0.5)) < 1e-5


def test_ball_scaling_law(quad512):
    c = 0.4
    ms = quad512.shifted(c)
    a = geodesic_ball(quad512, 1.1, 0.4)
    b = geodesic_ball(ms, 1.1, 0.4 * math.exp(c))
    assert abs(b.area / (math.exp(2 * c) * a.area) - 1) < 1e-6
    assert abs(b.perimeter / (math.exp(c) * a.perimeter) - 1) < 1e-6


@pytest.mark.parametrize("pole", [0.0, math.pi])
@pytest.mark.parametrize("r", [0.2, 0.6, 1.0])
def test_pole_ball_matches_cap(quad512, pole, r):
    b = geodesic_ball(quad512, pole, r)
    # radial geodesics from a pole are meridians: arc length = int e^u dtheta
    s = lambda t: quad(lambda x: math.exp(quad512.u_at(x)), 0, t, epsabs=1e-13)[0]
    if pole == 0.0:
        from scipy.optimize import brentq

        th = brentq(lambda t: s(t) - r, 1e-9, math.pi)
        area, perim = float(quad512.cumulative_area(th)), float(quad512.circle_length(th))
    else:
        from scipy.optimize import brentq

        total = s(math.pi)
        th = brentq(lambda t: total - s(t) - r, 0, math.pi - 1e-9)
        area = total_area(quad512) - float(quad512.cumulative_area(th))
        perim = float(quad512.circle_length(th))
    assert abs(b.area / area - 1) < 1e-6
    assert abs(b.perimeter / perim - 1) < 1e-6


def test_ball_bad_args(round512):
    with pytest.raises(ValueError):
        geodesic_ball(round512, -0.1, 0.5)
    with pytest.raises(ValueError):
        geodesic_ball(round512, 1.0, 0.0)
    with pytest.raises(ValueError):
        geodesic_ball(round512, 1.0, 1.5)


def test_focal_radius():
    # strongly pinched metric: r_max = e^{max u} reaches past the first conjugate point
    m = builtin_metric("quadrupole", 256, -2.0)
    with pytest.raises(FocalRadiusExceeded):
        geodesic_ball(m, math.pi / 2, m.r_max)


def test_gray_series_values():
    a, p = gray_series(1.0, 0.0, 0.1)
    assert a == pytest.approx(math.pi * 0.01 * (1 - 0.01 / 12 + 2e-4 / 720), rel=1e-15)
    assert abs(a - 0.0313898) < 1e-7
    assert p == pytest.approx(2 * math.pi * 0.1 * (1 - 0.01 / 6 + 1e-4 / 120), rel=1e-15)
    # closed form 2 pi sin(0.1) = 0.62727...; residual O(r^7)
    assert abs(p - 2 * math.pi * math.sin(0.1)) < 1e-8
    assert abs(a - 2 * math.pi * (1 - math.cos(0.1))) < 1e-9


def test_gray_series_flat():
    for r in (0.01, 0.3, 2.0):
        assert gray_series(0.0, 0.0, r) == pytest.approx((math.pi * r * r, 2 * math.pi * r), rel=1e-15)


def test_json_roundtrip(tmp_path, cos2_512):
    p = tmp_path / "m.json"
    geo.save_metric(cos2_512, p)
    m = geo.load_metric(p)
    assert np.array_equal(m.u, cos2_512.u)
    assert m.label == cos2_512.label
    d = json.loads(p.read_text())
    assert d["n_grid"] == 512 and len(d["u"]) == 512


def test_json_rejects_bad_grid():
    with pytest.raises(ValueError):
        geo.metric_from_json(json.dumps({"n_grid": 20, "u": [0.0] * 19, "label": ""}))


def _on_sphere(center, xy):
    # inverse stereographic projection from the antipode of the center
    X, Y = xy[:, 0], xy[:, 1]
    s = X * X + Y * Y
    a, b, c = (1 - s) / (1 + s), 2 * X / (1 + s), 2 * Y / (1 + s)
    e_p = np.array([math.sin(center), 0.0, math.cos(center)])
    e1 = np.array([math.cos(center), 0.0, -math.sin(center)])
    e2 = np.array([0.0, 1.0, 0.0])
    return a[:, None] * e_p + b[:, None] * e1 + c[:, None] * e2


def test_simple_boundaries():
    t = 2 * math.pi * np.arange(64) / 64
    circle = np.column_stack([0.5 * np.cos(t), 0.5 * np.sin(t)])
    eight = np.column_stack([0.5 * np.sin(t), 0.3 * np.sin(2 * t)])
    P = np.stack([_on_sphere(1.0, circle), _on_sphere(1.0, eight)])
    assert list(geo._simple_boundaries(P, np.array([1.0, 1.0]))) == [True, False]


def test_measure_disk_beyond_r_max(round512):
    b = geo.measure_disk(round512, 1.0, 1.4)
    assert abs(b.area - 2 * math.pi * (1 - math.cos(1.4))) < 1e-8
    with pytest.raises(ValueError):
        geodesic_ball(round512, 1.0, 1.4)


def test_disk_table_matches_direct(quad512):
    t = geo.DiskTable(quad512, [0.4, 1.3], extend=True)
    for c, center in enumerate(t.centers):
        for r in (0.05, 0.5, 1.5):
            b = geo.measure_disk(quad512, center, r)
            assert t.area(c, r) == pytest.approx(b.area, rel=1e-9)
            assert t.perimeter(c, r) == pytest.approx(b.perimeter, rel=1e-9)
    assert np.all(t.max_area > 0.5 * total_area(quad512))
