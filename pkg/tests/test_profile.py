import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isoplab.geometry import builtin_metric, from_function, geodesic_ball, round_metric, total_area
from isoplab.profile import (
    ProfileCurve,
    Region,
    band_oracle,
    boundary_curvature,
    comparability_check,
    profile_curve,
    profile_sample,
    region_measures,
    uniform_xi_grid,
)
from isoplab.verify import random_regions


def exact_round(xi):
    return 4 * math.pi * np.sqrt(xi * (1 - xi))


def test_region_validation():
    with pytest.raises(ValueError):
        Region("cap", (0.0,))
    with pytest.raises(ValueError):
        Region("band", (1.0, 0.5))
    with pytest.raises(ValueError):
        Region("band", (0.5,))
    with pytest.raises(ValueError):
        Region("disk", (1.0, -0.1))
    with pytest.raises(ValueError):
        Region("blob", (1.0,))


def test_cap_measures(round512):
    a, p = region_measures(round512, Region("cap", (math.pi / 2,)))
    assert a == pytest.approx(2 * math.pi, rel=1e-12)
    assert p == pytest.approx(2 * math.pi, rel=1e-12)
    a, p = region_measures(round512, Region("cap", (math.pi / 3,)))
    assert a == pytest.approx(math.pi, rel=1e-10)
    assert p == pytest.approx(5.441398, abs=1e-6)


def test_complement_measures(quad512):
    r = Region("cap", (1.2,))
    a, p = region_measures(quad512, r)
    ac, pc = region_measures(quad512, Region("cap", (1.2,), True))
    assert a + ac == pytest.approx(total_area(quad512), rel=1e-13)
    assert p == pc


def test_two_bands_worse_than_cap(round512):
    # symmetric bands [a, pi/2 - d] U [pi/2 + d, pi - a] chosen to hold half the area
    from scipy.optimize import brentq

    d = 0.3
    area = lambda a: region_measures(round512, Region("band", (a, math.pi / 2 - d, math.pi / 2 + d, math.pi - a)))[0]
    a = brentq(lambda a: area(a) - 2 * math.pi, 1e-3, math.pi / 2 - d - 1e-3)
    _, p = region_measures(round512, Region("band", (a, math.pi / 2 - d, math.pi / 2 + d, math.pi - a)))
    assert p > 2 * math.pi
    assert band_oracle(round512, 0.5, 200) <= p


def test_disk_measures_delegate(quad512):
    a, p = region_measures(quad512, Region("disk", (1.0, 0.3)))
    b = geodesic_ball(quad512, 1.0, 0.3)
    assert (a, p) == (b.area, b.perimeter)


def test_boundary_curvature(round512):
    assert boundary_curvature(round512, Region("cap", (math.pi / 3,))) == pytest.approx(0.577350, abs=1e-6)
    assert abs(boundary_curvature(round512, Region("cap", (math.pi / 2,)))) < 1e-12
    m2 = builtin_metric("const", 512, math.log(2))
    assert boundary_curvature(m2, Region("cap", (math.pi / 3,))) == pytest.approx(0.288675, abs=1e-6)


def test_boundary_curvature_disk(round512):
    assert boundary_curvature(round512, Region("disk", (1.0, 0.5))) == pytest.approx(1 / math.tan(0.5), abs=1e-6)


def test_sample_round(round512):
    p = profile_sample(round512, 0.5)
    assert p.h == pytest.approx(2 * math.pi, abs=1e-9)
    assert p.region.kind == "cap"
    assert p.region.params[0] == pytest.approx(math.pi / 2, abs=1e-9)
    assert abs(p.kappa) < 1e-8
    q = profile_sample(round512, 0.25)
    assert q.h == pytest.approx(5.441398, abs=1e-6)
    assert q.kappa == pytest.approx(0.577350, abs=1e-6)


@pytest.mark.parametrize("xi", [0.0, 1.0, -0.2, 5e-6, 1.5])
def test_sample_xi_out_of_range(round512, xi):
    with pytest.raises(ValueError):
        profile_sample(round512, xi)


def test_sample_area_constraint(quad512, cos2_512):
    for m in (quad512, cos2_512):
        M = total_area(m)
        for xi in (0.03, 0.2, 0.5, 0.77):
            p = profile_sample(m, xi)
            a, perim = region_measures(m, p.region)
            assert abs(a / M - xi) <= 1e-8
            # disk winners come from the interpolated disk table
            assert perim == pytest.approx(p.h, rel=1e-9)


@pytest.mark.parametrize("name,param", [("round", None), ("const", 0.3), ("quadrupole", 0.2), ("cos2", 0.3),
                                        ("cos2", -0.3)])
def test_symmetry(name, param):
    m = builtin_metric(name, 512, param)
    for xi in (0.05, 0.2, 0.4):
        assert profile_sample(m, xi).h == pytest.approx(profile_sample(m, 1 - xi).h, rel=1e-6)


def test_scaling_covariance(quad512):
    c = -0.45
    ms = quad512.shifted(c)
    for xi in (0.1, 0.35, 0.5):
        assert profile_sample(ms, xi).h == pytest.approx(math.exp(c) * profile_sample(quad512, xi).h, rel=1e-9)


def test_round_curve():
    m = round_metric(512)
    xi = uniform_xi_grid(63)
    c = profile_curve(m, xi)
    assert np.max(np.abs(c.h - exact_round(xi)) / c.h) <= 1e-3
    x, h = c.extended()
    assert x[0] == 0 and x[-1] == 1 and h[0] == 0 and h[-1] == 0


def test_curve_grid_validation(round512):
    with pytest.raises(ValueError):
        profile_curve(round512, [0.5, 0.25, 0.75])
    with pytest.raises(ValueError):
        profile_curve(round512, [0.1, 0.5, 0.8])


def test_near_round_continuity():
    m = builtin_metric("quadrupole", 512, 0.05)
    xi = uniform_xi_grid(15)
    c = profile_curve(m, xi)
    assert np.max(np.abs(c.h / exact_round(xi) - 1)) <= 0.05


def test_curve_jobs_identical(cos2_512):
    xi = uniform_xi_grid(7)
    a = profile_curve(cos2_512, xi, jobs=1).to_csv()
    b = profile_curve(cos2_512, xi, jobs=2).to_csv()
    assert a == b


def test_csv_format(round512, tmp_path):
    c = profile_curve(round512, uniform_xi_grid(3))
    c.save_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "xi,h,kappa,region_kind,p1,p2"
    assert len(lines) == 4
    row = lines[2].split(",")
    assert float(row[0]) == 0.5 and abs(float(row[1]) - 2 * math.pi) < 1e-9 and row[3] == "cap"


def test_oracle_round(round512):
    assert band_oracle(round512, 0.5, 200) == pytest.approx(2 * math.pi, abs=2e-3)


@pytest.mark.parametrize("name,param", [("round", None), ("const", 0.3), ("quadrupole", 0.2), ("cos2", 0.3)])
@pytest.mark.parametrize("xi", [0.1, 0.25, 0.5])
def test_oracle_not_below_profile(name, param, xi):
    m = builtin_metric(name, 512, param)
    assert band_oracle(m, xi, 200) >= profile_sample(m, xi).h - 1e-6


def test_oracle_cos2_half(cos2_512):
    o = band_oracle(cos2_512, 0.5, 200)
    h = profile_sample(cos2_512, 0.5).h
    assert abs(o - h) / h <= 1e-3


def test_oracle_n_cuts_limit(round512):
    with pytest.raises(ValueError):
        band_oracle(round512, 0.5, 401)


def test_minimality_random_regions(cos2_512):
    rng = np.random.default_rng(7)
    M = total_area(cos2_512)
    for r in random_regions(cos2_512, rng, 30):
        a, p = region_measures(cos2_512, r)
        xi = a / M
        if 1e-4 < xi < 1 - 1e-4:
            assert profile_sample(cos2_512, xi).h <= p * (1 + 1e-9)


_QUAD128 = builtin_metric("quadrupole", 128, 0.25)
_M128 = total_area(_QUAD128)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, math.pi - 0.05), st.floats(0.05, math.pi - 0.05), st.booleans())
def test_minimality_property(t1, t2, comp):
    if abs(t1 - t2) < 1e-3:
        return
    r = Region("band", tuple(sorted((t1, t2))), comp)
    a, p = region_measures(_QUAD128, r)
    xi = a / _M128
    if 1e-4 < xi < 1 - 1e-4:
        assert profile_sample(_QUAD128, xi).h <= p * (1 + 1e-9)


def test_comparability_scaling(quad512):
    regions = [Region("cap", (0.7,)), Region("band", (0.4, 1.9)), Region("disk", (1.2, 0.4))]
    C, worst = comparability_check(quad512, quad512.shifted(math.log(2)), regions)
    assert C == pytest.approx(4.0, rel=1e-14)
    assert abs(worst) <= 1e-12


def test_comparability_identity(quad512):
    C, worst = comparability_check(quad512, quad512, [Region("cap", (1.0,)), Region("disk", (0.5, 0.3))])
    assert C == 1.0
    assert worst <= -0.0 + 1e-15


def test_comparability_random_pair():
    m1 = builtin_metric("quadrupole", 256, 0.1)
    th = m1.theta
    m2 = from_function(lambda t: 0.1 * (3 * np.cos(t) ** 2 - 1) / 2 + 0.1 * np.cos(3 * t), 256)
    assert np.max(np.abs(m2.u - m1.u)) == pytest.approx(0.1 * np.max(np.abs(np.cos(3 * th))))
    rng = np.random.default_rng(3)
    C, worst = comparability_check(m1, m2, random_regions(m1, rng, 50))
    assert worst <= 0.0


def test_comparability_grid_mismatch():
    with pytest.raises(ValueError):
        comparability_check(round_metric(64), round_metric(128), [Region("cap", (1.0,))])


def test_profile_curve_type(round512):
    assert isinstance(profile_curve(round512, [0.5]), ProfileCurve)


def test_sup_difference_sees_poles():
    from isoplab.profile import sup_abs_difference

    m1 = round_metric(64)
    m2 = from_function(lambda t: 0.1 * np.cos(t) ** 8, 64)
    # the staggered grid never reaches the pole, where the difference peaks
    assert np.max(np.abs(m2.u)) < 0.1
    assert sup_abs_difference(m1, m2) == pytest.approx(0.1, abs=1e-9)


def test_large_disk_minimizers_concave():
    # equatorial disks stay optimal past r_max for this metric
    from isoplab.verify import concavity_defect

    m = builtin_metric("cos2", 512, -0.3)
    xi = uniform_xi_grid(31)
    c = profile_curve(m, xi)
    big = [p for p in c.points if p.region.kind == "disk" and p.region.params[1] > m.r_max]
    assert big
    d, q = concavity_defect(c, float(m.curvature_at(m.theta).min()), total_area(m))
    assert d <= 1e-4 * q
