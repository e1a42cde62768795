import numpy as np
import pytest
from conftest import euclidean, generic_metric, polar_euclidean, round_sphere, s2_times_s2
from hypothesis import given, settings
from hypothesis import strategies as st

from intercurv import catalog as cat
from intercurv.expr import parse
from intercurv.geom import (
    Chart,
    ChartMetric,
    DegeneratePlaneError,
    Frame,
    FrameError,
    GeometryError,
    NotPositiveDefiniteError,
    c_m,
    constant_coefficient,
    curvature_at,
    curvature_batch,
    expression_coefficient,
    gauss_residual,
    r0_at,
    sectional,
    slice_geometry,
)


def _unit(cp, v):
    return v / np.sqrt(cp.inner(v, v))


def _random_frame(cp, m, rng):
    V = rng.normal(size=(m, cp.dim))
    out = []
    for v in V:
        for b in out:
            v = v - cp.inner(b, v) * b
        out.append(_unit(cp, v))
    return np.array(out)


# -- charts and metrics ---------------------------------------------------------


def test_chart_validation():
    with pytest.raises(GeometryError):
        Chart(("x",), (False,), (None,))
    with pytest.raises(GeometryError):
        Chart(("x", "x"), (False, False), (None, None))
    with pytest.raises(GeometryError):
        Chart(("x", "y"), (False,), (None, None))


def test_indefinite_metric_rejected():
    n = 2
    chart = Chart(("a", "b"), (False, False), (None, None))
    coeff = {(0, 0): constant_coefficient(1.0, n), (1, 1): constant_coefficient(-1.0, n)}
    with pytest.raises(NotPositiveDefiniteError):
        curvature_at(ChartMetric(chart, coeff), [0.0, 0.0])


def test_duplicate_coefficient_rejected():
    chart = Chart(("a", "b"), (False, False), (None, None))
    one = constant_coefficient(1.0, 2)
    with pytest.raises(GeometryError):
        ChartMetric(chart, {(0, 1): one, (1, 0): one})


# -- model spaces ---------------------------------------------------------------


def test_flat_space_has_no_curvature(rng):
    cb = curvature_batch(euclidean(4), rng.normal(size=(5, 4)))
    assert np.all(cb.gamma == 0) and np.all(cb.riem_low == 0) and np.all(cb.ricci == 0)


def test_flat_torus_factor_is_flat():
    p = cat.TorusSphereParams(3, 2, 0.5, "2")
    cp = curvature_at(cat.build_torus_sphere(p), [0.3, -0.2, 0.1, 0.5, 0.9])
    R = cp.riem_low
    assert np.max(np.abs(R[2:, 2:, 2:, 2:])) < 1e-13


def test_unit_four_sphere_sectional(rng):
    M = round_sphere(4)
    pts = rng.uniform(-3, 3, size=(100, 4))
    cb = curvature_batch(M, pts)
    for i in range(100):
        cp = cb.at(i)
        X, Y = rng.normal(size=(2, 4))
        assert sectional(cp, X, Y) == pytest.approx(1.0, abs=1e-9)


def test_product_of_spheres_mixed_plane():
    cp = curvature_at(s2_times_s2(), [0.3, -0.7, 1.1, 0.2])
    assert abs(sectional(cp, [1, 0.5, 0, 0], [0, 0, 0.3, 1])) < 1e-9
    assert sectional(cp, [1, 0, 0, 0], [0, 1, 0, 0]) == pytest.approx(1.0, abs=1e-9)


def test_degenerate_plane_is_an_error():
    cp = curvature_at(round_sphere(3), [0.1, 0.2, 0.3])
    with pytest.raises(DegeneratePlaneError):
        sectional(cp, [1, 2, 3], [2, 4, 6])
    # relative threshold: tiny but independent vectors are fine
    assert sectional(cp, [1e-9, 0, 0], [0, 1e-9, 0]) == pytest.approx(1.0, abs=1e-9)


def test_rescaling_scales_sectional(rng):
    for c in (0.5, 3.0):
        small, big = round_sphere(3), round_sphere(3, radius=c)
        p = rng.uniform(-2, 2, 3)
        X, Y = rng.normal(size=(2, 3))
        assert sectional(curvature_at(big, p), X, Y) == pytest.approx(sectional(curvature_at(small, p), X, Y) / c**2, rel=1e-10)


# -- tensor identities ------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1.5, 1.5), min_size=3, max_size=3))
def test_riemann_symmetries_and_bianchi(x):
    cp = curvature_at(generic_metric(), x)
    R = cp.riem_low
    scale = np.max(np.abs(R))
    assert np.max(np.abs(R + R.transpose(1, 0, 2, 3))) <= 1e-9 * scale
    assert np.max(np.abs(R + R.transpose(0, 1, 3, 2))) <= 1e-9 * scale
    assert np.max(np.abs(R - R.transpose(2, 3, 0, 1))) <= 1e-9 * scale
    bianchi = R + R.transpose(0, 2, 3, 1) + R.transpose(0, 3, 1, 2)
    assert np.max(np.abs(bianchi)) <= 1e-9 * scale
    assert cp.scalar == pytest.approx(float(np.sum(cp.g_inv * cp.ricci)), rel=1e-12)


# -- intermediate curvature -----------------------------------------------------------


def test_cm_on_three_sphere(rng):
    cp = curvature_at(round_sphere(3), [0.4, -1.0, 0.2])
    for _ in range(5):
        assert c_m(cp, Frame(cp.point, _random_frame(cp, 2, rng))) == pytest.approx(3.0, abs=1e-9)


def test_cm_extremes_are_ricci_and_half_scalar(rng):
    cp = curvature_at(generic_metric(), [0.2, 0.7, -0.4])
    V = _random_frame(cp, 2, rng)
    assert c_m(cp, Frame(cp.point, V[:1])) == pytest.approx(cp.ric(V[0], V[0]), rel=1e-9)
    assert c_m(cp, Frame(cp.point, V)) == pytest.approx(cp.scalar / 2, rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cm_depends_only_on_the_span(seed):
    rng = np.random.default_rng(seed)
    p = cat.TorusSphereParams(3, 3, 0.3, "2+0.5*sin(2*pi*x1)*cos(2*pi*x2)")
    M = cat.build_torus_sphere(p)
    cp = curvature_at(M, np.concatenate([rng.uniform(-2, 2, 3), rng.uniform(0, 1, 3)]))
    V = _random_frame(cp, 3, rng)
    base = c_m(cp, Frame(cp.point, V))
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    assert c_m(cp, Frame(cp.point, Q @ V)) == pytest.approx(base, rel=1e-9, abs=1e-9)
    assert c_m(cp, Frame(cp.point, V[[2, 0, 1]])) == pytest.approx(base, rel=1e-9, abs=1e-9)
    # a different completion: random orthonormal complement instead of Gram-Schmidt on d_a
    full = [*V]
    while len(full) < 6:
        v = rng.normal(size=6)
        for b in full:
            v = v - cp.inner(b, v) * b
        full.append(_unit(cp, v))
    full = np.array(full)
    K = np.einsum("abcd,pa,qb,qc,pd->pq", cp.riem_low, full, full, full, full)
    other = sum(K[i, j] for i in range(3) for j in range(i + 1, 6))
    assert other == pytest.approx(base, rel=1e-9, abs=1e-9)


def test_frame_must_be_orthonormal():
    cp = curvature_at(round_sphere(3), [0.0, 0.0, 0.0])
    with pytest.raises(FrameError):
        c_m(cp, Frame(cp.point, np.array([[1.0, 0, 0], [0, 1.0, 0]])))


# -- R0 ---------------------------------------------------------------------------


def test_r0_on_sphere_and_flat(rng):
    val, e = r0_at(curvature_at(round_sphere(4), [0.5, 0.1, -0.3, 0.0]))
    assert val == pytest.approx(3.0, abs=1e-9)
    val, _ = r0_at(curvature_at(euclidean(3), [1.0, 2.0, 3.0]))
    assert val == 0.0


def test_r0_is_the_minimum_of_ricci(rng):
    cp = curvature_at(generic_metric(), [0.3, -0.5, 0.8])
    val, e = r0_at(cp)
    assert cp.inner(e, e) == pytest.approx(1.0, abs=1e-12)
    for _ in range(100):
        v = _unit(cp, rng.normal(size=3))
        assert val <= cp.ric(v, v) + 1e-12


def test_r0_on_warped_cylinder():
    p = cat.WarpedCylinderParams(5, 1.0, 1.0, 0.05, "C2_zero")
    M = cat.build_warped_cylinder(p)
    f = cat.cylinder_profiles(p).f
    n = p.n
    for r in (-2.0, -0.3, 0.7, 1.9):
        J = f.jet([r])
        F, F1, F2 = float(J.value), float(J.grad[0]), float(J.hess[0, 0])
        radial = -(n - 1) * F2 / F
        sph = (n - 2) * p.eps**-2 * F**-2 - ((n - 2) * F1**2 + F * F2) / F**2
        val, _ = r0_at(curvature_at(M, [r, 0.2, -0.1, 0.3, 0.0]))
        assert val == pytest.approx(min(radial, sph), rel=1e-8)


# -- slices ------------------------------------------------------------------------


def test_round_sphere_slice_of_flat_space():
    n = 4
    sg = slice_geometry(polar_euclidean(n), [2.0, 0.3, -0.4, 0.1], 0)
    assert sg.H == pytest.approx((n - 1) / 2, rel=1e-12)


def test_warped_cylinder_slice_mean_curvature():
    p = cat.WarpedCylinderParams(5, 1.0, 1.0, 0.5, "C2_zero")
    f = cat.cylinder_profiles(p).f
    r = 0.8
    J = f.jet([r])
    sg = slice_geometry(cat.build_warped_cylinder(p), [r, 0.1, 0.2, 0.0, -0.3], 0)
    assert sg.H == pytest.approx((p.n - 1) * float(J.grad[0]) / float(J.value), rel=1e-10)


def test_flat_slice_is_totally_geodesic():
    sg = slice_geometry(euclidean(3), [0.1, 0.2, 0.3], 2)
    assert np.all(sg.A == 0) and sg.H == 0


def test_gauss_equation():
    e = np.array([0.0, 1.0, 0.0])
    assert gauss_residual(euclidean(3), [0.1, 0.2, 0.3], 0, e) == 0.0
    M = polar_euclidean(4)
    pt = np.array([1.0, 0.2, -0.1, 0.4])
    cp = curvature_at(M, pt)
    e = _unit(cp, np.array([0.0, 1.0, 0.5, 0.0]))
    assert gauss_residual(M, pt, 0, e) < 1e-9


def test_gauss_equation_on_biricci_slice():
    p = cat.BiRicciPlaneParams(5, 1.0, 0.3)
    M = cat.build_biricci_plane(p)
    pt = np.array([0.4, 0.9, 0.1, 0.2, -0.3, 0.0, 0.5])
    cp = curvature_at(M, pt)
    e = np.zeros(7)
    e[0] = 1.0
    e = _unit(cp, e)
    assert gauss_residual(M, pt, 1, e) < 1e-8


def test_slice_needs_block_structure():
    sg_metric = generic_metric()
    with pytest.raises(GeometryError):
        slice_geometry(sg_metric, [0.3, 0.2, 1.0], 0)


def test_gauss_needs_tangent_vector():
    with pytest.raises(GeometryError):
        gauss_residual(euclidean(3), [0.0, 0.0, 0.0], 0, [1.0, 0.0, 0.0])


def test_biricci_sectionals():
    p = cat.BiRicciPlaneParams(5, 1.0, 0.2)
    prof = cat.biricci_profiles(p)
    M = cat.build_biricci_plane(p)
    r = 0.7
    pt = np.array([0.0, r, 0.3, 0.0, -0.2, 0.1, 0.0])
    cp = curvature_at(M, pt)
    U, F = prof.u.jet([r]), prof.f.jet([r])
    u, u1, u2 = float(U.value), float(U.grad[0]), float(U.hess[0, 0])
    f, f1 = float(F.value), float(F.grad[0])
    t = np.eye(7)[0]
    rr = np.eye(7)[1]
    y = np.eye(7)[2]
    assert sectional(cp, t, rr) == pytest.approx(-u2 / u, rel=1e-9)
    assert sectional(cp, t, y) == pytest.approx(-f1 * u1 / (f * u), rel=1e-9)


def test_conformal_and_restrict_views():
    M = euclidean(3)
    half = expression_coefficient(parse("4", ["x0"]), [0], 3)
    cp = curvature_at(M.conformal(half), [0.0, 0.0, 0.0])
    np.testing.assert_allclose(cp.g, 4 * np.eye(3))
    S = M.restrict(0, 1.5)
    assert S.dim == 2
