import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcloc import GridIndex, MapCloud, Point3, Pose2, ScanCloud, SearchSpec, UnitNormal3, cell_of, se2_apply
from mcloc.core import wrap_angle

finite = st.floats(-1e3, 1e3, allow_nan=False)
angles = st.floats(-10.0, 10.0, allow_nan=False)


class TestTypes:
    def test_point_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Point3(0.0, math.nan, 1.0)
        with pytest.raises(ValueError):
            Point3(math.inf, 0.0, 0.0)

    def test_unit_normal(self):
        UnitNormal3(0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            UnitNormal3(1.0, 1.0, 0.0)
        n = UnitNormal3.from_vector([3.0, 4.0, 0.0])
        assert (n.nx, n.ny, n.nz) == pytest.approx((0.6, 0.8, 0.0))

    def test_cloud_shapes(self):
        with pytest.raises(ValueError):
            ScanCloud(np.zeros((4, 2)))
        with pytest.raises(ValueError):
            ScanCloud(np.zeros((4, 3)), np.zeros((3, 3)))
        with pytest.raises(ValueError):
            MapCloud(np.zeros((2, 3)), np.array([[1.0, 0, 0], [0.5, 0, 0]]))
        s = ScanCloud(np.zeros((2, 3)), np.array([[0, 0, 1.0], [np.nan] * 3]))
        np.testing.assert_array_equal(s.valid_normals, [True, False])

    def test_map_normals_renormalized(self):
        m = MapCloud(np.zeros((1, 3)), np.array([[1.0 + 1e-7, 0.0, 0.0]]))
        assert np.linalg.norm(m.normals[0]) == pytest.approx(1.0, abs=1e-15)


class TestPose:
    def test_identity(self):
        p = se2_apply(Pose2(), Point3(1.0, 2.0, 3.0))
        assert (p.x, p.y, p.z) == (1.0, 2.0, 3.0)

    def test_quarter_turn(self):
        p = se2_apply(Pose2(0.0, 0.0, math.pi / 2), Point3(1.0, 0.0, 0.0))
        np.testing.assert_allclose([p.x, p.y, p.z], [0.0, 1.0, 0.0], atol=1e-12)

    def test_pure_translation(self):
        p = se2_apply(Pose2(-0.9, -2.82, 0.0), Point3(0.0, 0.0, 0.0))
        assert (p.x, p.y, p.z) == (-0.9, -2.82, 0.0)

    def test_theta_wrapped(self):
        assert Pose2(0, 0, math.pi).theta == pytest.approx(-math.pi)
        assert Pose2(0, 0, 3 * math.pi / 2).theta == pytest.approx(-math.pi / 2)
        assert Pose2(0, 0, 0.25).theta == 0.25

    @given(angles)
    def test_wrap_range(self, a):
        w = wrap_angle(a)
        assert -math.pi <= w < math.pi
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)

    @given(finite, finite, angles, finite, finite, finite)
    def test_inverse_roundtrip(self, tx, ty, th, x, y, z):
        pose = Pose2(tx, ty, th)
        p = se2_apply(pose.inverse(), se2_apply(pose, Point3(x, y, z)))
        np.testing.assert_allclose([p.x, p.y, p.z], [x, y, z], atol=1e-9)

    def test_array_apply_matches_scalar(self, rng):
        pose = Pose2(1.0, -2.0, 0.7)
        pts = rng.normal(size=(20, 3))
        out = pose.apply(pts)
        for p, o in zip(pts, out):
            q = se2_apply(pose, Point3(*p))
            np.testing.assert_allclose(o, [q.x, q.y, q.z], atol=1e-12)

    def test_compose(self, rng):
        a, b = Pose2(1.0, 2.0, 0.3), Pose2(-0.5, 0.4, -1.1)
        pts = rng.normal(size=(5, 3))
        np.testing.assert_allclose(a.compose(b).apply(pts), a.apply(b.apply(pts)), atol=1e-12)

    def test_rotate_leaves_z(self):
        v = Pose2(5.0, 5.0, 1.0).rotate(np.array([0.0, 0.0, 1.0]))
        np.testing.assert_allclose(v, [0.0, 0.0, 1.0])


class TestSearchSpec:
    def test_defaults(self):
        s = SearchSpec()
        assert s.n_cells == 100 and s.n_headings == 9
        assert s.epsilon == s.cell_size == 0.06
        np.testing.assert_allclose(np.degrees(s.headings()), np.arange(-2.0, 2.01, 0.5), atol=1e-12)
        assert s.shape == (9, 100, 100)

    def test_cell_centers(self):
        c = SearchSpec().cell_centers()
        assert c[50] == 0.0
        assert c[0] == pytest.approx(-3.0)
        assert c[-1] == pytest.approx(2.94)

    @pytest.mark.parametrize("kw", [
        dict(cell_size=0.0), dict(epsilon=-1.0), dict(heading_step=0.0),
        dict(cell_size=0.07), dict(heading_half_range=math.radians(1.2)),
    ])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SearchSpec(**kw)

    def test_offset_of(self):
        s = SearchSpec()
        off = s.offset_of(GridIndex(51, 49, 8))
        assert off.tx == pytest.approx(0.06)
        assert off.ty == pytest.approx(-0.06)
        assert off.theta == pytest.approx(math.radians(2.0))


class TestCellOf:
    def test_center(self):
        assert cell_of((0.0, 0.0), SearchSpec()) == (50, 50)

    def test_one_cell_along_x(self):
        # i indexes x, j indexes y
        assert cell_of((0.06, 0.0), SearchSpec()) == (51, 50)
        assert cell_of((0.0, 0.06), SearchSpec()) == (50, 51)

    def test_out_of_range(self):
        s = SearchSpec()
        assert cell_of((-3.0 - 1e-9, 0.0), s) is None
        assert cell_of((0.0, 3.5), s) is None
        assert cell_of((-3.0, 0.0), s) == (0, 50)

    def test_left_inverse(self):
        s = SearchSpec()
        c = s.cell_centers()
        for i in range(s.n_cells):
            for j in (0, 17, 50, 99):
                assert cell_of((c[i], c[j]), s) == (i, j)

    @settings(max_examples=200)
    @given(st.floats(-3.0, 2.969), st.floats(-3.0, 2.969))
    def test_center_within_half_cell(self, x, y):
        s = SearchSpec()
        i, j = cell_of((x, y), s)
        c = s.cell_centers()
        assert abs(c[i] - x) <= s.cell_size / 2 + 1e-12
        assert abs(c[j] - y) <= s.cell_size / 2 + 1e-12
