import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from scalefuse.geometry import (
    DepthMap, DepthValidityRange, Intrinsics, Pose, TriangleMesh, backproject, backproject_depth,
    look_at, pixel_rays, project, project_points, rotation_angle_deg,
)

finite = st.floats(-5, 5, allow_nan=False)
quats = st.tuples(*[st.floats(-1, 1) for _ in range(4)]).filter(lambda q: np.linalg.norm(q) > 0.1)


def pose_from(q, t):
    return Pose(Rotation.from_quat(q).as_matrix(), t)


poses = st.builds(pose_from, quats, st.tuples(finite, finite, finite))


class TestProject:
    def test_principal_ray(self, k100):
        p = project([0, 0, 2], Pose.identity(), k100)
        assert p.in_front
        np.testing.assert_allclose(p.pixel, [50, 50])
        assert p.depth == 2.0

    def test_off_axis(self, k100):
        p = project([1, 0, 2], Pose.identity(), k100)
        np.testing.assert_allclose(p.pixel, [100, 50])
        assert p.depth == 2.0

    def test_behind_camera_flag(self, k100):
        assert not project([0, 0, -1], Pose.identity(), k100).in_front
        assert not project([0, 0, 0], Pose.identity(), k100).in_front

    def test_vectorised_matches_scalar(self, k100, rng):
        pose = look_at([0.3, -1, 0.2], [0, 0, 3])
        pts = rng.uniform(-2, 2, (50, 3)) + [0, 0, 3]
        uv, z = project_points(pts, pose, k100)
        for p, u, d in zip(pts, uv, z):
            s = project(p, pose, k100)
            assert s.depth == pytest.approx(d, abs=1e-12)
            if s.in_front:
                np.testing.assert_allclose(s.pixel, u, atol=1e-9)
            else:
                assert np.all(np.isnan(u))


class TestBackproject:
    def test_examples(self, k100):
        np.testing.assert_allclose(backproject((50, 50), 2.0, Pose.identity(), k100), [0, 0, 2])
        np.testing.assert_allclose(backproject((100, 50), 2.0, Pose.identity(), k100), [1, 0, 2])

    @pytest.mark.parametrize("d", [0.0, -1.0, float("nan")])
    def test_rejects_non_positive_depth(self, k100, d):
        with pytest.raises(ValueError):
            backproject((10, 10), d, Pose.identity(), k100)

    @settings(max_examples=200, deadline=None)
    @given(pose=poses, u=st.floats(0, 100), v=st.floats(0, 100), d=st.floats(0.01, 50))
    def test_round_trip(self, pose, u, v, d):
        k = Intrinsics(100.0, 100.0, 50.0, 50.0, 101, 101)
        p = project(backproject((u, v), d, pose, k), pose, k)
        assert p.in_front
        np.testing.assert_allclose(p.pixel, [u, v], atol=1e-9)
        assert abs(p.depth - d) < 1e-9

    def test_depth_map_backprojection_reprojects(self, k100, rng):
        vals = rng.uniform(0.5, 4, (101, 101))
        vals[::7, ::5] = 0
        pose = look_at([1, 2, 0.5], [0, 0, 0])
        pts = backproject_depth(DepthMap(vals), pose, k100)
        assert len(pts) == np.count_nonzero(vals)
        _, z = project_points(pts, pose, k100)
        np.testing.assert_allclose(np.sort(z), np.sort(vals[vals > 0]), atol=1e-9)


class TestPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, 1.001]), np.zeros(3))
        with pytest.raises(ValueError):
            Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))

    def test_immutable(self):
        p = Pose.identity()
        with pytest.raises(ValueError):
            p.rotation[0, 0] = 2.0

    @settings(max_examples=100, deadline=None)
    @given(a=poses, b=poses, c=poses)
    def test_composition_associative(self, a, b, c):
        assert ((a @ b) @ c).allclose(a @ (b @ c))

    @settings(max_examples=100, deadline=None)
    @given(a=poses)
    def test_inverse(self, a):
        assert (a @ a.inverse()).allclose(Pose.identity())
        assert (a.inverse() @ a).allclose(Pose.identity())

    @settings(max_examples=100, deadline=None)
    @given(a=poses, g=poses, x=st.tuples(finite, finite, finite))
    def test_projection_frame_invariance(self, a, g, x):
        k = Intrinsics(100.0, 100.0, 50.0, 50.0, 101, 101)
        p1 = project(x, a, k)
        p2 = project(g.to_world(np.asarray(x, float)), g @ a, k)
        assert p1.in_front == p2.in_front
        assert abs(p1.depth - p2.depth) < 1e-9
        if p1.in_front and p1.depth > 1e-3:
            np.testing.assert_allclose(p1.pixel, p2.pixel, atol=1e-6 * (1 + np.abs(p1.pixel).max()))

    @settings(max_examples=100, deadline=None)
    @given(a=poses)
    def test_quaternion_round_trip(self, a):
        q = a.quaternion()
        assert q[3] >= 0
        assert Pose.from_quaternion(a.translation, q).allclose(a)

    def test_look_at_axes(self):
        p = look_at([0, 0, 0], [1, 0, 0])
        np.testing.assert_allclose(p.rotation[:, 2], [1, 0, 0], atol=1e-12)
        # image y points down, i.e. against world up
        assert p.rotation[2, 1] < 0
        assert rotation_angle_deg(p.rotation.T @ p.rotation) == 0.0


class TestTypes:
    def test_intrinsics_validation(self):
        with pytest.raises(ValueError):
            Intrinsics(0, 1, 1, 1, 4, 4)
        with pytest.raises(ValueError):
            Intrinsics(1, 1, 4, 1, 4, 4)

    def test_depth_validity(self):
        r = DepthValidityRange(0.05, 20.0)
        np.testing.assert_array_equal(r.mask([0.04, 0.05, 1, 20, 20.1, np.nan, -1]),
                                      [False, True, True, True, False, False, False])
        with pytest.raises(ValueError):
            DepthValidityRange(1.0, 1.0)

    def test_depth_scaled_keeps_invalid(self):
        d = DepthMap(np.array([[1.5, 0.0], [-1.0, np.nan]]))
        out = d.scaled(2.0).values
        assert out[0, 0] == 3.0 and out[0, 1] == 0.0 and out[1, 0] == -1.0 and np.isnan(out[1, 1])

    def test_sample_nearest(self):
        d = DepthMap(np.arange(12, dtype=float).reshape(3, 4))
        np.testing.assert_array_equal(d.sample_nearest([[0.4, 0.4], [0.5, 0.5], [3.4, 2.2], [-0.6, 0], [4, 0]]),
                                      [0, 5, 11, 0, 0])

    def test_mesh_validation(self):
        with pytest.raises(ValueError):
            TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])
        with pytest.raises(ValueError):
            TriangleMesh(np.zeros((3, 3)), [[1, 1, 1]])
        assert TriangleMesh.empty().is_empty

    def test_pixel_rays_unit_z(self, k100):
        r = pixel_rays([[50, 50], [100, 0]], k100)
        np.testing.assert_allclose(r, [[0, 0, 1], [0.5, -0.5, 1]])
