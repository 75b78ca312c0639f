import math

import numpy as np
import pytest

from splatloc import geometry
from splatloc.geometry import Intrinsics, Pose, compose, invert, transform_point
from splatloc.rendering import (
    RgbdFrame,
    Scene,
    Splat,
    generate_test_scene,
    make_orbit_trajectory,
    render,
)


def unit_sphere_splat(center=(0.0, 0.0, 0.0), color=(1.0, 0.0, 0.0), radius=1.0):
    return Splat(center=center, scale=(radius,) * 3,
                 orientation_wxyz=(1.0, 0.0, 0.0, 0.0), color=color, opacity=1.0)


def xform_scene(scene, g):
    splats = []
    for s in scene.splats:
        splats.append(Splat(
            center=g.rotation @ s.center + g.translation,
            scale=s.scale,
            orientation_wxyz=geometry.matrix_to_quat_wxyz(g.rotation @ s.rotation),
            color=s.color, opacity=s.opacity))
    return Scene(splats=splats, background_color=scene.background_color)


class TestSplatValidation:
    def test_rejects_bad_scale(self):
        with pytest.raises(ValueError):
            Splat((0, 0, 0), (1, 0, 1), (1, 0, 0, 0), (1, 1, 1), 1.0)

    def test_rejects_bad_opacity(self):
        with pytest.raises(ValueError):
            Splat((0, 0, 0), (1, 1, 1), (1, 0, 0, 0), (1, 1, 1), 0.0)

    def test_rejects_non_unit_quaternion(self):
        with pytest.raises(ValueError):
            Splat((0, 0, 0), (1, 1, 1), (1, 1, 0, 0), (1, 1, 1), 1.0)

    def test_rejects_out_of_range_color(self):
        with pytest.raises(ValueError):
            Splat((0, 0, 0), (1, 1, 1), (1, 0, 0, 0), (1.5, 0, 0), 1.0)


class TestRenderOpaque:
    def test_empty_scene(self, k64):
        scene = Scene(splats=[], background_color=(0.2, 0.3, 0.4))
        frame = render(scene, Pose.identity(), k64)
        assert np.all(frame.depth == np.inf)
        np.testing.assert_array_equal(frame.color,
                                      np.tile([0.2, 0.3, 0.4], (64, 64, 1)))

    def test_center_pixel_depth_is_ray_sphere_distance(self):
        # Camera 4 units down -z looking at a unit sphere at the origin; the
        # independent oracle is the analytic ray-sphere hit: 4 - 1 = 3.
        k = Intrinsics(fx=80.0, fy=80.0, cx=32.0, cy=32.0, width=65, height=65)
        scene = Scene(splats=[unit_sphere_splat()])
        pose = Pose(np.eye(3), (0.0, 0.0, -4.0))
        frame = render(scene, pose, k)
        assert frame.depth[32, 32] == pytest.approx(3.0, abs=1e-12)
        np.testing.assert_array_equal(frame.color[32, 32], [1.0, 0.0, 0.0])

    def test_byte_identical_re_render(self, orbit_scene, k128):
        pose = orbit_scene.trajectory[3]
        f1 = render(orbit_scene, pose, k128)
        f2 = render(orbit_scene, pose, k128)
        assert f1.color.tobytes() == f2.color.tobytes()
        assert f1.depth.tobytes() == f2.depth.tobytes()

    def test_depth_consistency(self, orbit_scene, k128):
        # Every finite-depth pixel backprojects onto the 1-sigma surface of
        # some splat and reprojects to the same pixel.
        pose = orbit_scene.trajectory[0]
        frame = render(orbit_scene, pose, k128)
        ys, xs = np.nonzero(np.isfinite(frame.depth))
        arrays = orbit_scene.arrays()
        a_mats = arrays["rotations"].transpose(0, 2, 1) / arrays["scales"][:, :, None]
        step = max(1, xs.size // 400)
        for y, x in zip(ys[::step], xs[::step]):
            d = frame.depth[y, x]
            p_cam = geometry.backproject(k128, (x, y), d)
            p_world = transform_point(pose, p_cam)
            offs = p_world[None, :] - arrays["centers"]
            mahal = np.linalg.norm(
                np.einsum("sij,sj->si", a_mats, offs), axis=1)
            assert np.min(np.abs(mahal - 1.0)) < 1e-6
            u, v = geometry.project(k128, p_cam)
            assert abs(u - x) < 0.5 and abs(v - y) < 0.5

    def test_view_invariance_under_rigid_transform(self, k64):
        scene = generate_test_scene(100, 2.0, seed=9)
        pose = make_orbit_trajectory(4.0, 7, 0.0)[2]
        g = Pose(np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
                 np.zeros(3))
        f1 = render(scene, pose, k64)
        f2 = render(xform_scene(scene, g), compose(g, pose), k64)
        assert f1.color.tobytes() == f2.color.tobytes()
        np.testing.assert_array_equal(np.isfinite(f1.depth), np.isfinite(f2.depth))
        fin = np.isfinite(f1.depth)
        np.testing.assert_allclose(f1.depth[fin], f2.depth[fin], atol=1e-9, rtol=0)

    def test_monotone_occlusion(self, k64):
        # Small splat strictly behind a larger one along every covered ray
        # never contributes color.
        front = unit_sphere_splat(center=(0, 0, 0), color=(1, 0, 0), radius=1.0)
        back = unit_sphere_splat(center=(0, 0, 3.0), color=(0, 1, 0), radius=0.3)
        scene = Scene(splats=[back, front])
        pose = Pose(np.eye(3), (0.0, 0.0, -4.0))
        frame = render(scene, pose, k64)
        assert not np.any(np.all(frame.color == np.array([0.0, 1.0, 0.0]), axis=2))
        assert np.any(np.all(frame.color == np.array([1.0, 0.0, 0.0]), axis=2))

    def test_finite_depths_positive(self, orbit_scene, k128):
        frame = render(orbit_scene, orbit_scene.trajectory[5], k128)
        fin = frame.depth[np.isfinite(frame.depth)]
        assert fin.size > 0 and fin.min() > 0


class TestRenderAlpha:
    def test_empty_scene(self, k64):
        scene = Scene(splats=[], background_color=(1.0, 1.0, 1.0))
        frame = render(scene, Pose.identity(), k64, mode="alpha")
        assert np.all(frame.depth == np.inf)
        assert np.all(frame.color == 1.0)

    def test_deterministic(self, orbit_scene, k128):
        pose = orbit_scene.trajectory[1]
        f1 = render(orbit_scene, pose, k128, mode="alpha")
        f2 = render(orbit_scene, pose, k128, mode="alpha")
        assert f1.color.tobytes() == f2.color.tobytes()
        assert f1.depth.tobytes() == f2.depth.tobytes()

    def test_view_invariance(self, k64):
        scene = generate_test_scene(100, 2.0, seed=9)
        pose = make_orbit_trajectory(4.0, 7, 0.0)[2]
        g = Pose(np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
                 np.zeros(3))
        f1 = render(scene, pose, k64, mode="alpha")
        f2 = render(xform_scene(scene, g), compose(g, pose), k64, mode="alpha")
        np.testing.assert_allclose(f1.color, f2.color, atol=1e-6)
        fin = np.isfinite(f1.depth) & np.isfinite(f2.depth)
        np.testing.assert_allclose(f1.depth[fin], f2.depth[fin], atol=1e-6)

    def test_opaque_core_depth_matches_surface(self, k64):
        # A fully opaque sphere saturates compositing at its front surface,
        # so the expected depth at the center pixel sits near the analytic
        # hit distance.
        k = Intrinsics(fx=80.0, fy=80.0, cx=32.0, cy=32.0, width=65, height=65)
        scene = Scene(splats=[unit_sphere_splat()])
        pose = Pose(np.eye(3), (0.0, 0.0, -4.0))
        frame = render(scene, pose, k, mode="alpha")
        assert abs(frame.depth[32, 32] - 4.0) < 1.0

    def test_color_in_range(self, orbit_scene, k128):
        frame = render(orbit_scene, orbit_scene.trajectory[2], k128, mode="alpha")
        assert frame.color.min() >= 0.0 and frame.color.max() <= 1.0

    def test_rejects_unknown_mode(self, orbit_scene, k64):
        with pytest.raises(ValueError):
            render(orbit_scene, orbit_scene.trajectory[0], k64, mode="wireframe")


class TestGenerateScene:
    def test_empty(self):
        scene = generate_test_scene(0, 2.0, seed=1)
        assert scene.splats == []

    def test_deterministic(self):
        a = generate_test_scene(200, 2.0, seed=7)
        b = generate_test_scene(200, 2.0, seed=7)
        for sa, sb in zip(a.splats, b.splats):
            np.testing.assert_array_equal(sa.center, sb.center)
            np.testing.assert_array_equal(sa.orientation_wxyz, sb.orientation_wxyz)

    def test_centers_within_radius(self):
        scene = generate_test_scene(200, 2.0, seed=7)
        for s in scene.splats:
            assert np.linalg.norm(s.center) <= 2.0

    def test_rejects_negative_count(self):
        with pytest.raises(ValueError):
            generate_test_scene(-1, 2.0, seed=0)


class TestOrbitTrajectory:
    def test_single_pose_distance_and_aim(self):
        (pose,) = make_orbit_trajectory(4.0, 1, 0.0)
        assert np.linalg.norm(pose.translation) == pytest.approx(4.0)
        origin_cam = transform_point(invert(pose), (0.0, 0.0, 0.0))
        np.testing.assert_allclose(origin_cam[:2], 0.0, atol=1e-12)
        assert origin_cam[2] == pytest.approx(4.0)

    def test_centroid_at_origin(self):
        poses = make_orbit_trajectory(4.0, 8, 0.0)
        centroid = np.mean([p.translation for p in poses], axis=0)
        np.testing.assert_allclose(centroid, 0.0, atol=1e-9)

    def test_look_at_construction_any_elevation(self):
        # Looking at the origin puts it on the optical axis at the orbit
        # radius, for every elevation.
        for elev in (0.0, 20.0, -35.0):
            for pose in make_orbit_trajectory(4.0, 5, elev):
                origin_cam = transform_point(invert(pose), (0.0, 0.0, 0.0))
                np.testing.assert_allclose(origin_cam[:2], 0.0, atol=1e-12)
                assert origin_cam[2] == pytest.approx(
                    4.0 * math.cos(math.radians(0.0)))

    def test_validation(self):
        with pytest.raises(ValueError):
            make_orbit_trajectory(0.0, 3, 0.0)
        with pytest.raises(ValueError):
            make_orbit_trajectory(4.0, 0, 0.0)


class TestRgbdFrame:
    def test_rejects_mismatched_buffers(self, k64):
        with pytest.raises(ValueError):
            RgbdFrame(color=np.zeros((10, 10, 3)), depth=np.full((64, 64), np.inf),
                      pose=Pose.identity(), intrinsics=k64)

    def test_rejects_nonpositive_depth(self, k64):
        with pytest.raises(ValueError):
            RgbdFrame(color=np.zeros((64, 64, 3)), depth=np.zeros((64, 64)),
                      pose=Pose.identity(), intrinsics=k64)
