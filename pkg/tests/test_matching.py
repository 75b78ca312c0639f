import numpy as np
import pytest

from splatloc.geometry import Intrinsics, Pose, invert, project_points, transform_points
from splatloc.matching import (
    ClassicalMatcherConfig,
    MatcherConfig,
    OracleMatcherConfig,
    match_classical,
    match_oracle,
)
from splatloc.geometry import backproject_pixels
from splatloc.rendering import Scene, Splat, render


def reprojection_residuals_px(matches, rendered, gt_pose, k):
    """Independent check: lift matched rendered pixels through the true
    geometry and compare with the stored query pixels."""
    ur = matches.rendered_px
    d = rendered.depth[np.round(ur[:, 1]).astype(int), np.round(ur[:, 0]).astype(int)]
    p_world = transform_points(rendered.pose, backproject_pixels(k, ur, d))
    uv, in_front = project_points(k, transform_points(invert(gt_pose), p_world))
    assert in_front.all()
    return np.linalg.norm(uv - matches.query_px, axis=1)


@pytest.fixture(scope="module")
def rendered_frame(orbit_scene, k128):
    return render(orbit_scene, orbit_scene.trajectory[0], k128)


class TestOracle:
    def test_exact_without_noise(self, orbit_scene, k128, rendered_frame):
        gt = orbit_scene.trajectory[1]
        cfg = OracleMatcherConfig(n_target=200, seed=5)
        ms = match_oracle(orbit_scene, rendered_frame, gt, k128, cfg)
        assert len(ms) > 50
        res = reprojection_residuals_px(ms, rendered_frame, gt, k128)
        assert res.max() < 1e-6

    def test_outlier_count_is_exact(self, orbit_scene, k128, rendered_frame):
        # Same view as the render so every sample is kept: N = n_target.
        gt = rendered_frame.pose
        cfg = OracleMatcherConfig(n_target=100, outlier_rate=0.3, seed=2)
        ms = match_oracle(orbit_scene, rendered_frame, gt, k128, cfg)
        assert len(ms) == 100
        assert ms.outlier_mask.sum() == 30
        res = reprojection_residuals_px(ms, rendered_frame, gt, k128)
        assert np.all(res[~ms.outlier_mask] < 1e-6)

    def test_noise_standard_deviation(self):
        # Statistical oracle: with the query at the rendered pose the clean
        # reprojection equals the sampled pixel, so residual components are
        # i.i.d. N(0, sigma) draws. Checked over ~2e4 components.
        k = Intrinsics.from_fov(256, 256, 60.0)
        scene = Scene(splats=[Splat((0, 0, 0), (1.0,) * 3, (1, 0, 0, 0),
                                    (0.8, 0.2, 0.2), 1.0)])
        # Close enough that the splat covers even the corner rays, so every
        # stratified cell yields a sample and N reaches n_target exactly.
        pose = Pose(np.eye(3), (0.0, 0.0, -1.5))
        frame = render(scene, pose, k)
        assert np.isfinite(frame.depth).all()
        cfg = OracleMatcherConfig(n_target=10_000, noise_px_sigma=1.0, seed=11)
        ms = match_oracle(scene, frame, pose, k, cfg)
        assert len(ms) == 10_000
        res = ms.query_px - ms.rendered_px
        std = res.ravel().std()
        assert 0.9 < std < 1.1

    def test_deterministic(self, orbit_scene, k128, rendered_frame):
        gt = orbit_scene.trajectory[1]
        cfg = OracleMatcherConfig(n_target=150, noise_px_sigma=0.5,
                                  outlier_rate=0.2, seed=9)
        a = match_oracle(orbit_scene, rendered_frame, gt, k128, cfg)
        b = match_oracle(orbit_scene, rendered_frame, gt, k128, cfg)
        np.testing.assert_array_equal(a.query_px, b.query_px)
        np.testing.assert_array_equal(a.rendered_px, b.rendered_px)
        np.testing.assert_array_equal(a.outlier_mask, b.outlier_mask)

    def test_no_overlap_yields_empty(self, orbit_scene, k128):
        # Same position, camera spun 180 degrees: the whole scene is behind.
        from splatloc.geometry import rotation_from_axis_angle
        flip = rotation_from_axis_angle((0, 0, 1), np.pi)
        away = Pose(flip @ orbit_scene.trajectory[0].rotation,
                    orbit_scene.trajectory[0].translation)
        frame = render(orbit_scene, away, k128)
        ms = match_oracle(orbit_scene, frame, orbit_scene.trajectory[0], k128,
                          OracleMatcherConfig(n_target=100, seed=0))
        assert len(ms) == 0

    def test_samples_are_spread(self, orbit_scene, k128, rendered_frame):
        # Stratified sampling over the finite-depth mask should cover a wide
        # pixel range, not cluster in one corner.
        gt = rendered_frame.pose
        ms = match_oracle(orbit_scene, rendered_frame, gt, k128,
                          OracleMatcherConfig(n_target=200, seed=3))
        spans = ms.rendered_px.max(axis=0) - ms.rendered_px.min(axis=0)
        assert spans.min() > 30

    def test_config_validation(self):
        with pytest.raises(ValueError):
            OracleMatcherConfig(outlier_rate=1.5)
        with pytest.raises(ValueError):
            OracleMatcherConfig(noise_px_sigma=-1.0)
        with pytest.raises(ValueError):
            MatcherConfig(kind="learned")


class TestClassical:
    def test_self_matching(self, rendered_frame):
        img = rendered_frame.color
        ms = match_classical(img, img)
        assert len(ms) > 20
        np.testing.assert_array_equal(ms.query_px, ms.rendered_px)
        assert np.all(ms.scores > 0.99)

    def test_integer_shift(self, rendered_frame):
        rendered = rendered_frame.color
        query = np.zeros_like(rendered)
        query[:, 5:] = rendered[:, :-5]
        ms = match_classical(query, rendered)
        assert len(ms) >= 10
        delta = ms.query_px - ms.rendered_px
        good = (np.abs(delta[:, 0] - 5.0) <= 1.0) & (np.abs(delta[:, 1]) <= 1.0)
        assert good.mean() >= 0.9

    def test_uncorrelated_noise_yields_few_matches(self):
        rng = np.random.default_rng(123)
        a = rng.uniform(size=(256, 256))
        b = rng.uniform(size=(256, 256))
        ms = match_classical(a, b)
        assert len(ms) <= 5

    def test_affine_intensity_invariance(self, rendered_frame):
        img = rendered_frame.color
        base = match_classical(img, img)
        scaled = match_classical(0.5 * img + 0.1, img)
        np.testing.assert_array_equal(base.query_px, scaled.query_px)
        np.testing.assert_array_equal(base.rendered_px, scaled.rendered_px)
        np.testing.assert_allclose(base.scores, scaled.scores, atol=1e-9)
        other = match_classical(img, 0.5 * img + 0.1)
        np.testing.assert_array_equal(base.query_px, other.query_px)

    def test_textureless_images(self):
        flat = np.full((64, 64, 3), 0.5)
        ms = match_classical(flat, flat)
        assert len(ms) == 0

    def test_deterministic(self, rendered_frame):
        img = rendered_frame.color
        a = match_classical(img, img)
        b = match_classical(img, img)
        np.testing.assert_array_equal(a.query_px, b.query_px)
        np.testing.assert_array_equal(a.scores, b.scores)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            match_classical(np.zeros((10, 10)), np.zeros((12, 12)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ClassicalMatcherConfig(patch_size=8)
