import json

import numpy as np
import pytest

from splatdeform.errors import GeometryError
from splatdeform.evaluation import (PckReport, farthest_point_sampling,
                                    pair_to_nearest, pca_handle_direction,
                                    pck3d, sample_keypoints)

from helpers import rotation_about


class TestPcaHandleDirection:
    def test_plane_normal(self, rng):
        pts = np.zeros((40, 3))
        pts[:, :2] = rng.normal(size=(40, 2))
        d = pca_handle_direction(pts, np.zeros(3))
        # handle sits in the plane: repulsion degenerate, +z hemisphere rule
        np.testing.assert_allclose(d, [0.0, 0.0, 1.0], atol=1e-12)

    def test_repulsive_orientation(self, rng):
        pts = np.zeros((40, 3))
        pts[:, :2] = rng.normal(size=(40, 2))
        handle = np.array([0.0, 0.0, -2.0])
        d = pca_handle_direction(pts, handle)
        assert d[2] < 0  # points from the centroid toward the handle side

    def test_line_with_jitter(self, rng):
        """Smallest-variance direction is orthogonal to the line axis."""
        pts = np.zeros((60, 3))
        pts[:, 0] = np.linspace(0, 10, 60)
        pts[:, 1] = rng.normal(size=60) * 0.01
        pts[:, 2] = rng.normal(size=60) * 0.3
        d = pca_handle_direction(pts, pts[0])
        assert abs(d[0]) < 1e-3
        vals = np.linalg.eigvalsh(np.cov((pts - pts.mean(0)).T))
        assert abs(abs(d[1]) - 1.0) < 1e-3  # y has the least variance

    def test_too_few_points(self):
        with pytest.raises(GeometryError):
            pca_handle_direction(np.zeros((2, 3)), np.zeros(3))

    def test_collinear_rejected(self):
        pts = np.zeros((10, 3))
        pts[:, 0] = np.arange(10)
        with pytest.raises(GeometryError):
            pca_handle_direction(pts, np.zeros(3))

    def test_unit_norm(self, rng):
        pts = rng.normal(size=(30, 3))
        d = pca_handle_direction(pts, rng.normal(size=3))
        assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-12)


class TestFarthestPointSampling:
    def test_collinear_example(self):
        pts = np.zeros((10, 3))
        pts[:, 0] = np.arange(10, dtype=float)
        assert farthest_point_sampling(pts, 3, seed=0).tolist() == [0, 9, 4]

    def test_full_permutation(self, rng):
        pts = rng.normal(size=(12, 3))
        out = farthest_point_sampling(pts, 12, seed=3)
        assert sorted(out.tolist()) == list(range(12))

    def test_single(self, rng):
        pts = rng.normal(size=(5, 3))
        assert farthest_point_sampling(pts, 1, seed=2).tolist() == [2]

    def test_duplicate_invariance(self, rng):
        pts = rng.normal(size=(15, 3))
        base = farthest_point_sampling(pts, 6, seed=0)
        dup = np.vstack([pts, pts[3], pts[7]])
        again = farthest_point_sampling(dup, 6, seed=0)
        assert base.tolist() == again.tolist()

    def test_greedy_max_min(self, rng):
        """Each pick maximizes the min-distance to the selected set."""
        pts = rng.normal(size=(30, 3))
        out = farthest_point_sampling(pts, 8, seed=0)
        for k in range(1, 8):
            chosen = out[:k]
            dists = np.array([min(np.linalg.norm(p - pts[c]) for c in chosen)
                              for p in pts])
            best = dists.max()
            picked = dists[out[k]]
            assert picked == pytest.approx(best, rel=1e-12)
            ties = np.flatnonzero(np.isclose(dists, best, rtol=1e-12))
            assert out[k] == ties.min()


class TestPck3d:
    def test_identical_perfect(self, rng):
        gt = rng.normal(size=(100, 3))
        paired = np.arange(100)
        assert pck3d(gt, gt, paired, 1e-9) == 1.0

    def test_one_outlier(self, rng):
        gt = rng.normal(size=(100, 3))
        deformed = gt.copy()
        tau = 0.05
        deformed[17] += np.array([10 * tau, 0, 0])
        assert pck3d(gt, deformed, np.arange(100), tau) == pytest.approx(0.99)

    def test_unpaired_counts_incorrect(self, rng):
        gt = rng.normal(size=(10, 3))
        paired = np.arange(10)
        paired[3] = -1
        assert pck3d(gt, gt, paired, 1.0) == pytest.approx(0.9)

    def test_threshold_monotone(self, rng):
        gt = rng.normal(size=(100, 3))
        deformed = gt + rng.normal(size=(100, 3)) * 0.05
        scores = [pck3d(gt, deformed, np.arange(100), t)
                  for t in (0.01, 0.05, 0.075, 0.1, 0.5)]
        assert scores == sorted(scores)

    def test_rigid_invariance(self, rng):
        gt = rng.normal(size=(60, 3))
        deformed = gt + rng.normal(size=(60, 3)) * 0.05
        Q = rotation_about([1.0, 0.2, 0.1], 0.7)
        t = np.array([4.0, 5.0, -6.0])
        s1 = pck3d(gt, deformed, np.arange(60), 0.075)
        s2 = pck3d(gt @ Q.T + t, deformed @ Q.T + t, np.arange(60), 0.075)
        assert s1 == s2


class TestKeypoints:
    def test_pairing_nearest_lowest_tie(self):
        means = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        pos = np.array([[0.5, 0, 0]])
        assert pair_to_nearest(pos, means).tolist() == [0]

    def test_sample_keypoints_region(self, rng):
        reference = rng.normal(size=(500, 3))
        means = rng.normal(size=(50, 3))
        ks = sample_keypoints(reference, means, np.zeros(3), n=100,
                              region_radius=1.0)
        assert len(ks.positions) <= 100
        assert np.all(np.linalg.norm(ks.positions, axis=1) <= 1.0 + 1e-12)
        assert np.all(ks.paired >= 0)

    def test_sample_keypoints_empty_region(self, rng):
        reference = rng.normal(size=(50, 3)) + 100.0
        with pytest.raises(GeometryError):
            sample_keypoints(reference, reference, np.zeros(3), n=10,
                             region_radius=1.0)


class TestPckReport:
    def test_json_and_table(self):
        report = PckReport(thresholds=[0.05, 0.075, 0.1])
        report.add("handle0", {0.05: 0.9, 0.075: 0.95, 0.1: 1.0},
                   category="bench")
        report.add("handle1", {0.05: 1.0, 0.075: 1.0, 0.1: 1.0},
                   category="bench")
        data = json.loads(report.to_json())
        assert data["means"]["0.075"] == pytest.approx(0.975)
        assert data["category_means"]["bench"]["0.05"] == pytest.approx(0.95)
        table = report.table()
        assert "handle0" in table and "tau=0.075" in table and "[bench]" in table

    def test_monotone_means(self):
        report = PckReport(thresholds=[0.05, 0.1])
        report.add("h", {0.05: 0.8, 0.1: 0.9})
        means = report.mean_scores()
        assert means[0.05] <= means[0.1]
