"""Deformation-quality evaluation: keypoints, pairing and 3D-PCK scoring.

Keypoints are farthest-point sampled from a reference cloud around each
handle, paired to the nearest splat mean on the rest pose, and a deformed
keypoint counts as correct when it lands within a threshold of its paired
splat's deformed mean.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError
from .validation import check_points, check_vector3


def pca_handle_direction(points, handle_point):
    """Smallest-variance direction of a neighborhood, oriented repulsively.

    The unit eigenvector of the centered covariance with the smallest
    eigenvalue, signed to point from the neighborhood centroid toward the
    handle; when that projection vanishes the sign falls back to the +z
    (then +y, +x) hemisphere.
    """
    points = check_points(points, "points")
    handle_point = check_vector3(handle_point, "handle_point")
    if len(points) < 3:
        raise GeometryError("PCA direction needs at least 3 points")
    centroid = points.mean(axis=0)
    centered = points - centroid
    cov = centered.T @ centered
    vals, vecs = np.linalg.eigh(cov)
    if vals[2] <= 0 or vals[1] <= 1e-12 * vals[2]:
        raise GeometryError("neighborhood covariance has rank < 2")
    v = vecs[:, 0]
    d = float(v @ (handle_point - centroid))
    if abs(d) > 1e-12 * np.sqrt(max(vals[2], 1e-300)):
        return v if d > 0 else -v
    for axis in (2, 1, 0):
        if v[axis] != 0:
            return v if v[axis] > 0 else -v
    return v


def farthest_point_sampling(points, n, seed=0):
    """Greedy max-min selection of n point indices starting from ``seed``.

    Distance ties resolve to the lowest index, which also makes the output
    invariant to duplicated points beyond their first occurrence.
    """
    points = check_points(points, "points")
    if not (0 <= seed < len(points)):
        raise ValueError("seed index out of range")
    if n > len(points):
        raise ValueError("cannot sample more points than available")
    selected = [int(seed)]
    dist = np.linalg.norm(points - points[seed], axis=1)
    for _ in range(n - 1):
        idx = int(np.argmax(dist))
        selected.append(idx)
        dist = np.minimum(dist, np.linalg.norm(points - points[idx], axis=1))
    return np.array(selected, dtype=np.int64)


def pair_to_nearest(positions, means):
    """Nearest splat-mean index for each position (ties: lowest index)."""
    positions = check_points(positions, "positions")
    means = check_points(means, "means")
    out = np.empty(len(positions), dtype=np.int64)
    for k, p in enumerate(positions):
        out[k] = int(np.argmin(np.linalg.norm(means - p, axis=1)))
    return out


@dataclass(frozen=True)
class KeypointSet:
    """Keypoints on a reference cloud, paired to splats on the rest pose."""

    positions: np.ndarray       # (k, 3) rest-pose keypoint positions
    reference_indices: np.ndarray  # (k,) indices into the reference cloud
    paired: np.ndarray          # (k,) splat indices, -1 when unpaired
    handle: int                 # handle association (anchor node)
    seed: int                   # FPS starting index (into the region subset)


def sample_keypoints(reference_points, splat_means, handle_position,
                     n=100, region_radius=None, max_pair_distance=None):
    """FPS keypoints around a handle, paired to rest-pose splat means.

    The sampling region is the reference points within ``region_radius`` of
    the handle (everything when None); the greedy sweep starts from the
    region point nearest the handle.
    """
    reference_points = check_points(reference_points, "reference_points")
    handle_position = check_vector3(handle_position, "handle_position")
    d = np.linalg.norm(reference_points - handle_position, axis=1)
    region = np.flatnonzero(d <= region_radius) if region_radius is not None \
        else np.arange(len(reference_points))
    if len(region) == 0:
        raise GeometryError("no reference points in the sampling region")
    n_eff = min(n, len(region))
    seed = int(np.argmin(d[region]))
    picked = region[farthest_point_sampling(reference_points[region], n_eff,
                                            seed=seed)]
    positions = reference_points[picked]
    paired = pair_to_nearest(positions, splat_means)
    if max_pair_distance is not None:
        dist = np.linalg.norm(positions - splat_means[paired], axis=1)
        paired = np.where(dist <= max_pair_distance, paired, -1)
    return KeypointSet(positions=positions, reference_indices=picked,
                       paired=paired, handle=-1, seed=seed)


def pck3d(gt_deformed, deformed_means, paired, threshold):
    """Fraction of keypoints within ``threshold`` of their paired deformed mean.

    ``paired`` holds splat indices (-1 marks an unpaired keypoint, which
    counts as incorrect).
    """
    gt_deformed = check_points(gt_deformed, "gt_deformed")
    paired = np.asarray(paired, dtype=np.int64)
    ok = paired >= 0
    correct = np.zeros(len(paired), dtype=bool)
    if np.any(ok):
        d = np.linalg.norm(gt_deformed[ok] - deformed_means[paired[ok]], axis=1)
        correct[ok] = d <= threshold
    return float(np.mean(correct)) if len(paired) else 0.0


@dataclass
class PckReport:
    """Per-handle 3D-PCK scores at each threshold, plus aggregate means."""

    thresholds: list
    handle_scores: dict = field(default_factory=dict)   # label -> {tau: score}
    categories: dict = field(default_factory=dict)      # category -> [labels]
    unpaired: dict = field(default_factory=dict)        # label -> count

    def add(self, label, scores, category=None, unpaired=0):
        self.handle_scores[label] = dict(scores)
        if category is not None:
            self.categories.setdefault(category, []).append(label)
        self.unpaired[label] = int(unpaired)

    def mean_scores(self, labels=None):
        labels = list(self.handle_scores) if labels is None else labels
        return {t: float(np.mean([self.handle_scores[h][t] for h in labels]))
                for t in self.thresholds}

    def category_means(self):
        return {c: self.mean_scores(labels) for c, labels in self.categories.items()}

    def to_json(self):
        return json.dumps({
            "thresholds": self.thresholds,
            "handles": {str(h): {str(t): v for t, v in s.items()}
                        for h, s in self.handle_scores.items()},
            "means": {str(t): v for t, v in self.mean_scores().items()},
            "category_means": {c: {str(t): v for t, v in m.items()}
                               for c, m in self.category_means().items()},
            "unpaired": {str(h): v for h, v in self.unpaired.items()},
        }, indent=2, sort_keys=True)

    def table(self):
        """Aligned text table: one row per handle (and per category mean)."""
        headers = ["handle"] + [f"tau={t:g}" for t in self.thresholds]
        rows = [[str(h)] + [f"{self.handle_scores[h][t]:.3f}"
                            for t in self.thresholds]
                for h in self.handle_scores]
        for c, m in self.category_means().items():
            rows.append([f"[{c}]"] + [f"{m[t]:.3f}" for t in self.thresholds])
        rows.append(["mean"] + [f"{v:.3f}" for v in self.mean_scores().values()])
        widths = [max(len(r[k]) for r in [headers] + rows)
                  for k in range(len(headers))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        for r in rows:
            lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
        return "\n".join(lines)
