"""Domain types for flat Gaussian splats and their elliptical occupancy regions.

A splat is a flat (rank-2) anisotropic Gaussian primitive: mean, unit
quaternion rotation, two in-plane standard deviations, an opacity and a
spiking cut-off threshold.  The region of space where the kernel is active
(bright enough to render and above the spiking cut-off) is an open ellipse
in the splat plane; most of the geometry in this package is built on top of
those ellipses.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import GeometryError
from .validation import check_points, check_quaternions, check_vector3

MIN_CONTRIBUTION = 1.0 / 255.0

# quaternion (w, x, y, z) of a +90 degree rotation about the local normal;
# used to swap the two in-plane axes while keeping a right-handed frame
_SWAP_AXES_QUAT = np.array([np.sqrt(0.5), 0.0, 0.0, np.sqrt(0.5)])
# cyclic column permutations used when a third (near-zero) scale axis is
# dropped from 3D-style records: rotate x->y->z->x and its inverse
_CYCLE_QUAT = np.array([0.5, 0.5, 0.5, 0.5])
_CYCLE_QUAT_INV = np.array([0.5, -0.5, -0.5, -0.5])


def quat_multiply(q1, q2):
    """Hamilton product of quaternions in (w, x, y, z) order; broadcasts."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    w1, x1, y1, z1 = np.moveaxis(q1, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(q2, -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quats_to_matrices(q):
    """Rotation matrices (n, 3, 3) from unit quaternions (n, 4), (w, x, y, z)."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((len(q), 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R[0] if single else R


def matrix_to_quat(R):
    """Unit quaternion (w, x, y, z) from a rotation matrix, w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def matrices_to_quats(R):
    """Batched rotation-matrix to quaternion conversion, (n, 3, 3) -> (n, 4)."""
    R = np.asarray(R, dtype=np.float64)
    return np.stack([matrix_to_quat(R[i]) for i in range(len(R))])


@dataclass(frozen=True)
class Splat:
    """One canonicalized flat Gaussian primitive."""

    mean: np.ndarray          # (3,) scene units
    rotation: np.ndarray      # (4,) unit quaternion (w, x, y, z)
    scales: np.ndarray        # (2,) sigma1 >= sigma2 >= 0
    opacity: float            # alpha in (0, 1]
    spike_threshold: float    # cut-off in [0, 1]; 0 disables the constraint

    def rotation_matrix(self):
        return quats_to_matrices(self.rotation)


@dataclass(frozen=True)
class OccupancyEllipse:
    """Active elliptical region of one splat: an open ellipse in its plane."""

    center: np.ndarray   # (3,)
    axis1: np.ndarray    # (3,) unit, major direction
    axis2: np.ndarray    # (3,) unit, minor direction
    semi_a: float        # >= semi_b >= 0
    semi_b: float
    normal: np.ndarray   # (3,) unit, axis1 x axis2


@dataclass(frozen=True)
class EllipseBatch:
    """Array-of-struct view over the occupancy ellipses of a whole scene.

    Splats whose active region is empty keep a row here but are masked out
    via ``valid``; their geometric fields are zero-filled.
    """

    centers: np.ndarray   # (n, 3)
    axes1: np.ndarray     # (n, 3)
    axes2: np.ndarray     # (n, 3)
    normals: np.ndarray   # (n, 3)
    semi_a: np.ndarray    # (n,)
    semi_b: np.ndarray    # (n,)
    valid: np.ndarray     # (n,) bool

    def __len__(self):
        return len(self.centers)

    def ellipse(self, i):
        if not self.valid[i]:
            return None
        return OccupancyEllipse(
            center=self.centers[i], axis1=self.axes1[i], axis2=self.axes2[i],
            semi_a=float(self.semi_a[i]), semi_b=float(self.semi_b[i]),
            normal=self.normals[i])


class SplatSet:
    """Immutable ordered collection of canonicalized splats.

    Extra on-disk properties (colors, harmonics, ...) ride along as an opaque
    structured-array payload and are written back untouched.
    """

    def __init__(self, means, rotations, scales, opacities, spike_thresholds,
                 payload=None, has_spike_property=True):
        self.means = check_points(means, "means", allow_empty=True)
        self.rotations = check_quaternions(rotations, allow_empty=True)
        scales = np.asarray(scales, dtype=np.float64)
        if scales.shape != (len(self.means), 2):
            raise ValueError(f"scales must have shape (n, 2), got {scales.shape}")
        if not np.all(np.isfinite(scales)) or np.any(scales < 0):
            raise ValueError("scales must be finite and non-negative")
        if np.any(scales[:, 0] < scales[:, 1]):
            raise ValueError("scales must be canonicalized with sigma1 >= sigma2")
        self.scales = scales
        self.opacities = np.asarray(opacities, dtype=np.float64).reshape(-1)
        self.spike_thresholds = np.asarray(spike_thresholds, dtype=np.float64).reshape(-1)
        n = len(self.means)
        if len(self.opacities) != n or len(self.spike_thresholds) != n:
            raise ValueError("field lengths disagree")
        if np.any(self.opacities <= 0) or np.any(self.opacities > 1):
            raise ValueError("opacities must lie in (0, 1]")
        if np.any(self.spike_thresholds < 0) or np.any(self.spike_thresholds > 1):
            raise ValueError("spike thresholds must lie in [0, 1]")
        if payload is not None and len(payload) != n:
            raise ValueError("payload length disagrees with splat count")
        self.payload = payload
        self.has_spike_property = has_spike_property
        for a in (self.means, self.rotations, self.scales, self.opacities,
                  self.spike_thresholds):
            a.setflags(write=False)

    def __len__(self):
        return len(self.means)

    def __getitem__(self, i):
        i = int(i)
        return Splat(mean=self.means[i], rotation=self.rotations[i],
                     scales=self.scales[i], opacity=float(self.opacities[i]),
                     spike_threshold=float(self.spike_thresholds[i]))

    @property
    def scene_scale(self):
        """Bounding-box extent of the means; the unit for all tolerances."""
        return scene_scale(self.means)

    def replaced(self, means=None, rotations=None, scales=None):
        """Copy with some geometric fields swapped out; payload passes through."""
        return SplatSet(
            means=self.means if means is None else means,
            rotations=self.rotations if rotations is None else rotations,
            scales=self.scales if scales is None else scales,
            opacities=self.opacities,
            spike_thresholds=self.spike_thresholds,
            payload=self.payload,
            has_spike_property=self.has_spike_property,
        )


def scene_scale(means):
    """Largest axis-aligned bounding-box extent of a point set."""
    means = np.asarray(means, dtype=np.float64)
    if means.size == 0:
        raise GeometryError("scene scale of an empty point set is undefined")
    extent = float(np.max(np.ptp(means, axis=0)))
    if extent <= 0:
        # all means coincide; fall back to a unit so relative tolerances work
        return 1.0
    return extent


def occupancy_lambda(opacity, spike_threshold, c=MIN_CONTRIBUTION):
    """Squared radial cut-off of the active region, in sigma units.

    lambda = -2 * max(ln spike_threshold, ln(c / opacity)); non-positive
    values mean the active region is empty.
    """
    with np.errstate(divide="ignore"):
        log_spike = np.log(spike_threshold)
    return -2.0 * np.maximum(log_spike, np.log(c / np.asarray(opacity, dtype=np.float64)))


def occupancy_ellipse(splat, c=MIN_CONTRIBUTION):
    """Active region of one splat, or None when the thresholds exclude everything."""
    lam = float(occupancy_lambda(splat.opacity, splat.spike_threshold, c))
    if lam <= 0 or not np.isfinite(lam):
        return None
    root = np.sqrt(lam)
    R = quats_to_matrices(splat.rotation)
    return OccupancyEllipse(
        center=np.array(splat.mean, dtype=np.float64),
        axis1=R[:, 0].copy(), axis2=R[:, 1].copy(),
        semi_a=root * float(splat.scales[0]), semi_b=root * float(splat.scales[1]),
        normal=R[:, 2].copy())


def occupancy_ellipses(splats, c=MIN_CONTRIBUTION):
    """Vectorized occupancy regions of a whole scene as an EllipseBatch."""
    lam = occupancy_lambda(splats.opacities, splats.spike_thresholds, c)
    valid = np.isfinite(lam) & (lam > 0)
    root = np.sqrt(np.where(valid, lam, 0.0))
    R = quats_to_matrices(splats.rotations)
    return EllipseBatch(
        centers=splats.means.copy(),
        axes1=np.ascontiguousarray(R[:, :, 0]),
        axes2=np.ascontiguousarray(R[:, :, 1]),
        normals=np.ascontiguousarray(R[:, :, 2]),
        semi_a=root * splats.scales[:, 0],
        semi_b=root * splats.scales[:, 1],
        valid=valid)


def in_region(ellipse, x, plane_tol):
    """Open-region membership test for a point against an occupancy ellipse.

    True iff x lies in the splat plane (within plane_tol along the normal)
    and its scaled in-plane radius is strictly below 1.  Degenerate ellipses
    (semi_b == 0) degrade to a segment: the minor coordinate must vanish
    within plane_tol as well.
    """
    x = check_vector3(x, "x")
    d = x - ellipse.center
    if abs(float(d @ ellipse.normal)) > plane_tol:
        return False
    u = float(d @ ellipse.axis1)
    v = float(d @ ellipse.axis2)
    if ellipse.semi_a == 0.0:
        return abs(u) <= plane_tol and abs(v) <= plane_tol
    if ellipse.semi_b == 0.0:
        return abs(v) <= plane_tol and (u / ellipse.semi_a) ** 2 < 1.0
    return (u / ellipse.semi_a) ** 2 + (v / ellipse.semi_b) ** 2 < 1.0


def transform_splats(splats, rotation, translation):
    """Rigidly transform a whole SplatSet (rotation matrix + translation)."""
    rotation = np.asarray(rotation, dtype=np.float64)
    translation = check_vector3(translation, "translation")
    q_rot = matrix_to_quat(rotation)
    means = splats.means @ rotation.T + translation
    rotations = quat_multiply(q_rot, splats.rotations)
    rotations /= np.linalg.norm(rotations, axis=1, keepdims=True)
    return splats.replaced(means=means, rotations=rotations)


def _canonicalize_axes(rotations, scales):
    """Reorder so sigma1 >= sigma2, adjusting quaternions to keep the frame."""
    rotations = rotations.copy()
    scales = scales.copy()
    swap = scales[:, 0] < scales[:, 1]
    if np.any(swap):
        scales[swap] = scales[swap][:, ::-1]
        rotations[swap] = quat_multiply(rotations[swap], _SWAP_AXES_QUAT)
    return rotations, scales


def drop_third_scale(rotations, scales3):
    """Reduce 3-axis scale records to flat 2-axis ones.

    The smallest scale axis becomes the normal; the rotation is cyclically
    permuted so the kept axes stay in columns 1 and 2 of the frame.
    Returns (rotations, scales2, dropped_magnitudes).
    """
    scales3 = np.asarray(scales3, dtype=np.float64)
    drop = np.argmin(scales3, axis=1)
    n = len(scales3)
    out_scales = np.empty((n, 2))
    out_rot = np.asarray(rotations, dtype=np.float64).copy()
    dropped = scales3[np.arange(n), drop]

    sel = drop == 2
    out_scales[sel] = scales3[sel][:, :2]
    sel = drop == 0  # keep (s1, s2); new frame (r2, r3, r1)
    if np.any(sel):
        out_scales[sel] = scales3[sel][:, 1:]
        out_rot[sel] = quat_multiply(out_rot[sel], _CYCLE_QUAT)
    sel = drop == 1  # keep (s2, s0); new frame (r3, r1, r2)
    if np.any(sel):
        out_scales[sel] = scales3[sel][:, [2, 0]]
        out_rot[sel] = quat_multiply(out_rot[sel], _CYCLE_QUAT_INV)
    return out_rot, out_scales, dropped


def canonicalize(means, rotations, scales, opacities, spike_thresholds,
                 payload=None, c=MIN_CONTRIBUTION, has_spike_property=True):
    """Normalize quaternions, order scale axes, drop sub-threshold splats.

    Returns (SplatSet, report dict).  Splats with opacity below the minimum
    rendering contribution have an empty active region by construction and
    are removed here rather than carried as dead weight.
    """
    rotations = np.asarray(rotations, dtype=np.float64)
    norms = np.linalg.norm(rotations, axis=1)
    if np.any(norms == 0):
        raise GeometryError(f"zero quaternion at record {int(np.argmax(norms == 0))}")
    rotations = rotations / norms[:, None]
    rotations, scales = _canonicalize_axes(rotations, np.asarray(scales, dtype=np.float64))

    opacities = np.asarray(opacities, dtype=np.float64)
    keep = opacities >= c
    dropped = int(np.count_nonzero(~keep))
    splats = SplatSet(
        means=np.asarray(means, dtype=np.float64)[keep],
        rotations=rotations[keep],
        scales=scales[keep],
        opacities=opacities[keep],
        spike_thresholds=np.asarray(spike_thresholds, dtype=np.float64)[keep],
        payload=None if payload is None else payload[keep],
        has_spike_property=has_spike_property,
    )
    report = {"loaded": int(len(keep)), "kept": int(len(splats)),
              "dropped_low_opacity": dropped}
    return splats, report
