"""Shared fixture builders for the test suite."""

import math

import numpy as np

from splatdeform.model import (OccupancyEllipse, SplatSet, quats_to_matrices)

# lambda = 1 when spike = exp(-1/2) and opacity = 1, so semi-axes == sigmas
UNIT_LAMBDA_SPIKE = math.exp(-0.5)

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])
# frame (r1, r2, r3) = (e_y, e_z, e_x): disks lying in the y-z plane
YZ_PLANE_QUAT = np.array([0.5, 0.5, 0.5, 0.5])


def make_splats(means, quats=None, scales=1.0, opacity=1.0,
                spike=UNIT_LAMBDA_SPIKE):
    """SplatSet with unit-lambda kernels: semi-axes equal the sigma values."""
    means = np.asarray(means, dtype=np.float64)
    n = len(means)
    if quats is None:
        quats = np.tile(IDENTITY_QUAT, (n, 1))
    elif np.ndim(quats) == 1:
        quats = np.tile(np.asarray(quats, dtype=np.float64), (n, 1))
    scales = np.asarray(scales, dtype=np.float64)
    if scales.ndim == 0:
        scales = np.full((n, 2), float(scales))
    elif scales.ndim == 1:
        scales = np.tile(scales, (n, 1))
    return SplatSet(means, quats, scales,
                    np.full(n, float(opacity)), np.full(n, float(spike)))


def disk_row(xs, radius=1.0, y=0.0, z=0.0):
    """Coplanar disks (normal +z) along the x axis."""
    means = np.stack([np.asarray(xs, dtype=np.float64),
                      np.full(len(xs), y), np.full(len(xs), z)], axis=1)
    return make_splats(means, scales=radius)


def flat_sheet(n=10, spacing=1.0, radius=0.75, z=0.0):
    """n x n grid of disks in the z = const plane (normal +z)."""
    xs, ys = np.meshgrid(np.arange(n, dtype=float) * spacing,
                         np.arange(n, dtype=float) * spacing)
    means = np.stack([xs.ravel(), ys.ravel(), np.full(n * n, z)], axis=1)
    return make_splats(means, scales=radius)


def yz_sheet(n=14, spacing=1.0, radius=2.0):
    """n x n grid of disks in the x = 0 plane (normal +x)."""
    ys, zs = np.meshgrid(np.arange(n, dtype=float) * spacing,
                         np.arange(n, dtype=float) * spacing)
    means = np.stack([np.zeros(n * n), ys.ravel(), zs.ravel()], axis=1)
    return make_splats(means, quats=YZ_PLANE_QUAT, scales=radius)


def random_unit_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_ellipse(rng, semi_range=(0.5, 2.0), center_range=1.5):
    q = random_unit_quats(rng, 1)[0]
    R = quats_to_matrices(q)
    a, b = np.sort(rng.uniform(*semi_range, 2))[::-1]
    return OccupancyEllipse(center=rng.uniform(-center_range, center_range, 3),
                            axis1=R[:, 0], axis2=R[:, 1],
                            semi_a=float(a), semi_b=float(b), normal=R[:, 2])


def random_splatset(rng, n, box=4.0, sigma_range=(0.2, 1.0)):
    quats = random_unit_quats(rng, n)
    sigmas = np.sort(rng.uniform(*sigma_range, (n, 2)), axis=1)[:, ::-1]
    return SplatSet(rng.uniform(-box, box, (n, 3)), quats, sigmas,
                    rng.uniform(0.2, 1.0, n), rng.uniform(0.01, 0.8, n))


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)
