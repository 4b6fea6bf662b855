"""Surface-preserving kernel adaptation.

After the solver displaces splat means, each kernel is re-fit to the
deformed surface: the maximum-area inscribed triangle of its occupancy
ellipse is displaced vertex-by-vertex with inverse-distance-weighted
neighbor displacements, and the adapted kernel is recovered from the
displaced triangle through its Steiner circumellipse (the unique
minimal-area ellipse through the three vertices, centered at their
centroid).
"""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError
from .graph import all_geodesic_neighborhoods
from .model import (MIN_CONTRIBUTION, OccupancyEllipse, SplatSet,
                    matrices_to_quats, occupancy_ellipses, occupancy_lambda,
                    quats_to_matrices)
from .validation import check_points, check_vector3

SQRT3 = np.sqrt(3.0)
EXACT_HIT_FACTOR = 1e-12     # of scene scale; IDW collapses to the hit anchor
DEGENERATE_AREA_FACTOR = 1e-12  # of scene scale squared


@dataclass(frozen=True)
class InscribedTriangle:
    """Maximum-area triangle inscribed in an occupancy ellipse."""

    vertices: np.ndarray   # (3, 3) rows t1, t2, t3
    splat_index: int = -1


def inscribed_triangle(ellipse, splat_index=-1):
    """t1 = c + v1, t2/t3 = c - v1/2 +- (sqrt(3)/2) v2 for semi-axes v1, v2."""
    if ellipse is None:
        raise GeometryError("cannot inscribe a triangle in an empty region")
    v1 = ellipse.semi_a * ellipse.axis1
    v2 = ellipse.semi_b * ellipse.axis2
    c = ellipse.center
    vertices = np.stack([
        c + v1,
        c - 0.5 * v1 + (SQRT3 / 2.0) * v2,
        c - 0.5 * v1 - (SQRT3 / 2.0) * v2,
    ])
    return InscribedTriangle(vertices=vertices, splat_index=splat_index)


def transfer_displacement(t, anchor_points, anchor_displacements, scale):
    """Inverse-distance-weighted displacement transfer onto a point.

    Weights are reciprocal distances to the anchors; an anchor closer than
    the exact-hit cut (1e-12 * scale) short-circuits to that anchor's
    displacement (the IDW limit).
    """
    t = check_vector3(t, "t")
    anchor_points = check_points(anchor_points, "anchor_points")
    anchor_displacements = check_points(anchor_displacements, "anchor_displacements")
    if len(anchor_points) == 0:
        raise ValueError("at least one anchor is required")
    d = np.linalg.norm(anchor_points - t, axis=1)
    hit = d < EXACT_HIT_FACTOR * scale
    if np.any(hit):
        return t + anchor_displacements[int(np.argmin(np.where(hit, d, np.inf)))]
    w = 1.0 / d
    return t + (w[:, None] * anchor_displacements).sum(axis=0) / w.sum()


def _principal_axes(f1, f2):
    """Principal semi-axes of an ellipse given conjugate semi-diameters.

    The ellipse {cos(t) f1 + sin(t) f2} has principal directions and radii
    given by the left singular vectors/values of [f1 f2] (the numerical form
    of Rytz's axis construction).
    """
    F = np.stack([f1, f2], axis=-1)
    U, s, _ = np.linalg.svd(F, full_matrices=False)
    return U[:, 0], U[:, 1], float(s[0]), float(s[1])


def steiner_circumellipse(t1, t2, t3, scale=None):
    """Steiner circumellipse of a triangle as an OccupancyEllipse.

    Center is the centroid; conjugate semi-diameters are f1 = t1 - g and
    f2 = (t2 - t3)/sqrt(3); principal axes follow by Rytz's construction.
    The ellipse passes through all three vertices.
    """
    t1 = check_vector3(t1, "t1")
    t2 = check_vector3(t2, "t2")
    t3 = check_vector3(t3, "t3")
    g = (t1 + t2 + t3) / 3.0
    f1 = t1 - g
    f2 = (t2 - t3) / SQRT3
    normal = np.cross(f1, f2)
    area = 0.5 * np.linalg.norm(np.cross(t2 - t1, t3 - t1))
    if scale is None:
        scale = max(np.max(np.abs(np.stack([t1, t2, t3]))), 1.0)
    if area <= DEGENERATE_AREA_FACTOR * scale * scale:
        raise GeometryError("triangle is degenerate; no circumellipse exists")
    normal = normal / np.linalg.norm(normal)
    axis1, axis2, semi_a, semi_b = _principal_axes(f1, f2)
    if np.dot(np.cross(axis1, axis2), normal) < 0:
        axis2 = -axis2
    return OccupancyEllipse(center=g, axis1=axis1, axis2=axis2,
                            semi_a=semi_a, semi_b=semi_b, normal=normal)


def _bind_anchors(vertices, pool_points, k_bind):
    """Per-vertex anchor selection: the k_bind pool members nearest each vertex."""
    d = np.linalg.norm(pool_points[None, :, :] - vertices[:, None, :], axis=2)
    k = min(k_bind, pool_points.shape[0])
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(d, order, axis=1)


@dataclass
class AdaptationReport:
    fallback_count: int = 0
    fallback_indices: list = None
    max_lambda_residual: float = 0.0

    def to_dict(self):
        return {"fallback_count": self.fallback_count,
                "fallback_indices": list(map(int, self.fallback_indices or [])),
                "max_lambda_residual": self.max_lambda_residual}


def adapt_kernels(splats, graph, displacements, k_bind=3, pool_k=30,
                  neighborhoods=None, c=None):
    """Adapt every kernel to the displaced surface; returns (SplatSet, report).

    Per splat: inscribed triangle -> IDW displacement transfer per vertex
    (anchors: the k_bind geodesically-adjacent splats nearest each vertex,
    drawn from the owner's geodesic neighborhood plus the owner itself) ->
    Steiner circumellipse -> kernel parameters recovered with the original
    opacity and spike threshold.  Splats with empty regions or degenerate
    displaced triangles fall back to a pure mean translation and are counted
    in the report.
    """
    if c is None:
        c = MIN_CONTRIBUTION
    displacements = check_points(displacements, "displacements")
    if len(displacements) != len(splats):
        raise ValueError("one displacement per splat is required")
    scale = splats.scene_scale
    ell = occupancy_ellipses(splats, c=c)
    if neighborhoods is None:
        neighborhoods = all_geodesic_neighborhoods(graph, pool_k)

    n = len(splats)
    lam = occupancy_lambda(splats.opacities, splats.spike_thresholds, c)
    new_means = splats.means + displacements
    new_rot = splats.rotations.copy()
    new_scales = splats.scales.copy()
    fallback = []
    max_residual = 0.0

    area_floor = DEGENERATE_AREA_FACTOR * scale * scale
    hit_cut = EXACT_HIT_FACTOR * scale
    R_old = None

    for i in range(n):
        if not ell.valid[i]:
            fallback.append(i)
            continue
        tri = inscribed_triangle(ell.ellipse(i), i)
        pool = np.concatenate([[i], neighborhoods[i].indices])
        pool_pts = splats.means[pool]
        pool_disp = displacements[pool]
        order, dist = _bind_anchors(tri.vertices, pool_pts, k_bind)
        displaced = np.empty((3, 3))
        for v in range(3):
            sel = order[v]
            dv = dist[v]
            hit = dv < hit_cut
            if np.any(hit):
                displaced[v] = tri.vertices[v] + pool_disp[sel[int(np.argmin(
                    np.where(hit, dv, np.inf)))]]
            else:
                w = 1.0 / dv
                displaced[v] = tri.vertices[v] + \
                    (w[:, None] * pool_disp[sel]).sum(axis=0) / w.sum()
        area = 0.5 * np.linalg.norm(np.cross(displaced[1] - displaced[0],
                                             displaced[2] - displaced[0]))
        if not np.isfinite(area) or area <= area_floor:
            fallback.append(i)
            continue
        e_new = steiner_circumellipse(displaced[0], displaced[1], displaced[2],
                                      scale=scale)
        axis1, axis2 = e_new.axis1, e_new.axis2
        semi_a, semi_b = e_new.semi_a, e_new.semi_b
        if abs(semi_a - semi_b) < 1e-9 * max(semi_a, 1e-300):
            # circular kernels have an arbitrary in-plane frame; carry the
            # previous major direction over to avoid quaternion jumps
            if R_old is None:
                R_old = quats_to_matrices(splats.rotations)
            r1 = R_old[i][:, 0]
            proj = r1 - (r1 @ e_new.normal) * e_new.normal
            norm = np.linalg.norm(proj)
            if norm > 1e-12:
                axis1 = proj / norm
                axis2 = np.cross(e_new.normal, axis1)
        root = np.sqrt(lam[i])
        R_new = np.stack([axis1, axis2, e_new.normal], axis=1)
        new_means[i] = e_new.center
        new_rot[i] = matrices_to_quats(R_new[None])[0]
        new_scales[i] = (semi_a / root, semi_b / root)
        rebuilt = np.array([new_scales[i][0] * root, new_scales[i][1] * root])
        denom = max(semi_a, 1e-300)
        max_residual = max(max_residual,
                           float(np.max(np.abs(rebuilt - [semi_a, semi_b])) / denom))

    adapted = SplatSet(means=new_means, rotations=new_rot, scales=new_scales,
                       opacities=splats.opacities,
                       spike_thresholds=splats.spike_thresholds,
                       payload=splats.payload,
                       has_spike_property=splats.has_spike_property)
    report = AdaptationReport(fallback_count=len(fallback),
                              fallback_indices=fallback,
                              max_lambda_residual=max_residual)
    return adapted, report


def displace_only(splats, displacements):
    """Baseline adaptation-free deformation: translate means, keep kernels."""
    displacements = check_points(displacements, "displacements")
    return splats.replaced(means=splats.means + displacements)
