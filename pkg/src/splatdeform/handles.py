"""Handle specifications: anchors, displacements and constraint radii.

The JSON wire format (shared by the CLI and the HTTP service):

    {"handles": [{"position": [x, y, z] | "index": i,
                  "displacement": [dx, dy, dz] | "auto_pca": {"magnitude": 0.2}}],
     "method": "arap" | "bbw",
     "fixed_radius": 0.5,
     "cage_radius": 0.3}

Radii and the auto-PCA magnitude are expressed as multiples of the scene
scale s; displacement vectors are absolute scene units.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .evaluation import pca_handle_direction
from .graph import geodesic_knn
from .validation import check_vector3

DEFAULT_FIXED_RADIUS = 0.5
DEFAULT_CAGE_RADIUS = 0.3
DEFAULT_MAGNITUDE = 0.2


@dataclass
class Handle:
    index: int = None                 # anchor node, if given directly
    position: np.ndarray = None       # else snapped to the nearest mean
    displacement: np.ndarray = None   # absolute target displacement
    auto_pca_magnitude: float = None  # in units of s; used when no displacement
    transform: np.ndarray = None      # optional 3x4 affine (BBW only)


@dataclass
class HandleSpec:
    handles: list
    method: str = "arap"
    fixed_radius: float = DEFAULT_FIXED_RADIUS
    cage_radius: float = DEFAULT_CAGE_RADIUS

    def __post_init__(self):
        if not self.handles:
            raise ValueError("handle spec must contain at least one handle")
        if self.method not in ("arap", "bbw"):
            raise ValueError(f"unknown method {self.method!r}")

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        handles = []
        for k, h in enumerate(obj.get("handles", [])):
            if "index" not in h and "position" not in h:
                raise ValueError(f"handle {k} needs an 'index' or a 'position'")
            displacement = None
            magnitude = None
            transform = None
            if "transform" in h:
                transform = np.asarray(h["transform"], dtype=np.float64)
                if transform.shape != (3, 4) or not np.all(np.isfinite(transform)):
                    raise ValueError(
                        f"handles[{k}].transform must be a finite 3x4 matrix")
            elif "displacement" in h:
                displacement = check_vector3(h["displacement"],
                                             f"handles[{k}].displacement")
            elif "auto_pca" in h:
                magnitude = float(h["auto_pca"].get("magnitude", DEFAULT_MAGNITUDE))
            else:
                raise ValueError(
                    f"handle {k} needs a 'displacement', 'auto_pca' or "
                    "'transform' entry")
            handles.append(Handle(
                index=int(h["index"]) if "index" in h else None,
                position=check_vector3(h["position"], f"handles[{k}].position")
                if "position" in h else None,
                displacement=displacement,
                auto_pca_magnitude=magnitude,
                transform=transform))
        return cls(handles=handles,
                   method=obj.get("method", "arap"),
                   fixed_radius=float(obj.get("fixed_radius", DEFAULT_FIXED_RADIUS)),
                   cage_radius=float(obj.get("cage_radius", DEFAULT_CAGE_RADIUS)))


@dataclass
class ResolvedHandles:
    """Handle spec bound to a concrete scene: node anchors, absolute radii."""

    anchors: np.ndarray         # (h,) node indices
    displacements: np.ndarray   # (h, 3) absolute, anchor displacement
    method: str
    fixed_radius: float         # absolute
    cage_radius: float          # absolute
    scene_scale: float
    snap_distances: np.ndarray = field(default=None)
    transforms: list = None     # per-handle 3x4 affines (BBW blending)


def snap_position(means, position, scene_scale, max_distance=None):
    """Nearest splat mean to a requested handle position (ties: lowest index).

    Positions outside the scene bounding box (padded by 5% of s) are
    rejected with a distance diagnostic.
    """
    position = check_vector3(position, "position")
    lo = means.min(axis=0) - 0.05 * scene_scale
    hi = means.max(axis=0) + 0.05 * scene_scale
    if np.any(position < lo) or np.any(position > hi):
        outside = float(np.linalg.norm(
            position - np.clip(position, means.min(axis=0), means.max(axis=0))))
        raise ValueError(
            f"handle position {position.tolist()} lies outside the scene "
            f"bounding box by {outside:.6g} scene units")
    d = np.linalg.norm(means - position, axis=1)
    idx = int(np.argmin(d))
    if max_distance is not None and d[idx] > max_distance:
        raise ValueError(
            f"no splat within {max_distance:.6g} of the requested position "
            f"(nearest is {d[idx]:.6g} away)")
    return idx, float(d[idx])


def resolve_handles(spec, splats, graph=None, k_pca=30):
    """Bind a HandleSpec to a scene: snap anchors, materialize displacements.

    Auto-PCA handles need the splat graph: the displacement direction is the
    smallest-variance axis of the anchor's geodesic neighborhood, oriented
    away from the neighborhood (repulsive), scaled to magnitude * s.
    """
    s = splats.scene_scale
    means = splats.means
    anchors = []
    displacements = []
    snap_distances = []
    transforms = []
    for k, h in enumerate(spec.handles):
        if h.index is not None:
            if not (0 <= h.index < len(splats)):
                raise ValueError(f"handle {k} index {h.index} out of range")
            idx, snap_d = int(h.index), 0.0
        else:
            idx, snap_d = snap_position(means, h.position, s)
        if h.transform is not None:
            if spec.method != "bbw":
                raise ValueError(
                    f"handle {k} carries an affine transform; only the bbw "
                    "method blends affine handles")
            T = h.transform
            disp = T[:, :3] @ means[idx] + T[:, 3] - means[idx]
        elif h.displacement is not None:
            disp = h.displacement
            T = np.hstack([np.eye(3), np.asarray(disp).reshape(3, 1)])
        else:
            if graph is None:
                raise ValueError("auto_pca handles require the splat graph")
            hood = geodesic_knn(graph, idx, k_pca)
            pts = means[np.concatenate([[idx], hood.indices])]
            direction = pca_handle_direction(pts, means[idx])
            disp = h.auto_pca_magnitude * s * direction
            T = np.hstack([np.eye(3), np.asarray(disp).reshape(3, 1)])
        anchors.append(idx)
        displacements.append(disp)
        snap_distances.append(snap_d)
        transforms.append(T)
    anchors = np.array(anchors, dtype=np.int64)
    if len(np.unique(anchors)) != len(anchors):
        raise ValueError("handle anchors collide after snapping; merge them")
    return ResolvedHandles(
        anchors=anchors,
        displacements=np.array(displacements, dtype=np.float64),
        method=spec.method,
        fixed_radius=spec.fixed_radius * s,
        cage_radius=spec.cage_radius * s,
        scene_scale=s,
        snap_distances=np.array(snap_distances),
        transforms=transforms)
