"""Cotangent Laplacian and lumped mass matrix over splat means.

Each point gets a local 2D Delaunay triangulation of its geodesic
neighborhood projected onto a PCA tangent plane.  Cotangent weights are
accumulated one row at a time from each point's own triangulation, the
result is symmetrized, negative accumulated weights are clamped to zero
(guaranteeing an M-matrix, which the downstream solvers rely on), and the
diagonal is fixed so rows sum to zero.  Masses are barycentric-lumped
triangle areas from each point's own triangulation.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import Delaunay, QhullError

from .errors import GeometryError, NeighborhoodError
from .model import scene_scale
from .validation import check_points

AREA_FLOOR_FACTOR = 1e-12   # of scene scale squared; degenerate-triangle cut
_GOLDEN_ANGLE = 2.399963229728653


@dataclass(frozen=True)
class LocalTriangulation:
    """Triangles over {center} + neighbors, indices into ``vertices``."""

    center: int
    vertices: np.ndarray    # (m,) global point indices; vertices[0] == center
    triangles: np.ndarray   # (t, 3) local indices into vertices
    jittered: bool = False

    def global_triangles(self):
        return self.vertices[self.triangles]


def _tangent_projection(pts):
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered
    _, vecs = np.linalg.eigh(cov)
    # smallest-eigenvalue direction is the normal; the other two span the plane
    basis = vecs[:, 1:]
    return centered @ basis


def local_triangulation(points, center, neighborhood, scale=None):
    """Delaunay triangulation of a point's neighborhood in its tangent plane.

    Collinear projections get a deterministic epsilon jitter (recorded on the
    result) before retrying.  Triangles whose 3D area falls below the
    degenerate cut are discarded.
    """
    points = check_points(points, "points")
    if len(neighborhood.indices) < 3:
        raise NeighborhoodError(
            f"point {center} has {len(neighborhood.indices)} neighbors; "
            "at least 3 are required (widen k)")
    if scale is None:
        scale = scene_scale(points)
    vertices = np.concatenate([[center], neighborhood.indices]).astype(np.int64)
    pts = points[vertices]
    uv = _tangent_projection(pts)
    jittered = False
    try:
        tri = Delaunay(uv)
    except QhullError:
        extent = max(float(np.max(np.ptp(uv, axis=0))), scale * 1e-9)
        k = np.arange(len(uv))
        jitter = 1e-7 * extent * np.stack(
            [np.cos(_GOLDEN_ANGLE * k), np.sin(_GOLDEN_ANGLE * k)], axis=1)
        jittered = True
        try:
            tri = Delaunay(uv + jitter)
        except QhullError as exc:
            raise GeometryError(
                f"neighborhood of point {center} is degenerate beyond repair") from exc
    triangles = tri.simplices.astype(np.int64)
    p = pts[triangles]
    areas = 0.5 * np.linalg.norm(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    triangles = triangles[areas > AREA_FLOOR_FACTOR * scale * scale]
    return LocalTriangulation(center=int(center), vertices=vertices,
                              triangles=triangles, jittered=jittered)


@dataclass
class LaplacianSystem:
    """Stiffness matrix, lumped masses and the neighborhoods that built them."""

    L: sp.csr_matrix
    masses: np.ndarray
    neighborhoods: list = None
    report: dict = field(default_factory=dict)


def _triangle_cotangents(p):
    """Cotangent of the interior angle at each vertex, (t, 3), plus areas."""
    cots = np.empty((len(p), 3))
    for v in range(3):
        a = p[:, (v + 1) % 3] - p[:, v]
        b = p[:, (v + 2) % 3] - p[:, v]
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        cots[:, v] = np.einsum("ij,ij->i", a, b) / np.maximum(cross, 1e-300)
    areas = 0.5 * np.linalg.norm(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    return cots, areas


def build_laplacian(points, triangulations, scale=None):
    """Assemble the stiffness matrix L and lumped masses M.

    ``triangulations`` maps point index -> LocalTriangulation (or None for
    isolated points, which get a unit diagonal row and the mass floor so the
    system stays nonsingular; they are listed in the report).
    """
    points = check_points(points, "points")
    n = len(points)
    if scale is None:
        scale = scene_scale(points)
    mass_floor = AREA_FLOOR_FACTOR * scale * scale

    owners = []
    tris = []
    isolated = []
    jitter_count = 0
    for i in range(n):
        t = triangulations[i] if i < len(triangulations) else None
        if t is None:
            isolated.append(i)
            continue
        if t.jittered:
            jitter_count += 1
        g = t.global_triangles()
        incident = g[np.any(g == i, axis=1)]
        if len(incident) == 0:
            isolated.append(i)
            continue
        owners.append(np.full(len(incident), i, dtype=np.int64))
        tris.append(incident)

    masses = np.zeros(n)
    if tris:
        owners = np.concatenate(owners)
        tris = np.concatenate(tris)
        p = points[tris]
        cots, areas = _triangle_cotangents(p)
        masses = np.bincount(owners, weights=areas / 3.0, minlength=n)

        # owner sits at one corner; the two edges at the owner pick up half
        # the cotangent of the angle opposite each edge
        pos = np.argmax(tris == owners[:, None], axis=1)
        rows, cols, vals = [], [], []
        for other in (1, 2):
            j = tris[np.arange(len(tris)), (pos + other) % 3]
            opp = (pos + (3 - other)) % 3
            w = 0.5 * cots[np.arange(len(tris)), opp]
            rows.append(owners)
            cols.append(j)
            vals.append(w)
        W = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n)).tocsr()
    else:
        W = sp.csr_matrix((n, n))

    W = (W + W.T) * 0.5
    clamped = int(np.count_nonzero(W.data < 0))
    W.data = np.maximum(W.data, 0.0)    # clamp to keep the quadratic form PSD
    W.eliminate_zeros()
    W.sort_indices()
    degree = np.asarray(W.sum(axis=1)).reshape(-1)
    L = sp.diags(degree) - W
    L = L.tocsr()

    if isolated:
        L = L.tolil()
        for i in isolated:
            L[i, i] = 1.0
        L = L.tocsr()
    masses = np.maximum(masses, mass_floor)

    report = {"isolated": isolated, "jittered": jitter_count,
              "negative_weights_clamped": clamped}
    return LaplacianSystem(L=L, masses=masses, report=report)


def spectrum_check(L, masses, m):
    """Smallest m generalized eigenvalues of L v = lambda M v, ascending."""
    n = L.shape[0]
    Lsym = (L + L.T) * 0.5
    if n <= 1200:
        vals = scipy.linalg.eigh(Lsym.toarray(), np.diag(masses),
                                 eigvals_only=True)
        return np.sort(vals)[:m]
    vals = spla.eigsh(Lsym.tocsc(), k=m, M=sp.diags(masses).tocsc(),
                      sigma=-1e-8, which="LM", return_eigenvectors=False)
    return np.sort(vals)


@dataclass(frozen=True)
class SparseMatrixSym:
    """Canonical triplet form of a symmetric sparse matrix (upper triangle)."""

    dimension: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @classmethod
    def from_csr(cls, A, tol=0.0):
        A = A.tocoo()
        asym = abs(A - A.T)
        if asym.nnz and asym.max() > tol:
            raise GeometryError("matrix is not symmetric")
        keep = A.row <= A.col
        rows, cols, vals = A.row[keep], A.col[keep], A.data[keep]
        order = np.lexsort((cols, rows))
        return cls(dimension=A.shape[0], rows=rows[order].astype(np.int64),
                   cols=cols[order].astype(np.int64), values=vals[order])

    def to_csr(self):
        off = self.rows != self.cols
        rows = np.concatenate([self.rows, self.cols[off]])
        cols = np.concatenate([self.cols, self.rows[off]])
        vals = np.concatenate([self.values, self.values[off]])
        return sp.coo_matrix((vals, (rows, cols)),
                             shape=(self.dimension, self.dimension)).tocsr()


def save_matrix(path, mat):
    """Serialize a SparseMatrixSym as sorted text triplets (bit-stable)."""
    with open(path, "w") as f:
        f.write("# splatdeform symmat v1\n")
        f.write(f"dimension {mat.dimension}\n")
        f.write(f"entries {len(mat.values)}\n")
        for i, j, v in zip(mat.rows, mat.cols, mat.values):
            f.write(f"{i} {j} {float(v)!r}\n")


def load_matrix(path):
    with open(path) as f:
        magic = f.readline().strip()
        if magic != "# splatdeform symmat v1":
            raise ValueError("not a splatdeform matrix file")
        dimension = int(f.readline().split()[1])
        count = int(f.readline().split()[1])
        rows = np.empty(count, dtype=np.int64)
        cols = np.empty(count, dtype=np.int64)
        values = np.empty(count)
        for r in range(count):
            i, j, v = f.readline().split()
            rows[r], cols[r], values[r] = int(i), int(j), float(v)
    return SparseMatrixSym(dimension=dimension, rows=rows, cols=cols, values=values)
