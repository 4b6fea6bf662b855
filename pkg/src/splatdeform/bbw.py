"""Bounded biharmonic weights and linear-blend application.

Per handle, weights minimize w^T (L^T M^-1 L) w over the points inside a
local cage around the anchor, subject to box bounds [0, 1] and pins: 1 at
the anchor, 0 at other anchors and everywhere outside the cage.  The QP is
solved by an active-set sweep on the box; no external QP solver is used.
Deficits 1 - sum_i w_i act as weight on the identity transform, so blending
is well defined at points no cage covers.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .validation import check_points

MAX_ACTIVE_SET_SWEEPS = 100


def biharmonic_quadratic(L, masses):
    """Q = L^T M^-1 L with the lumped (diagonal) mass inverse."""
    Minv = sp.diags(1.0 / np.asarray(masses, dtype=np.float64))
    return (L.T @ Minv @ L).tocsr()


@dataclass
class WeightField:
    """Per-point, per-handle blending weights plus cage bookkeeping."""

    weights: np.ndarray      # (n, h) in [0, 1]
    cage_masks: np.ndarray   # (n, h) bool, True inside the handle's cage
    anchors: np.ndarray      # (h,)
    converged: np.ndarray    # (h,) bool, active set stabilized

    @property
    def rest_weights(self):
        """Implicit identity-transform weight 1 - sum over handles."""
        return np.clip(1.0 - self.weights.sum(axis=1), 0.0, 1.0)


def _solve_submatrix(A, rhs):
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        return spla.spsolve(A.tocsc(), rhs)
    except RuntimeError as exc:
        raise SolverError("singular KKT system") from exc


def _box_qp_active_set(A, b, max_sweeps=MAX_ACTIVE_SET_SWEEPS):
    """Minimize 0.5 x^T A x + b^T x over the box [0, 1]^n.

    Active-set sweep: solve the equality-constrained system on the inactive
    set, clamp violators to their bounds, release actives whose multipliers
    have the wrong sign, repeat until stable.  Returns (x, converged); when
    the sweep cap is hit, the best feasible iterate seen is returned.
    """
    n = len(b)
    if n == 0:
        return np.zeros(0), True
    A = sp.csr_matrix(A)
    gscale = max(float(np.max(np.abs(A.diagonal()))), 1e-300)
    gtol = 1e-12 * gscale
    FREE, AT0, AT1 = 0, 1, 2
    status = np.full(n, FREE, dtype=np.int8)
    regularized = False

    def objective(x):
        return 0.5 * float(x @ (A @ x)) + float(b @ x)

    best_x = np.zeros(n)
    best_obj = objective(best_x)
    converged = False
    x = np.zeros(n)
    for _ in range(max_sweeps):
        free = status == FREE
        at1 = status == AT1
        idx_f = np.flatnonzero(free)
        x = np.where(at1, 1.0, 0.0)
        if len(idx_f):
            A_ff = A[np.ix_(idx_f, idx_f)]
            rhs = -(b[idx_f] + (A[np.ix_(idx_f, np.flatnonzero(at1))]
                                @ np.ones(int(at1.sum())) if at1.any() else 0.0))
            try:
                x[idx_f] = _solve_submatrix(A_ff, rhs)
            except SolverError:
                if regularized:
                    raise
                # one-shot diagonal regularization, then retry the sweep
                A = (A + 1e-10 * sp.diags(A.diagonal())).tocsr()
                regularized = True
                continue
        if not np.all(np.isfinite(x)):
            if regularized:
                raise SolverError("KKT solve produced non-finite weights")
            A = (A + 1e-10 * sp.diags(A.diagonal())).tocsr()
            regularized = True
            continue

        feasible = np.clip(x, 0.0, 1.0)
        obj = objective(feasible)
        if obj < best_obj:
            best_obj, best_x = obj, feasible.copy()

        viol0 = free & (x < 0.0)
        viol1 = free & (x > 1.0)
        if viol0.any() or viol1.any():
            status[viol0] = AT0
            status[viol1] = AT1
            continue
        g = A @ x + b
        rel0 = (status == AT0) & (g < -gtol)
        rel1 = (status == AT1) & (g > gtol)
        if not (rel0.any() or rel1.any()):
            converged = True
            best_x = feasible
            break
        status[rel0 | rel1] = FREE
    return best_x, converged


def solve_bbw(L, masses, points, anchors, cage_radius):
    """Bounded biharmonic weight field for a set of handle anchors."""
    points = check_points(points, "points")
    anchors = np.asarray(anchors, dtype=np.int64)
    n = len(points)
    Q = biharmonic_quadratic(L, masses)
    weights = np.zeros((n, len(anchors)))
    cage_masks = np.zeros((n, len(anchors)), dtype=bool)
    converged = np.zeros(len(anchors), dtype=bool)

    for h, anchor in enumerate(anchors):
        d = np.linalg.norm(points - points[anchor], axis=1)
        cage = d <= cage_radius
        cage_masks[:, h] = cage
        pinned_zero = np.zeros(n, dtype=bool)
        pinned_zero[anchors] = True
        pinned_zero[anchor] = False
        free = cage & ~pinned_zero
        free[anchor] = False
        idx_f = np.flatnonzero(free)

        w = np.zeros(n)
        w[anchor] = 1.0
        if len(idx_f):
            anchor_col = np.asarray(Q[:, [int(anchor)]].todense()).reshape(-1)
            x, ok = _box_qp_active_set(Q[np.ix_(idx_f, idx_f)], anchor_col[idx_f])
            w[idx_f] = x
            converged[h] = ok
        else:
            converged[h] = True
        weights[:, h] = w

    # partition of unity over handles: scale down rows that oversubscribe;
    # any remaining deficit is implicit weight on the identity transform
    totals = weights.sum(axis=1)
    over = totals > 1.0
    if np.any(over):
        weights[over] /= totals[over, None]
    return WeightField(weights=weights, cage_masks=cage_masks,
                       anchors=anchors, converged=converged)


def bbw_objective(L, masses, w):
    """Biharmonic energy w^T (L^T M^-1 L) w of one weight column."""
    Lw = L @ w
    return float(Lw @ (Lw / np.asarray(masses, dtype=np.float64)))


def apply_lbs(points, weight_field, handle_transforms):
    """Linear-blend skinning: p' = sum_h w_h T_h(p) + (1 - sum_h w_h) p.

    Evaluated as p + sum_h w_h (T_h(p) - p), which is the same blend but
    returns p bitwise-exactly under identity transforms.
    ``handle_transforms`` is a list of (3, 4) affine matrices [A | t].
    """
    points = check_points(points, "points")
    out = points.copy()
    for h, T in enumerate(handle_transforms):
        T = np.asarray(T, dtype=np.float64)
        if T.shape != (3, 4):
            raise ValueError(f"transform {h} must be 3x4, got {T.shape}")
        moved = points @ T[:, :3].T + T[:, 3]
        out += weight_field.weights[:, h:h + 1] * (moved - points)
    return out


def translation_transforms(displacements):
    """Pure-translation 3x4 transforms from per-handle displacement vectors."""
    displacements = np.asarray(displacements, dtype=np.float64)
    return [np.hstack([np.eye(3), d.reshape(3, 1)]) for d in displacements]
