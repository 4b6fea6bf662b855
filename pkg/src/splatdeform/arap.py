"""As-rigid-as-possible deformation over splat means.

Local-global alternation: per-point rotations are fit to the deformed
edge sets by polar decomposition, then all free positions are updated by
one sparse SPD solve with constraints imposed by row elimination.  The
reduced system is factorized once and reused across iterations.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import SolverError
from .validation import check_points

DEFAULT_MAX_ITERS = 50
DEFAULT_TOL = 1e-6


class SolveCancelled(Exception):
    """Raised when a progress callback asks the solver to stop."""


def fit_rotation(S):
    """Rotation maximizing tr(R^T S): R = U diag(1, 1, det(UV^T)) V^T."""
    S = np.asarray(S, dtype=np.float64)
    if not np.all(np.isfinite(S)):
        raise ValueError("covariance must be finite")
    U, _, Vt = np.linalg.svd(S)
    d = np.sign(np.linalg.det(U @ Vt))
    R = U @ np.diag([1.0, 1.0, d if d != 0 else 1.0]) @ Vt
    return R


def fit_rotations(S):
    """Batched fit_rotation over (n, 3, 3) covariances."""
    U, _, Vt = np.linalg.svd(S)
    UVt = U @ Vt
    d = np.linalg.det(UVt)
    U = U.copy()
    U[:, :, 2] *= np.where(d < 0, -1.0, 1.0)[:, None]
    return U @ Vt


@dataclass
class ArapState:
    """Rest/current positions, edge weights and constraints of one solve."""

    rest: np.ndarray                  # (n, 3)
    current: np.ndarray               # (n, 3)
    rotations: np.ndarray             # (n, 3, 3)
    src: np.ndarray                   # directed edge list (both orientations)
    dst: np.ndarray
    edge_w: np.ndarray
    L: sp.csr_matrix
    handle_targets: dict              # node -> target position (moving handles)
    fixed_targets: dict               # node -> target position (pinned points)
    iterations: int = 0
    energy_trace: list = field(default_factory=list)
    rigid_components: list = field(default_factory=list)

    @property
    def constraints(self):
        merged = dict(self.fixed_targets)
        merged.update(self.handle_targets)
        return merged


def build_arap_state(L, rest, handle_targets, fixed_targets=None):
    """Initialize an ARAP solve from a stiffness matrix and constraints.

    Edge weights come from the (clamped, non-negative) off-diagonals of L.
    Constrained points start exactly at their targets.
    """
    rest = check_points(rest, "rest")
    fixed_targets = fixed_targets or {}
    A = L.tocoo()
    off = A.row != A.col
    src = A.row[off].astype(np.int64)
    dst = A.col[off].astype(np.int64)
    edge_w = -A.data[off]
    keep = edge_w > 0
    src, dst, edge_w = src[keep], dst[keep], edge_w[keep]

    current = rest.copy()
    for idx, target in {**fixed_targets, **handle_targets}.items():
        current[idx] = target
    n = len(rest)
    rotations = np.broadcast_to(np.eye(3), (n, 3, 3)).copy()
    return ArapState(rest=rest, current=current, rotations=rotations,
                     src=src, dst=dst, edge_w=edge_w, L=L.tocsr(),
                     handle_targets={int(k): np.asarray(v, dtype=np.float64)
                                     for k, v in handle_targets.items()},
                     fixed_targets={int(k): np.asarray(v, dtype=np.float64)
                                    for k, v in fixed_targets.items()})


def arap_energy(state):
    """Sum over directed edges of w_ij |(v'_i - v'_j) - R_i (v_i - v_j)|^2."""
    e_rest = state.rest[state.src] - state.rest[state.dst]
    e_cur = state.current[state.src] - state.current[state.dst]
    rotated = np.einsum("nij,nj->ni", state.rotations[state.src], e_rest)
    diff = e_cur - rotated
    return float(np.sum(state.edge_w * np.einsum("ni,ni->n", diff, diff)))


def _local_step(state):
    """Fit per-point rotations to the current positions."""
    e_rest = state.rest[state.src] - state.rest[state.dst]
    e_cur = state.current[state.src] - state.current[state.dst]
    n = len(state.rest)
    # S_i = sum_j w_ij e'_ij e_ij^T  (deformed x rest covariance); its polar
    # rotation factor maximizes the trace and minimizes the local energy
    S = np.zeros((n, 3, 3))
    w = state.edge_w
    for a in range(3):
        for b in range(3):
            S[:, a, b] = np.bincount(state.src, weights=w * e_cur[:, a] * e_rest[:, b],
                                     minlength=n)
    state.rotations = fit_rotations(S)


def _idw_translation(rest, component_nodes, handle_targets):
    """Inverse-distance-weighted mean handle displacement for a free component."""
    centroid = rest[component_nodes].mean(axis=0)
    num = np.zeros(3)
    den = 0.0
    for idx, target in handle_targets.items():
        disp = target - rest[idx]
        d = max(float(np.linalg.norm(centroid - rest[idx])), 1e-300)
        num += disp / d
        den += 1.0 / d
    return num / den if den > 0 else np.zeros(3)


def solve_arap(state, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL, callback=None):
    """Run the local-global alternation; returns the displaced positions.

    Terminates when the per-iteration energy decrease falls below
    tol * initial energy or after max_iters.  The reduced global system is
    factorized once.  ``callback(iteration, energy)`` may return True to
    cancel the solve (raises SolveCancelled).
    """
    if not state.constraints:
        raise SolverError("ARAP needs at least one constraint")
    n = len(state.rest)
    structure = sp.coo_matrix(
        (np.ones(len(state.src)), (state.src, state.dst)), shape=(n, n))
    n_comp, labels = connected_components(structure, directed=False)

    constrained = np.zeros(n, dtype=bool)
    for idx in state.constraints:
        constrained[idx] = True
    comp_has_constraint = np.zeros(n_comp, dtype=bool)
    for idx in state.constraints:
        comp_has_constraint[labels[idx]] = True

    # components with no constraint cannot be solved; translate them rigidly
    # by the IDW mean of the handle displacements and report
    state.rigid_components = []
    for comp in np.flatnonzero(~comp_has_constraint):
        nodes = np.flatnonzero(labels == comp)
        t = _idw_translation(state.rest, nodes, state.handle_targets) \
            if state.handle_targets else np.zeros(3)
        state.current[nodes] = state.rest[nodes] + t
        state.rigid_components.append({"nodes": nodes, "translation": t})

    in_system = comp_has_constraint[labels]
    free = in_system & ~constrained
    free_idx = np.flatnonzero(free)
    cons_idx = np.flatnonzero(constrained)
    targets = np.stack([state.constraints[int(i)] for i in cons_idx]) \
        if len(cons_idx) else np.zeros((0, 3))
    state.current[cons_idx] = targets

    solve = None
    if len(free_idx):
        L_ff = state.L[np.ix_(free_idx, free_idx)].tocsc()
        L_fc = state.L[np.ix_(free_idx, cons_idx)].tocsr()
        try:
            solve = spla.factorized(L_ff)
        except RuntimeError as exc:
            bad = np.unique(labels[free_idx]).tolist()
            raise SolverError(
                f"singular reduced ARAP system (components {bad})") from exc
        # warm start: move free points by the best rigid fit of the
        # constraint pairs; exact when the constraints are a rigid motion
        if len(cons_idx):
            rc = state.rest[cons_idx]
            rbar, tbar = rc.mean(axis=0), targets.mean(axis=0)
            Rw = fit_rotation((targets - tbar).T @ (rc - rbar))
            state.current[free_idx] = (state.rest[free_idx] - rbar) @ Rw.T + tbar

    e_rest = state.rest[state.src] - state.rest[state.dst]
    w = state.edge_w
    energy_prev = arap_energy(state)   # identity rotations
    state.energy_trace = [energy_prev]
    initial_energy = energy_prev
    # numerical zero for the monotonicity guard: per-edge deviations below
    # 1e-12 of the scene extent are indistinguishable from round-off
    extent = float(np.max(np.ptp(state.rest, axis=0))) if n else 1.0
    noise_floor = (1e-12 * max(extent, 1e-300)) ** 2 * float(np.sum(w))

    for it in range(max_iters):
        _local_step(state)
        if len(free_idx):
            # b_i = sum_j (w_ij / 2) (R_i + R_j) (v_i - v_j)
            Rsum = state.rotations[state.src] + state.rotations[state.dst]
            contrib = 0.5 * w[:, None] * np.einsum("nij,nj->ni", Rsum, e_rest)
            b = np.zeros((n, 3))
            for a in range(3):
                b[:, a] = np.bincount(state.src, weights=contrib[:, a], minlength=n)
            rhs = b[free_idx] - (L_fc @ targets if len(cons_idx) else 0.0)
            for a in range(3):
                state.current[free_idx, a] = solve(rhs[:, a])
        energy = arap_energy(state)
        state.iterations = it + 1
        state.energy_trace.append(energy)
        if energy > energy_prev * (1 + 1e-9) + 1e-12 * initial_energy + noise_floor:
            raise SolverError(
                f"ARAP energy increased at iteration {it}: "
                f"{energy_prev!r} -> {energy!r}")
        if callback is not None and callback(it, energy):
            raise SolveCancelled(f"cancelled at iteration {it}")
        if energy_prev - energy <= tol * initial_energy:
            break
        energy_prev = energy
    return state.current.copy()


def arap_displace(L, rest, handles, max_iters=DEFAULT_MAX_ITERS, tol=DEFAULT_TOL,
                  per_handle=False, callback=None):
    """Convenience driver from ResolvedHandles to displaced positions.

    Points farther than the fixed radius from every handle anchor are pinned
    to their rest positions.  ``per_handle=True`` runs each handle as its own
    solve with its own fixed set (the evaluation protocol) and returns a list
    of per-handle position arrays; otherwise one solve uses all handles.
    """
    rest = check_points(rest, "rest")

    def one_solve(anchor_ids, disps):
        anchors = rest[anchor_ids]
        d = np.linalg.norm(rest[:, None, :] - anchors[None, :, :], axis=2)
        fixed_mask = np.min(d, axis=1) > handles.fixed_radius
        fixed_mask[anchor_ids] = False
        handle_targets = {int(i): rest[i] + disp
                          for i, disp in zip(anchor_ids, disps)}
        fixed_targets = {int(i): rest[i] for i in np.flatnonzero(fixed_mask)}
        state = build_arap_state(L, rest, handle_targets, fixed_targets)
        positions = solve_arap(state, max_iters=max_iters, tol=tol,
                               callback=callback)
        return positions, state

    if per_handle:
        return [one_solve(handles.anchors[k:k + 1], handles.displacements[k:k + 1])
                for k in range(len(handles.anchors))]
    return one_solve(handles.anchors, handles.displacements)
