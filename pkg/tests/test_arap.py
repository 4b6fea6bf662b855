import numpy as np
import pytest

from splatdeform.arap import (SolveCancelled, arap_displace, arap_energy,
                              build_arap_state, fit_rotation, fit_rotations,
                              solve_arap)
from splatdeform.errors import SolverError
from splatdeform.graph import GeodesicNeighborhood
from splatdeform.handles import ResolvedHandles
from splatdeform.laplacian import build_laplacian, local_triangulation

from helpers import rotation_about
from oracles import best_rotation_by_search, dense_arap


def knn_hood(pts, i, k):
    d = np.linalg.norm(pts - pts[i], axis=1)
    order = np.argsort(d, kind="stable")[1:k + 1]
    return GeodesicNeighborhood(source=i, indices=order, distances=d[order],
                                shortfall=False)


def grid(nx, ny):
    xs, ys = np.meshgrid(np.arange(nx, dtype=float), np.arange(ny, dtype=float))
    return np.stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)], axis=1)


def laplacian_of(pts, k=8):
    tris = [local_triangulation(pts, i, knn_hood(pts, i, k),
                                scale=float(len(pts))) for i in range(len(pts))]
    return build_laplacian(pts, tris, scale=float(len(pts)))


@pytest.fixture(scope="module")
def bar():
    pts = grid(15, 3)
    return pts, laplacian_of(pts)


class TestFitRotation:
    def test_identity(self):
        np.testing.assert_allclose(fit_rotation(np.eye(3)), np.eye(3), atol=1e-14)

    def test_rotation_recovered(self, rng):
        for _ in range(20):
            Q = rotation_about(rng.normal(size=3), rng.uniform(0, np.pi))
            np.testing.assert_allclose(fit_rotation(Q), Q, atol=1e-12)

    def test_negative_det_input(self, rng):
        """The fit beats a large random-rotation search on tr(R^T S)."""
        for seed in range(5):
            S = np.random.default_rng(seed).normal(size=(3, 3))
            S *= -np.sign(np.linalg.det(S))
            R = fit_rotation(S)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-9)
            ours = float(np.sum(R * S))
            assert ours >= best_rotation_by_search(S, 100_000, seed) - 1e-9

    def test_batched_matches_scalar(self, rng):
        S = rng.normal(size=(40, 3, 3))
        batch = fit_rotations(S)
        for i in range(40):
            np.testing.assert_allclose(batch[i], fit_rotation(S[i]), atol=1e-10)

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            fit_rotation(np.full((3, 3), np.nan))


class TestSolveArap:
    def test_all_constrained(self, bar, rng):
        pts, sys_ = bar
        targets = pts + rng.normal(size=pts.shape) * 0.1
        state = build_arap_state(sys_.L, pts,
                                 {i: targets[i] for i in range(len(pts))})
        out = solve_arap(state)
        np.testing.assert_array_equal(out, targets)
        assert arap_energy(state) == state.energy_trace[-1]

    def test_rigid_constraints_recover_rigid_image(self, bar):
        pts, sys_ = bar
        s = float(np.max(np.ptp(pts, axis=0)))
        Q = rotation_about([0, 0, 1.0], np.pi / 5)
        img = pts @ Q.T + np.array([0.4, -0.1, 0.7])
        anchor = 14 * 1 + 14
        d = np.linalg.norm(pts - pts[anchor], axis=1)
        fixed = {int(i): img[i] for i in np.flatnonzero(d > 0.5 * s)}
        state = build_arap_state(sys_.L, pts, {anchor: img[anchor]}, fixed)
        out = solve_arap(state)
        assert state.energy_trace[-1] <= 1e-8 * s * s
        assert np.abs(out - img).max() <= 1e-4 * s

    def test_bar_bend_matches_dense_oracle(self, bar):
        pts, sys_ = bar
        s = float(np.max(np.ptp(pts, axis=0)))
        anchor = int(np.flatnonzero((pts[:, 0] == 14) & (pts[:, 1] == 1))[0])
        handles = {anchor: pts[anchor] + np.array([0.0, 0.2 * s, 0.0])}
        fixed = {int(i): pts[i] for i in np.flatnonzero(pts[:, 0] == 0)}
        state = build_arap_state(sys_.L, pts, handles, fixed)
        out = solve_arap(state, max_iters=50, tol=1e-6)

        W = -sys_.L.toarray()
        np.fill_diagonal(W, 0.0)
        ref, ref_trace = dense_arap(pts, W, handles, fixed, max_iters=50,
                                    tol=1e-6)
        assert state.energy_trace[-1] == pytest.approx(ref_trace[-1], rel=1e-6)
        assert np.abs(out - ref).max() <= 1e-8 * s

    def test_energy_trace_non_increasing(self, bar):
        pts, sys_ = bar
        anchor = 30
        handles = {anchor: pts[anchor] + np.array([1.0, 2.0, 0.5])}
        fixed = {int(i): pts[i] for i in np.flatnonzero(pts[:, 0] == 0)}
        state = build_arap_state(sys_.L, pts, handles, fixed)
        solve_arap(state, max_iters=40, tol=0.0)
        trace = state.energy_trace
        assert len(trace) == 41
        for a, b in zip(trace, trace[1:]):
            assert b <= a * (1 + 1e-12) + 1e-12 * trace[0]

    def test_translation_equivariance(self, bar):
        pts, sys_ = bar
        s = float(np.max(np.ptp(pts, axis=0)))
        anchor = 22
        fixed_idx = np.flatnonzero(pts[:, 0] == 0)
        disp = np.array([0.0, 2.0, 0.0])
        t = np.array([5.0, -3.0, 2.0])
        state1 = build_arap_state(sys_.L, pts, {anchor: pts[anchor] + disp},
                                  {int(i): pts[i] for i in fixed_idx})
        out1 = solve_arap(state1)
        state2 = build_arap_state(sys_.L, pts, {anchor: pts[anchor] + disp + t},
                                  {int(i): pts[i] + t for i in fixed_idx})
        out2 = solve_arap(state2)
        assert np.abs(out2 - (out1 + t)).max() <= 1e-9 * s

    def test_determinism(self, bar):
        pts, sys_ = bar
        anchor = 17
        handles = {anchor: pts[anchor] + np.array([0.3, 1.0, -0.2])}
        fixed = {int(i): pts[i] for i in np.flatnonzero(pts[:, 0] == 0)}
        outs = []
        for _ in range(2):
            state = build_arap_state(sys_.L, pts, handles, fixed)
            outs.append(solve_arap(state, max_iters=20, tol=0.0))
        assert np.array_equal(outs[0], outs[1])

    def test_no_constraints_rejected(self, bar):
        pts, sys_ = bar
        state = build_arap_state(sys_.L, pts, {})
        with pytest.raises(SolverError):
            solve_arap(state)

    def test_unconstrained_component_translated(self, bar):
        """Disconnected debris rides along with the IDW handle translation."""
        pts, _ = bar
        n_bar = len(pts)
        far = np.array([[100.0, 0, 0], [101.0, 0, 0], [100.5, 1.0, 0],
                        [100.5, 0.5, 1.0]])
        allpts = np.vstack([pts, far])
        # neighborhoods stay within each cluster so the graph is disconnected
        tris = []
        for i in range(n_bar):
            d = np.linalg.norm(pts - pts[i], axis=1)
            order = np.argsort(d, kind="stable")[1:9]
            tris.append(local_triangulation(
                allpts, i, GeodesicNeighborhood(i, order, d[order], False),
                scale=100.0))
        for i in range(4):
            gi = n_bar + i
            others = np.array([n_bar + j for j in range(4) if j != i])
            d = np.linalg.norm(allpts[others] - allpts[gi], axis=1)
            tris.append(local_triangulation(
                allpts, gi, GeodesicNeighborhood(gi, others, d, False),
                scale=100.0))
        sys_ = build_laplacian(allpts, tris, scale=100.0)
        anchor = 22
        disp = np.array([0.0, 1.5, 0.0])
        fixed = {int(i): allpts[i] for i in np.flatnonzero(allpts[:, 0] == 0)}
        state = build_arap_state(sys_.L, allpts,
                                 {anchor: allpts[anchor] + disp}, fixed)
        out = solve_arap(state)
        assert len(state.rigid_components) == 1
        moved = out[n_bar:] - allpts[n_bar:]
        for k in range(1, 4):
            np.testing.assert_allclose(moved[k], moved[0], atol=1e-12)
        np.testing.assert_allclose(moved[0], disp, atol=1e-9)

    def test_callback_cancellation(self, bar):
        pts, sys_ = bar
        anchor = 22
        handles = {anchor: pts[anchor] + np.array([0.0, 3.0, 0.0])}
        fixed = {int(i): pts[i] for i in np.flatnonzero(pts[:, 0] == 0)}
        state = build_arap_state(sys_.L, pts, handles, fixed)
        with pytest.raises(SolveCancelled):
            solve_arap(state, max_iters=50, tol=0.0,
                       callback=lambda it, e: it >= 3)


class TestArapDisplace:
    def test_per_handle_mode(self, bar):
        pts, sys_ = bar
        s = float(np.max(np.ptp(pts, axis=0)))
        handles = ResolvedHandles(
            anchors=np.array([14, 30]),
            displacements=np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]),
            method="arap", fixed_radius=0.5 * s, cage_radius=0.3 * s,
            scene_scale=s)
        results = arap_displace(sys_.L, pts, handles, per_handle=True)
        assert len(results) == 2
        for positions, state in results:
            assert positions.shape == pts.shape
            assert len(state.handle_targets) == 1

    def test_joint_mode(self, bar):
        pts, sys_ = bar
        s = float(np.max(np.ptp(pts, axis=0)))
        handles = ResolvedHandles(
            anchors=np.array([14, 30]),
            displacements=np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]]),
            method="arap", fixed_radius=0.5 * s, cage_radius=0.3 * s,
            scene_scale=s)
        positions, state = arap_displace(sys_.L, pts, handles)
        assert len(state.handle_targets) == 2
        np.testing.assert_allclose(positions[14], pts[14] + [0, 1, 0],
                                   atol=1e-12)
