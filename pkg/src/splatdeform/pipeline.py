"""High-level deformation pipeline with a fit/transform estimator surface.

``SplatDeformer.fit`` runs the expensive scene preprocessing (intersection
graph, geodesic neighborhoods, Laplacian assembly); ``transform`` takes a
handle specification and returns the deformed, kernel-adapted scene.
Parameters follow sklearn conventions (constructor args untouched, fitted
state in trailing-underscore attributes, get_params/set_params inherited).
"""

import logging
import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .adaptation import adapt_kernels, displace_only
from .arap import arap_displace
from .bbw import apply_lbs, solve_bbw, translation_transforms
from .errors import GeometryError, NeighborhoodError
from .graph import all_geodesic_neighborhoods, build_graph
from .handles import HandleSpec, ResolvedHandles, resolve_handles
from .laplacian import build_laplacian, local_triangulation

log = logging.getLogger("splatdeform")


@dataclass
class DeformationResult:
    """Everything one deformation produced, next to the spec that drove it."""

    splats: object                 # deformed SplatSet
    displacements: np.ndarray      # (n, 3) applied to the means
    handles: ResolvedHandles
    method: str
    adaptation_report: dict = None
    solver_report: dict = None
    timings: dict = None           # informational; never serialized to outputs


class SplatDeformer(BaseEstimator):
    """Scene-level deformation engine in estimator form.

    Parameters mirror the pipeline configuration: graph tolerance as a
    fraction of scene scale, neighborhood sizes, solver options and whether
    kernel adaptation runs after the solve.
    """

    def __init__(self, method="arap", epsilon_factor=0.005, k_laplacian=30,
                 k_bind=3, boundary_samples=64, interior_rings=3,
                 ring_samples=32, max_iters=50, tol=1e-6, adapt=True,
                 graph_method="hash"):
        self.method = method
        self.epsilon_factor = epsilon_factor
        self.k_laplacian = k_laplacian
        self.k_bind = k_bind
        self.boundary_samples = boundary_samples
        self.interior_rings = interior_rings
        self.ring_samples = ring_samples
        self.max_iters = max_iters
        self.tol = tol
        self.adapt = adapt
        self.graph_method = graph_method

    def fit(self, splats, graph=None):
        """Preprocess a scene: graph, geodesic neighborhoods, Laplacian."""
        if len(splats) == 0:
            raise ValueError("cannot fit an empty SplatSet")
        timings = {}
        t0 = time.perf_counter()
        self.splats_ = splats
        self.scale_ = splats.scene_scale
        if graph is None:
            graph = build_graph(
                splats, epsilon=self.epsilon_factor * self.scale_,
                n_samples=self.boundary_samples, n_rings=self.interior_rings,
                ring_samples=self.ring_samples, method=self.graph_method)
        self.graph_ = graph
        timings["graph"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        self.neighborhoods_ = all_geodesic_neighborhoods(graph, self.k_laplacian)
        timings["neighborhoods"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        triangulations = []
        for i in range(len(splats)):
            try:
                triangulations.append(local_triangulation(
                    splats.means, i, self.neighborhoods_[i], scale=self.scale_))
            except (NeighborhoodError, GeometryError):
                triangulations.append(None)
        self.laplacian_ = build_laplacian(splats.means, triangulations,
                                          scale=self.scale_)
        timings["laplacian"] = time.perf_counter() - t0
        self.fit_timings_ = timings
        for stage, dt in timings.items():
            log.info("fit stage %-13s %8.2f s", stage, dt)
        return self

    def _check_fitted(self):
        if not hasattr(self, "laplacian_"):
            raise RuntimeError("this SplatDeformer is not fitted yet")

    def transform(self, handle_spec, callback=None):
        """Deform the fitted scene; returns the new SplatSet.

        ``handle_spec`` is a HandleSpec, a dict, or a JSON string in the
        handle wire format.  The full DeformationResult (displacements,
        reports, timings) lands on ``self.result_``.
        """
        self._check_fitted()
        if not isinstance(handle_spec, HandleSpec):
            handle_spec = HandleSpec.from_json(handle_spec)
        resolved = resolve_handles(handle_spec, self.splats_, self.graph_,
                                   k_pca=self.k_laplacian)
        timings = {}
        t0 = time.perf_counter()
        rest = self.splats_.means
        L = self.laplacian_.L
        solver_report = {}
        if resolved.method == "arap":
            positions, state = arap_displace(
                L, rest, resolved, max_iters=self.max_iters, tol=self.tol,
                callback=callback)
            solver_report = {
                "iterations": state.iterations,
                "energy_initial": state.energy_trace[0],
                "energy_final": state.energy_trace[-1],
                "rigid_components": len(state.rigid_components),
            }
        else:
            field = solve_bbw(L, self.laplacian_.masses, rest,
                              resolved.anchors, resolved.cage_radius)
            transforms = resolved.transforms if resolved.transforms is not None \
                else translation_transforms(resolved.displacements)
            positions = apply_lbs(rest, field, transforms)
            row_sums = field.weights.sum(axis=1) + field.rest_weights
            solver_report = {
                "converged": bool(np.all(field.converged)),
                "row_sum_max_dev": float(np.max(np.abs(row_sums - 1.0))),
            }
            self.weight_field_ = field
        timings["solve"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        displacements = positions - rest
        if self.adapt:
            adapted, report = adapt_kernels(
                self.splats_, self.graph_, displacements, k_bind=self.k_bind,
                pool_k=self.k_laplacian, neighborhoods=self.neighborhoods_)
            adaptation_report = report.to_dict()
        else:
            adapted = displace_only(self.splats_, displacements)
            adaptation_report = None
        timings["adapt"] = time.perf_counter() - t0
        for stage, dt in timings.items():
            log.info("transform stage %-8s %8.2f s", stage, dt)

        self.result_ = DeformationResult(
            splats=adapted, displacements=displacements, handles=resolved,
            method=resolved.method, adaptation_report=adaptation_report,
            solver_report=solver_report, timings=timings)
        return adapted

    def fit_transform(self, splats, handle_spec, **kwargs):
        return self.fit(splats).transform(handle_spec, **kwargs)
