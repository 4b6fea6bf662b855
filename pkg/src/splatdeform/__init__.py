"""Proxy-free deformation engine for surface-aligned Gaussian-splat scenes."""

from .adaptation import (adapt_kernels, displace_only, inscribed_triangle,
                         steiner_circumellipse, transfer_displacement)
from .arap import (ArapState, arap_displace, arap_energy, build_arap_state,
                   fit_rotation, fit_rotations, solve_arap)
from .bbw import WeightField, apply_lbs, biharmonic_quadratic, solve_bbw
from .config import PipelineConfig
from .errors import (GeometryError, NeighborhoodError, SolverError,
                     SplatDataError, SplatFormatError)
from .evaluation import (KeypointSet, PckReport, farthest_point_sampling,
                         pca_handle_direction, pck3d, sample_keypoints)
from .graph import (GeodesicNeighborhood, SplatGraph, all_geodesic_neighborhoods,
                    build_graph, geodesic_knn, load_graph, normal_offset,
                    save_graph)
from .handles import Handle, HandleSpec, ResolvedHandles, resolve_handles
from .laplacian import (LaplacianSystem, LocalTriangulation, SparseMatrixSym,
                        build_laplacian, load_matrix, local_triangulation,
                        save_matrix, spectrum_check)
from .model import (MIN_CONTRIBUTION, EllipseBatch, OccupancyEllipse, Splat,
                    SplatSet, in_region, occupancy_ellipse, occupancy_ellipses,
                    occupancy_lambda, scene_scale, transform_splats)
from .pipeline import DeformationResult, SplatDeformer
from .ply_io import load_splats, save_splats

__version__ = "0.1.0"

__all__ = [
    "MIN_CONTRIBUTION", "ArapState", "DeformationResult", "EllipseBatch",
    "GeodesicNeighborhood", "GeometryError", "Handle", "HandleSpec",
    "KeypointSet", "LaplacianSystem", "LocalTriangulation",
    "NeighborhoodError", "OccupancyEllipse", "PckReport", "PipelineConfig",
    "ResolvedHandles", "SolverError", "SparseMatrixSym", "Splat",
    "SplatDataError", "SplatDeformer", "SplatFormatError", "SplatGraph",
    "SplatSet", "WeightField", "adapt_kernels", "all_geodesic_neighborhoods",
    "apply_lbs", "arap_displace", "arap_energy", "biharmonic_quadratic",
    "build_arap_state", "build_graph", "build_laplacian", "displace_only",
    "farthest_point_sampling", "fit_rotation", "fit_rotations",
    "geodesic_knn", "in_region", "inscribed_triangle", "load_graph",
    "load_matrix", "load_splats", "local_triangulation", "normal_offset",
    "occupancy_ellipse", "occupancy_ellipses", "occupancy_lambda",
    "pca_handle_direction", "pck3d", "resolve_handles", "sample_keypoints",
    "save_graph", "save_matrix", "save_splats", "scene_scale",
    "solve_arap", "solve_bbw", "spectrum_check", "steiner_circumellipse",
    "transfer_displacement", "transform_splats",
]
