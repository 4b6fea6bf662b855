"""Command-line pipeline: build-graph, deform, adapt, eval, serve."""

import argparse
import hashlib
import json
import logging
import os
import sys
import time

import numpy as np

from .adaptation import adapt_kernels
from .config import PipelineConfig
from .evaluation import PckReport, pck3d, sample_keypoints
from .graph import build_graph, load_graph, save_graph
from .handles import HandleSpec
from .pipeline import SplatDeformer
from .ply_io import load_splats, save_splats

log = logging.getLogger("splatdeform")


def _file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _cache_paths(config):
    key = hashlib.sha256(json.dumps(
        {"input": os.path.abspath(config.input), **config.graph_params()},
        sort_keys=True).encode()).hexdigest()[:16]
    base = os.path.join(config.resolved_cache_dir(), f"graph-{key}")
    return base + ".txt", base + ".meta.json"


def load_cached_graph(config):
    """Return the cached graph when input and parameters still match."""
    graph_path, meta_path = _cache_paths(config)
    if not (os.path.exists(graph_path) and os.path.exists(meta_path)):
        return None
    try:
        with open(meta_path) as f:
            meta = json.load(f)
    except (OSError, json.JSONDecodeError):
        log.warning("graph cache metadata unreadable; rebuilding")
        return None
    if meta.get("params") != config.graph_params():
        return None
    mtime = os.path.getmtime(config.input)
    if meta.get("mtime") != mtime:
        if meta.get("sha256") != _file_sha256(config.input):
            return None
        meta["mtime"] = mtime
        with open(meta_path, "w") as f:
            json.dump(meta, f, sort_keys=True)
    try:
        return load_graph(graph_path)
    except (OSError, ValueError):
        log.warning("graph cache corrupted; rebuilding")
        return None


def store_graph_cache(config, graph):
    graph_path, meta_path = _cache_paths(config)
    os.makedirs(os.path.dirname(graph_path), exist_ok=True)
    save_graph(graph_path, graph)
    meta = {"input": os.path.abspath(config.input),
            "mtime": os.path.getmtime(config.input),
            "sha256": _file_sha256(config.input),
            "params": config.graph_params()}
    with open(meta_path, "w") as f:
        json.dump(meta, f, sort_keys=True)
    return graph_path


def _load_scene(config):
    return load_splats(config.input, logit=config.logit)


def _graph_for(config, splats, use_cache=True):
    graph = load_cached_graph(config) if use_cache else None
    if graph is not None and graph.node_count == len(splats):
        log.info("graph cache hit")
        return graph, True
    t0 = time.perf_counter()
    graph = build_graph(
        splats, epsilon=config.epsilon_factor * splats.scene_scale,
        n_samples=config.boundary_samples, n_rings=config.interior_rings,
        ring_samples=config.ring_samples)
    log.info("graph built in %.2f s", time.perf_counter() - t0)
    if use_cache:
        store_graph_cache(config, graph)
    return graph, False


def _deformer(config):
    return SplatDeformer(
        method=config.method, epsilon_factor=config.epsilon_factor,
        k_laplacian=config.k_laplacian, k_bind=config.k_bind,
        boundary_samples=config.boundary_samples,
        interior_rings=config.interior_rings, ring_samples=config.ring_samples,
        max_iters=config.max_iters, tol=config.tol, adapt=config.adapt)


def cmd_build_graph(config):
    """Build (or reuse) the intersection graph; returns the stats dict."""
    splats = _load_scene(config)
    graph, cached = _graph_for(config, splats)
    labels = graph.component_labels()
    stats = {"nodes": graph.node_count, "edges": graph.edge_count,
             "components": int(labels.max()) + 1 if graph.node_count else 0,
             "epsilon": graph.epsilon, "cache_hit": cached}
    print(json.dumps(stats, sort_keys=True))
    return stats


def _write_report(path, report):
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)


def cmd_deform(config, handles_path):
    """Full pipeline: graph, Laplacian, solve, adaptation; writes outputs."""
    splats = _load_scene(config)
    with open(handles_path) as f:
        spec = HandleSpec.from_json(f.read())
    graph, _ = _graph_for(config, splats)
    deformer = _deformer(config)
    t0 = time.perf_counter()
    deformer.fit(splats, graph=graph)
    log.info("preprocessing done in %.2f s", time.perf_counter() - t0)
    t0 = time.perf_counter()
    deformer.transform(spec)
    log.info("deformation done in %.2f s", time.perf_counter() - t0)
    result = deformer.result_

    output = config.output or "deformed.ply"
    save_splats(output, result.splats)
    report = {"method": result.method, "handles": len(result.handles.anchors),
              "solver": result.solver_report,
              "adaptation": result.adaptation_report}
    report_path = config.report or (os.path.splitext(output)[0] + ".report.json")
    _write_report(report_path, report)
    print(json.dumps({"output": output, "report": report_path}, sort_keys=True))
    return result


def cmd_adapt(config, displacements_path):
    """Apply kernel adaptation to a precomputed displacement field."""
    splats = _load_scene(config)
    displacements = np.load(displacements_path)
    graph, _ = _graph_for(config, splats)
    adapted, report = adapt_kernels(splats, graph, displacements,
                                    k_bind=config.k_bind,
                                    pool_k=config.k_laplacian)
    output = config.output or "adapted.ply"
    save_splats(output, adapted)
    report_path = config.report or (os.path.splitext(output)[0] + ".report.json")
    _write_report(report_path, report.to_dict())
    print(json.dumps({"output": output, "report": report_path}, sort_keys=True))
    return adapted


def cmd_eval(config, handles_path, reference_path, reference_deformed_path,
             output_path=None):
    """Per-handle evaluation protocol against a reference deformation.

    The reference cloud (k, 3) and its deformed positions (h, k, 3) stand in
    for ground truth; keypoints are FPS-sampled around each handle within the
    cage radius, paired on the rest pose, and scored at the configured
    thresholds (multiples of s).
    """
    splats = _load_scene(config)
    with open(handles_path) as f:
        spec = HandleSpec.from_json(f.read())
    reference = np.load(reference_path)
    reference_deformed = np.load(reference_deformed_path)
    if reference_deformed.ndim == 2:
        reference_deformed = reference_deformed[None]
    if len(reference_deformed) != len(spec.handles):
        raise ValueError("need one deformed reference per handle")

    graph, _ = _graph_for(config, splats)
    deformer = _deformer(config)
    deformer.fit(splats, graph=graph)
    s = splats.scene_scale
    report = PckReport(thresholds=list(config.thresholds))
    for h, handle in enumerate(spec.handles):
        sub = HandleSpec(handles=[handle], method=spec.method,
                         fixed_radius=spec.fixed_radius,
                         cage_radius=spec.cage_radius)
        deformed = deformer.transform(sub)
        anchor = deformer.result_.handles.anchors[0]
        keypoints = sample_keypoints(
            reference, splats.means, splats.means[anchor],
            region_radius=spec.cage_radius * s)
        gt = reference_deformed[h][keypoints.reference_indices]
        scores = {t: pck3d(gt, deformed.means, keypoints.paired, t * s)
                  for t in config.thresholds}
        report.add(f"handle{h}", scores,
                   unpaired=int(np.count_nonzero(keypoints.paired < 0)))
    print(report.table())
    if output_path:
        with open(output_path, "w") as f:
            f.write(report.to_json())
    return report


def cmd_serve(config, port, host="127.0.0.1", frontend_dir=None):
    import uvicorn

    from .service import create_app

    splats = _load_scene(config)
    if frontend_dir is None:
        candidate = os.path.join(os.path.dirname(config.input) or ".",
                                 "frontend")
        for probe in (candidate, "frontend"):
            if os.path.isfile(os.path.join(probe, "index.html")):
                frontend_dir = probe
                break
    app = create_app(splats, config=config, frontend_dir=frontend_dir)
    if frontend_dir:
        log.info("serving editor UI from %s at /ui", frontend_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="splatdeform",
        description="Proxy-free deformation engine for Gaussian-splat scenes")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, need_input=True):
        p.add_argument("--verbose", "-v", action="store_true",
                       default=argparse.SUPPRESS)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--input", required=False, help="scene PLY")
        p.add_argument("--epsilon-factor", type=float, dest="epsilon_factor")
        p.add_argument("--k-laplacian", type=int, dest="k_laplacian")
        p.add_argument("--k-bind", type=int, dest="k_bind")
        p.add_argument("--method", choices=["arap", "bbw"])
        p.add_argument("--max-iters", type=int, dest="max_iters")
        p.add_argument("--tol", type=float)
        p.add_argument("--no-adapt", action="store_true")
        p.add_argument("--logit", action="store_true", default=None,
                       help="opacity/spike stored pre-sigmoid")
        p.add_argument("--cache-dir", dest="cache_dir")
        p.add_argument("--output")
        p.add_argument("--report")

    p = sub.add_parser("build-graph", help="build and cache the splat graph")
    common(p)
    p = sub.add_parser("deform", help="run the deformation pipeline")
    common(p)
    p.add_argument("--handles", required=True, help="handle spec JSON")
    p = sub.add_parser("adapt", help="adapt kernels to a displacement field")
    common(p)
    p.add_argument("--displacements", required=True, help=".npy (n, 3) array")
    p = sub.add_parser("eval", help="3D-PCK evaluation against a reference")
    common(p)
    p.add_argument("--handles", required=True)
    p.add_argument("--reference", required=True, help=".npy rest reference cloud")
    p.add_argument("--reference-deformed", required=True,
                   help=".npy deformed reference (h, k, 3)")
    p.add_argument("--scores")
    p = sub.add_parser("serve", help="run the local HTTP service")
    common(p)
    p.add_argument("--port", type=int, default=8077)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--frontend", help="directory with the editor UI to mount at /ui")
    return parser


def _config_from_args(args):
    overrides = {
        "input": args.input,
        "epsilon_factor": args.epsilon_factor,
        "k_laplacian": args.k_laplacian,
        "k_bind": args.k_bind,
        "method": args.method,
        "max_iters": args.max_iters,
        "tol": args.tol,
        "cache_dir": args.cache_dir,
        "output": args.output,
        "report": args.report,
        "logit": args.logit,
    }
    if args.no_adapt:
        overrides["adapt"] = False
    config = PipelineConfig.load(args.config, overrides)
    if not config.input:
        raise SystemExit("an input scene is required (--input or config)")
    return config


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    config = _config_from_args(args)
    if args.command == "build-graph":
        cmd_build_graph(config)
    elif args.command == "deform":
        cmd_deform(config, args.handles)
    elif args.command == "adapt":
        cmd_adapt(config, args.displacements)
    elif args.command == "eval":
        cmd_eval(config, args.handles, args.reference, args.reference_deformed,
                 output_path=args.scores)
    elif args.command == "serve":
        cmd_serve(config, args.port, args.host, frontend_dir=args.frontend)
    return 0


if __name__ == "__main__":
    sys.exit(main())
