"""Forward-pass timing versus mesh size, and kernel backend comparison.

The spec-level claim under test is linear growth of inference time in
the number of faces; :func:`linear_fit_r2` quantifies it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import backend
from .network import NetConfig, build_graph_operators, constant_params, forward, init_params
from .shapes import sphere_with_vertex_count


@dataclass(frozen=True)
class BenchRow:
    n_vertices: int
    n_faces: int
    seconds: float
    backend: str


def linear_fit_r2(x, y) -> float:
    """Coefficient of determination of the least-squares line y ~ a*x + b."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.size < 2:
        raise ValueError("need at least two points for a fit")
    a, b = np.polyfit(x, y, 1)
    residual = y - (a * x + b)
    total = y - y.mean()
    ss_tot = float((total ** 2).sum())
    if ss_tot == 0.0:
        return 1.0
    return 1.0 - float((residual ** 2).sum()) / ss_tot


def time_forward(mesh, params, config: NetConfig, repeats: int = 3) -> float:
    """Best-of-``repeats`` wall time of one forward pass (operators prebuilt)."""
    ops = build_graph_operators(mesh)
    tensors = constant_params(params)
    x = ad.Tensor(mesh.positions)
    forward(x, ops, tensors, config)  # warm-up
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        forward(x, ops, tensors, config)
        best = min(best, time.perf_counter() - start)
    return best


def run_forward_bench(min_verts: int, max_verts: int, steps: int,
                      config: NetConfig | None = None, seed: int = 0,
                      repeats: int = 3,
                      backend_name: str = "auto") -> tuple[list[BenchRow], float]:
    """Time the forward pass on spheres of log-spaced sizes.

    Returns the rows and the R^2 of the time-vs-faces linear fit.
    """
    if min_verts < 8 or max_verts <= min_verts or steps < 2:
        raise ValueError("need 8 <= min_verts < max_verts and steps >= 2")
    config = config or NetConfig()
    active = backend.use(backend_name)
    params = init_params(config, seed)
    targets = np.unique(np.geomspace(min_verts, max_verts, steps)
                        .round().astype(int))
    rows = []
    for target in targets:
        mesh = sphere_with_vertex_count(int(target))
        seconds = time_forward(mesh, params, config, repeats)
        rows.append(BenchRow(mesh.n_vertices, mesh.n_faces, seconds, active))
    r2 = linear_fit_r2([r.n_faces for r in rows], [r.seconds for r in rows])
    return rows, r2


def compare_backends(n_vertices: int = 20000, width: int = 64,
                     repeats: int = 5, seed: int = 0) -> dict:
    """Wall time of the aggregation kernel under each available backend."""
    from .mesh import build_vertex_adjacency, normalize_adjacency
    mesh = sphere_with_vertex_count(n_vertices)
    adj = normalize_adjacency(build_vertex_adjacency(mesh))
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(mesh.n_vertices, width))
    previous = backend.active()
    results = {}
    try:
        names = ["python"] + (["compiled"] if backend.COMPILED_AVAILABLE else [])
        for name in names:
            backend.use(name)
            adj.matmul(x)  # warm-up
            best = np.inf
            for _ in range(repeats):
                start = time.perf_counter()
                adj.matmul(x)
                best = min(best, time.perf_counter() - start)
            results[name] = best
    finally:
        backend.use(previous)
    return results
