"""Primal-dual graph network for mesh denoising.

The model has three parts wired residually on the input positions:

* a feature extractor estimating per-vertex local geometry (normal,
  mean curvature, Gaussian curvature: 5 values),
* a transformer that pools those estimates into a global data-dependent
  linear map (8 x k_tf) applied to [positions | features],
* a denoiser, structurally identical to the feature extractor, whose
  3-wide output head is added back onto the noisy positions.

Both the feature extractor and the denoiser stack two-stream blocks:
a primal stream aggregating over the vertex graph and a dual stream
aggregating over the face graph, fused at the faces and mapped back to
vertices.  Aggregation is symmetric-normalized graph convolution with
residual skips (the skips prevent vertices with identical normalized
neighborhoods from collapsing to one feature point).

All layers are built from the taped ops in :mod:`pdmesh.autodiff`, so a
loss computed on the outputs is differentiable in every parameter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .mesh import (Mesh, build_face_adjacency, build_vertex_adjacency,
                   build_vertex_face_adjacency, canonicalize,
                   normalize_adjacency)
from .sparse import SparseMatrix


@dataclass(frozen=True)
class NetConfig:
    """Widths and depths; the paper-scale setting is k_tf=512."""

    k: int = 32            # stream feature width
    k_tf: int = 64         # transformer output width; pooled FC is 8 * k_tf
    aggs_per_stream: int = 3
    fe_blocks: int = 2
    denoiser_blocks: int = 2

    def __post_init__(self):
        if min(self.k, self.k_tf) < 1:
            raise ValueError("widths must be positive")
        if self.aggs_per_stream != 3:
            raise ValueError("streams use exactly three aggregators")

    @property
    def pooled_width(self) -> int:
        return 8 * self.k_tf


@dataclass(frozen=True)
class GraphOperators:
    """Constant per-mesh operators consumed by the network layers."""

    n_vertices: int
    n_faces: int
    faces: np.ndarray
    adj_v_norm: SparseMatrix   # normalized vertex adjacency (n, n)
    adj_f_norm: SparseMatrix   # normalized face adjacency (f, f)
    face_mean: SparseMatrix    # (f, n): mean of the 3 vertex rows per face
    vertex_mean: SparseMatrix  # (n, f): mean of incident face rows per vertex
    isolated_vertices: int     # vertices with no incident face (zero rows)


def build_graph_operators(mesh: Mesh) -> GraphOperators:
    a_vf = build_vertex_face_adjacency(mesh)
    a_fv = a_vf.transpose()
    face_mean = SparseMatrix(
        a_fv.shape,
        np.repeat(np.arange(a_fv.shape[0], dtype=np.int64),
                  np.diff(a_fv.indptr)),
        a_fv.indices, a_fv.data / 3.0)
    vdeg = a_vf.row_sums()
    isolated = int((vdeg == 0).sum())
    inv = np.where(vdeg > 0, 1.0 / np.maximum(vdeg, 1.0), 0.0)
    rows = np.repeat(np.arange(a_vf.shape[0], dtype=np.int64),
                     np.diff(a_vf.indptr))
    vertex_mean = SparseMatrix(a_vf.shape, rows, a_vf.indices,
                               a_vf.data * inv[rows])
    return GraphOperators(
        n_vertices=mesh.n_vertices,
        n_faces=mesh.n_faces,
        faces=mesh.faces,
        adj_v_norm=normalize_adjacency(build_vertex_adjacency(mesh)),
        adj_f_norm=normalize_adjacency(build_face_adjacency(mesh)),
        face_mean=face_mean,
        vertex_mean=vertex_mean,
        isolated_vertices=isolated,
    )


# ---- layers -----------------------------------------------------------

def agg(x, adj_norm: SparseMatrix, w, activate: bool = True):
    """Graph aggregation: relu(adj_norm @ x @ w), relu optional."""
    y = ad.matmul(ad.spmatmul(adj_norm, x), w)
    return ad.relu(y) if activate else y


def agg_stack(x, adj_norm: SparseMatrix, weights, residual: bool = True):
    """Three aggregators in series.

    ``residual=False`` (no skip connections) exists only as a test
    harness to demonstrate feature collapse on regular neighborhoods;
    the network always uses the residual form.
    """
    for w in weights:
        g = agg(x, adj_norm, w, activate=True)
        x = ad.add(g, x) if residual else g
    return x


def primal_to_dual(x_v, ops: GraphOperators):
    """Face feature = centroid of its three vertex features."""
    return ad.spmatmul(ops.face_mean, x_v)


def dual_to_primal(x_f, ops: GraphOperators):
    """Vertex feature = mean of incident face features (zero if isolated)."""
    return ad.spmatmul(ops.vertex_mean, x_f)


def dual_average_pool(x_v, x_f, ops: GraphOperators):
    """Per face: mean over its 3 vertices of |vertex row - face row|."""
    total = None
    for corner in range(3):
        part = ad.absval(ad.sub(ad.gather_rows(x_v, ops.faces[:, corner]), x_f))
        total = part if total is None else ad.add(total, part)
    return ad.scale(total, 1.0 / 3.0)


def feature_average_pool(h):
    """Column means over all vertices: the permutation-invariant pooling."""
    return ad.mean_rows(h)


def linear(x, w, b):
    return ad.add(ad.matmul(x, w), b)


def two_stream_block(x_v, ops: GraphOperators, params, prefix: str):
    """Parallel primal/dual aggregation stacks fused at the faces."""
    primal = agg_stack(x_v, ops.adj_v_norm,
                       [params[f"{prefix}.primal.agg{i}.w"] for i in range(3)])
    dual = agg_stack(primal_to_dual(x_v, ops), ops.adj_f_norm,
                     [params[f"{prefix}.dual.agg{i}.w"] for i in range(3)])
    fused = dual_average_pool(primal, dual, ops)
    return dual_to_primal(fused, ops)


def feature_extractor(x_noisy, ops: GraphOperators, params, config: NetConfig):
    h = ad.relu(linear(x_noisy, params["fe.lift.w"], params["fe.lift.b"]))
    for i in range(config.fe_blocks):
        h = two_stream_block(h, ops, params, f"fe.block{i}")
    return linear(h, params["fe.out.w"], params["fe.out.b"])


def transformer(features, x_noisy, ops: GraphOperators, params,
                config: NetConfig):
    """Pool the feature estimates into an 8 x k_tf map, apply it.

    The pooling branch: FC+relu, three densely connected aggregators
    (each consuming the concatenation of all previous outputs), a final
    aggregator over the full concatenation, then an activation-free FC
    to width 8*k_tf and the global average pool.  The activation-free
    FC keeps the pooled transform's entries sign-balanced.
    """
    a = ad.relu(linear(features, params["tf.fc1.w"], params["tf.fc1.b"]))
    outs = [a]
    for i in range(3):
        inp = outs[0] if i == 0 else ad.concat_cols(*outs)
        outs.append(agg(inp, ops.adj_v_norm, params[f"tf.agg{i}.w"]))
    h = agg(ad.concat_cols(*outs), ops.adj_v_norm, params["tf.agg_final.w"])
    pooled = linear(h, params["tf.fc2.w"], params["tf.fc2.b"])
    w_tf = ad.reshape(feature_average_pool(pooled), (8, config.k_tf))
    combined = ad.concat_cols(x_noisy, features)          # (n, 8)
    transformed = ad.matmul(combined, w_tf)               # (n, k_tf)
    return agg(transformed, ops.adj_v_norm, params["tf.out_agg.w"])


def denoiser(x_noisy, intermediate, ops: GraphOperators, params,
             config: NetConfig):
    h = ad.relu(linear(ad.concat_cols(x_noisy, intermediate),
                       params["dn.lift.w"], params["dn.lift.b"]))
    for i in range(config.denoiser_blocks):
        h = two_stream_block(h, ops, params, f"dn.block{i}")
    displacement = linear(h, params["dn.out.w"], params["dn.out.b"])
    return ad.add(x_noisy, displacement)  # residual position head


def forward(x_noisy, ops: GraphOperators, params, config: NetConfig):
    """Full pass: returns (denoised positions (n, 3), feature estimates (n, 5))."""
    x_noisy = ad.astensor(x_noisy)
    fe_out = feature_extractor(x_noisy, ops, params, config)
    intermediate = transformer(fe_out, x_noisy, ops, params, config)
    return denoiser(x_noisy, intermediate, ops, params, config), fe_out


# ---- parameters -------------------------------------------------------

def parameter_spec(config: NetConfig):
    """Ordered (name, shape, fan_in) for every parameter tensor."""
    k, k_tf = config.k, config.k_tf
    spec = [("fe.lift.w", (3, k), 3), ("fe.lift.b", (k,), 3)]
    for i in range(config.fe_blocks):
        for stream in ("primal", "dual"):
            for j in range(3):
                spec.append((f"fe.block{i}.{stream}.agg{j}.w", (k, k), k))
    spec += [("fe.out.w", (k, 5), k), ("fe.out.b", (5,), k)]
    spec += [("tf.fc1.w", (5, k), 5), ("tf.fc1.b", (k,), 5)]
    for i in range(3):
        width = k if i == 0 else (i + 1) * k
        spec.append((f"tf.agg{i}.w", (width, k), width))
    spec.append(("tf.agg_final.w", (4 * k, k), 4 * k))
    spec += [("tf.fc2.w", (k, config.pooled_width), k),
             ("tf.fc2.b", (config.pooled_width,), k),
             ("tf.out_agg.w", (k_tf, k_tf), k_tf)]
    spec += [("dn.lift.w", (3 + k_tf, k), 3 + k_tf),
             ("dn.lift.b", (k,), 3 + k_tf)]
    for i in range(config.denoiser_blocks):
        for stream in ("primal", "dual"):
            for j in range(3):
                spec.append((f"dn.block{i}.{stream}.agg{j}.w", (k, k), k))
    spec += [("dn.out.w", (k, 3), k), ("dn.out.b", (3,), k)]
    return spec


def init_params(config: NetConfig, seed: int) -> dict:
    """Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)].

    The displacement head starts at zero so the network begins as the
    identity map on positions (the point of the residual head).
    """
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, fan_in in parameter_spec(config):
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = rng.uniform(-bound, bound, shape)
    params["dn.out.w"][:] = 0.0
    params["dn.out.b"][:] = 0.0
    return params


def zero_params(config: NetConfig) -> dict:
    """All-zero parameters; the network is then the identity on positions."""
    return {name: np.zeros(shape) for name, shape, _ in parameter_spec(config)}


def validate_params(params: dict, config: NetConfig) -> None:
    expected = {name: shape for name, shape, _ in parameter_spec(config)}
    for name, shape in expected.items():
        if name not in params:
            raise ValueError(f"missing parameter tensor {name!r}")
        actual = tuple(params[name].shape)
        if actual != shape:
            raise ValueError(
                f"parameter {name!r} has shape {actual}, expected {shape}")
    extra = set(params) - set(expected)
    if extra:
        raise ValueError(f"unexpected parameter tensors: {sorted(extra)}")


def config_from_params(params: dict) -> NetConfig:
    """Recover widths/depths from a loaded parameter map and validate it."""
    try:
        k = int(params["fe.lift.w"].shape[1])
        k_tf = int(params["tf.out_agg.w"].shape[0])
    except KeyError as exc:
        raise ValueError(f"checkpoint is missing parameter tensor {exc}") from None
    fe_blocks = len({n.split(".")[1] for n in params if n.startswith("fe.block")})
    dn_blocks = len({n.split(".")[1] for n in params if n.startswith("dn.block")})
    config = NetConfig(k=k, k_tf=k_tf, fe_blocks=max(fe_blocks, 1),
                       denoiser_blocks=max(dn_blocks, 1))
    validate_params(params, config)
    return config


def param_tensors(tape, params: dict, watch: bool = True) -> dict:
    """Wrap a parameter map as tracked tensors on the tape."""
    out = {}
    for name in sorted(params):
        t = tape.variable(params[name])
        if watch:
            tape.watch(t)
        out[name] = t
    return out


def constant_params(params: dict) -> dict:
    return {name: ad.Tensor(value) for name, value in params.items()}


def denoise_mesh(mesh: Mesh, params: dict, config: NetConfig) -> Mesh:
    """Canonicalize, run the network, and map back to the input frame."""
    canonical, transform = canonicalize(mesh)
    ops = build_graph_operators(canonical)
    denoised, _ = forward(ad.Tensor(canonical.positions), ops,
                          constant_params(params), config)
    return mesh.with_positions(transform.invert(denoised.data))
