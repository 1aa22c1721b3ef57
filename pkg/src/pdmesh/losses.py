"""Training losses and evaluation metrics.

Five terms: vertex (mean squared distance), normal (mean face-normal
angle), curvature (mean/Gaussian curvature errors weighted by squared
ground-truth curvature), Chamfer, and the feature-extractor target
error.  Each is a taped scalar, so gradients flow to the positions and
feature estimates produced by the network.

Cotangent weights and mixed Voronoi areas are taken from the ground
truth mesh and treated as constants of the comparison: the curvature of
the output enters through its positions (Laplacian stencil, interior
angles), which keeps the whole term inside the differentiable op set
and makes both sides coincide exactly when the meshes agree.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .geometry import GeometryCache, compute_geometry, cot_laplacian, local_features
from .mesh import Mesh
from .sparse import SparseMatrix


@dataclass(frozen=True)
class LossWeights:
    lambda_vertex: float = 1.0
    lambda_normal: float = 0.2
    lambda_curvature: float = 0.01
    lambda_chamfer: float = 0.05
    lambda_fe: float = 1.0
    gamma_h: float = 1e-6
    gamma_g: float = 1.0

    def __post_init__(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class LossContext:
    """Ground-truth quantities precomputed once per training mesh.

    ``rotated`` produces the context of a rigidly rotated copy cheaply:
    curvatures, areas, and cotangent weights are rotation invariant, so
    only positions and normal directions change.
    """

    positions: np.ndarray         # (n, 3)
    faces: np.ndarray
    laplacian: SparseMatrix       # gt cotangent stencil
    face_normals: np.ndarray      # (f, 3)
    valid_faces: np.ndarray       # (f,) bool
    keep_verts: np.ndarray        # indices with positive mixed area
    inv_4a: SparseMatrix          # diag over kept verts: 1 / (4 A_mixed)
    inv_a: SparseMatrix           # diag over kept verts: 1 / A_mixed
    wh2: SparseMatrix             # diag (kappa_H_gt)^2 over kept verts
    wg2: SparseMatrix             # diag (kappa_G_gt)^2 over kept verts
    kappa_h: np.ndarray           # (m, 1) kept gt mean curvature
    kappa_g: np.ndarray           # (m, 1) kept gt Gaussian curvature
    corner_v: np.ndarray          # corner vertex indices, valid faces only
    corner_u: np.ndarray
    corner_w: np.ndarray
    angle_mat: SparseMatrix       # (n, n_corners) per-vertex angle sum
    features: np.ndarray          # (n, 5) gt local feature targets
    feature_keep: np.ndarray      # vertex indices entering the FE loss

    def rotated(self, rotation: np.ndarray) -> "LossContext":
        rt = rotation.T
        feats = self.features.copy()
        feats[:, :3] = feats[:, :3] @ rt
        return replace(self, positions=self.positions @ rt,
                       face_normals=self.face_normals @ rt, features=feats)


def build_loss_context(mesh: Mesh, cache: GeometryCache | None = None) -> LossContext:
    cache = cache or compute_geometry(mesh)
    n = mesh.n_vertices
    # curvature/feature targets at boundary vertices are unreliable
    # (open-surface angle deficits), so they stay out of the averages
    reliable = (cache.mixed_areas > 0.0) & ~cache.boundary_vertices
    keep = np.flatnonzero(reliable)
    if keep.size == 0:
        keep = np.flatnonzero(cache.mixed_areas > 0.0)
    areas = cache.mixed_areas[keep]

    valid_face_idx = np.flatnonzero(cache.valid_faces)
    fv = mesh.faces[valid_face_idx]
    corner_v = fv.reshape(-1)
    corner_u = fv[:, [1, 2, 0]].reshape(-1)
    corner_w = fv[:, [2, 0, 1]].reshape(-1)
    n_corners = corner_v.size
    angle_mat = SparseMatrix((n, n_corners), corner_v,
                             np.arange(n_corners, dtype=np.int64),
                             np.ones(n_corners))

    laplacian = cot_laplacian(mesh, cache)
    inv_4a = SparseMatrix.diagonal(1.0 / (4.0 * areas))
    inv_a = SparseMatrix.diagonal(1.0 / areas)

    # gt curvatures evaluated through the same expressions the loss
    # applies to the output, so agreement yields an exactly zero error
    p0 = ad.Tensor(mesh.positions)
    kappa_h = _mean_curvature_expr(p0, laplacian, inv_4a, keep, n).data
    kappa_g = _gaussian_curvature_expr(p0, corner_v, corner_u, corner_w,
                                       angle_mat, inv_a, keep, n).data

    feats = local_features(mesh, cache)
    return LossContext(
        positions=mesh.positions,
        faces=mesh.faces,
        laplacian=laplacian,
        face_normals=cache.face_normals,
        valid_faces=cache.valid_faces,
        keep_verts=keep,
        inv_4a=inv_4a,
        inv_a=inv_a,
        wh2=SparseMatrix.diagonal(kappa_h[:, 0] ** 2),
        wg2=SparseMatrix.diagonal(kappa_g[:, 0] ** 2),
        kappa_h=kappa_h,
        kappa_g=kappa_g,
        corner_v=corner_v,
        corner_u=corner_u,
        corner_w=corner_w,
        angle_mat=angle_mat,
        features=feats.values,
        feature_keep=np.flatnonzero(feats.valid & ~cache.boundary_vertices)
        if (feats.valid & ~cache.boundary_vertices).any()
        else np.flatnonzero(feats.valid),
        )


def _mean_curvature_expr(p, laplacian, inv_4a, keep, n) -> ad.Tensor:
    """Cotangent umbrella norm over 4 * mixed area, kept vertices, (m, 1)."""
    umbrella = ad.spmatmul(laplacian, p)
    norms = ad.reshape(ad.norm_rows(umbrella), (n, 1))
    return ad.spmatmul(inv_4a, ad.gather_rows(norms, keep))


def _gaussian_curvature_expr(p, corner_v, corner_u, corner_w, angle_mat,
                             inv_a, keep, n) -> ad.Tensor:
    """Angle deficit over mixed area, kept vertices, (m, 1)."""
    base = ad.gather_rows(p, corner_v)
    du = ad.unit_rows(ad.sub(ad.gather_rows(p, corner_u), base))
    dw = ad.unit_rows(ad.sub(ad.gather_rows(p, corner_w), base))
    angles = ad.acos_clamped(ad.dot_rows(du, dw))
    angle_sums = ad.spmatmul(angle_mat, ad.reshape(angles, (corner_v.size, 1)))
    deficit = ad.add(ad.scale(angle_sums, -1.0),
                     np.full((n, 1), 2.0 * np.pi))
    return ad.spmatmul(inv_a, ad.gather_rows(deficit, keep))


# ---- the five loss terms ---------------------------------------------

def vertex_loss(p_out, p_gt) -> ad.Tensor:
    """Mean squared vertex-to-vertex distance."""
    return ad.mean_rows(ad.sqnorm_rows(ad.sub(p_out, p_gt)))


def normal_loss(p_out, ctx: LossContext) -> ad.Tensor:
    """Mean angle between corresponding face normals, in radians.

    Faces degenerate on either side are excluded from sum and count.
    """
    p_out = ad.astensor(p_out)
    v0, v1, v2 = ctx.faces[:, 0], ctx.faces[:, 1], ctx.faces[:, 2]
    pos = p_out.data
    cross = np.cross(pos[v1] - pos[v0], pos[v2] - pos[v0])
    out_valid = np.linalg.norm(cross, axis=1) / 2.0 >= 1e-12
    keep = np.flatnonzero(ctx.valid_faces & out_valid)
    if keep.size == 0:
        raise ValueError("no non-degenerate face pair for the normal loss")
    a = ad.gather_rows(p_out, v0[keep])
    e1 = ad.sub(ad.gather_rows(p_out, v1[keep]), a)
    e2 = ad.sub(ad.gather_rows(p_out, v2[keep]), a)
    n_out = ad.unit_rows(ad.cross_rows(e1, e2))
    cos = ad.dot_rows(n_out, ctx.face_normals[keep])
    return ad.mean_rows(ad.acos_clamped(cos))


def curvature_loss(p_out, ctx: LossContext, gamma_h: float,
                   gamma_g: float) -> ad.Tensor:
    """gamma_h * L_H + gamma_g * L_G over vertices with positive area.

    Each term is the mean absolute curvature error weighted by the
    square of the ground-truth curvature.
    """
    p_out = ad.astensor(p_out)
    n = ctx.positions.shape[0]
    m = ctx.keep_verts.size
    kh_out = _mean_curvature_expr(p_out, ctx.laplacian, ctx.inv_4a,
                                  ctx.keep_verts, n)
    lh = ad.mean_rows(ad.reshape(
        ad.spmatmul(ctx.wh2, ad.absval(ad.sub(kh_out, ctx.kappa_h))), (m,)))
    kg_out = _gaussian_curvature_expr(p_out, ctx.corner_v, ctx.corner_u,
                                      ctx.corner_w, ctx.angle_mat, ctx.inv_a,
                                      ctx.keep_verts, n)
    lg = ad.mean_rows(ad.reshape(
        ad.spmatmul(ctx.wg2, ad.absval(ad.sub(kg_out, ctx.kappa_g))), (m,)))
    return ad.add(ad.scale(lh, gamma_h), ad.scale(lg, gamma_g))


def chamfer_loss(p_out, p_gt, method: str = "auto") -> ad.Tensor:
    """Symmetric mean of nearest-neighbor squared distances.

    The nearest-neighbor assignment is found outside the tape (brute
    force or spatial hash grid, selected by ``method``); the distances
    for the fixed assignment are differentiable.
    """
    p_out = ad.astensor(p_out)
    gt = np.asarray(p_gt.data if isinstance(p_gt, ad.Tensor) else p_gt)
    if p_out.data.shape[0] == 0 or gt.shape[0] == 0:
        raise ValueError("chamfer loss needs non-empty point sets")
    nn_out = nearest_indices(p_out.data, gt, method)
    nn_gt = nearest_indices(gt, p_out.data, method)
    t1 = ad.mean_rows(ad.sqnorm_rows(ad.sub(p_out, gt[nn_out])))
    t2 = ad.mean_rows(ad.sqnorm_rows(ad.sub(ad.gather_rows(p_out, nn_gt), gt)))
    return ad.add(t1, t2)


def feature_loss(fe_out, ctx: LossContext) -> ad.Tensor:
    """Mean squared error of the 5-wide local feature estimates."""
    keep = ctx.feature_keep
    if keep.size == 0:
        raise ValueError("no valid vertex for the feature-extractor loss")
    diff = ad.sub(ad.gather_rows(ad.astensor(fe_out), keep), ctx.features[keep])
    return ad.mean_rows(ad.sqnorm_rows(diff))


def total_loss(components: dict, weights: LossWeights) -> ad.Tensor:
    """Weighted sum of the five loss terms."""
    total = ad.scale(components["vertex"], weights.lambda_vertex)
    total = ad.add(total, ad.scale(components["normal"], weights.lambda_normal))
    total = ad.add(total, ad.scale(components["curvature"],
                                   weights.lambda_curvature))
    total = ad.add(total, ad.scale(components["chamfer"],
                                   weights.lambda_chamfer))
    return ad.add(total, ad.scale(components["fe"], weights.lambda_fe))


def all_losses(p_out, fe_out, ctx: LossContext, weights: LossWeights,
               chamfer_method: str = "auto") -> tuple[ad.Tensor, dict]:
    components = {
        "vertex": vertex_loss(p_out, ctx.positions),
        "normal": normal_loss(p_out, ctx),
        "curvature": curvature_loss(p_out, ctx, weights.gamma_h,
                                    weights.gamma_g),
        "chamfer": chamfer_loss(p_out, ctx.positions, chamfer_method),
        "fe": feature_loss(fe_out, ctx),
    }
    return total_loss(components, weights), components


# ---- nearest neighbors -------------------------------------------------

def nearest_indices(query: np.ndarray, points: np.ndarray,
                    method: str = "auto") -> np.ndarray:
    """Index of the closest point for every query row."""
    if method == "auto":
        method = "grid" if points.shape[0] > 2000 else "brute"
    if method == "brute":
        return _nearest_brute(query, points)
    if method == "grid":
        return _nearest_grid(query, points)
    raise ValueError(f"unknown nearest-neighbor method {method!r}")


def _pair_sq_dist(q: np.ndarray, p: np.ndarray) -> float:
    # single expression shared by both paths so ties carry identical values
    return float(((q - p) ** 2).sum())


def _nearest_brute(query: np.ndarray, points: np.ndarray) -> np.ndarray:
    out = np.empty(query.shape[0], dtype=np.int64)
    chunk = max(1, int(2**22 // max(points.shape[0], 1)))
    for start in range(0, query.shape[0], chunk):
        q = query[start:start + chunk]
        d2 = ((q[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        out[start:start + chunk] = d2.argmin(axis=1)
    return out


def _nearest_grid(query: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Uniform spatial hash; cell edge = bbox diagonal / cbrt(#points)."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    cell = diag / max(points.shape[0] ** (1.0 / 3.0), 1.0)
    if cell <= 0.0:  # all points coincide
        return np.zeros(query.shape[0], dtype=np.int64)

    grid: dict = {}
    coords = np.floor((points - lo) / cell).astype(np.int64)
    for i, c in enumerate(map(tuple, coords)):
        grid.setdefault(c, []).append(i)

    out = np.empty(query.shape[0], dtype=np.int64)
    qcoords = np.floor((query - lo) / cell).astype(np.int64)
    cmin = coords.min(axis=0)
    cmax = coords.max(axis=0)
    for qi in range(query.shape[0]):
        q = query[qi]
        cx, cy, cz = qcoords[qi]
        best_d = np.inf
        best_i = -1
        max_ring = int(np.abs(np.concatenate(
            [qcoords[qi] - cmin, cmax - qcoords[qi]])).max()) + 1
        ring = 0
        while ring <= max_ring:
            if best_i >= 0 and (ring - 1) > 0 and ((ring - 1) * cell) ** 2 > best_d:
                break
            for ix in range(cx - ring, cx + ring + 1):
                for iy in range(cy - ring, cy + ring + 1):
                    for iz in range(cz - ring, cz + ring + 1):
                        if max(abs(ix - cx), abs(iy - cy), abs(iz - cz)) != ring:
                            continue
                        for i in grid.get((ix, iy, iz), ()):
                            d = _pair_sq_dist(q, points[i])
                            if d < best_d or (d == best_d and i < best_i):
                                best_d, best_i = d, i
            ring += 1
        out[qi] = best_i
    return out


# ---- plain-number metrics ----------------------------------------------

def vertex_metric(a: np.ndarray, b: np.ndarray) -> float:
    return float(vertex_loss(ad.Tensor(a), b).data)


def normal_metric_rad(positions: np.ndarray, ctx: LossContext) -> float:
    return float(normal_loss(ad.Tensor(positions), ctx).data)


def chamfer_metric(a: np.ndarray, b: np.ndarray, method: str = "auto") -> float:
    return float(chamfer_loss(ad.Tensor(a), b, method).data)
