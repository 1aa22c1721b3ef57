"""Primal-dual graph network toolkit for triangle-mesh denoising."""

from .mesh import (CanonicalTransform, DegenerateGeometryError, Mesh,
                   build_face_adjacency, build_vertex_adjacency,
                   build_vertex_face_adjacency, canonicalize,
                   normalize_adjacency)
from .sparse import SparseMatrix
from .geometry import (GeometryCache, LocalFeatures, compute_geometry,
                       face_normals, gaussian_curvature, local_features,
                       mean_curvature, mixed_voronoi_areas, vertex_normals)
from .noise import NoiseSpec, apply_noise, mixed_noise_sample, random_rotation
from .autodiff import NonFiniteError, Tape, Tensor
from .network import (NetConfig, build_graph_operators, denoise_mesh, forward,
                      init_params, zero_params)
from .losses import LossWeights, build_loss_context
from .training import TrainConfig, TrainSample, evaluate, train

__version__ = "0.1.0"
