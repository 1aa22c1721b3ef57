"""Joint training loop, ADAM optimizer, and evaluation harnesses.

One mesh per step: sample a rotation, rotate the ground truth, sample a
noise spec from the configured grid, perturb, run the network, take the
weighted five-term loss (feature-extractor loss included: all parts are
optimized jointly), backpropagate, and apply a bias-corrected ADAM
update.  Everything is deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .losses import (LossContext, LossWeights, all_losses, build_loss_context,
                     chamfer_metric, normal_metric_rad, vertex_metric)
from .mesh import Mesh, canonicalize
from .network import (GraphOperators, NetConfig, build_graph_operators,
                      constant_params, forward, init_params, param_tensors)
from .noise import (DEFAULT_NOISE_GRID, NoiseSpec, mixed_noise_sample,
                    noise_matrix, random_rotation)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    steps: int = 2000
    seed: int = 0
    k: int = 32
    k_tf: int = 64
    weights: LossWeights = field(default_factory=LossWeights)
    noise_grid: tuple = DEFAULT_NOISE_GRID
    rotate: bool = True            # fresh random orientation each step
    resample_noise: bool = True    # False: one fixed perturbation (overfit runs)
    manifest: str | None = None
    mesh: str | None = None
    checkpoint_path: str | None = None
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")

    def net_config(self) -> NetConfig:
        return NetConfig(k=self.k, k_tf=self.k_tf)


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    faults: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState,
              config: TrainConfig) -> None:
    """Bias-corrected ADAM update, in place.

    A non-finite gradient rejects the whole step (parameters and
    moments untouched) and bumps the fault counter.
    """
    for g in grads.values():
        if not np.isfinite(g).all():
            state.faults += 1
            return
    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    for name, p in params.items():
        g = grads[name]
        state.m[name] = b1 * state.m[name] + (1 - b1) * g
        state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = state.m[name] / (1 - b1 ** t)
        v_hat = state.v[name] / (1 - b2 ** t)
        params[name] = p - config.lr * m_hat / (np.sqrt(v_hat) + config.adam_eps)


@dataclass(frozen=True)
class TrainSample:
    """A canonicalized ground-truth mesh with its precomputed operators."""

    mesh: Mesh
    ops: GraphOperators
    ctx: LossContext

    @classmethod
    def prepare(cls, mesh: Mesh, already_canonical: bool = False) -> "TrainSample":
        if not already_canonical:
            mesh, _ = canonicalize(mesh)
        return cls(mesh=mesh, ops=build_graph_operators(mesh),
                   ctx=build_loss_context(mesh))


def train_step(sample: TrainSample, params: dict, state: AdamState,
               config: TrainConfig, rng: np.random.Generator,
               net_config: NetConfig | None = None) -> tuple[float, dict]:
    """One optimization step; returns (total loss, per-term values)."""
    net_config = net_config or config.net_config()
    ctx = sample.ctx
    gt_positions = sample.mesh.positions
    if config.rotate:
        rotation = random_rotation(rng)
        ctx = ctx.rotated(rotation)
        gt_positions = ctx.positions
    if config.resample_noise:
        spec = mixed_noise_sample(rng, config.noise_grid,
                                  noise_seed=int(rng.integers(2 ** 62)))
    else:
        kind, level = config.noise_grid[0]
        spec = NoiseSpec(kind=kind, amplitude=float(level), seed=config.seed)
    noisy = gt_positions + noise_matrix(gt_positions.shape, spec)

    tape = ad.Tape()
    tensors = param_tensors(tape, params)
    denoised, fe_out = forward(ad.Tensor(noisy), sample.ops, tensors, net_config)
    total, components = all_losses(denoised, fe_out, ctx, config.weights)
    grad_by_id = tape.gradients(total)
    grads = {name: grad_by_id[t.nid] for name, t in tensors.items()}
    adam_step(params, grads, state, config)
    return float(total.data), {k: float(v.data) for k, v in components.items()}


def train(samples, config: TrainConfig, params: dict | None = None,
          on_step=None) -> tuple[dict, AdamState, list]:
    """Run the full loop over a list of :class:`TrainSample`.

    Returns the trained parameters, the optimizer state, and the loss
    trajectory.  ``on_step(i, loss, params)`` is called after each step
    (checkpoint cadence hooks in here).
    """
    if not samples:
        raise ValueError("no training samples")
    net_config = config.net_config()
    if params is None:
        params = init_params(net_config, config.seed)
    state = AdamState.for_params(params)
    rng = np.random.default_rng(config.seed)
    trajectory = []
    for i in range(config.steps):
        sample = samples[int(rng.integers(len(samples)))] \
            if len(samples) > 1 else samples[0]
        loss, _ = train_step(sample, params, state, config, rng, net_config)
        trajectory.append(loss)
        if on_step is not None:
            on_step(i, loss, params)
    return params, state, trajectory


# ---- evaluation --------------------------------------------------------

@dataclass(frozen=True)
class EvalRow:
    name: str
    vertex: float
    normal_deg: float
    chamfer: float
    ref_vertex: float
    ref_normal_deg: float
    ref_chamfer: float


def evaluate_pair(name: str, gt: Mesh, noisy: Mesh, params: dict,
                  net_config: NetConfig) -> EvalRow:
    """Metrics for one (ground truth, noisy) pair, in the gt canonical frame.

    The network runs directly on the canonicalized noisy positions, so
    with the identity network the model metrics equal the reference
    metrics exactly.
    """
    gt_c, transform = canonicalize(gt)
    noisy_pos = transform.apply(noisy.positions)
    ops = build_graph_operators(gt_c)
    ctx = build_loss_context(gt_c)
    denoised, _ = forward(ad.Tensor(noisy_pos), ops,
                          constant_params(params), net_config)
    out = denoised.data
    to_deg = 180.0 / np.pi
    return EvalRow(
        name=name,
        vertex=vertex_metric(out, gt_c.positions),
        normal_deg=normal_metric_rad(out, ctx) * to_deg,
        chamfer=chamfer_metric(out, gt_c.positions),
        ref_vertex=vertex_metric(noisy_pos, gt_c.positions),
        ref_normal_deg=normal_metric_rad(noisy_pos, ctx) * to_deg,
        ref_chamfer=chamfer_metric(noisy_pos, gt_c.positions),
    )


def evaluate(pairs, params: dict, net_config: NetConfig) -> list[EvalRow]:
    """Per-mesh rows for an iterable of (name, gt, noisy) triples."""
    return [evaluate_pair(name, gt, noisy, params, net_config)
            for name, gt, noisy in pairs]


def mean_rows_summary(rows: list[EvalRow]) -> EvalRow:
    if not rows:
        raise ValueError("no evaluation rows")
    fields = ("vertex", "normal_deg", "chamfer",
              "ref_vertex", "ref_normal_deg", "ref_chamfer")
    means = {f: float(np.mean([getattr(r, f) for r in rows])) for f in fields}
    return EvalRow(name="mean", **means)


# ---- rotation equivariance harness --------------------------------------

@dataclass(frozen=True)
class EquivarianceReport:
    vertex: float
    normal_deg: float
    chamfer: float
    n_meshes: int
    n_rotations: int


def rotation_equivariance(meshes, params: dict, net_config: NetConfig,
                          n_rotations: int = 5, seed: int = 0) -> EquivarianceReport:
    """Rotate-then-denoise vs denoise-then-rotate discrepancy.

    For each mesh and each of ``n_rotations`` random rotations, compare
    the two orders with the vertex, normal, and Chamfer metrics and
    average everything over meshes and rotations.
    """
    from .network import denoise_mesh
    rng = np.random.default_rng(seed)
    sums = np.zeros(3)
    count = 0
    for mesh in meshes:
        denoised = denoise_mesh(mesh, params, net_config)
        for _ in range(n_rotations):
            rotation = random_rotation(rng)
            rd = denoised.positions @ rotation.T
            dr = denoise_mesh(
                mesh.with_positions(mesh.positions @ rotation.T),
                params, net_config)
            ctx = build_loss_context(dr)
            sums[0] += vertex_metric(rd, dr.positions)
            sums[1] += normal_metric_rad(rd, ctx) * 180.0 / np.pi
            sums[2] += chamfer_metric(rd, dr.positions)
            count += 1
    if count == 0:
        raise ValueError("no meshes for the equivariance test")
    return EquivarianceReport(vertex=sums[0] / count,
                              normal_deg=sums[1] / count,
                              chamfer=sums[2] / count,
                              n_meshes=count // n_rotations,
                              n_rotations=n_rotations)
