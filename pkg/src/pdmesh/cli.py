"""Command-line interface.

Subcommands: denoise, train, eval, noise, features, equivariance, bench.
Every command exits nonzero with a one-line diagnostic on failure, and
all randomness flows from explicit seeds.  Report files are CSV by
default (or JSON via --format json) and byte-stable across reruns with
the same seed, apart from the optional timestamp header.
"""

from __future__ import annotations

import argparse
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from .benchmark import compare_backends, run_forward_bench
from .checkpoint import load_checkpoint_file, save_checkpoint_file
from .fileio import load_manifest, load_mesh, save_mesh
from .geometry import local_features
from .losses import LossWeights
from .mesh import canonicalize
from .network import NetConfig, config_from_params, denoise_mesh
from .noise import KINDS, NoiseSpec, apply_noise
from .training import (TrainConfig, TrainSample, evaluate_pair,
                       mean_rows_summary, rotation_equivariance, train)

VERTEX_SCALE = 1e-4  # vertex/chamfer report columns are in units of 1e-4


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_report(path, columns, rows, fmt: str = "csv",
                 timestamp: bool = True, extra: dict | None = None) -> None:
    path = Path(path)
    if fmt == "csv":
        lines = []
        if timestamp:
            lines.append(f"# generated {datetime.datetime.now().isoformat()}")
        if extra:
            lines += [f"# {k} {_fmt(v)}" for k, v in extra.items()]
        lines.append(",".join(columns))
        lines += [",".join(_fmt(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")
    elif fmt == "json":
        doc: dict = {"columns": list(columns), "rows": [list(r) for r in rows]}
        if extra:
            doc.update(extra)
        if timestamp:
            doc["generated"] = datetime.datetime.now().isoformat()
        path.write_text(json.dumps(doc, indent=2) + "\n")
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def _load_params(path):
    params = load_checkpoint_file(path)
    return params, config_from_params(params)


# ---- commands -----------------------------------------------------------

def cmd_denoise(args) -> int:
    mesh = load_mesh(args.infile)
    params, config = _load_params(args.ckpt)
    save_mesh(args.out, denoise_mesh(mesh, params, config))
    return 0


def cmd_noise(args) -> int:
    mesh = load_mesh(args.infile)
    spec = NoiseSpec(kind=args.kind, amplitude=args.level,
                     p_pos=args.p_pos, p_neg=args.p_neg, seed=args.seed)
    # noise levels are defined at canonical (unit cube) scale
    canonical, transform = canonicalize(mesh)
    noisy = apply_noise(canonical, spec)
    save_mesh(args.out, mesh.with_positions(transform.invert(noisy.positions)))
    return 0


def cmd_features(args) -> int:
    feats = local_features(load_mesh(args.infile))
    write_report(args.out, ["nx", "ny", "nz", "kappa_h", "kappa_g"],
                 [[float(v) for v in row] for row in feats.values],
                 fmt=args.format, timestamp=not args.no_timestamp)
    return 0


def _split_meshes(manifest_path: str, split: str):
    manifest, base = load_manifest(manifest_path)
    for rel in manifest.split(split):
        yield rel, base / rel


def cmd_eval(args) -> int:
    params, config = _load_params(args.ckpt)
    rows = []
    evaluated = []
    for index, (rel, path) in enumerate(_split_meshes(args.manifest, args.split)):
        try:
            gt = load_mesh(path)
        except Exception as exc:
            print(f"skipping {rel}: {exc}", file=sys.stderr)
            continue
        gt_c, _ = canonicalize(gt)
        spec = NoiseSpec(kind=args.kind, amplitude=args.level,
                         seed=args.noise_seed + index)
        row = evaluate_pair(rel, gt_c, apply_noise(gt_c, spec), params, config)
        evaluated.append(row)
    if not evaluated:
        raise ValueError("no readable mesh in the selected split")
    evaluated.append(mean_rows_summary(evaluated))
    for r in evaluated:
        rows.append([r.name, r.vertex / VERTEX_SCALE, r.normal_deg,
                     r.chamfer / VERTEX_SCALE, r.ref_vertex / VERTEX_SCALE,
                     r.ref_normal_deg, r.ref_chamfer / VERTEX_SCALE])
    write_report(args.report,
                 ["mesh", "vertex", "normal_deg", "chamfer",
                  "ref_vertex", "ref_normal_deg", "ref_chamfer"],
                 rows, fmt=args.format, timestamp=not args.no_timestamp)
    return 0


def cmd_equivariance(args) -> int:
    params, config = _load_params(args.ckpt)
    meshes = []
    for rel, path in _split_meshes(args.manifest, args.split):
        try:
            meshes.append(load_mesh(path))
        except Exception as exc:
            print(f"skipping {rel}: {exc}", file=sys.stderr)
    if not meshes:
        raise ValueError("no readable mesh in the selected split")
    report = rotation_equivariance(meshes, params, config,
                                   n_rotations=args.rotations, seed=args.seed)
    write_report(args.report,
                 ["vertex", "normal_deg", "chamfer", "meshes", "rotations"],
                 [[report.vertex / VERTEX_SCALE, report.normal_deg,
                   report.chamfer / VERTEX_SCALE, report.n_meshes,
                   report.n_rotations]],
                 fmt=args.format, timestamp=not args.no_timestamp)
    return 0


def cmd_bench(args) -> int:
    config = NetConfig(k=args.k, k_tf=args.k_tf)
    rows, r2 = run_forward_bench(args.min_verts, args.max_verts, args.steps,
                                 config=config, seed=args.seed,
                                 repeats=args.repeats,
                                 backend_name=args.backend)
    write_report(args.report,
                 ["n_vertices", "n_faces", "seconds", "backend"],
                 [[r.n_vertices, r.n_faces, r.seconds, r.backend]
                  for r in rows],
                 fmt=args.format, timestamp=not args.no_timestamp,
                 extra={"fit_r2": r2})
    print(f"linear fit R^2 vs faces: {r2:.4f}")
    if args.compare_backends:
        for name, seconds in compare_backends().items():
            print(f"aggregation kernel [{name}]: {seconds * 1e3:.2f} ms")
    return 0


# ---- train config file ---------------------------------------------------

_FLOAT_KEYS = {"lr", "beta1", "beta2", "adam_eps"}
_INT_KEYS = {"steps", "seed", "k", "k_tf", "checkpoint_every"}
_BOOL_KEYS = {"rotate", "resample_noise"}
_STR_KEYS = {"manifest", "mesh", "checkpoint_path"}
_WEIGHT_KEYS = {"lambda_vertex", "lambda_normal", "lambda_curvature",
                "lambda_chamfer", "lambda_fe", "gamma_h", "gamma_g"}


def parse_noise_grid(text: str):
    grid = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        kind, _, level = item.partition(":")
        if kind not in KINDS:
            raise ValueError(f"unknown noise kind {kind!r} in noise_grid")
        grid.append((kind, float(level)))
    if not grid:
        raise ValueError("noise_grid is empty")
    return tuple(grid)


def parse_train_config(text: str) -> TrainConfig:
    """Flat ``key = value`` grammar with ``#`` comments."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in values:
            raise ValueError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = value

    kwargs: dict = {}
    weights: dict = {}
    for key, value in values.items():
        if key in _FLOAT_KEYS:
            kwargs[key] = float(value)
        elif key in _INT_KEYS:
            kwargs[key] = int(value)
        elif key in _BOOL_KEYS:
            if value.lower() not in ("true", "false"):
                raise ValueError(f"{key} must be true or false")
            kwargs[key] = value.lower() == "true"
        elif key in _STR_KEYS:
            kwargs[key] = value
        elif key in _WEIGHT_KEYS:
            weights[key] = float(value)
        elif key == "noise_grid":
            kwargs["noise_grid"] = parse_noise_grid(value)
        else:
            raise ValueError(f"unknown config key {key!r}")
    if weights:
        kwargs["weights"] = LossWeights(**weights)
    return TrainConfig(**kwargs)


def cmd_train(args) -> int:
    config = parse_train_config(Path(args.config).read_text())
    if config.mesh:
        meshes = [("mesh", load_mesh(Path(args.config).parent / config.mesh))]
    elif config.manifest:
        base = Path(args.config).parent
        meshes = []
        for rel, path in _split_meshes(base / config.manifest, "train"):
            meshes.append((rel, load_mesh(path)))
    else:
        raise ValueError("config must set 'mesh' or 'manifest'")
    samples = [TrainSample.prepare(m) for _, m in meshes]

    ckpt_path = None
    if config.checkpoint_path:
        ckpt_path = Path(args.config).parent / config.checkpoint_path

    def on_step(i, loss, params):
        if (i + 1) % max(1, config.steps // 10) == 0:
            print(f"step {i + 1}/{config.steps} loss {loss:.6g}")
        if (ckpt_path and config.checkpoint_every > 0
                and (i + 1) % config.checkpoint_every == 0):
            save_checkpoint_file(ckpt_path, params)

    params, state, trajectory = train(samples, config, on_step=on_step)
    if ckpt_path:
        save_checkpoint_file(ckpt_path, params)
        print(f"saved checkpoint to {ckpt_path}")
    print(f"final loss {trajectory[-1]:.6g} after {config.steps} steps"
          + (f" ({state.faults} rejected steps)" if state.faults else ""))
    return 0


# ---- parser ---------------------------------------------------------------

def _add_report_options(p):
    p.add_argument("--report", required=True, help="output report path")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the generated-at header for byte-stable output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdmesh",
        description="primal-dual graph network mesh denoising toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="denoise a mesh with a checkpoint")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("train", help="train from a key=value config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metric table over a manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test",
                   choices=("train", "test-intra", "test-inter", "test", "all"))
    p.add_argument("--kind", default="gaussian", choices=KINDS)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--noise-seed", type=int, default=0)
    _add_report_options(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("noise", help="add parametric noise to a mesh")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--p-pos", type=float, default=0.15)
    p.add_argument("--p-neg", type=float, default=0.15)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_noise)

    p = sub.add_parser("features",
                       help="per-vertex local geometry features to CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--no-timestamp", action="store_true")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("equivariance",
                       help="rotate-then-denoise vs denoise-then-rotate")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--rotations", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="test",
                   choices=("train", "test-intra", "test-inter", "test", "all"))
    _add_report_options(p)
    p.set_defaults(func=cmd_equivariance)

    p = sub.add_parser("bench", help="forward-pass wall time vs mesh size")
    p.add_argument("--min-verts", type=int, required=True)
    p.add_argument("--max-verts", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--k-tf", type=int, default=64)
    p.add_argument("--backend", default="auto",
                   choices=("auto", "python", "compiled"))
    p.add_argument("--compare-backends", action="store_true")
    _add_report_options(p)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
