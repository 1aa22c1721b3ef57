"""Mesh file parsing and serialization (OBJ subset, OFF) and manifests.

Only positions and triangle connectivity are modeled, so the OBJ reader
handles ``v`` and ``f`` records (texture/normal suffixes on face entries
are discarded) and the writer emits nothing else.  Polygonal faces are
fan-triangulated.  Malformed input is rejected with the offending line
number rather than repaired.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .mesh import Mesh


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def _as_text(data) -> str:
    if isinstance(data, bytes):
        try:
            return data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not valid UTF-8 text: {exc}") from None
    return data


def _fan_triangulate(polygon: list[int]) -> list[list[int]]:
    return [[polygon[0], polygon[i], polygon[i + 1]]
            for i in range(1, len(polygon) - 1)]


def _build_mesh(vertices, faces, face_lines) -> Mesh:
    if not vertices:
        raise ParseError("no vertices found")
    if not faces:
        raise ParseError("no faces found")
    n = len(vertices)
    for tri, line in zip(faces, face_lines):
        if min(tri) < 0 or max(tri) >= n:
            raise ParseError(f"face index out of range (have {n} vertices)",
                             line)
        if len(set(tri)) != 3:
            raise ParseError("face repeats a vertex", line)
    return Mesh(np.array(vertices, dtype=np.float64),
                np.array(faces, dtype=np.int64))


def parse_obj(data) -> Mesh:
    """Wavefront OBJ subset: ``v`` and ``f`` records only."""
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    face_lines: list[int] = []
    for lineno, raw in enumerate(_as_text(data).splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        keyword = tokens[0]
        if keyword == "v":
            if len(tokens) != 4:
                raise ParseError("vertex record needs exactly 3 coordinates",
                                 lineno)
            try:
                vertices.append([float(t) for t in tokens[1:]])
            except ValueError:
                raise ParseError("non-numeric vertex coordinate",
                                 lineno) from None
        elif keyword == "f":
            if len(tokens) < 4:
                raise ParseError("face needs at least 3 vertices", lineno)
            polygon = []
            for token in tokens[1:]:
                head = token.split("/", 1)[0]
                try:
                    index = int(head)
                except ValueError:
                    raise ParseError(f"bad face index {token!r}",
                                     lineno) from None
                if index < 1:
                    raise ParseError(
                        f"face index {index} must be positive (1-based)",
                        lineno)
                polygon.append(index - 1)
            for tri in _fan_triangulate(polygon):
                faces.append(tri)
                face_lines.append(lineno)
        # other record types (vn, vt, o, g, s, usemtl, ...) are ignored
    return _build_mesh(vertices, faces, face_lines)


def write_obj(mesh: Mesh) -> str:
    """Deterministic OBJ text: shortest round-trip decimals, v then f."""
    lines = []
    for x, y, z in mesh.positions:
        lines.append(f"v {x!r} {y!r} {z!r}")
    for a, b, c in mesh.faces + 1:
        lines.append(f"f {a} {b} {c}")
    return "\n".join(lines) + "\n"


def parse_off(data) -> Mesh:
    """OFF reader with fan triangulation of polygonal faces."""
    rows = []  # (lineno, tokens) with comments and blanks removed
    for lineno, raw in enumerate(_as_text(data).splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if tokens:
            rows.append((lineno, tokens))
    if not rows:
        raise ParseError("empty OFF file: missing header")
    lineno, header = rows[0]
    if header[0] != "OFF":
        raise ParseError("missing OFF header", lineno)
    if len(header) == 1:
        rows = rows[1:]
        if not rows:
            raise ParseError("missing element counts after OFF header")
        lineno, counts = rows[0]
    elif len(header) == 4:
        counts = header[1:]
    else:
        raise ParseError("malformed OFF header", lineno)
    try:
        n_verts, n_faces, _ = (int(c) for c in counts)
    except ValueError:
        raise ParseError("element counts must be integers", lineno) from None
    if n_verts < 0 or n_faces < 0:
        raise ParseError("negative element count", lineno)
    body = rows[1:]
    if len(body) < n_verts:
        raise ParseError(
            f"vertex section truncated: expected {n_verts} rows, "
            f"found {len(body)}")
    vertices = []
    for lineno, tokens in body[:n_verts]:
        if len(tokens) != 3:
            raise ParseError("vertex row needs exactly 3 coordinates", lineno)
        try:
            vertices.append([float(t) for t in tokens])
        except ValueError:
            raise ParseError("non-numeric vertex coordinate", lineno) from None
    face_rows = body[n_verts:]
    if len(face_rows) < n_faces:
        raise ParseError(
            f"face section truncated: expected {n_faces} rows, "
            f"found {len(face_rows)}")
    if len(face_rows) > n_faces:
        raise ParseError("trailing rows after the face section",
                         face_rows[n_faces][0])
    faces, face_lines = [], []
    for lineno, tokens in face_rows:
        try:
            arity = int(tokens[0])
            polygon = [int(t) for t in tokens[1:]]
        except ValueError:
            raise ParseError("non-integer face entry", lineno) from None
        if arity < 3:
            raise ParseError(f"face arity {arity} < 3", lineno)
        if len(polygon) != arity:
            raise ParseError(
                f"face row lists {len(polygon)} indices, declared {arity}",
                lineno)
        for tri in _fan_triangulate(polygon):
            faces.append(tri)
            face_lines.append(lineno)
    return _build_mesh(vertices, faces, face_lines)


def load_mesh(path) -> Mesh:
    """Parse by extension: .obj or .off."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return parse_obj(path.read_text())
    if suffix == ".off":
        return parse_off(path.read_text())
    raise ParseError(f"unsupported mesh format {suffix!r} for {path}")


def save_mesh(path, mesh: Mesh) -> None:
    path = Path(path)
    if path.suffix.lower() != ".obj":
        raise ParseError(f"only .obj output is supported, got {path.suffix!r}")
    path.write_text(write_obj(mesh))


# ---- dataset manifest ---------------------------------------------------

SPLITS = ("train", "test-intra", "test-inter")


@dataclass(frozen=True)
class DatasetManifest:
    train: tuple[str, ...]
    test_intra: tuple[str, ...]
    test_inter: tuple[str, ...]

    def split(self, name: str) -> tuple[str, ...]:
        if name == "train":
            return self.train
        if name == "test-intra":
            return self.test_intra
        if name == "test-inter":
            return self.test_inter
        if name == "test":
            return self.test_intra + self.test_inter
        if name == "all":
            return self.train + self.test_intra + self.test_inter
        raise ValueError(f"unknown split {name!r}")


def parse_manifest(data) -> DatasetManifest:
    """Sections ``[train]``, ``[test-intra]``, ``[test-inter]``; one path
    per line; a path may appear in only one split."""
    sections: dict[str, list[str]] = {s: [] for s in SPLITS}
    current: str | None = None
    for lineno, raw in enumerate(_as_text(data).splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in sections:
                raise ParseError(f"unknown manifest section {name!r}", lineno)
            current = name
            continue
        if current is None:
            raise ParseError("path listed before any section header", lineno)
        sections[current].append(line)
    seen: dict[str, str] = {}
    for split_name, paths in sections.items():
        for p in paths:
            if p in seen:
                raise ParseError(
                    f"path {p!r} appears in both {seen[p]!r} and {split_name!r}")
            seen[p] = split_name
    return DatasetManifest(train=tuple(sections["train"]),
                           test_intra=tuple(sections["test-intra"]),
                           test_inter=tuple(sections["test-inter"]))


def load_manifest(path) -> tuple[DatasetManifest, Path]:
    """Parse a manifest file; paths resolve relative to its directory."""
    path = Path(path)
    return parse_manifest(path.read_text()), path.parent
