"""ASCII OBJ and PLY readers and writers for meshes and point sets."""

from __future__ import annotations

import logging
from collections.abc import Iterator
from pathlib import Path

import numpy as np

from motionfield.errors import ContractError, ParseError
from motionfield.geometry.mesh import FloatArray, IndexArray, Mesh, PointSet

logger = logging.getLogger(__name__)

PathLike = str | Path


def _fmt(value: float) -> str:
    return f"{value:.9g}"


def _numbered(text: str) -> Iterator[tuple[int, list[str]]]:
    for number, line in enumerate(text.splitlines(), start=1):
        tokens = line.split("#", 1)[0].split()
        if tokens:
            yield number, tokens


def _floats(tokens: list[str], count: int, line: int) -> list[float]:
    if len(tokens) < count:
        raise ParseError(f"expected {count} numbers, got {len(tokens)}", line)
    try:
        return [float(tok) for tok in tokens[:count]]
    except ValueError:
        raise ParseError(f"malformed number in {' '.join(tokens)!r}", line) from None


# OBJ


def parse_obj(text: str) -> Mesh:
    """Parse v/f records; other record types are skipped, polygons are fan-triangulated."""
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for line, tokens in _numbered(text):
        kind, rest = tokens[0], tokens[1:]
        if kind == "v":
            vertices.append(_floats(rest, 3, line))
        elif kind == "f":
            if len(rest) < 3:
                raise ParseError("face needs at least 3 vertices", line)
            corners: list[int] = []
            for tok in rest:
                try:
                    index = int(tok.split("/", 1)[0])
                except ValueError:
                    raise ParseError(f"malformed face index {tok!r}", line) from None
                if index == 0:
                    raise ParseError("OBJ indices are 1-based", line)
                resolved = index - 1 if index > 0 else len(vertices) + index
                if not 0 <= resolved < len(vertices):
                    raise ParseError(f"face index {index} refers to an undefined vertex", line)
                corners.append(resolved)
            faces.extend(
                [corners[0], corners[i], corners[i + 1]] for i in range(1, len(corners) - 1)
            )
    return Mesh(
        np.array(vertices, dtype=np.float64).reshape(-1, 3),
        np.array(faces, dtype=np.int64).reshape(-1, 3),
    )


def format_obj(mesh: Mesh, normals: FloatArray | None = None) -> str:
    """v and f records; with normals, also vn records referenced as v//vn."""
    lines = [f"v {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in mesh.vertices]
    if normals is None:
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    else:
        if normals.shape != mesh.vertices.shape:
            raise ContractError("one normal per vertex is required")
        lines += [f"vn {_fmt(x)} {_fmt(y)} {_fmt(z)}" for x, y, z in normals]
        lines += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}" for a, b, c in mesh.faces]
    return "\n".join(lines) + "\n"


# PLY


class _PlyHeader:
    def __init__(self) -> None:
        self.elements: list[tuple[str, int, list[str]]] = []
        self.body_line = 0


def _parse_ply_header(lines: list[str]) -> _PlyHeader:
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic", 1)
    header = _PlyHeader()
    for number, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] != "ascii":
                raise ParseError("only ASCII PLY is supported", number)
        elif tokens[0] == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise ParseError("malformed element declaration", number)
            header.elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not header.elements:
                raise ParseError("property before any element", number)
            header.elements[-1][2].append(tokens[-1])
        elif tokens[0] == "end_header":
            header.body_line = number
            return header
        else:
            raise ParseError(f"unknown header keyword {tokens[0]!r}", number)
    raise ParseError("missing end_header", len(lines))


def _parse_ply(text: str) -> tuple[FloatArray, FloatArray | None, IndexArray]:
    lines = text.splitlines()
    header = _parse_ply_header(lines)
    cursor = header.body_line
    vertices: FloatArray = np.zeros((0, 3))
    normals: FloatArray | None = None
    faces: list[list[int]] = []
    for name, count, props in header.elements:
        rows = lines[cursor : cursor + count]
        if len(rows) < count:
            raise ParseError(f"expected {count} {name} records", len(lines) + 1)
        if name == "vertex":
            try:
                cols = [props.index(axis) for axis in ("x", "y", "z")]
            except ValueError:
                raise ParseError("vertex element lacks x, y or z", header.body_line) from None
            has_normals = all(n in props for n in ("nx", "ny", "nz"))
            table = np.array(
                [_floats(row.split(), len(props), cursor + i + 1) for i, row in enumerate(rows)],
                dtype=np.float64,
            ).reshape(count, len(props))
            vertices = table[:, cols]
            if has_normals:
                normals = table[:, [props.index(n) for n in ("nx", "ny", "nz")]]
        elif name == "face":
            for i, row in enumerate(rows):
                line = cursor + i + 1
                values = _floats(row.split(), 1, line)
                size = int(values[0])
                indices = [int(v) for v in _floats(row.split(), size + 1, line)[1:]]
                if size < 3 or any(not 0 <= j < len(vertices) for j in indices):
                    raise ParseError("invalid face record", line)
                faces.extend([indices[0], indices[k], indices[k + 1]] for k in range(1, size - 1))
        cursor += count
    return vertices, normals, np.array(faces, dtype=np.int64).reshape(-1, 3)


def _ply_header(n_vertices: int, n_faces: int, with_normals: bool) -> list[str]:
    lines = ["ply", "format ascii 1.0", f"element vertex {n_vertices}"]
    lines += [f"property float {axis}" for axis in ("x", "y", "z")]
    if with_normals:
        lines += [f"property float {axis}" for axis in ("nx", "ny", "nz")]
    if n_faces:
        lines += [f"element face {n_faces}", "property list uchar int vertex_indices"]
    lines.append("end_header")
    return lines


def format_ply(mesh: Mesh) -> str:
    lines = _ply_header(mesh.n_vertices, mesh.n_faces, False)
    lines += [" ".join(_fmt(c) for c in v) for v in mesh.vertices]
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.faces]
    return "\n".join(lines) + "\n"


# Public entry points


def _read_text(path: Path) -> str:
    raw = path.read_bytes()
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        line = raw.count(b"\n", 0, exc.start) + 1
        raise ParseError(f"invalid UTF-8 byte in {path.name}", line) from None


def load_mesh(path: PathLike) -> Mesh:
    """Read an OBJ or ASCII PLY mesh, chosen by file suffix."""
    p = Path(path)
    text = _read_text(p)
    suffix = p.suffix.lower()
    if suffix == ".obj":
        mesh = parse_obj(text)
    elif suffix == ".ply":
        vertices, _, faces = _parse_ply(text)
        mesh = Mesh(vertices, faces)
    else:
        raise ContractError(f"unsupported mesh format {suffix!r}")
    degenerate = mesh.degenerate_faces()
    if degenerate.size:
        logger.warning("%s: %d zero-area faces", p.name, degenerate.size)
    return mesh


def save_mesh(mesh: Mesh, path: PathLike, normals: FloatArray | None = None) -> None:
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".obj":
        p.write_text(format_obj(mesh, normals), encoding="utf-8")
    elif suffix == ".ply":
        p.write_text(format_ply(mesh), encoding="utf-8")
    else:
        raise ContractError(f"unsupported mesh format {suffix!r}")


def load_points(path: PathLike) -> PointSet:
    """Read the vertex element (and normals, when present) of an ASCII PLY file."""
    vertices, normals, _ = _parse_ply(_read_text(Path(path)))
    if normals is not None:
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.where(lengths > 0.0, lengths, 1.0)
    return PointSet(vertices, normals)


def save_points(points: PointSet, path: PathLike) -> None:
    with_normals = points.normals is not None
    lines = _ply_header(len(points), 0, with_normals)
    table = points.points if points.normals is None else np.hstack([points.points, points.normals])
    lines += [" ".join(_fmt(c) for c in row) for row in table]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
