"""Reading and writing point clouds (XYZ, ASCII PLY) and triangle meshes."""

from __future__ import annotations

import os

import numpy as np

from .cloud import PointCloud, TriangleMesh, _positive_area
from .errors import InvalidInputError


def read_xyz(path: str | os.PathLike) -> PointCloud:
    """Read a whitespace-separated coordinate file.

    One point per line; lines starting with ``#`` are comments; blank lines
    are ignored. Dimension (2 or 3) is inferred from the first point.
    """
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            try:
                row = [float(p) for p in parts]
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: not a coordinate line: {stripped!r}") from exc
            if rows and len(row) != len(rows[0]):
                raise InvalidInputError(
                    f"{path}:{lineno}: expected {len(rows[0])} coordinates, got {len(row)}"
                )
            rows.append(row)
    if not rows:
        raise InvalidInputError(f"{path}: no points found")
    return PointCloud(np.asarray(rows, dtype=np.float64))


def write_xyz(path: str | os.PathLike, cloud: PointCloud) -> None:
    """Write a cloud as one point per line, full-precision, LF line endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in cloud.points:
            fh.write(" ".join(repr(float(c)) for c in row) + "\n")


def _parse_ply_header(fh):
    magic = fh.readline().strip()
    if magic != "ply":
        raise InvalidInputError("not a PLY file (missing 'ply' magic)")
    fmt = None
    elements: list[tuple[str, int, list[str]]] = []
    while True:
        line = fh.readline()
        if not line:
            raise InvalidInputError("unexpected end of PLY header")
        tokens = line.strip().split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise InvalidInputError("PLY property before any element")
            elements[-1][2].append(tokens[-1])
        elif tokens[0] == "end_header":
            break
    if fmt != "ascii":
        raise InvalidInputError(f"only ASCII PLY is supported, got format {fmt!r}")
    return elements


def _read_ply_elements(path):
    with open(path, "r", encoding="utf-8") as fh:
        elements = _parse_ply_header(fh)
        data: dict[str, list[list[str]]] = {}
        for name, count, _props in elements:
            rows = []
            for _ in range(count):
                line = fh.readline()
                if not line:
                    raise InvalidInputError(f"{path}: PLY body ends inside element {name!r}")
                rows.append(line.split())
            data[name] = rows
    return elements, data


def _vertex_array(elements, data, path) -> np.ndarray:
    for name, count, props in elements:
        if name != "vertex":
            continue
        try:
            ix, iy, iz = props.index("x"), props.index("y"), props.index("z")
        except ValueError as exc:
            raise InvalidInputError(f"{path}: vertex element lacks x/y/z properties") from exc
        verts = np.empty((count, 3), dtype=np.float64)
        for i, row in enumerate(data[name]):
            verts[i] = (float(row[ix]), float(row[iy]), float(row[iz]))
        return verts
    raise InvalidInputError(f"{path}: PLY file has no vertex element")


def read_ply(path: str | os.PathLike) -> PointCloud:
    """Read the vertices of an ASCII PLY file as a point cloud."""
    elements, data = _read_ply_elements(path)
    return PointCloud(_vertex_array(elements, data, path))


def read_ply_mesh(path: str | os.PathLike) -> TriangleMesh:
    """Read an ASCII PLY file as a triangle mesh.

    Faces must be triangles; degenerate (zero-area) triangles are dropped.
    """
    elements, data = _read_ply_elements(path)
    verts = _vertex_array(elements, data, path)
    tris: list[tuple[int, int, int]] = []
    for name, _count, _props in elements:
        if name != "face":
            continue
        for row in data[name]:
            k = int(row[0])
            if k != 3:
                raise InvalidInputError(f"{path}: only triangular faces supported, got {k}-gon")
            tris.append((int(row[1]), int(row[2]), int(row[3])))
    if not tris:
        raise InvalidInputError(f"{path}: PLY file has no faces")
    tri_arr = np.asarray(tris, dtype=np.intp)
    if tri_arr.min() < 0 or tri_arr.max() >= verts.shape[0]:
        raise InvalidInputError(f"{path}: face indices out of vertex range")
    tri_arr = tri_arr[_positive_area(verts, tri_arr)]
    if tri_arr.shape[0] == 0:
        raise InvalidInputError(f"{path}: all faces are degenerate")
    return TriangleMesh(verts, tri_arr)


def read_cloud(path: str | os.PathLike) -> PointCloud:
    """Read a point cloud, dispatching on file extension (.ply vs XYZ-style)."""
    if str(path).lower().endswith(".ply"):
        return read_ply(path)
    return read_xyz(path)
