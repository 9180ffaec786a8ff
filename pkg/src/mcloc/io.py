"""Point cloud text files and PGM heatmaps.

Clouds are plain text, one point per line: ``x y z`` or ``x y z nx ny nz``,
whitespace separated, ``#`` starting a comment.  All lines of one file
must have the same number of columns.
"""
from __future__ import annotations

import os
import tempfile
import warnings
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import MapCloud, ScanCloud

PathLike = Union[str, os.PathLike]


class CloudFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def read_xyz(path: PathLike) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """Parse a cloud file into points and (if present) normals."""
    rows = []
    width = None
    first_line = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            fields = text.split()
            if len(fields) not in (3, 6):
                raise CloudFormatError(path, lineno, f"expected 3 or 6 values, found {len(fields)}")
            if width is None:
                width, first_line = len(fields), lineno
            elif len(fields) != width:
                raise CloudFormatError(
                    path, lineno,
                    f"{len(fields)} columns but line {first_line} has {width}; "
                    "normals must be given for all points or none",
                )
            try:
                rows.append([float(v) for v in fields])
            except ValueError as exc:
                raise CloudFormatError(path, lineno, str(exc)) from None
    if not rows:
        return np.zeros((0, 3)), None
    arr = np.array(rows)
    if width == 6:
        return arr[:, :3].copy(), arr[:, 3:].copy()
    return arr, None


def load_scan(path: PathLike) -> ScanCloud:
    pts, normals = read_xyz(path)
    return ScanCloud(pts, normals)


def load_map(path: PathLike) -> MapCloud:
    pts, normals = read_xyz(path)
    if normals is None:
        if len(pts) == 0:
            return MapCloud(pts, np.zeros((0, 3)))
        raise CloudFormatError(path, 0, "map files need normals (6 columns)")
    return MapCloud(pts, normals)


def load_cloud(path: PathLike) -> ScanCloud:
    """Generic loader: points with optional normals."""
    return load_scan(path)


def _atomic_write(path: PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: PathLike, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


def save_cloud(path: PathLike, cloud: Union[ScanCloud, MapCloud], header: str = "") -> None:
    """Write ``x y z [nx ny nz]`` lines with round-trip exact floats."""
    cols = [cloud.points]
    if cloud.normals is not None:
        cols.append(cloud.normals)
    arr = np.hstack(cols) if len(cloud.points) else np.zeros((0, 3 * len(cols)))
    lines = []
    if header:
        lines.extend(f"# {h}" for h in header.splitlines())
    lines.append("# x y z" + (" nx ny nz" if len(cols) == 2 else ""))
    lines.extend(" ".join(repr(float(v)) for v in row) for row in arr)
    atomic_write_text(path, "\n".join(lines) + "\n")


def heatmap_bytes(grid) -> bytes:
    """Binary 8-bit PGM of a 2-D grid scaled so the maximum is 255.

    Row 0 of the image is the highest y (grid row ``n - 1``); negative
    values are clipped to 0.  An all-zero grid gives a black image and a
    warning.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim != 2 or g.size == 0:
        raise ValueError("heatmaps need a non-empty 2-D grid")
    top = float(np.max(g))
    if not top > 0:
        warnings.warn("grid maximum is zero; writing an all-black heatmap", RuntimeWarning)
        img = np.zeros(g.shape, dtype=np.uint8)
    else:
        img = np.floor(255.0 * np.clip(g, 0.0, None) / top + 0.5).astype(np.uint8)
    img = img[::-1]
    rows, cols = img.shape
    head = f"P5\n# row 0 is the highest y, column 0 the lowest x\n{cols} {rows}\n255\n"
    return head.encode("ascii") + img.tobytes()


def export_heatmap(grid, path: PathLike) -> None:
    _atomic_write(path, heatmap_bytes(grid))


def read_pgm(path: PathLike) -> np.ndarray:
    """Read a binary PGM written by :func:`export_heatmap`."""
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError("not a binary PGM")
    cols, rows, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval > 255:
        raise ValueError("only 8-bit PGM is supported")
    pixels = np.frombuffer(data[pos + 1:pos + 1 + rows * cols], dtype=np.uint8)
    return pixels.reshape(rows, cols)


def grid_csv(grid) -> str:
    """One 2-D slice as CSV text: row ``j`` holds cells ``i = 0 .. n-1``.

    Row 0 is the lowest y (grid row 0), unlike the heatmap image.
    """
    g = np.asarray(grid)
    if g.ndim != 2:
        raise ValueError("expected a 2-D grid")
    fmt = str if np.issubdtype(g.dtype, np.integer) else (lambda v: repr(float(v)))
    return "".join(",".join(fmt(v) for v in row) + "\n" for row in g.tolist())


def export_grids_csv(grids, directory: PathLike, stem: str) -> list[Path]:
    """Write ``<stem>_hNN.csv`` for every heading of an ``(h, n, n)`` stack."""
    g = np.asarray(grids)
    if g.ndim == 2:
        g = g[None]
    directory = Path(directory)
    paths = []
    for h, sl in enumerate(g):
        p = directory / f"{stem}_h{h:02d}.csv"
        atomic_write_text(p, grid_csv(sl))
        paths.append(p)
    return paths
