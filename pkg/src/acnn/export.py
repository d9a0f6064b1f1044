"""Text and image dumps of kernels, channels and head tables."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import numpy as np


def _fmt(v) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def grid_csv(grid: np.ndarray) -> str:
    """One CSV row per grid row; integral values print without a decimal point."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {grid.shape}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in grid:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def grids_csv(grids: np.ndarray, names: Sequence[str]) -> str:
    """Several grids in one stream, each introduced by a ``# name`` line."""
    parts = []
    for name, g in zip(names, grids):
        parts.append(f"# {name}\n{grid_csv(g)}")
    return "\n".join(parts)


def to_gray8(grid: np.ndarray) -> np.ndarray:
    """Linearly map a grid onto 0..255 (min -> 0, max -> 255).

    Grids already inside 0..255 with no negatives keep their raw values so
    that real channels read as the neuron states they are.
    """
    g = np.asarray(grid, dtype=np.float64)
    if g.size == 0:
        return g.astype(np.uint8)
    lo, hi = float(g.min()), float(g.max())
    if lo >= 0 and hi <= 255:
        return np.rint(g).astype(np.uint8)
    if hi == lo:
        return np.zeros(g.shape, dtype=np.uint8)
    return np.rint((g - lo) * 255.0 / (hi - lo)).astype(np.uint8)


def pgm_bytes(grid: np.ndarray, scale: int = 1) -> bytes:
    """Binary PGM (P5, maxval 255), each cell blown up to ``scale`` pixels."""
    img = to_gray8(grid)
    if scale > 1:
        img = np.kron(img, np.ones((scale, scale), dtype=np.uint8))
    h, w = img.shape
    return f"P5\n{w} {h}\n255\n".encode() + img.tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    """Parse what :func:`pgm_bytes` writes (no comments, maxval 255)."""
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5" or int(parts[3]) != 255:
        raise ValueError("not an 8-bit P5 image")
    w, h = int(parts[1]), int(parts[2])
    pixels = data[len(data) - w * h:]
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)


def threshold_table_csv(wh1: np.ndarray) -> str:
    """The pairwise threshold table with an empty diagonal."""
    n = len(wh1)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n1\\n2"] + [str(j) for j in range(n)])
    for i in range(n):
        writer.writerow([str(i)] + ["" if i == j else _fmt(wh1[i, j]) for j in range(n)])
    return buf.getvalue()


def scores_csv(indices: Sequence[int], truth: Sequence[int], pred: Sequence[int],
               scores: np.ndarray) -> str:
    n_classes = scores.shape[1] if scores.ndim == 2 else 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "label", "predicted"] + [f"score_{k}" for k in range(n_classes)])
    for i, t, p, row in zip(indices, truth, pred, scores):
        writer.writerow([int(i), int(t), int(p)] + [_fmt(v) for v in row])
    return buf.getvalue()


def confusion_csv(confusion: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    n = len(confusion)
    writer.writerow(["true\\pred"] + [str(j) for j in range(n)])
    for i, row in enumerate(confusion):
        writer.writerow([str(i)] + [str(int(v)) for v in row])
    return buf.getvalue()


def write_pgms(grids: np.ndarray, names: Sequence[str], out_dir, scale: int = 8) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, g in zip(names, grids):
        p = out_dir / f"{name}.pgm"
        p.write_bytes(pgm_bytes(g, scale))
        paths.append(p)
    return paths
