"""MNIST IDX parsing, binarization and exemplar selection."""

from __future__ import annotations

import gzip
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
IMAGE_SIZE = 28
THRESHOLD = 127


class IdxFormatError(ValueError):
    """Base class for malformed IDX files."""


class MagicMismatchError(IdxFormatError):
    pass


class TruncatedFileError(IdxFormatError):
    pass


class DimensionMismatchError(IdxFormatError):
    pass


class ExemplarSelectionError(ValueError):
    pass


def _read_bytes(path) -> bytes:
    with open(path, "rb") as f:
        data = f.read()
    # transparent gzip support
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    return data


def _parse_header(data: bytes, magic: int, ndim: int, path) -> tuple:
    if len(data) < 4:
        raise TruncatedFileError(f"{path}: file too short for IDX magic ({len(data)} bytes)")
    found = int.from_bytes(data[0:4], "big")
    if found != magic:
        raise MagicMismatchError(
            f"{path}: magic 0x{found:08x}, expected 0x{magic:08x}")
    header_len = 4 + 4 * ndim
    if len(data) < header_len:
        raise TruncatedFileError(f"{path}: file too short for IDX header ({len(data)} bytes)")
    dims = tuple(int.from_bytes(data[4 + 4 * i:8 + 4 * i], "big") for i in range(ndim))
    expected = header_len + int(np.prod(dims))
    if len(data) < expected:
        raise TruncatedFileError(
            f"{path}: {len(data)} bytes, header promises {expected}")
    return dims


def load_idx_images(path, rows: int = IMAGE_SIZE, cols: int = IMAGE_SIZE) -> np.ndarray:
    """Read an IDX3 image file into a ``(count, rows, cols)`` uint8 array."""
    data = _read_bytes(path)
    count, r, c = _parse_header(data, IMAGE_MAGIC, 3, path)
    if (r, c) != (rows, cols):
        raise DimensionMismatchError(f"{path}: images are {r}x{c}, expected {rows}x{cols}")
    arr = np.frombuffer(data, dtype=np.uint8, count=count * r * c, offset=16)
    return arr.reshape(count, r, c).copy()


def load_idx_labels(path) -> np.ndarray:
    """Read an IDX1 label file into a ``(count,)`` uint8 array."""
    data = _read_bytes(path)
    (count,) = _parse_header(data, LABEL_MAGIC, 1, path)
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8).copy()


def binarize(pixels: np.ndarray) -> np.ndarray:
    """Threshold at 127: values above become 255, the rest 0.

    Works on a single image or a stack; returns uint8.
    """
    pixels = np.asarray(pixels)
    return np.where(pixels > THRESHOLD, 255, 0).astype(np.uint8)


@dataclass(frozen=True)
class ExemplarSet:
    """One binarized image per class, ordered by class label."""

    images: np.ndarray  # (n_classes, 28, 28) uint8 in {0, 255}
    labels: np.ndarray
    source_indices: tuple = field(default=())

    def __len__(self) -> int:
        return len(self.images)


def select_exemplars(images: np.ndarray, labels: Sequence[int], *,
                     seed: Optional[int] = None,
                     indices: Optional[Sequence[int]] = None,
                     n_classes: int = 10) -> ExemplarSet:
    """Pick one image per class.

    Explicit ``indices`` are used verbatim (one per class, any order; the
    result is sorted by label). Otherwise one index per class is drawn with
    ``numpy.random.default_rng(seed)``, visiting classes in ascending order.
    Images are binarized on the way out.
    """
    labels = np.asarray(labels)
    if len(labels) != len(images):
        raise ExemplarSelectionError(
            f"{len(images)} images but {len(labels)} labels")
    if indices is not None:
        indices = [int(i) for i in indices]
        for i in indices:
            if not 0 <= i < len(images):
                raise ExemplarSelectionError(f"index {i} out of range")
        chosen = {}
        for i in indices:
            lab = int(labels[i])
            if lab in chosen:
                raise ExemplarSelectionError(
                    f"indices {chosen[lab]} and {i} both have class {lab}")
            chosen[lab] = i
        missing = [c for c in range(n_classes) if c not in chosen]
        if missing:
            raise ExemplarSelectionError(f"class {missing[0]} unavailable in given indices")
        extra = sorted(set(chosen) - set(range(n_classes)))
        if extra:
            raise ExemplarSelectionError(f"class {extra[0]} outside 0..{n_classes - 1}")
        picked = [chosen[c] for c in range(n_classes)]
    else:
        rng = np.random.default_rng(seed)
        picked = []
        for c in range(n_classes):
            pool = np.flatnonzero(labels == c)
            if len(pool) == 0:
                raise ExemplarSelectionError(f"class {c} unavailable")
            picked.append(int(pool[rng.integers(len(pool))]))
    picked_arr = np.array(picked)
    return ExemplarSet(images=binarize(np.asarray(images)[picked_arr]),
                       labels=labels[picked_arr].astype(np.int64),
                       source_indices=tuple(picked))


def find_data_file(name: str, kind: str = "images", data_dir: Optional[str] = None) -> Optional[str]:
    """Resolve a short dataset name such as ``t10k`` to an existing IDX file.

    Looks at ``name`` itself, then common MNIST suffixes (optionally
    gzipped), first relative to the working directory and then inside
    ``data_dir`` (default: ``$ACNN_DATA_DIR``).
    """
    suffix = "idx3-ubyte" if kind == "images" else "idx1-ubyte"
    stems = [name, f"{name}-{suffix}", f"{name}-{kind}-{suffix}"]
    if name.endswith("-labels") or name.endswith("-images"):
        stems.append(f"{name}-{suffix}")
    candidates = []
    for stem in stems:
        candidates += [stem, stem + ".gz"]
    dirs = [""]
    data_dir = data_dir if data_dir is not None else os.environ.get("ACNN_DATA_DIR")
    if data_dir:
        dirs.append(data_dir)
    for d in dirs:
        for cand in candidates:
            path = os.path.join(d, cand) if d else cand
            if os.path.isfile(path):
                return path
    return None
