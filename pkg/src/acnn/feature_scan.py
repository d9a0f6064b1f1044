"""Boundary-feature detection and feature-channel bookkeeping.

A feature channel is a uint8 grid of 0/1 whose ones mark the upper-left
corner of a 5x5 window worth turning into a kernel. All functions here are
pure and return new arrays.
"""

from __future__ import annotations

import numpy as np

KERNEL_SIZE = 5
# the "central" 2x2 of a 5x5 window sits at offsets 2..3
CENTER = slice(2, 4)


def _central_blocks(grid: np.ndarray) -> np.ndarray:
    """All central 2x2 blocks of the 5x5 windows, shape (H-4, W-4, 2, 2)."""
    grid = np.asarray(grid)
    h, w = grid.shape
    if h < KERNEL_SIZE or w < KERNEL_SIZE:
        raise ValueError(f"grid {h}x{w} is smaller than a {KERNEL_SIZE}x{KERNEL_SIZE} window")
    windows = np.lib.stride_tricks.sliding_window_view(grid, (KERNEL_SIZE, KERNEL_SIZE))
    return windows[:, :, CENTER, CENTER]


def scan_boundary_features(img: np.ndarray, step: int = 2) -> np.ndarray:
    """Mark windows whose central 2x2 mixes background (0) and ink (255).

    Only windows whose origin lies on the ``step`` lattice are visited;
    unvisited cells stay 0. Output is (H-4, W-4).
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    centers = _central_blocks(img)
    mixed = (centers == 0).any(axis=(2, 3)) & (centers == 255).any(axis=(2, 3))
    out = np.zeros(mixed.shape, dtype=np.uint8)
    out[::step, ::step] = mixed[::step, ::step]
    return out


def build_layer2_feature_channel(real: np.ndarray) -> np.ndarray:
    """1 wherever the real channel is strictly positive."""
    return (np.asarray(real) > 0).astype(np.uint8)


def thin_features(fc: np.ndarray, real: np.ndarray, min_value: float = 127,
                  min_distance: int = 5) -> np.ndarray:
    """Drop weak features and features crowding an earlier one.

    A one survives if its real value is >= ``min_value`` and no previously
    kept one (row-major order) is within Chebyshev distance < ``min_distance``.
    """
    fc = np.asarray(fc)
    real = np.asarray(real)
    if fc.shape != real.shape:
        raise ValueError(f"shape mismatch: features {fc.shape}, real {real.shape}")
    out = np.zeros_like(fc, dtype=np.uint8)
    kept: list[tuple[int, int]] = []
    for r, c in zip(*np.nonzero(fc)):
        if real[r, c] < min_value:
            continue
        if any(max(abs(r - kr), abs(c - kc)) < min_distance for kr, kc in kept):
            continue
        kept.append((r, c))
        out[r, c] = 1
    return out


def pool_feature_channel(fc: np.ndarray) -> np.ndarray:
    """2x2 stride-2 pooling: a block becomes 1 if it holds any 1."""
    fc = np.asarray(fc)
    h, w = fc.shape
    if h % 2 or w % 2:
        raise ValueError(f"cannot pool odd-sized channel {h}x{w}")
    blocks = fc.reshape(h // 2, 2, w // 2, 2)
    return blocks.any(axis=(1, 3)).astype(np.uint8)


def convolve_feature_channel(fc: np.ndarray) -> np.ndarray:
    """Map feature cells to origins of 5x5 windows that center on them.

    Output cell (r, c) is 1 iff the central 2x2 of the window at (r, c)
    contains a 1. Shrinks each side by 4 (12 -> 8, 24 -> 20).
    """
    centers = _central_blocks(fc)
    return (centers != 0).any(axis=(2, 3)).astype(np.uint8)
