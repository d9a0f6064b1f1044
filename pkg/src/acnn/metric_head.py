"""Fully-connected head implementing the nearest-neighbour method.

Three layers built from the exemplars' final channels:

* zero layer (construction only): each exemplar's channels smeared into a
  field where a cell holds the strongest ``p/1000 / (1 + d^2)`` from any
  source cell;
* first layer: one neuron per ordered exemplar pair (n1, n2), weights
  ``w0[n1] - w0[n2]`` and a threshold halfway between the two exemplars'
  own states, so it fires when the input looks more like n1 than n2;
* second layer: class k counts the pairs (k, *) it won, minus N-1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _denominators(h: int, w: int) -> np.ndarray:
    """(h*w, h*w) table of 1 + di^2 + dj^2 between target and source cells."""
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    d = (ii[:, None] - ii[None, :]) ** 2 + (jj[:, None] - jj[None, :]) ** 2
    return (1 + d).astype(np.float64)


def compute_zero_layer(channels: np.ndarray, chunk: int = 16) -> np.ndarray:
    """Zero-layer weight tables, same shape as ``channels`` (..., H, W).

    w0[..., i, j] = max over (il, jl) of (p[..., il, jl] / 1000) / (1 + (i-il)^2 + (j-jl)^2)
    """
    channels = np.asarray(channels, dtype=np.float64)
    *lead, h, w = channels.shape
    flat = channels.reshape(-1, h * w) / 1000.0
    denom = _denominators(h, w)
    out = np.empty_like(flat)
    for start in range(0, len(flat), chunk):
        block = flat[start:start + chunk]
        out[start:start + chunk] = (block[:, None, :] / denom[None]).max(axis=2)
    return out.reshape(channels.shape)


def ordered_pairs(n: int) -> list[tuple[int, int]]:
    """All (n1, n2) with n1 != n2, n1-major, as in the threshold table."""
    return [(a, b) for a in range(n) for b in range(n) if a != b]


@dataclass(frozen=True)
class MetricHead:
    pairs: tuple  # ordered (n1, n2) pairs, length N*(N-1)
    w1: np.ndarray  # (P, C, H, W)
    wh1: np.ndarray  # (N, N), diagonal unused (0)
    w2: np.ndarray  # (N, P) of 0/1
    wh2: float

    @property
    def n_classes(self) -> int:
        return len(self.wh1)

    @property
    def channel_shape(self) -> tuple:
        return self.w1.shape[1:]

    def _upper(self) -> tuple[np.ndarray, np.ndarray]:
        idx = [p for p, (a, b) in enumerate(self.pairs) if a < b]
        return np.asarray(idx), np.asarray([self.pairs[p] for p in idx])


def compute_first_layer(w0: np.ndarray, channels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pairwise weight tables and thresholds.

    Returns ``w1`` of shape (N*(N-1), C, H, W) in :func:`ordered_pairs`
    order and the (N, N) threshold table. Only n1 < n2 is computed; the
    mirrored entries are exact negations.
    """
    w0 = np.asarray(w0, dtype=np.float64)
    channels = np.asarray(channels, dtype=np.float64)
    n = len(w0)
    if n < 2:
        raise ValueError("need at least two exemplars")
    if channels.shape != w0.shape:
        raise ValueError(f"channels {channels.shape} do not match zero layer {w0.shape}")
    pairs = ordered_pairs(n)
    index = {p: i for i, p in enumerate(pairs)}
    w1 = np.empty((len(pairs),) + w0.shape[1:])
    wh1 = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            w = w0[a] - w0[b]
            w1[index[(a, b)]] = w
            w1[index[(b, a)]] = -w
            s_a = float(np.sum(channels[a] * w))
            s_b = float(np.sum(channels[b] * w))
            wh1[a, b] = -(s_a + s_b) / 2.0
            wh1[b, a] = -wh1[a, b]
    return w1, wh1


def second_layer(n: int) -> tuple[np.ndarray, float]:
    pairs = ordered_pairs(n)
    w2 = np.zeros((n, len(pairs)), dtype=np.float64)
    for p, (a, _) in enumerate(pairs):
        w2[a, p] = 1.0
    return w2, -(n - 1.0)


def build_head(channels: np.ndarray) -> MetricHead:
    """Head for exemplar final channels of shape (N, C, H, W)."""
    channels = np.asarray(channels, dtype=np.float64)
    w0 = compute_zero_layer(channels)
    w1, wh1 = compute_first_layer(w0, channels)
    w2, wh2 = second_layer(len(channels))
    return MetricHead(pairs=tuple(ordered_pairs(len(channels))), w1=w1, wh1=wh1, w2=w2, wh2=wh2)


def first_layer_preactivations(head: MetricHead, channels: np.ndarray) -> np.ndarray:
    """(N, N) matrix of S + Wh1 per pair; antisymmetric, diagonal 0."""
    channels = np.asarray(channels, dtype=np.float64)
    if channels.shape != head.channel_shape:
        raise ValueError(f"input channels {channels.shape}, head expects {head.channel_shape}")
    idx, pairs = head._upper()
    n = head.n_classes
    pre = np.zeros((n, n))
    if len(idx):
        flat_w = head.w1[idx].reshape(len(idx), -1)
        s = np.array([float(np.dot(row, channels.ravel())) for row in flat_w])
        up = s + head.wh1[pairs[:, 0], pairs[:, 1]]
        pre[pairs[:, 0], pairs[:, 1]] = up
        pre[pairs[:, 1], pairs[:, 0]] = -up
    return pre


def classify(head: MetricHead, channels: np.ndarray) -> tuple[int, np.ndarray]:
    """Class index and second-layer nets for one input's final channels.

    A first-layer neuron fires on a strictly positive pre-activation; ties
    between nets go to the lowest class index.
    """
    pre = first_layer_preactivations(head, channels)
    fires = np.array([1.0 if pre[a, b] > 0 else 0.0 for a, b in head.pairs])
    nets = head.w2 @ fires + head.wh2
    return int(np.argmax(nets)), nets
