"""Analytic synthesis of the two convolutional layers.

Layer-1 kernels are cut straight from exemplar image patches, layer-2
kernels from stacks of layer-1 channel patches. Each kernel is rescaled so
that its response to its own source patch is exactly 255, and every
feature a kernel already responds to is consumed so that the next kernel
has to explain something new.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import feature_scan as fs

log = logging.getLogger(__name__)

MAIN_VALUE = 255.0
KSIZE = fs.KERNEL_SIZE


@dataclass(frozen=True)
class BuildConfig:
    K: float = 40.0
    use_pooling: bool = True
    use_image_channels: bool = True
    kernel_size: int = KSIZE
    scan_step: int = 2
    thin_min_value: float = 127.0
    thin_min_distance: int = 5
    # "proportional": layer-2 weights proportional to the source patch;
    # "signed": the layer-1 mapping 0 -> -1, 255 -> 1 applied per layer.
    layer2_weights: str = "proportional"
    # "detected": a new kernel consumes, in every exemplar, each feature it
    # responds to above K percent of its own main value; "source": it
    # consumes only the feature it was cut from.
    consume: str = "detected"

    def __post_init__(self):
        if not 0 < self.K <= 100:
            raise ValueError(f"K must be in (0, 100], got {self.K}")
        if self.kernel_size != KSIZE:
            raise ValueError("only 5x5 kernels are supported")
        if self.scan_step < 1:
            raise ValueError("scan_step must be >= 1")
        if self.layer2_weights not in ("proportional", "signed"):
            raise ValueError(f"unknown layer2_weights {self.layer2_weights!r}")
        if self.consume not in ("detected", "source"):
            raise ValueError(f"unknown consume rule {self.consume!r}")

    @property
    def consume_above_l1(self) -> Optional[float]:
        # layer-1 responses already have K percent subtracted as bias
        return 0.0 if self.consume == "detected" else None

    @property
    def consume_above_l2(self) -> Optional[float]:
        return self.K * MAIN_VALUE / 100.0 if self.consume == "detected" else None

    @property
    def label(self) -> str:
        pool = "pool" if self.use_pooling else "nopool"
        variant = "image" if self.use_image_channels else "merged"
        return f"K={self.K:g}/{pool}/{variant}"


@dataclass(frozen=True)
class FeaturePoint:
    owner: int  # exemplar index, -1 for the merged channel set
    row: int
    col: int


@dataclass(frozen=True)
class ConvKernel:
    weights: np.ndarray  # (5, 5)
    bias: float
    source: FeaturePoint


@dataclass(frozen=True)
class MultiKernel:
    weights: np.ndarray  # (C, 5, 5)
    source: FeaturePoint
    bias: float = 0.0


# ---------------------------------------------------------------------------
# kernel arithmetic


def synth_kernel(patch: np.ndarray, max_pixel: float = MAIN_VALUE) -> np.ndarray:
    """Map patch values linearly onto [-1, 1]: 0 -> -1, ``max_pixel`` -> 1.

    Works for a flat 5x5 patch or a (C, 5, 5) stack.
    """
    if max_pixel <= 0:
        raise ValueError("max_pixel must be positive (degenerate patch)")
    return np.asarray(patch, dtype=np.float64) * 2.0 / max_pixel - 1.0


def compute_bias(patch: np.ndarray, weights: np.ndarray, K: float) -> float:
    """K percent of the kernel's dot product with its source patch."""
    dot = float(np.sum(np.asarray(patch, dtype=np.float64) * weights))
    return K * dot / 100.0


def kernel_response(patch: np.ndarray, weights: np.ndarray, bias: float) -> float:
    """Pre-activation of a kernel placed on ``patch``."""
    return float(np.sum(np.asarray(patch, dtype=np.float64) * weights)) - bias


def correct_kernel(weights: np.ndarray, patch: np.ndarray, K: float
                   ) -> Optional[tuple[np.ndarray, float]]:
    """Rescale ``weights`` so the response to ``patch`` becomes 255.

    The bias is K percent of the dot product (K=0 gives a zero bias) and is
    recomputed after rescaling. Returns None when the uncorrected response
    is not positive: such a feature is skipped.
    """
    bias = compute_bias(patch, weights, K)
    main = kernel_response(patch, weights, bias)
    if main <= 0:
        return None
    t = main / MAIN_VALUE
    weights = weights / t
    return weights, compute_bias(patch, weights, K)


def synth_multikernel(patch: np.ndarray, source: FeaturePoint = FeaturePoint(-1, 0, 0),
                      mode: str = "proportional") -> Optional[MultiKernel]:
    """Layer-2 kernel from a (C, 5, 5) stack of channel values; bias is 0.

    ``mode="proportional"`` starts from ``patch / 255``, ``mode="signed"``
    from :func:`synth_kernel`; either way the weights are then rescaled so
    the response to ``patch`` is 255.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if mode == "proportional":
        weights = patch / MAIN_VALUE
    elif mode == "signed":
        weights = synth_kernel(patch, MAIN_VALUE)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    corrected = correct_kernel(weights, patch, 0.0)
    if corrected is None:
        return None
    return MultiKernel(weights=corrected[0], source=source)


# ---------------------------------------------------------------------------
# convolution and pooling


def relu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, 0.0)


def convolve_layer1(img: np.ndarray, weights: np.ndarray, biases) -> np.ndarray:
    """Valid, stride-1 convolution of one image with a kernel bank, then ReLU.

    ``weights`` is (5, 5) or (M, 5, 5); the result is (H-4, W-4) or
    (M, H-4, W-4) respectively.
    """
    weights = np.asarray(weights, dtype=np.float64)
    single = weights.ndim == 2
    bank = weights[None] if single else weights
    biases = np.atleast_1d(np.asarray(biases, dtype=np.float64))
    img = np.asarray(img, dtype=np.float64)
    windows = np.lib.stride_tricks.sliding_window_view(img, (KSIZE, KSIZE))
    oh, ow = windows.shape[:2]
    flat = windows.reshape(oh * ow, KSIZE * KSIZE)
    out = flat @ bank.reshape(len(bank), -1).T - biases
    out = relu(out).T.reshape(len(bank), oh, ow)
    return out[0] if single else out


def convolve_layer2(channels: np.ndarray, weights: np.ndarray, bias: float = 0.0) -> np.ndarray:
    """Multilayer convolution of (C, H, W) channels, then ReLU.

    ``weights`` is one (C, 5, 5) kernel or a (M, C, 5, 5) bank.
    """
    channels = np.asarray(channels, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    single = weights.ndim == 3
    bank = weights[None] if single else weights
    if bank.shape[1] != channels.shape[0]:
        raise ValueError(
            f"kernel expects {bank.shape[1]} channels, got {channels.shape[0]}")
    windows = np.lib.stride_tricks.sliding_window_view(channels, (KSIZE, KSIZE), axis=(1, 2))
    c, oh, ow = windows.shape[:3]
    flat = windows.transpose(1, 2, 0, 3, 4).reshape(oh * ow, c * KSIZE * KSIZE)
    out = flat @ bank.reshape(len(bank), -1).T - bias
    out = relu(out).T.reshape(len(bank), oh, ow)
    return out[0] if single else out


def max_pool(rc: np.ndarray) -> np.ndarray:
    """2x2 stride-2 max pooling over the last two axes."""
    rc = np.asarray(rc)
    h, w = rc.shape[-2:]
    if h % 2 or w % 2:
        raise ValueError(f"cannot pool odd-sized channel {h}x{w}")
    blocks = rc.reshape(*rc.shape[:-2], h // 2, 2, w // 2, 2)
    return blocks.max(axis=(-3, -1))


def extract_multilayer_patch(channels: np.ndarray, row: int, col: int) -> np.ndarray:
    """The 5x5 window at (row, col) from every channel, shape (C, 5, 5)."""
    channels = np.asarray(channels)
    if channels.ndim == 2:
        channels = channels[None]
    h, w = channels.shape[-2:]
    if row < 0 or col < 0 or row + KSIZE > h or col + KSIZE > w:
        raise IndexError(f"5x5 window at ({row}, {col}) outside {h}x{w} channels")
    return channels[:, row:row + KSIZE, col:col + KSIZE]


# ---------------------------------------------------------------------------
# feature channels for the next layer


def next_layer_features(real: np.ndarray, cfg: BuildConfig, *, thin: bool,
                        pool: bool, convolve: bool = True) -> np.ndarray:
    """Combined feature channel for the layer fed by ``real`` (C, H, W).

    Each channel's positive cells become features, optionally thinned
    (on the unpooled grid), pooled, and convolved to window origins; the
    per-channel results are OR-ed since a kernel covers the full column.
    """
    combined = None
    for ch in real:
        fc = fs.build_layer2_feature_channel(ch)
        if thin:
            fc = fs.thin_features(fc, ch, cfg.thin_min_value, cfg.thin_min_distance)
        if pool:
            fc = fs.pool_feature_channel(fc)
        if convolve:
            fc = fs.convolve_feature_channel(fc)
        combined = fc if combined is None else combined | fc
    if combined is None:
        h, w = real.shape[-2:]
        if pool:
            h, w = h // 2, w // 2
        if convolve:
            h, w = h - 4, w - 4
        combined = np.zeros((h, w), dtype=np.uint8)
    return combined


# ---------------------------------------------------------------------------
# whole-network construction


@dataclass
class ConvNet:
    """Kernels plus the channels computed while building them.

    With image channels every stored channel array has a leading exemplar
    axis; the merged variant keeps a single channel set (leading axis 1).
    ``exemplar_channels`` always holds each exemplar's own final channels,
    which is what the fully-connected head is built from.
    """

    config: BuildConfig
    layer1: list
    layer2: list
    layer1_channels: np.ndarray  # (S, K1, 24, 24)
    layer2_input: np.ndarray  # (S, K1, h, w): pooled or raw layer-1 channels
    layer2_channels: np.ndarray  # (S, K2, h', w')
    layer2_features: np.ndarray  # (S, h', w') before any consumption
    layer3_features: np.ndarray  # (S, K2, h', w')
    exemplar_channels: np.ndarray  # (N, K2, h', w')
    skipped: dict = field(default_factory=dict)

    @property
    def layer1_bank(self) -> tuple[np.ndarray, np.ndarray]:
        return stack_layer1(self.layer1)

    @property
    def layer2_bank(self) -> np.ndarray:
        return stack_layer2(self.layer2, len(self.layer1))


def stack_layer1(kernels) -> tuple[np.ndarray, np.ndarray]:
    if not kernels:
        return np.zeros((0, KSIZE, KSIZE)), np.zeros(0)
    return (np.stack([k.weights for k in kernels]),
            np.array([k.bias for k in kernels], dtype=np.float64))


def stack_layer2(kernels, n_channels: int) -> np.ndarray:
    if not kernels:
        return np.zeros((0, n_channels, KSIZE, KSIZE))
    return np.stack([k.weights for k in kernels])


def layer1_forward(img: np.ndarray, w1: np.ndarray, b1: np.ndarray) -> np.ndarray:
    if len(w1) == 0:
        h, w = np.shape(img)
        return np.zeros((0, h - KSIZE + 1, w - KSIZE + 1))
    return convolve_layer1(img, w1, b1)


def layer2_forward(src: np.ndarray, w2: np.ndarray) -> np.ndarray:
    if len(w2) == 0:
        h, w = src.shape[-2:]
        return np.zeros((0, h - KSIZE + 1, w - KSIZE + 1))
    return convolve_layer2(src, w2)


def final_channels(img: np.ndarray, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray,
                   use_pooling: bool) -> np.ndarray:
    """Binary image -> layer-2 channels through frozen kernel banks."""
    ch = layer1_forward(img, w1, b1)
    if use_pooling:
        ch = max_pool(ch)
    return layer2_forward(ch, w2)


def _consume(fc: np.ndarray, response: np.ndarray, above: Optional[float]) -> None:
    if above is not None:
        fc[response > above] = 0


def _build_layer1(images: np.ndarray, cfg: BuildConfig) -> tuple[list, int]:
    features = [fs.scan_boundary_features(img, cfg.scan_step) for img in images]
    kernels: list[ConvKernel] = []
    skipped = 0
    for e, fc in enumerate(features):
        if not fc.any():
            log.warning("exemplar %d has no boundary features", e)
    for e, img in enumerate(images):
        for r, c in zip(*np.nonzero(features[e].copy())):
            if not features[e][r, c]:
                continue
            features[e][r, c] = 0
            patch = img[r:r + KSIZE, c:c + KSIZE]
            corrected = correct_kernel(synth_kernel(patch), patch, cfg.K)
            if corrected is None:
                skipped += 1
                continue
            weights, bias = corrected
            kernels.append(ConvKernel(weights, bias, FeaturePoint(e, int(r), int(c))))
            for e2, img2 in enumerate(images):
                _consume(features[e2], convolve_layer1(img2, weights, bias), cfg.consume_above_l1)
    return kernels, skipped


def _build_layer2(patch_sources: np.ndarray, features: np.ndarray, responses,
                  cfg: BuildConfig, owners: list[int]) -> tuple[list, int]:
    """Layer-2 kernels; ``responses(kernel)`` yields one map per feature grid."""
    features = features.copy()
    kernels: list[MultiKernel] = []
    skipped = 0
    for s, fc in enumerate(features):
        if not fc.any():
            log.warning("channel set %d has no layer-2 features", owners[s])
    for s, src in enumerate(patch_sources):
        for r, c in zip(*np.nonzero(features[s].copy())):
            if not features[s][r, c]:
                continue
            features[s][r, c] = 0
            patch = extract_multilayer_patch(src, r, c)
            mk = synth_multikernel(patch, FeaturePoint(owners[s], int(r), int(c)),
                                   cfg.layer2_weights)
            if mk is None:
                skipped += 1
                continue
            kernels.append(mk)
            for s2, resp in enumerate(responses(mk.weights)):
                _consume(features[s2], resp, cfg.consume_above_l2)
    return kernels, skipped


def _layer3_features(channels: np.ndarray, cfg: BuildConfig) -> np.ndarray:
    out = np.zeros(channels.shape, dtype=np.uint8)
    for s, chans in enumerate(channels):
        for k, ch in enumerate(chans):
            fc = fs.build_layer2_feature_channel(ch)
            if cfg.use_image_channels:
                fc = fs.thin_features(fc, ch, cfg.thin_min_value, cfg.thin_min_distance)
            out[s, k] = fc
    return out


def build_convnet(images: np.ndarray, cfg: BuildConfig) -> ConvNet:
    """Build both convolutional layers from binarized exemplar images.

    Exemplars are visited in order, features in row-major order, so the
    result is fully determined by ``images`` and ``cfg``. In the merged
    variant every stored channel is the cellwise maximum over exemplars.
    """
    images = np.asarray(images)
    if images.ndim != 3 or len(images) == 0:
        raise ValueError("expected a non-empty (N, H, W) stack of exemplar images")
    l1, skipped1 = _build_layer1(images, cfg)
    w1, b1 = stack_layer1(l1)
    per_image = np.stack([layer1_forward(img, w1, b1) for img in images])
    per_image_src = max_pool(per_image) if cfg.use_pooling else per_image

    if cfg.use_image_channels:
        l1_channels = per_image
        src = per_image_src
        owners = list(range(len(images)))

        def responses(weights):
            return [convolve_layer2(s, weights) for s in per_image_src]
    else:
        l1_channels = per_image.max(axis=0, keepdims=True)
        src = per_image_src.max(axis=0, keepdims=True)
        owners = [-1]

        def responses(weights):
            return [np.max([convolve_layer2(s, weights) for s in per_image_src], axis=0)]

    feats = np.stack([
        next_layer_features(ch, cfg, thin=cfg.use_image_channels, pool=cfg.use_pooling)
        for ch in l1_channels])
    l2, skipped2 = _build_layer2(src, feats, responses, cfg, owners)
    w2 = stack_layer2(l2, len(l1))
    exemplar_channels = np.stack([layer2_forward(s, w2) for s in per_image_src])
    if cfg.use_image_channels:
        l2_channels = exemplar_channels
    else:
        l2_channels = exemplar_channels.max(axis=0, keepdims=True)
    return ConvNet(config=cfg, layer1=l1, layer2=l2, layer1_channels=l1_channels,
                   layer2_input=src, layer2_channels=l2_channels,
                   layer2_features=feats, layer3_features=_layer3_features(l2_channels, cfg),
                   exemplar_channels=exemplar_channels,
                   skipped={"layer1": skipped1, "layer2": skipped2})
