"""The assembled, frozen network: build, forward, save and load.

File layout (all integers little-endian)::

    b"ACNN" | u32 version | u32 header length | JSON header | float64 blob | sha256

The header echoes the build config, kernel sources and array shapes; the
blob holds every array back to back in header order. The digest covers
everything before it.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import conv_builder as cb
from . import metric_head as mh
from .mnist_io import IMAGE_SIZE, ExemplarSet, binarize

MAGIC = b"ACNN"
FORMAT_VERSION = 1
_DIGEST_LEN = 32


class NetworkFileError(ValueError):
    pass


class VersionError(NetworkFileError):
    pass


class ChecksumError(NetworkFileError):
    pass


@dataclass(frozen=True)
class Provenance:
    source_indices: tuple = ()
    built_at: str = ""
    build_seconds: float = 0.0


@dataclass(frozen=True, eq=False)
class ForwardResult:
    channels: np.ndarray  # (K2, h, w)
    label: int
    scores: np.ndarray  # second-layer nets, one per class


@dataclass(frozen=True, eq=False)
class AnalyticNetwork:
    config: cb.BuildConfig
    layer1_kernels: tuple
    layer2_kernels: tuple
    head: mh.MetricHead
    exemplar_images: np.ndarray  # (N, 28, 28) binarized
    exemplar_labels: np.ndarray
    provenance: Provenance = field(default_factory=Provenance)

    def __post_init__(self):
        # cache the stacked banks; forward is called thousands of times
        w1, b1 = cb.stack_layer1(self.layer1_kernels)
        w2 = cb.stack_layer2(self.layer2_kernels, len(self.layer1_kernels))
        for arr in (w1, b1, w2):
            arr.setflags(write=False)
        object.__setattr__(self, "_bank", (w1, b1, w2))
        if self.head.channel_shape[0] != len(self.layer2_kernels):
            raise ValueError("head channel count does not match layer-2 kernel count")

    @property
    def banks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._bank

    @property
    def kernel_counts(self) -> tuple[int, int]:
        return len(self.layer1_kernels), len(self.layer2_kernels)

    def channel_counts(self) -> tuple[int, int]:
        """Real channels per layer as stored during construction."""
        k1, k2 = self.kernel_counts
        sets = len(self.exemplar_images) if self.config.use_image_channels else 1
        return k1 * sets, k2 * sets


def build_network(exemplars: ExemplarSet, cfg: cb.BuildConfig = cb.BuildConfig()
                  ) -> tuple[AnalyticNetwork, cb.ConvNet]:
    """Build a network from one exemplar per class.

    Returns the frozen network and the construction record (intermediate
    channels and feature grids) for inspection.
    """
    images = binarize(exemplars.images)
    t0 = time.perf_counter()
    conv = cb.build_convnet(images, cfg)
    head = mh.build_head(conv.exemplar_channels)
    elapsed = time.perf_counter() - t0
    prov = Provenance(
        source_indices=tuple(int(i) for i in exemplars.source_indices),
        built_at=_dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        build_seconds=elapsed,
    )
    net = AnalyticNetwork(config=cfg, layer1_kernels=tuple(conv.layer1),
                          layer2_kernels=tuple(conv.layer2), head=head,
                          exemplar_images=images, exemplar_labels=np.asarray(exemplars.labels),
                          provenance=prov)
    return net, conv


def final_channels(net: AnalyticNetwork, img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.shape != (IMAGE_SIZE, IMAGE_SIZE):
        raise ValueError(f"expected a {IMAGE_SIZE}x{IMAGE_SIZE} image, got {img.shape}")
    w1, b1, w2 = net.banks
    return cb.final_channels(binarize(img), w1, b1, w2, net.config.use_pooling)


def forward(net: AnalyticNetwork, img: np.ndarray) -> ForwardResult:
    """Classify one raw 28x28 image."""
    channels = final_channels(net, img)
    label, scores = mh.classify(net.head, channels)
    return ForwardResult(channels=channels, label=label, scores=scores)


# ---------------------------------------------------------------------------
# serialization


def _point(p: cb.FeaturePoint) -> list:
    return [p.owner, p.row, p.col]


def _arrays(net: AnalyticNetwork) -> list[tuple[str, np.ndarray]]:
    w1, b1, w2 = net.banks
    h = net.head
    return [
        ("layer1_weights", w1),
        ("layer1_biases", b1),
        ("layer2_weights", w2),
        ("layer2_biases", np.array([k.bias for k in net.layer2_kernels], dtype=np.float64)),
        ("head_w1", h.w1),
        ("head_wh1", h.wh1),
        ("head_w2", h.w2),
        ("exemplar_images", net.exemplar_images),
    ]


def manifest(net: AnalyticNetwork) -> dict:
    """Human-readable summary written next to the network file."""
    k1, k2 = net.kernel_counts
    c1, c2 = net.channel_counts()
    return {
        "format_version": FORMAT_VERSION,
        "config": asdict(net.config),
        "label": net.config.label,
        "kernel_counts": {"layer1": k1, "layer2": k2},
        "channel_counts": {"layer1": c1, "layer2": c2},
        "final_channel_shape": list(net.head.channel_shape),
        "first_layer_neurons": len(net.head.pairs),
        "second_layer_threshold": net.head.wh2,
        "exemplar_labels": [int(x) for x in net.exemplar_labels],
        "source_indices": list(net.provenance.source_indices),
        "built_at": net.provenance.built_at,
        "build_seconds": net.provenance.build_seconds,
    }


def to_bytes(net: AnalyticNetwork) -> bytes:
    arrays = _arrays(net)
    header = {
        "config": asdict(net.config),
        "layer1_sources": [_point(k.source) for k in net.layer1_kernels],
        "layer2_sources": [_point(k.source) for k in net.layer2_kernels],
        "pairs": [list(p) for p in net.head.pairs],
        "wh2": net.head.wh2,
        "exemplar_labels": [int(x) for x in net.exemplar_labels],
        "provenance": asdict(net.provenance),
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in arrays)
    body = MAGIC + struct.pack("<II", FORMAT_VERSION, len(hbytes)) + hbytes + blob
    return body + hashlib.sha256(body).digest()


def from_bytes(data: bytes) -> AnalyticNetwork:
    if len(data) < 12 + _DIGEST_LEN or data[:4] != MAGIC:
        # too short to even carry a digest, or not our file at all
        if data[:4] == MAGIC:
            raise ChecksumError("network file truncated")
        raise NetworkFileError("not a network file (bad magic)")
    body, digest = data[:-_DIGEST_LEN], data[-_DIGEST_LEN:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError("network file checksum mismatch")
    version, hlen = struct.unpack("<II", body[4:12])
    if version != FORMAT_VERSION:
        raise VersionError(f"network file version {version}, this build reads {FORMAT_VERSION}")
    header = json.loads(body[12:12 + hlen])
    offset = 12 + hlen
    arrays = {}
    for name, shape in header["arrays"]:
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(body, dtype="<f8", count=n, offset=offset).reshape(shape).copy()
        offset += 8 * n
    if offset != len(body):
        raise NetworkFileError("array blob size does not match header")

    cfg = cb.BuildConfig(**header["config"])
    l1 = tuple(cb.ConvKernel(w, float(b), cb.FeaturePoint(*src)) for w, b, src in zip(
        arrays["layer1_weights"], arrays["layer1_biases"], header["layer1_sources"]))
    l2 = tuple(cb.MultiKernel(w, cb.FeaturePoint(*src), float(b)) for w, b, src in zip(
        arrays["layer2_weights"], arrays["layer2_biases"], header["layer2_sources"]))
    head = mh.MetricHead(pairs=tuple(tuple(p) for p in header["pairs"]), w1=arrays["head_w1"],
                         wh1=arrays["head_wh1"], w2=arrays["head_w2"], wh2=header["wh2"])
    prov = header["provenance"]
    return AnalyticNetwork(
        config=cfg, layer1_kernels=l1, layer2_kernels=l2, head=head,
        exemplar_images=arrays["exemplar_images"].astype(np.uint8),
        exemplar_labels=np.array(header["exemplar_labels"], dtype=np.int64),
        provenance=Provenance(tuple(prov["source_indices"]), prov["built_at"],
                              prov["build_seconds"]))


def manifest_path(path) -> Path:
    return Path(str(path) + ".json")


def save(net: AnalyticNetwork, path, write_manifest: bool = True) -> None:
    path = Path(path)
    path.write_bytes(to_bytes(net))
    if write_manifest:
        manifest_path(path).write_text(json.dumps(manifest(net), indent=2) + "\n")


def load(path) -> AnalyticNetwork:
    return from_bytes(Path(path).read_bytes())


def exemplar_slots(net: AnalyticNetwork) -> Optional[dict]:
    """Map of test-set index to exemplar position, if indices are known."""
    if not net.provenance.source_indices:
        return None
    return {int(i): k for k, i in enumerate(net.provenance.source_indices)}
