"""Accuracy runs over the MNIST test set and multi-seed sweeps."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import network as nw
from .conv_builder import BuildConfig
from .mnist_io import select_exemplars

# the three reference set-ups: image channels with pooling, image channels
# without pooling, merged channels without pooling
REFERENCE_CONFIGS = {
    "A": BuildConfig(K=40.0, use_pooling=True, use_image_channels=True),
    "B": BuildConfig(K=40.0, use_pooling=False, use_image_channels=True),
    "C": BuildConfig(K=30.0, use_pooling=False, use_image_channels=False),
}


@dataclass
class EvalReport:
    config: BuildConfig
    n_test: int
    n_correct: int
    confusion: np.ndarray  # (10, 10), rows true class, cols predicted
    build_seconds: float
    kernel_counts: tuple
    channel_counts: tuple
    predictions: np.ndarray
    scores: np.ndarray  # (n_test, n_classes) second-layer nets
    exemplars_in_test: list = field(default_factory=list)
    seed: Optional[int] = None
    source_indices: tuple = ()

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_test if self.n_test else 0.0

    def summary(self) -> str:
        k1, k2 = self.kernel_counts
        c1, c2 = self.channel_counts
        seed = "-" if self.seed is None else str(self.seed)
        lines = [
            f"config        {self.config.label}",
            f"seed          {seed}",
            f"exemplars     {','.join(str(i) for i in self.source_indices)}",
            f"kernels       layer1={k1} layer2={k2}",
            f"channels      layer1={c1} layer2={c2}",
            f"build time    {self.build_seconds:.3f} s",
            f"accuracy      {self.n_correct}/{self.n_test} = {self.accuracy:.2%}",
            f"exemplars in test slice: {len(self.exemplars_in_test)}",
        ]
        per_class = self.confusion.diagonal() / np.maximum(self.confusion.sum(axis=1), 1)
        lines.append("per-class     " + " ".join(f"{c}:{a:.2f}" for c, a in enumerate(per_class)))
        return "\n".join(lines)

    def as_dict(self) -> dict:
        return {
            "config": asdict(self.config),
            "seed": self.seed,
            "n_test": self.n_test,
            "n_correct": self.n_correct,
            "accuracy": self.accuracy,
            "build_seconds": self.build_seconds,
            "kernel_counts": list(self.kernel_counts),
            "channel_counts": list(self.channel_counts),
            "exemplars_in_test": self.exemplars_in_test,
            "source_indices": list(self.source_indices),
            "confusion": self.confusion.tolist(),
        }


def default_threads() -> int:
    return os.cpu_count() or 1


def predict(net: nw.AnalyticNetwork, images: Sequence, threads: Optional[int] = None
            ) -> tuple[np.ndarray, np.ndarray]:
    """Labels and score vectors for a batch of raw images."""
    threads = threads or default_threads()
    if threads <= 1 or len(images) < 2:
        results = [nw.forward(net, img) for img in images]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda img: nw.forward(net, img), images))
    n_classes = net.head.n_classes
    labels = np.array([r.label for r in results], dtype=np.int64)
    scores = np.array([r.scores for r in results]).reshape(len(results), n_classes)
    return labels, scores


def evaluate(net: nw.AnalyticNetwork, images: Sequence, labels: Sequence,
             limit: Optional[int] = 1000, threads: Optional[int] = None,
             seed: Optional[int] = None) -> EvalReport:
    """Classify the first ``limit`` images (file order) and tally the result.

    Exemplars that were drawn from the same file and fall inside the slice
    stay in the evaluation; their positions are listed in the report.
    """
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    n = len(images) if limit is None else min(limit, len(images))
    images = np.asarray(images[:n])
    truth = np.asarray(labels[:n]).astype(np.int64)
    pred, scores = predict(net, images, threads)
    n_classes = net.head.n_classes
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (truth, pred), 1)
    slots = nw.exemplar_slots(net) or {}
    return EvalReport(
        config=net.config,
        n_test=n,
        n_correct=int((pred == truth).sum()),
        confusion=confusion,
        build_seconds=net.provenance.build_seconds,
        kernel_counts=net.kernel_counts,
        channel_counts=net.channel_counts(),
        predictions=pred,
        scores=scores,
        exemplars_in_test=sorted(i for i in slots if i < n),
        seed=seed,
        source_indices=net.provenance.source_indices,
    )


def sweep(configs: Iterable[BuildConfig], seeds: Iterable[int], images, labels,
          limit: Optional[int] = 1000, threads: Optional[int] = None) -> list[EvalReport]:
    """One build-and-evaluate run per (config, seed), configs outermost.

    Exemplars are drawn from ``images``/``labels`` with each seed.
    """
    seeds = list(seeds)
    reports = []
    for cfg in configs:
        for seed in seeds:
            ex = select_exemplars(images, labels, seed=seed)
            net, _ = nw.build_network(ex, cfg)
            reports.append(evaluate(net, images, labels, limit=limit, threads=threads, seed=seed))
    return reports


def sweep_table(reports: Sequence[EvalReport]) -> str:
    """Fixed-width summary, one row per report plus a mean row per config."""
    rows = [f"{'config':<22} {'seed':>4} {'k1':>4} {'k2':>4} {'build_s':>8} {'accuracy':>9}"]
    by_cfg: dict = {}
    for r in reports:
        by_cfg.setdefault(r.config.label, []).append(r.accuracy)
        seed = "-" if r.seed is None else r.seed
        rows.append(f"{r.config.label:<22} {seed:>4} {r.kernel_counts[0]:>4} "
                    f"{r.kernel_counts[1]:>4} {r.build_seconds:>8.3f} {r.accuracy:>9.3f}")
    for label, accs in by_cfg.items():
        rows.append(f"{label:<22} {'mean':>4} {'':>4} {'':>4} {'':>8} {np.mean(accs):>9.3f}")
    return "\n".join(rows)
