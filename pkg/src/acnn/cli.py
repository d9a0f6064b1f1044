"""Command-line entry point: build, classify, eval, sweep, dump."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import conv_builder as cb
from . import evaluation as ev
from . import export as ex
from . import mnist_io as mi
from . import network as nw
from .feature_scan import scan_boundary_features

DUMP_WHAT = ("kernels", "real-channels", "feature-channels", "thresholds", "scores")


class UsageError(Exception):
    pass


def _default_data_dir() -> Optional[str]:
    env = os.environ.get("ACNN_DATA_DIR")
    if env:
        return env
    bundled = Path(__file__).resolve().parents[2] / "data"
    return str(bundled) if bundled.is_dir() else None


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--images", default="t10k",
                   help="IDX image file or short name resolved in the data dir (default: t10k)")
    p.add_argument("--labels", default="t10k-labels",
                   help="IDX label file or short name (default: t10k-labels)")


def _add_build_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--exemplar-indices", help="comma list of image indices, one per class; overrides --seed")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--K", type=float, default=40.0, help="bias coefficient in percent (default 40)")
    p.add_argument("--pooling", action=argparse.BooleanOptionalAction, default=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--image-channels", dest="image_channels", action="store_true", default=True)
    g.add_argument("--merged", dest="image_channels", action="store_false")


def _add_threads(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads for evaluation (default: CPU count)")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acnn", description=(
        "Build a convolutional digit classifier directly from one exemplar "
        "image per class, then evaluate or inspect it."))
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="build a network and write it to --out")
    _add_data_flags(p)
    _add_build_flags(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("classify", help="classify test images with a saved network")
    _add_data_flags(p)
    p.add_argument("--net", required=True)
    p.add_argument("--index", type=int, action="append",
                   help="image index to classify (repeatable)")
    p.add_argument("--limit", type=int, default=10, help="classify the first N images if no --index")
    _add_threads(p)

    p = sub.add_parser("eval", help="accuracy over the first --limit test images")
    _add_data_flags(p)
    _add_build_flags(p)
    p.add_argument("--net", help="saved network; built from the flags if omitted")
    p.add_argument("--limit", type=int, default=1000)
    p.add_argument("--out", help="directory for report.json, confusion.csv and scores.csv")
    _add_threads(p)

    p = sub.add_parser("sweep", help="evaluate several configs over several seeds")
    _add_data_flags(p)
    p.add_argument("--configs", default="A,B,C",
                   help="comma list of reference configs A, B, C (default: all)")
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma list of seeds")
    p.add_argument("--limit", type=int, default=1000)
    p.add_argument("--out", help="write the reports as JSON here")
    _add_threads(p)

    p = sub.add_parser("dump", help="export kernels, channels or head tables")
    _add_data_flags(p)
    p.add_argument("--net", required=True)
    p.add_argument("--what", choices=DUMP_WHAT, required=True)
    p.add_argument("--format", choices=("csv", "pgm"), default="csv")
    p.add_argument("--exemplar", type=int, default=0, help="exemplar position (class order)")
    p.add_argument("--stage", type=int, choices=(1, 2, 3), default=1,
                   help="layer for kernels/channels/features")
    p.add_argument("--limit", type=int, default=100, help="images for --what scores")
    p.add_argument("--out", help="output file (csv) or directory (pgm); csv defaults to stdout")
    _add_threads(p)
    return parser


def _parse_int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{flag}: expected a comma list of integers, got {text!r}")


def _validate(args) -> None:
    if getattr(args, "K", None) is not None and not 0 < args.K <= 100:
        raise UsageError(f"--K must be in (0, 100], got {args.K:g}")
    if getattr(args, "exemplar_indices", None):
        _parse_int_list(args.exemplar_indices, "--exemplar-indices")
    for flag in ("limit", "threads"):
        v = getattr(args, flag, None)
        if v is not None and v < 1:
            raise UsageError(f"--{flag} must be positive")
    if args.command == "sweep":
        unknown = [c for c in args.configs.split(",") if c.strip() not in ev.REFERENCE_CONFIGS]
        if unknown:
            raise UsageError(f"--configs: unknown config {unknown[0]!r} (choose from A, B, C)")
        _parse_int_list(args.seeds, "--seeds")
    if args.command == "dump":
        if args.format == "pgm" and not args.out:
            raise UsageError("--format pgm needs --out DIR")
        if args.format == "pgm" and args.what in ("thresholds", "scores"):
            raise UsageError(f"--what {args.what} is tabular; use --format csv")


def _resolve(name: str, kind: str) -> str:
    path = mi.find_data_file(name, kind, _default_data_dir())
    if path is None:
        raise UsageError(f"{kind} file not found: {name}")
    return path


def _load_data(args, need_labels: bool = True):
    img_path = _resolve(args.images, "images")
    lab_path = _resolve(args.labels, "labels") if need_labels else None
    images = mi.load_idx_images(img_path)
    labels = mi.load_idx_labels(lab_path) if lab_path else None
    return images, labels


def _check_net(path: str) -> None:
    if not Path(path).is_file():
        raise UsageError(f"network file not found: {path}")


def _config(args) -> cb.BuildConfig:
    return cb.BuildConfig(K=args.K, use_pooling=args.pooling, use_image_channels=args.image_channels)


def _build(args, images, labels) -> nw.AnalyticNetwork:
    if args.exemplar_indices:
        exemplars = mi.select_exemplars(images, labels,
                                        indices=_parse_int_list(args.exemplar_indices, ""))
    else:
        exemplars = mi.select_exemplars(images, labels, seed=args.seed)
    net, _ = nw.build_network(exemplars, _config(args))
    return net


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_build(args) -> int:
    images, labels = _load_data(args)
    net = _build(args, images, labels)
    nw.save(net, args.out)
    k1, k2 = net.kernel_counts
    print(f"config      {net.config.label}")
    print(f"exemplars   {','.join(str(i) for i in net.provenance.source_indices)}")
    print(f"kernels     layer1={k1} layer2={k2}")
    print(f"build time  {net.provenance.build_seconds:.3f} s")
    print(f"wrote       {args.out} and {nw.manifest_path(args.out)}")
    return 0


def cmd_classify(args) -> int:
    _check_net(args.net)
    net = nw.load(args.net)
    images, labels = _load_data(args)
    idx = args.index if args.index else list(range(min(args.limit, len(images))))
    for i in idx:
        if not 0 <= i < len(images):
            raise UsageError(f"--index {i} out of range (0..{len(images) - 1})")
    pred, _ = ev.predict(net, images[idx], args.threads)
    print("index,label,predicted")
    for i, p in zip(idx, pred):
        print(f"{i},{int(labels[i])},{int(p)}")
    return 0


def cmd_eval(args) -> int:
    if args.net:
        _check_net(args.net)
    images, labels = _load_data(args)
    if args.net:
        net = nw.load(args.net)
        seed = None
    else:
        net = _build(args, images, labels)
        seed = None if args.exemplar_indices else args.seed
    report = ev.evaluate(net, images, labels, limit=args.limit, threads=args.threads, seed=seed)
    print(report.summary())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report.as_dict(), indent=2) + "\n")
        (out / "confusion.csv").write_text(ex.confusion_csv(report.confusion))
        n = report.n_test
        (out / "scores.csv").write_text(ex.scores_csv(range(n), labels[:n], report.predictions,
                                                      report.scores))
    return 0


def cmd_sweep(args) -> int:
    images, labels = _load_data(args)
    configs = [ev.REFERENCE_CONFIGS[c.strip()] for c in args.configs.split(",")]
    seeds = _parse_int_list(args.seeds, "--seeds")
    reports = ev.sweep(configs, seeds, images, labels, limit=args.limit, threads=args.threads)
    print(ev.sweep_table(reports))
    if args.out:
        Path(args.out).write_text(json.dumps([r.as_dict() for r in reports], indent=2) + "\n")
    return 0


def _construction(net: nw.AnalyticNetwork) -> cb.ConvNet:
    # the build is deterministic, so the intermediate grids are re-derived
    # rather than stored in the network file
    return cb.build_convnet(net.exemplar_images, net.config)


def _dump_grids(net: nw.AnalyticNetwork, args) -> tuple[np.ndarray, list[str]]:
    n = len(net.exemplar_images)
    if not 0 <= args.exemplar < n:
        raise UsageError(f"--exemplar must be in 0..{n - 1}")
    e, stage = args.exemplar, args.stage
    if args.what == "kernels":
        if stage == 1:
            w, _ = cb.stack_layer1(net.layer1_kernels)
            return w, [f"layer1_kernel_{k:03d}" for k in range(len(w))]
        if stage == 2:
            w = cb.stack_layer2(net.layer2_kernels, len(net.layer1_kernels))
            grids = w.reshape(-1, cb.KSIZE, cb.KSIZE)
            names = [f"layer2_kernel_{k:03d}_slice_{c:03d}"
                     for k in range(w.shape[0]) for c in range(w.shape[1])]
            return grids, names
        raise UsageError("--what kernels supports --stage 1 or 2")
    img = net.exemplar_images[e]
    w1, b1, w2 = net.banks
    if args.what == "real-channels":
        ch = cb.layer1_forward(img, w1, b1)
        if stage == 1:
            return ch, [f"exemplar{e}_layer1_channel_{k:03d}" for k in range(len(ch))]
        if net.config.use_pooling:
            ch = cb.max_pool(ch)
        if stage == 2:
            ch = cb.layer2_forward(ch, w2)
            return ch, [f"exemplar{e}_layer2_channel_{k:03d}" for k in range(len(ch))]
        raise UsageError("--what real-channels supports --stage 1 or 2")
    # feature-channels
    if stage == 1:
        return scan_boundary_features(img, net.config.scan_step)[None], [f"exemplar{e}_layer1_features"]
    conv = _construction(net)
    s = e if net.config.use_image_channels else 0
    if stage == 2:
        return conv.layer2_features[s][None], [f"exemplar{e}_layer2_features"]
    fc = conv.layer3_features[s]
    return fc, [f"exemplar{e}_layer3_features_{k:03d}" for k in range(len(fc))]


def cmd_dump(args) -> int:
    _check_net(args.net)
    net = nw.load(args.net)
    if args.what == "thresholds":
        _emit(ex.threshold_table_csv(net.head.wh1), args.out)
        return 0
    if args.what == "scores":
        images, labels = _load_data(args)
        n = min(args.limit, len(images))
        pred, scores = ev.predict(net, images[:n], args.threads)
        _emit(ex.scores_csv(range(n), labels[:n], pred, scores), args.out)
        return 0
    grids, names = _dump_grids(net, args)
    if args.format == "csv":
        _emit(ex.grids_csv(grids, names), args.out)
    else:
        paths = ex.write_pgms(grids, names, args.out)
        print(f"wrote {len(paths)} images to {args.out}")
    return 0


COMMANDS = {"build": cmd_build, "classify": cmd_classify, "eval": cmd_eval,
            "sweep": cmd_sweep, "dump": cmd_dump}


def run(argv: Optional[list[str]] = None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _validate(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"acnn {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, IndexError) as exc:
        print(f"acnn {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
