"""Batch command line: ``cpburn <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import date, timedelta
from pathlib import Path

from . import change, classifier, metrics
from .polarimetry import mchi_decompose
from .raster import C2Raster, RasterGrid, TemporalStack, read_raster, validate_c2, write_raster
from .synth import SceneSpec, generate_scene, write_scene
from .vegindex import cprvi_from_c2

logger = logging.getLogger("cpburn")


def _sign(text: str) -> int:
    if text in ("+", "+1", "1"):
        return 1
    if text in ("-", "-1"):
        return -1
    raise argparse.ArgumentTypeError("sign must be + or -")


def _intensities(grid: RasterGrid) -> RasterGrid:
    if "c11" in grid.band_names and "c22" in grid.band_names:
        return change.intensity_grid(C2Raster.from_grid(grid))
    return grid


def _maybe_filter(grid: RasterGrid, args) -> RasterGrid:
    if args.filter == "none":
        return grid
    return change.speckle_filter(grid, args.filter, args.window, args.looks)


def _stack(grids: list[RasterGrid], beam_mode: str, orbit: str) -> TemporalStack:
    stamps = [g.timestamps[-1] if g.timestamps else None for g in grids]
    if any(s is None for s in stamps):
        logger.warning("inputs without timestamps are ordered as given")
        base = date(1970, 1, 1)
        stamps = [str(base + timedelta(days=i)) for i in range(len(grids))]
    modes = {g.beam_mode for g in grids} - {None}
    orbits = {g.orbit for g in grids} - {None}
    return TemporalStack(grids, stamps, modes.pop() if len(modes) == 1 else beam_mode,
                         orbits.pop() if len(orbits) == 1 else orbit)


def cmd_synth(args) -> int:
    spec = SceneSpec.load(args.spec) if args.spec else SceneSpec()
    scene = generate_scene(spec, noiseless=args.noiseless)
    for path in write_scene(scene, args.out_dir):
        print(path)
    return 0


def cmd_decompose(args) -> int:
    c2 = C2Raster.from_grid(_maybe_filter(read_raster(args.inp), args))
    bad = validate_c2(c2, repair=True)
    products = mchi_decompose(c2, args.sign)
    grid = products.to_grid()
    grid.geo_tag = c2.meta.get("geo_tag")
    write_raster(grid, args.out)
    print(f"wrote {args.out} (5 bands, {bad} invalid C2 pixels masked)")
    return 0


def cmd_cprvi(args) -> int:
    c2 = C2Raster.from_grid(_maybe_filter(read_raster(args.inp), args))
    validate_c2(c2, repair=True)
    grid = cprvi_from_c2(c2).to_grid()
    grid.geo_tag = c2.meta.get("geo_tag")
    write_raster(grid, args.out)
    print(f"wrote {args.out} (bands cprvi, gd)")
    return 0


def cmd_logratio(args) -> int:
    post_raw = read_raster(args.post)
    pre_raw = [read_raster(p) for p in args.pre]
    post = _intensities(_maybe_filter(post_raw, args))
    pre = [_intensities(_maybe_filter(g, args)) for g in pre_raw]
    geometry = {(g.beam_mode, g.orbit) for g in [post_raw, *pre_raw]} - {(None, None)}
    if len(geometry) > 1:
        raise ValueError(f"pre- and post-fire images mix acquisition geometries: {sorted(geometry)}")
    stack = _stack(pre, args.beam_mode, args.orbit)
    med = change.median_composite(stack)
    lr = change.log_ratio(post, med, prefire_epoch_count=len(stack))
    write_raster(lr.channels, args.out)
    print(f"wrote {args.out} ({len(stack)} pre-fire epochs)")
    return 0


def cmd_pseudolabel(args) -> int:
    lr = change.LogRatioImage(read_raster(args.inp))
    mask = change.BurnMask.from_grid(read_raster(args.mask)) if args.mask else None
    label = change.pseudo_label(lr, args.th, mask, args.aggregate)
    write_raster(label.to_grid(), args.out)
    print(f"wrote {args.out} ({int(label.mask.sum())} burned pixels)")
    return 0


def cmd_nbr(args) -> int:
    mask = change.nbr_mask(read_raster(args.nir), read_raster(args.swir), args.th)
    write_raster(mask.to_grid(), args.out)
    print(f"wrote {args.out} ({int(mask.mask.sum())} burned pixels)")
    return 0


def cmd_train(args) -> int:
    sources = [read_raster(p) for p in args.features]
    stack = classifier.assemble_features(sources, args.setting)
    labels = change.BurnMask.from_grid(read_raster(args.labels))
    cfg = classifier.TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch=args.batch,
                                 patch_size=args.patch_size, seed=args.seed, smooth=args.smooth)
    model = classifier.PixelModel.initial(stack.channels, cfg.seed, cfg.init_scale)
    result = classifier.train(model, stack, labels, cfg)
    result.model.save(args.out)
    if args.report:
        Path(args.report).write_text(json.dumps({
            "label_provenance": result.label_provenance,
            "best_epoch": result.best_epoch,
            "train_patches": result.n_train_patches,
            "val_patches": result.n_val_patches,
            "history": result.history,
        }, indent=2) + "\n")
    print(f"wrote {args.out} (best epoch {result.best_epoch})")
    return 0


def cmd_predict(args) -> int:
    model = classifier.PixelModel.load(args.model)
    sources = [read_raster(p) for p in args.features]
    setting = next((k for k, v in classifier.SETTINGS.items() if v == model.input_channels), None)
    if setting is None:
        raise ValueError(f"model inputs {model.input_channels} match no feature setting")
    stack = classifier.assemble_features(sources, setting, model.normalization)
    pred = classifier.predict(model, stack, args.threshold)
    write_raster(pred.to_grid(), args.out)
    print(f"wrote {args.out} ({int(pred.mask.sum())} burned pixels)")
    return 0


def cmd_evaluate(args) -> int:
    if len(args.pred) != len(args.truth):
        raise ValueError("--pred and --truth need the same number of files")
    groups: dict[str, list[metrics.ImageScore]] = {}
    for p, t in zip(args.pred, args.truth):
        pred = change.BurnMask.from_grid(read_raster(p), "model_prediction")
        truth = change.BurnMask.from_grid(read_raster(t))
        key = Path(p).parent.name if args.group_by == "event" else Path(p).stem
        groups.setdefault(key or ".", []).append(
            metrics.ImageScore.from_counts(Path(p).stem, metrics.confusion(pred, truth)))
    reports, overall = metrics.aggregate(groups, pixel_weighted=args.pixel_weighted)
    doc = {"events": [r.as_dict() for r in reports], "overall": overall,
           "averaging": "pixel_pooled" if args.pixel_weighted else "image_mean"}
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    for r in reports:
        print(f"{r.event_id:24s} F1 {r.mean_f1:.3f}  IoU {r.mean_iou:.3f}  ({len(r.per_image)} images)")
    print(f"{'overall':24s} F1 {overall['mean_f1']:.3f}  IoU {overall['mean_iou']:.3f}")
    return 0


def _filter_args(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--filter", choices=("none", "boxcar", "lee"), default=default)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--looks", type=float, default=1.0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpburn", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic wildfire scene")
    p.add_argument("--spec", help="SceneSpec JSON (defaults built in)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--noiseless", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("decompose", help="m-chi decomposition of a C2 raster")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sign", type=_sign, default=1)
    _filter_args(p, "none")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("cprvi", help="compact-pol radar vegetation index")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    _filter_args(p, "none")
    p.set_defaults(func=cmd_cprvi)

    p = sub.add_parser("logratio", help="post-fire over pre-fire median log-ratio")
    p.add_argument("--post", required=True)
    p.add_argument("--pre", nargs="+", required=True)
    p.add_argument("--out", required=True)
    _filter_args(p, "boxcar")
    p.add_argument("--beam-mode", default="SC30MCPA")
    p.add_argument("--orbit", default="ascending")
    p.set_defaults(func=cmd_logratio)

    p = sub.add_parser("pseudolabel", help="threshold a log-ratio image")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--th", type=float, default=0.05)
    p.add_argument("--mask")
    p.add_argument("--aggregate", choices=("max", "mean"), default="max")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pseudolabel)

    p = sub.add_parser("nbr", help="optical burn mask from NIR/SWIR")
    p.add_argument("--nir", required=True)
    p.add_argument("--swir", required=True)
    p.add_argument("--th", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_nbr)

    defaults = classifier.TrainConfig()
    p = sub.add_parser("train", help="train the pixel classifier")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--setting", choices=sorted(classifier.SETTINGS), default="all")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--lr", type=float, default=defaults.learning_rate)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--batch", type=int, default=defaults.batch)
    p.add_argument("--patch-size", type=int, default=defaults.patch_size)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--smooth", type=float, default=defaults.smooth)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="apply a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="F1/IoU against reference masks")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--truth", nargs="+", required=True)
    p.add_argument("--group-by", choices=("event", "image"), default="event")
    p.add_argument("--pixel-weighted", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"cpburn {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
