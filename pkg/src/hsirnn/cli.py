"""Command-line interface: ``hsirnn {synth,train,eval,runs,map,gradcheck}``.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""
import argparse
import json
import logging
import os
import sys
import time

from . import data as hd
from .checks import gradcheck_suite
from .exceptions import HSIRNNError
from .maps import classify_scene, write_ppm
from .models import VARIANTS, ModelSpec, build, canonical_variant, load, save
from .training import TrainConfig, evaluate, repeat_runs, train

logger = logging.getLogger("hsirnn")

VARIANT_NAMES = [v.replace("_", "-") for v in VARIANTS]


class UsageError(Exception):
    pass


def _variant(name):
    try:
        return canonical_variant(name)
    except HSIRNNError:
        raise argparse.ArgumentTypeError(
            f"unknown model {name!r}; choose from {', '.join(VARIANT_NAMES)}") from None


def _size(text):
    try:
        r, c = text.lower().split("x")
        r, c = int(r), int(c)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 40x40, got {text!r}") from None
    if r < 1 or c < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return r, c


def _load_cube(path, normalize=True):
    cube = hd.load_envi(path)
    if not isinstance(cube, hd.HSICube):
        raise HSIRNNError(f"{path} holds a label raster, not a cube")
    return hd.normalize(cube) if normalize else cube


def _load_gt(path, cube=None):
    gt = hd.load_envi(path)
    if not isinstance(gt, hd.GroundTruthRaster):
        raise HSIRNNError(f"{path} is not a single-band integer label raster")
    if cube is not None and (gt.rows, gt.cols) != (cube.rows, cube.cols):
        raise HSIRNNError(f"ground truth is {gt.rows}x{gt.cols}, cube is {cube.rows}x{cube.cols}")
    return gt


def _load_split(path):
    if path is None:
        return hd.SplitSpec(per_class=50, seed=0)
    return hd.SplitSpec.load(path)


def _load_config(path):
    """Training config plus optional ``"model"`` block of architecture overrides."""
    if path is None:
        return TrainConfig(), {}
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    model = doc.pop("model", {}) or {}
    return TrainConfig.from_dict(doc), model


def _model_spec(args, cube, gt, overrides):
    fields = dict(H=128, N=16, M=16, T=5, K=2)
    fields.update(overrides)
    for flag, key in (("hidden", "H"), ("filters", "N"), ("shorten_filters", "M"),
                      ("timesteps", "T"), ("units", "K"), ("patch", "P"), ("seed", "seed")):
        value = getattr(args, flag, None)
        if value is not None:
            fields[key] = value
    fields.pop("variant", None)
    fields.pop("D", None)
    fields.pop("C", None)
    return ModelSpec(variant=args.model, D=cube.bands, C=gt.n_classes, **fields).validate()


def _write_json(path, doc):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args):
    if args.classes < 2:
        raise UsageError(f"--classes must be at least 2, got {args.classes}")
    if args.bands < 8:
        raise UsageError(f"--bands must be at least 8, got {args.bands}")
    rows, cols = args.size
    cube, gt = hd.synth_dataset(args.classes, args.bands, rows, cols, args.noise, args.seed)
    os.makedirs(args.out, exist_ok=True)
    hd.write_envi(cube, os.path.join(args.out, "cube.hdr"))
    hd.write_envi(gt, os.path.join(args.out, "gt.hdr"))
    _write_json(os.path.join(args.out, "split.json"), {"per_class": 50, "seed": args.seed})
    print(f"wrote {rows}x{cols}x{args.bands} cube with {args.classes} classes to {args.out}")
    return 0


def cmd_train(args):
    cube = _load_cube(args.cube, not args.no_normalize)
    gt = _load_gt(args.gt, cube)
    split = _load_split(args.split)
    cfg, overrides = _load_config(args.config)
    spec = _model_spec(args, cube, gt, overrides)
    train_set, test_set = hd.make_split(gt, split)
    m = build(spec)
    t0 = time.perf_counter()
    m, history = train(m, train_set, cube, cfg)
    elapsed = time.perf_counter() - t0
    save(m, args.out)
    metrics = evaluate(m, test_set, cube, history) if len(test_set) else None
    report = {"model": spec.to_dict(), "config": cfg.to_dict(), "split": split.to_dict(),
              "n_train": len(train_set), "n_test": len(test_set),
              "loss_history": history,
              "metrics": metrics.to_dict() if metrics else None}
    _write_json(args.out + ".metrics.json", report)
    print(f"trained {spec.variant.replace('_', '-')} on {len(train_set)} samples, "
          f"final loss {history[-1]:.4f}, {elapsed:.1f}s")
    if metrics:
        print(metrics.format_table())
    print(f"model written to {args.out}")
    return 0


def cmd_eval(args):
    m = load(args.model)
    cube = _load_cube(args.cube, not args.no_normalize)
    if cube.bands != m.spec.D:
        raise HSIRNNError(f"dimension mismatch: model expects {m.spec.D} bands, cube has {cube.bands}")
    gt = _load_gt(args.gt, cube)
    train_set, test_set = hd.make_split(gt, _load_split(args.split))
    samples = {"test": test_set, "train": train_set}[args.subset]
    metrics = evaluate(m, samples, cube)
    if args.json:
        print(json.dumps(metrics.to_dict(), sort_keys=True))
    else:
        print(metrics.format_table())
    return 0


def cmd_runs(args):
    if args.n < 2:
        raise UsageError(f"--n must be at least 2 (standard deviation undefined), got {args.n}")
    cube = _load_cube(args.cube, not args.no_normalize)
    gt = _load_gt(args.gt, cube)
    split = _load_split(args.split)
    cfg, overrides = _load_config(args.config)
    spec = _model_spec(args, cube, gt, overrides)
    summary = repeat_runs(spec, (cube, gt, split), cfg, n=args.n)
    if args.json:
        print(json.dumps(summary.to_dict(), sort_keys=True))
    print(summary.format(spec.variant.replace("_", "-")))
    return 0


def cmd_map(args):
    m = load(args.model)
    cube = _load_cube(args.cube, not args.no_normalize)
    if cube.bands != m.spec.D:
        raise HSIRNNError(f"dimension mismatch: model expects {m.spec.D} bands, cube has {cube.bands}")
    pred = classify_scene(m, cube)
    write_ppm(args.out, pred)
    print(f"wrote {cube.cols}x{cube.rows} map to {args.out}")
    if args.gt:
        gt = _load_gt(args.gt, cube)
        labeled = gt.labels > 0
        agree = float((pred[labeled] == gt.labels[labeled]).mean()) if labeled.any() else float("nan")
        print(f"agreement with ground truth on labeled pixels: {100 * agree:.2f}%")
    return 0


def cmd_gradcheck(args):
    ok = True
    for seed in args.seeds:
        for name, report in gradcheck_suite(seed):
            status = "pass" if report.passed else "FAIL"
            print(f"seed {seed}  {name:<18} max_rel_err={report.max_rel_err:.3e}  {status}")
            ok = ok and report.passed
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# parser


def _seeds(text):
    if "-" in text:
        lo, hi = text.split("-", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(s) for s in text.split(",")]


def _add_arch(p):
    p.add_argument("--model", type=_variant, required=True, metavar="VARIANT",
                   help=f"one of {', '.join(VARIANT_NAMES)}")
    p.add_argument("--hidden", type=int, help="GRU/LSTM hidden units H (default 128)")
    p.add_argument("--filters", type=int, help="spatial filters N (default 16)")
    p.add_argument("--shorten-filters", type=int, help="shorten-conv filters M (default 16)")
    p.add_argument("--timesteps", type=int, help="shortened sequence length T (default 5)")
    p.add_argument("--units", type=int, help="parallel GRU units K (default 2)")
    p.add_argument("--patch", type=int, help="patch side P (default 5 for st-ss-*)")
    p.add_argument("--seed", type=int, help="model initialization seed (default 0)")


def build_parser():
    parser = argparse.ArgumentParser(prog="hsirnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic ENVI scene")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--bands", type=int, default=64)
    p.add_argument("--size", type=_size, default=(40, 40), metavar="RxC")
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    def data_flags(p, need_gt=True):
        p.add_argument("--cube", required=True, metavar="HDR")
        p.add_argument("--gt", required=need_gt, metavar="HDR")
        p.add_argument("--no-normalize", action="store_true",
                       help="skip per-band min-max scaling of the cube")

    p = sub.add_parser("train", help="split, build, train and save a model")
    data_flags(p)
    _add_arch(p)
    p.add_argument("--split", metavar="JSON")
    p.add_argument("--config", metavar="JSON")
    p.add_argument("--out", required=True, metavar="MODEL")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model")
    p.add_argument("--model", required=True, metavar="FILE")
    data_flags(p)
    p.add_argument("--split", metavar="JSON")
    p.add_argument("--subset", choices=("test", "train"), default="test")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("runs", help="repeated independent runs, mean±std OA")
    data_flags(p)
    _add_arch(p)
    p.add_argument("--split", metavar="JSON")
    p.add_argument("--config", metavar="JSON")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_runs)

    p = sub.add_parser("map", help="render a classification map as PPM")
    p.add_argument("--model", required=True, metavar="FILE")
    data_flags(p, need_gt=False)
    p.add_argument("--out", required=True, metavar="PPM")
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer")
    p.add_argument("--seed", dest="seeds", type=_seeds, default=[0],
                   help="seed, list (0,1,2) or range (0-4)")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (HSIRNNError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
