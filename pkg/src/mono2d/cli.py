"""``mono2d`` command line: extract, gradcheck, train, eval, histcompare, bench."""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from .checks import benchmark, compare_histograms, gradient_check_suite
from .config import RunConfig, dumps_config, parse_config
from .errors import (CheckpointError, ConfigError, DivergenceError, InvalidInputError,
                     UnreadableFileError)
from .filters import LowPassSpec
from .io import atomic_write_text, load_checkpoint, read_pgm, save_checkpoint, write_features, write_pgm
from .monogenic import channel_names, forward
from .params import init_bank
from .spectral import worker_count
from .trainer import (SegmentationModel, default_shift_suite, evaluate_ssdg,
                      generate_dataset, make_test_sets, train, write_metrics_csv)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3
EXIT_UNREADABLE = 4
EXIT_FORMAT = 5
EXIT_CHECKPOINT = 6

log = logging.getLogger("mono2d")


class UsageError(Exception):
    pass


def parse_shape(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"shape must look like 64x64, got {text!r}") from None
    if h < 2 or w < 2:
        raise argparse.ArgumentTypeError("shape sides must be >= 2")
    return h, w


# -- config plumbing -----------------------------------------------------------

_FLAG_TYPES = {"int": int, "float": float, "str": str}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value run configuration file")
    for f in fields(RunConfig):
        if f.type == "bool":
            continue
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=_FLAG_TYPES[f.type], default=None)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--mono2d", dest="use_mono2d", action="store_const", const=True, default=None)
    group.add_argument("--raw", dest="use_mono2d", action="store_const", const=False)
    p.add_argument("--freeze", dest="freeze", action=argparse.BooleanOptionalAction, default=None)


def _run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config is not None:
        try:
            text = args.config.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        cfg = parse_config(text)
    return cfg.updated(**{f.name: getattr(args, f.name) for f in fields(RunConfig)})


def _print_table(rows) -> None:
    print(f"{'domain':<20} {'dice':>8}")
    for name, value in rows:
        print(f"{name:<20} {value:8.4f}")


# -- commands ------------------------------------------------------------------

def cmd_extract(args) -> int:
    images = []
    for path in args.images:
        img, _ = read_pgm(path)
        images.append((Path(path), img))
    lpf = LowPassSpec(args.cutoff, args.order)
    if args.checkpoint is not None:
        bank, _, _ = load_checkpoint(args.checkpoint)
        if bank is None:
            raise CheckpointError(f"{args.checkpoint}: no filter bank")
        source = f"checkpoint:{Path(args.checkpoint).name}"
    else:
        shape = args.train_shape or images[0][1].shape
        bank = init_bank(args.n_scales, *shape, seed=args.init_seed)
        source = "init"
    flags = {"seed": args.init_seed if args.checkpoint is None else "none", "bank": source,
             "mode": args.mode, "rescale": args.rescale, "cutoff": repr(args.cutoff),
             "order": args.order, "epsilon": repr(args.epsilon), "input": int(args.include_input)}
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run(item):
        path, img = item
        feats = forward(img, bank, lpf, args.mode, args.epsilon, args.rescale)
        channels, names = feats.channels, list(feats.names)
        if args.include_input:
            channels = np.concatenate([img[None], channels])
            names = ["input"] + names
        stem = out_dir / path.stem
        write_features(stem.with_suffix(".mono2d"), channels, names, bank.n_scales, flags)
        if args.pgm:
            for name, ch in zip(names, channels):
                write_pgm(out_dir / f"{path.stem}_{name}.pgm", np.clip(ch, 0.0, 1.0))
        return stem.with_suffix(".mono2d")

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        for written in pool.map(run, images):
            print(written)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    report = gradient_check_suite(args.seed, args.shape, args.n_scales, configs=args.configs,
                                  step=args.step, tolerance=args.tolerance,
                                  perturb_analytic=args.perturb_analytic)
    print(f"seed {args.seed}  shape {args.shape[0]}x{args.shape[1]}  n_scales {args.n_scales}")
    print(f"parameters checked: {report.n_checked} ({args.configs} configuration(s), "
          f"{2 * args.n_scales} per bank)")
    for kind, value in report.max_rel.items():
        print(f"max relative error {kind:<13} {value:.3e}")
    if not report.ok:
        for label, param, analytic, fd in report.failures:
            print(f"FAIL {label} {param}: analytic {analytic:.6e} fd {fd:.6e}")
        return EXIT_VERIFY
    print(f"ok (tolerance {report.tolerance:g})")
    return EXIT_OK


def _model_extra(cfg: RunConfig) -> dict:
    return {"model.use_mono2d": cfg.use_mono2d, "model.mode": cfg.mode, "model.cutoff": repr(cfg.cutoff),
            "model.order": cfg.order, "model.epsilon": repr(cfg.epsilon), "model.rescale": cfg.rescale,
            "model.height": cfg.height, "model.width": cfg.width, "seed": cfg.seed}


def cmd_train(args) -> int:
    cfg = _run_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_text(out_dir / "config.txt", dumps_config(cfg))
    dataset = generate_dataset(cfg.train_count, cfg.shape, seed=cfg.seed)
    result = train(cfg.train_config(), dataset, use_mono2d=cfg.use_mono2d, mode=cfg.mode,
                   freeze_layer=cfg.freeze)
    model = result.model
    source, shifted = make_test_sets(cfg.test_count, cfg.shape, cfg.seed)
    report = evaluate_ssdg(model, source, shifted)
    write_metrics_csv(out_dir / "metrics.csv", result.log, seed=cfg.seed,
                      domain_dice={"source": report.source_dice, **report.domain_dice})
    extra = _model_extra(cfg)
    save_checkpoint(out_dir / "checkpoint.txt", model.bank, model.head,
                    {**extra, "best_epoch": result.best_epoch, "best_val_dice": repr(result.best_val_dice)})
    if result.initial_bank is not None:
        save_checkpoint(out_dir / "initial_bank.txt", result.initial_bank, extra=extra)
    print(f"seed {cfg.seed}  {'mono2d' if cfg.use_mono2d else 'raw'}  mode {cfg.mode}  "
          f"freeze {cfg.freeze}  best epoch {result.best_epoch}  val dice {result.best_val_dice:.4f}")
    _print_table(report.rows())
    return EXIT_OK


def _model_from_checkpoint(path) -> tuple[SegmentationModel, dict]:
    bank, head, kv = load_checkpoint(path)
    if head is None:
        raise CheckpointError(f"{path}: no head weights")
    try:
        use_mono2d = kv.get("model.use_mono2d", str(bank is not None)) == "True"
        lpf = LowPassSpec(float(kv.get("model.cutoff", 0.5)), int(kv.get("model.order", 10)))
        model = SegmentationModel(head, bank if use_mono2d else None, kv.get("model.mode", "both"), lpf,
                                  float(kv.get("model.epsilon", 1e-12)), kv.get("model.rescale", "image"))
    except (ValueError, ConfigError) as exc:
        raise CheckpointError(f"{path}: bad model metadata: {exc}") from exc
    if use_mono2d and bank is None:
        raise CheckpointError(f"{path}: model needs a filter bank")
    expected = len(channel_names(model.mode)) if use_mono2d else 1
    if head.weights.size != expected:
        raise CheckpointError(f"{path}: head has {head.weights.size} channels, model produces {expected}")
    return model, kv


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    model, kv = _model_from_checkpoint(args.checkpoint)
    source, shifted = make_test_sets(cfg.test_count, cfg.shape, cfg.seed)
    report = evaluate_ssdg(model, source, shifted)
    print(f"seed {cfg.seed}  checkpoint {args.checkpoint}")
    _print_table(report.rows())
    if args.out is not None:
        lines = [f"# seed = {cfg.seed}", "domain,dice"]
        lines += [f"{name},{value!r}" for name, value in report.rows()]
        atomic_write_text(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_histcompare(args) -> int:
    if args.synthetic is not None:
        specs = {s.name: s for s in default_shift_suite()}
        if args.synthetic not in specs:
            raise UsageError(f"unknown domain {args.synthetic!r}; choose from {sorted(specs)}")
        if args.count < 1:
            raise UsageError("--count must be >= 1")
        shape = args.shape
        set_a = [s.image for s in generate_dataset(args.count, shape, seed=args.seed)]
        set_b = [s.image for s in generate_dataset(args.count, shape, specs[args.synthetic], seed=args.seed)]
    else:
        if not args.set_a or not args.set_b:
            raise UsageError("both image sets need at least one image")
        set_a = [read_pgm(p)[0] for p in args.set_a]
        set_b = [read_pgm(p)[0] for p in args.set_b]
        shape = set_a[0].shape
    if args.checkpoint is not None:
        bank, _, _ = load_checkpoint(args.checkpoint)
        if bank is None:
            raise CheckpointError(f"{args.checkpoint}: no filter bank")
    else:
        bank = init_bank(args.n_scales, *shape, seed=args.seed)
    dist = compare_histograms(set_a, set_b, bank)
    print(f"seed {args.seed}  |A| = {len(set_a)}  |B| = {len(set_b)}  bins 64")
    print(f"wasserstein raw   {dist['raw']:.6e}")
    print(f"wasserstein phase {dist['phase']:.6e}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.repetitions < 1:
        raise UsageError("--repetitions must be >= 1")
    rep = benchmark(args.shape, args.n_scales, args.repetitions, args.seed)
    print(f"shape {rep.shape[0]}x{rep.shape[1]}  n_scales {rep.n_scales}  repetitions {rep.repetitions}  "
          f"threads {worker_count()}")
    print(f"forward          {rep.forward_mean * 1e3:9.3f} ms +- {rep.forward_std * 1e3:.3f}")
    print(f"forward+tangents {rep.tangent_mean * 1e3:9.3f} ms +- {rep.tangent_std * 1e3:.3f}")
    print(f"ratio {rep.ratio:.2f} (bound {rep.bound:.2f})")
    if not rep.ok:
        print("FAIL tangent cost exceeds bound")
        return EXIT_VERIFY
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mono2d", description="Trainable monogenic feature layer.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="phase/asymmetry features for PGM images")
    p.add_argument("images", nargs="+")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--checkpoint")
    src.add_argument("--init-seed", type=int, default=0)
    p.add_argument("--n-scales", type=int, default=8)
    p.add_argument("--train-shape", type=parse_shape, help="shape that fixes f0_min for a fresh bank")
    p.add_argument("--mode", choices=["phase", "asym", "both"], default="both")
    p.add_argument("--rescale", choices=["image", "none"], default="image")
    p.add_argument("--cutoff", type=float, default=0.5)
    p.add_argument("--order", type=int, default=10)
    p.add_argument("--epsilon", type=float, default=1e-12)
    p.add_argument("--include-input", action="store_true")
    p.add_argument("--pgm", action="store_true", help="also write 8-bit previews")
    p.add_argument("-o", "--out-dir", default=".")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("gradcheck", help="tangent gradients against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--shape", type=parse_shape, default=(32, 32))
    p.add_argument("--n-scales", type=int, default=4)
    p.add_argument("--configs", type=int, default=2)
    p.add_argument("--step", type=float, default=1e-4)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--perturb-analytic", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", help="toy segmentation run with shifted-domain evaluation")
    _add_config_flags(p)
    p.add_argument("-o", "--out-dir", default="run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the shifted-domain suite")
    _add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("histcompare", help="raw vs phase histogram distances between image sets")
    p.add_argument("--a", dest="set_a", nargs="*", default=[])
    p.add_argument("--b", dest="set_b", nargs="*", default=[])
    p.add_argument("--synthetic", help="compare source against this synthetic shifted domain")
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--shape", type=parse_shape, default=(64, 64))
    p.add_argument("--checkpoint")
    p.add_argument("--n-scales", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_histcompare)

    p = sub.add_parser("bench", help="forward and tangent latency")
    p.add_argument("--shape", type=parse_shape, default=(256, 256))
    p.add_argument("--n-scales", type=int, default=8)
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"mono2d {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"mono2d {args.command}: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except CheckpointError as exc:
        print(f"mono2d {args.command}: corrupt checkpoint: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except UnreadableFileError as exc:
        print(f"mono2d {args.command}: {exc}", file=sys.stderr)
        return EXIT_UNREADABLE
    except InvalidInputError as exc:
        print(f"mono2d {args.command}: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
