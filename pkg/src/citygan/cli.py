"""Command-line entry point.

Exit codes: 0 success, 1 usage error (usage text on stderr), 2 runtime
failure (diagnostic on stderr). Every subcommand takes --seed, and a fixed
seed makes every produced artifact byte-identical across runs. Set
CITYGAN_LOG=DEBUG|INFO|WARNING|ERROR for log verbosity.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

from .data import (
    DEFAULT_CROP_FRACTION,
    DatasetManifest,
    INDEX_FILENAME,
    Layout,
    altitude_between,
    filter_manifest,
    scan_dataset,
)
from .explore import (
    InterpolationSpec,
    make_noise,
    render_strip,
    resolve_expression,
    sample_single,
)
from .imaging import save_png
from .models import NetworkConfig, Variant
from .training import (
    TrainConfig,
    load_checkpoint,
    render_eval_grid,
    run_training,
)

log = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse reserves exit code 2 for usage errors; this CLI uses 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


def _image_size(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid size: {text!r}") from None
    if value < 16 or value & (value - 1):
        raise argparse.ArgumentTypeError("image size must be a power of two (>= 16)")
    return value


def _configure_logging():
    name = os.environ.get("CITYGAN_LOG", "WARNING").upper()
    level = getattr(logging, name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _add_seed(parser):
    parser.add_argument("--seed", type=int, default=0,
                        help="seed controlling all randomness (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="citygan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("dataset-scan", help="index an image tree into a manifest")
    p.add_argument("--data", required=True, help="dataset root directory")
    p.add_argument("--layout", choices=["auto"] + [l.value for l in Layout],
                   default="auto", help="directory layout (default: auto-detect)")
    p.add_argument("--out", help="manifest file to write (prints a summary either way)")
    _add_seed(p)
    p.set_defaults(handler=_cmd_dataset_scan)

    p = sub.add_parser("dataset-validate", help="check a manifest or tree for problems")
    p.add_argument("--data", required=True, help="manifest file or dataset root")
    p.add_argument("--layout", choices=["auto"] + [l.value for l in Layout], default="auto")
    _add_seed(p)
    p.set_defaults(handler=_cmd_dataset_validate)

    p = sub.add_parser("train", help="train a generator on a scanned dataset")
    p.add_argument("--data", required=True, help="dataset root or manifest file")
    p.add_argument("--layout", choices=["auto"] + [l.value for l in Layout], default="auto")
    p.add_argument("--arch", choices=[v.value for v in Variant], default=Variant.BROADCAST.value,
                   help="architecture variant (default broadcast)")
    p.add_argument("--size", type=_image_size, default=128,
                   help="output image size, a power of two (default 128)")
    p.add_argument("--classes", type=int,
                   help="expected class count; mismatch with the dataset aborts")
    p.add_argument("--steps", type=int, default=1000, help="training steps (default 1000)")
    p.add_argument("--batch", type=int, default=64, help="batch size (default 64)")
    p.add_argument("--lr", type=float, default=2e-4, help="Adam learning rate (default 2e-4)")
    p.add_argument("--out", required=True, help="run directory for checkpoints and grids")
    p.add_argument("--ckpt", help="checkpoint to resume from")
    p.add_argument("--eval-every", type=int, default=100,
                   help="steps between evaluation grids (default 100)")
    p.add_argument("--ckpt-every", type=int, default=500,
                   help="steps between checkpoints (default 500)")
    p.add_argument("--base-features", type=int, default=64,
                   help="width of the narrowest convolution (default 64)")
    p.add_argument("--noise-dim", type=int, default=100,
                   help="noise vector length (default 100)")
    p.add_argument("--crop-fraction", type=float, default=DEFAULT_CROP_FRACTION,
                   help="target/source crop ratio (default 256/300)")
    p.add_argument("--flip-prob", type=float, default=0.5,
                   help="horizontal flip probability (default 0.5)")
    p.add_argument("--altitude-min", type=float,
                   help="keep samples with altitude_degrees >= this")
    p.add_argument("--altitude-max", type=float,
                   help="keep samples with altitude_degrees <= this")
    _add_seed(p)
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("sample", help="generate one image from a checkpoint")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--from", dest="from_expr", metavar="EXPR",
                   help="label expression, e.g. amsterdam*0.5+florence*0.5")
    p.add_argument("--out", required=True, help="output PNG path")
    _add_seed(p)
    p.set_defaults(handler=_cmd_sample)

    p = sub.add_parser("interpolate", help="render a label interpolation strip")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--from", dest="from_expr", required=True, metavar="EXPR",
                   help="starting label expression")
    p.add_argument("--to", dest="to_expr", required=True, metavar="EXPR",
                   help="ending label expression")
    p.add_argument("--steps", type=int, default=5, help="columns in the strip (default 5)")
    p.add_argument("--seeds", type=int, default=3,
                   help="rows, one noise vector each (default 3)")
    p.add_argument("--out", required=True, help="output PNG path")
    _add_seed(p)
    p.set_defaults(handler=_cmd_interpolate)

    p = sub.add_parser("grid", help="render the class-row evaluation grid")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--seeds", type=int, default=8, help="columns (default 8)")
    p.add_argument("--out", required=True, help="output PNG path")
    _add_seed(p)
    p.set_defaults(handler=_cmd_grid)

    p = sub.add_parser("serve", help="serve a checkpoint over HTTP")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--ui-dir", help="built explorer UI to serve at /")
    p.add_argument("--timeout", type=float, default=30.0,
                   help="per-request model time budget in seconds (default 30)")
    _add_seed(p)
    p.set_defaults(handler=_cmd_serve)

    return parser


def _load_manifest(data, layout="auto") -> DatasetManifest:
    path = Path(data)
    if path.is_file():
        return DatasetManifest.load(path)
    if layout == "auto":
        layout = (Layout.FLAT_WITH_METADATA if (path / INDEX_FILENAME).is_file()
                  else Layout.FOLDER_PER_CLASS)
    return scan_dataset(path, Layout(layout))


def _cmd_dataset_scan(args):
    manifest = _load_manifest(args.data, args.layout)
    if args.out:
        manifest.save(args.out)
        print(f"manifest written to {args.out}")
    print(f"classes: {', '.join(manifest.classes)}")
    print(f"samples: {len(manifest.samples)}")
    print(f"source image size: {manifest.source_image_size}")
    if manifest.unreadable_count:
        print(f"unreadable files skipped: {manifest.unreadable_count}")
    return 0


def _cmd_dataset_validate(args):
    manifest = _load_manifest(args.data, args.layout)
    manifest.validate(check_paths=True)
    print(f"ok: {len(manifest.samples)} samples in {len(manifest.classes)} classes")
    return 0


def _apply_altitude_filter(manifest, lo, hi):
    if lo is None and hi is None:
        return manifest
    lo = float("-inf") if lo is None else lo
    hi = float("inf") if hi is None else hi
    before = len(manifest.samples)
    manifest = filter_manifest(manifest, altitude_between(lo, hi))
    print(f"altitude filter kept {len(manifest.samples)} of {before} samples")
    if manifest.missing_metadata_count:
        print(f"samples without altitude metadata: {manifest.missing_metadata_count}")
    return manifest


def _cmd_train(args):
    manifest = _load_manifest(args.data, args.layout)
    manifest = _apply_altitude_filter(manifest, args.altitude_min, args.altitude_max)
    if args.classes is not None and len(manifest.classes) != args.classes:
        raise RuntimeError(
            f"expected {args.classes} classes, dataset has "
            f"{len(manifest.classes)}: {', '.join(manifest.classes)}"
        )
    variant = Variant(args.arch)
    net = NetworkConfig(
        variant=variant,
        image_size=args.size,
        label_count=0 if variant is Variant.PLAIN else len(manifest.classes),
        noise_dim=args.noise_dim,
        base_feature_maps=args.base_features,
    )
    cfg = TrainConfig(
        network=net,
        total_steps=args.steps,
        learning_rate=args.lr,
        batch_size=args.batch,
        eval_every=args.eval_every,
        checkpoint_every=args.ckpt_every,
        seed=args.seed,
        flip_probability=args.flip_prob,
        crop_fraction=args.crop_fraction,
    )
    record = run_training(cfg, manifest, args.out, resume_from=args.ckpt)
    print(f"final checkpoint: {record.path} (step {record.step})")
    return 0


def _resolve_optional_label(state, expr, flag):
    conditional = state.config.network.conditional
    if conditional:
        if not expr:
            raise RuntimeError(f"this checkpoint is conditional; {flag} is required")
        return resolve_expression(expr, state.classes)
    if expr:
        raise RuntimeError(f"this checkpoint is unconditional; {flag} does not apply")
    return None


def _cmd_sample(args):
    state = load_checkpoint(args.ckpt)
    label = _resolve_optional_label(state, args.from_expr, "--from")
    image = sample_single(state.generator, args.seed, label)
    save_png(image, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_interpolate(args):
    state = load_checkpoint(args.ckpt)
    source = _resolve_optional_label(state, args.from_expr, "--from")
    target = _resolve_optional_label(state, args.to_expr, "--to")
    spec = InterpolationSpec(
        source=source,
        target=target,
        steps=args.steps,
        seeds=tuple(args.seed + i for i in range(args.seeds)),
    )
    save_png(render_strip(state.generator, spec), args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_grid(args):
    state = load_checkpoint(args.ckpt)
    noise = make_noise(args.seed, state.config.network.noise_dim, count=args.seeds)
    grid = render_eval_grid(state.generator, noise, len(state.classes))
    save_png(grid, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_serve(args):
    import uvicorn

    from .service import create_app

    app = create_app(args.ckpt, ui_dir=args.ui_dir, timeout_seconds=args.timeout)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def dispatch(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    try:
        result = args.handler(args)
        return 0 if result is None else int(result)
    except _UsageError:
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        log.debug("runtime failure", exc_info=True)
        return 2


def main():
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
