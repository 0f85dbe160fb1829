"""Command-line entry point: ``synth``, ``train``, ``eval`` and ``predict``.

Results go to stdout, errors to stderr. Exit status is 0 on success, 2 for
usage errors and 1 for anything else.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint
from .config import DEFAULT_CLASS_NAMES
from .dataset import load_manifest, synth_dataset
from .errors import ConfigError, DivergenceError, ValidationError, VceClipError
from .images import decode_image, normalize, resize
from .metrics import build_report, render_report
from .model import ClipModel
from .runconfig import add_override_flags, run_config_from_args
from .train import fit, format_epoch, predict_manifest

CHECKPOINT_NAME = "model.vcec"
HISTORY_NAME = "history.json"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vceclip", description=__doc__.splitlines()[0], allow_abbrev=False)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset split", allow_abbrev=False)
    s.add_argument("--config")
    s.add_argument("--out", help="dataset root (defaults to data_root from the config)")
    s.add_argument("--classes", type=int, help="use the first N default labels")
    s.add_argument("--per-class", type=int, required=True)
    s.add_argument("--size", type=int, default=64, help="image side in pixels")
    s.add_argument("--split", choices=("train", "validation"), default="train")
    add_override_flags(s)

    t = sub.add_parser("train", help="fine-tune a model", allow_abbrev=False)
    t.add_argument("--config")
    add_override_flags(t)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a manifest", allow_abbrev=False)
    e.add_argument("--config")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--out-dir", help="where to write report.txt/report.json (default: checkpoint folder)")
    e.add_argument("--eval-batch-size", type=int, default=32)

    r = sub.add_parser("predict", help="classify one image", allow_abbrev=False)
    r.add_argument("--config")
    r.add_argument("--checkpoint", required=True)
    r.add_argument("--image", required=True)
    return p


def format_probabilities(probs: np.ndarray, decimals: int = 6) -> list[str]:
    """Fixed-point strings that sum to exactly 1 (largest-remainder rounding)."""
    unit = 10**decimals
    scaled = np.asarray(probs, dtype=np.float64) * unit
    units = np.floor(scaled).astype(np.int64)
    short = unit - int(units.sum())
    order = sorted(range(len(units)), key=lambda i: (-(scaled[i] - units[i]), i))
    for i in order[: max(short, 0)]:
        units[i] += 1
    return [f"{u // unit}.{u % unit:0{decimals}d}" for u in units]


def load_image_for(model: ClipModel, path: str | Path) -> np.ndarray:
    return normalize(resize(decode_image(path), model.config.image_size))


def predict_lines(model: ClipModel, image: np.ndarray) -> list[str]:
    probs, pred = model.predict(image[None])
    names = model.class_names
    width = max(len(n) for n in names)
    lines = [f"{name:<{width}}  {p}" for name, p in zip(names, format_probabilities(probs[0]))]
    lines.append(f"prediction: {names[int(pred[0])]}")
    return lines


def cmd_synth(args) -> int:
    cfg = run_config_from_args(args)
    out = args.out or cfg.data_root
    if not out:
        raise _Usage("synth needs --out (or data_root in the config)")
    if args.classes is not None:
        if not 2 <= args.classes <= len(DEFAULT_CLASS_NAMES):
            raise ConfigError(f"--classes must be between 2 and {len(DEFAULT_CLASS_NAMES)}")
        names = list(DEFAULT_CLASS_NAMES[: args.classes])
    else:
        names = cfg.class_names
    if args.per_class < 1 or args.size < 1:
        raise ConfigError("--per-class and --size must be >= 1")
    manifest = synth_dataset(names, args.per_class, args.size, cfg.seed, out, args.split)
    print(f"wrote {len(manifest)} images in {len(names)} classes to {out}; manifest {Path(out) / (args.split + '.csv')}")
    return 0


def cmd_train(args) -> int:
    cfg = run_config_from_args(args)
    root = Path(cfg.data_root) if cfg.data_root else None
    train_path = cfg.train_manifest or (root / "train.csv" if root else None)
    val_path = cfg.val_manifest or (root / "validation.csv" if root else None)
    if train_path is None or val_path is None:
        raise ConfigError("train needs train_manifest and val_manifest (or data_root)")
    train_m = load_manifest(train_path)
    val_m = load_manifest(val_path)
    for which, m in (("train", train_m), ("validation", val_m)):
        if m.class_names != cfg.class_names:
            raise ValidationError(f"{which} manifest classes {m.class_names} != configured classes {cfg.class_names}")
    model = ClipModel.initialize(cfg.model, cfg.class_names, cfg.prompt_template)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        model, history = fit(
            model, train_m, val_m, cfg.train, cfg.augment,
            on_epoch=lambda r: print(format_epoch(r), flush=True),
            workers=cfg.workers,
        )
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    checkpoint.save(model, out / CHECKPOINT_NAME)
    (out / HISTORY_NAME).write_text(history.to_json(), encoding="utf-8")
    print(f"stop_reason {history.stop_reason} best_epoch {history.best_epoch}")
    print(f"wrote {out / CHECKPOINT_NAME} and {out / HISTORY_NAME}")
    return 0


def cmd_eval(args) -> int:
    if args.config:
        run_config_from_args(args)
    if args.eval_batch_size < 1:
        raise ConfigError("--eval-batch-size must be >= 1")
    model = checkpoint.load(args.checkpoint)
    manifest = load_manifest(args.manifest)
    if manifest.class_names != model.class_names:
        raise ValidationError(
            f"class sets differ: checkpoint {model.class_names} vs manifest {manifest.class_names}"
        )
    labels, logits, probs = predict_manifest(model, manifest, args.eval_batch_size)
    report = build_report(labels, np.argmax(logits, axis=1), probs, model.class_names)
    out = Path(args.out_dir) if args.out_dir else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    text = render_report(report, "text")
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.json").write_text(render_report(report, "json"), encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_predict(args) -> int:
    if args.config:
        run_config_from_args(args)
    model = checkpoint.load(args.checkpoint)
    image = load_image_for(model, args.image)
    print("\n".join(predict_lines(model, image)))
    return 0


class _Usage(Exception):
    pass


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "predict": cmd_predict}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except _Usage as e:
        parser.print_usage(sys.stderr)
        print(f"vceclip {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (VceClipError, OSError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
