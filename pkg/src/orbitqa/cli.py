"""Command-line interface.

Subcommands: capture, features, train, predict, evaluate, pipeline.
Exit codes: 0 success, 2 validation error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .config import PipelineConfig, load_config
from .errors import OrbitQAError, ValidationError
from .evaluation import evaluate, read_manifest
from .model import load_checkpoint, save_checkpoint
from .pipeline import (features_from_capture, predict_cloud, run_study,
                       train_on_manifest, write_capture)


def _load_cfg(args) -> PipelineConfig:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = args.out
    cfg.validate()
    return cfg


def cmd_capture(args) -> int:
    cfg = _load_cfg(args)
    out_dir = args.capture_out or os.path.join(cfg.out, "capture")
    lines = write_capture(args.pointcloud, cfg, out_dir)
    print(f"wrote {len(lines)} frames to {out_dir}")
    return 0


def cmd_features(args) -> int:
    cfg = _load_cfg(args)
    out_dir = args.features_out or os.path.join(cfg.out, "features")
    result = features_from_capture(args.capture_dir, cfg, out_dir)
    print(f"keyframes {result.keyframes.manifest_line()}")
    print(f"wrote {result.spatial.shape[0]} spatial + {result.temporal.shape[0]} "
          f"temporal feature files to {out_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    os.makedirs(cfg.out, exist_ok=True)
    result = train_on_manifest(args.manifest, cfg)
    ckpt = args.checkpoint or os.path.join(cfg.out, "model.oqam")
    save_checkpoint(ckpt, result.weights, result.head)
    loss_csv = os.path.join(cfg.out, "loss.csv")
    with open(loss_csv, "w") as f:
        f.write(result.loss_curve_csv())
    print(f"checkpoint {ckpt}")
    print(f"loss curve {loss_csv} (final loss {result.epoch_losses[-1]:.6g})")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_cfg(args)
    weights, head = load_checkpoint(args.checkpoint)
    score = predict_cloud(args.pointcloud, cfg, weights, head)
    print(f"{score:.6g}")
    return 0


def cmd_evaluate(args) -> int:
    entries = read_manifest(args.manifest)
    by_path = {}
    with open(args.predictions, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        fields = reader.fieldnames or []
        missing = [c for c in ("path", "score") if c not in fields]
        if missing:
            raise ValidationError(f"predictions CSV is missing column(s): {', '.join(missing)}")
        for row in reader:
            by_path[row["path"]] = float(row["score"])
    absent = [e.path for e in entries if e.path not in by_path]
    if absent:
        raise ValidationError(f"predictions CSV lacks scores for: {', '.join(absent[:5])}")
    pred = np.array([by_path[e.path] for e in entries])
    mos = np.array([e.mos for e in entries])
    report = evaluate(pred, mos)
    print(report.to_text())
    return 0


def cmd_pipeline(args) -> int:
    cfg = _load_cfg(args)
    os.makedirs(cfg.out, exist_ok=True)
    result = run_study(args.manifest, cfg)
    text = result.table_text()
    with open(os.path.join(cfg.out, "report.txt"), "w") as f:
        f.write(text)
    with open(os.path.join(cfg.out, "report.csv"), "w") as f:
        f.write(result.table_csv())
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="orbitqa",
        description="Point cloud quality assessment from orbital moving-camera videos")
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int, help="override the root seed")
    parser.add_argument("--out", help="override the output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("capture", help="render the orbital video of a point cloud")
    p.add_argument("pointcloud", help="input PLY file")
    p.add_argument("--capture-out", help="capture output directory")
    p.set_defaults(func=cmd_capture)

    p = sub.add_parser("features", help="extract features from a capture directory")
    p.add_argument("capture_dir")
    p.add_argument("--features-out", help="feature output directory")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train a quality model on a manifest")
    p.add_argument("manifest", help="CSV with header path,mos,group")
    p.add_argument("--checkpoint", help="checkpoint output path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score one point cloud with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("pointcloud")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="evaluate a predictions CSV against a manifest")
    p.add_argument("predictions", help="CSV with header path,score")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pipeline", help="k-fold study over a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OrbitQAError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
