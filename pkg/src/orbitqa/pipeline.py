"""End-to-end orchestration: capture, features, training, k-fold studies.

The unit of work is one point cloud: orbit trajectories are built around its
mean center, clips are rendered pose by pose, one key frame per clip feeds
the spatial extractor and the resized clip feeds the temporal extractor.
Per-cloud features are cached as OQAF files keyed by the feature-relevant
part of the configuration, so k-fold studies extract each cloud once.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import features as feat
from . import render
from .config import PipelineConfig
from .errors import ValidationError
from .evaluation import (EvaluationReport, REPORT_CSV_HEADER, evaluate,
                         kfold_split, read_manifest)
from .keyframes import KeyframeSelection, select_keyframes
from .model import TrainResult, batch_predict, train
from .pointcloud import PointCloud, bounding_radius, load_ply, mean_center
from .render import Clip, crop_patch, render_clip, resize_clip, save_png
from .seeding import subseed
from .trajectory import build_sequence, choose_radius, trajectory_table

PATCH = feat.PATCH_SIZE


@dataclass
class CloudFeatures:
    """Per-clip feature blocks for one point cloud."""

    spatial: np.ndarray    # (n_clips, Cs)
    temporal: np.ndarray   # (n_clips, Ct)
    keyframes: KeyframeSelection


def cloud_trajectories(pc: PointCloud, cfg: PipelineConfig):
    center = mean_center(pc)
    b = bounding_radius(pc, center)
    radius = choose_radius(b, kappa=cfg.kappa, vertical_fov_deg=cfg.vertical_fov)
    return build_sequence(center, radius, step_deg=cfg.step_deg, pathways=tuple(cfg.pathways))


def _crop_seed(root_seed: int, cloud_tag: str, pathway: str) -> int:
    return int(subseed(root_seed, "crop", cloud_tag, pathway).generate_state(1)[0])


def extract_reference_features_multi(pc: PointCloud, cfg: PipelineConfig,
                                     crop_modes, cloud_tag: str = "") -> dict:
    """Reference features for several crop modes from one rendering pass.

    Spatial features come from a patch of the key frame at capture
    resolution (random crops are seeded per cloud and clip); temporal
    features come from the bilinearly resized clip and do not depend on the
    crop mode. Returns {crop_mode: CloudFeatures}.
    """
    trajectories = cloud_trajectories(pc, cfg)
    selection = select_keyframes(trajectories, mode=cfg.keyframe_mode,
                                 index=cfg.keyframe_index, objective=cfg.vmd_objective)
    rcfg = render.scene_config(cfg.render_config(), pc, trajectories[0].poses[0])
    spatial_rows = {mode: [] for mode in crop_modes}
    temporal_rows = []
    for i, traj in enumerate(trajectories):
        clip = render_clip(pc, traj, rcfg)
        key_frame = clip.frames[selection.indices[i]]
        for mode in crop_modes:
            patch = crop_patch(key_frame, PATCH, mode=mode,
                               seed=_crop_seed(cfg.seed, cloud_tag, traj.pathway))
            spatial_rows[mode].append(feat.spatial_extract_ref(patch))
        temporal_rows.append(feat.temporal_extract_ref(resize_clip(clip, PATCH, PATCH).frames))
    temporal = np.stack(temporal_rows)
    return {mode: CloudFeatures(spatial=np.stack(spatial_rows[mode]),
                                temporal=temporal, keyframes=selection)
            for mode in crop_modes}


def extract_reference_features(pc: PointCloud, cfg: PipelineConfig, crop_mode: str,
                               cloud_tag: str = "") -> CloudFeatures:
    """Render each clip and compute reference spatial/temporal features."""
    return extract_reference_features_multi(pc, cfg, (crop_mode,), cloud_tag)[crop_mode]


def load_imported_features(import_dir, cloud_stem: str, cfg: PipelineConfig) -> CloudFeatures:
    """Import externally produced OQAF feature maps and pool them.

    Expects <import_dir>/<cloud_stem>/spatial_<P>.oqaf and temporal_<P>.oqaf
    per pathway P; maps of any rank are reduced with global average pooling.
    """
    base = os.path.join(import_dir, cloud_stem)
    spatial_rows = []
    temporal_rows = []
    for p in cfg.pathways:
        s_path = os.path.join(base, f"spatial_{p}.oqaf")
        t_path = os.path.join(base, f"temporal_{p}.oqaf")
        for path in (s_path, t_path):
            if not os.path.exists(path):
                raise ValidationError(f"missing imported feature file {path}")
        spatial_rows.append(feat.gap(feat.import_features(s_path)))
        temporal_rows.append(feat.gap(feat.import_features(t_path)))
    n_frames = int(round(360.0 / cfg.step_deg))
    indices = tuple([cfg.keyframe_index] * len(cfg.pathways))
    selection = KeyframeSelection(indices=indices,
                                  viewpoints=np.zeros((len(cfg.pathways), 3)))
    return CloudFeatures(spatial=np.stack(spatial_rows),
                         temporal=np.stack(temporal_rows), keyframes=selection)


def _file_digest(path) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _cache_dir(cfg: PipelineConfig, cloud_tag: str, crop_mode: str) -> str:
    return os.path.join(cfg.out, "features", cfg.feature_hash()[:16], cloud_tag, crop_mode)


def _read_cached(cache: str) -> CloudFeatures:
    spatial = feat.import_features(os.path.join(cache, "spatial.oqaf")).astype(np.float64)
    temporal = feat.import_features(os.path.join(cache, "temporal.oqaf")).astype(np.float64)
    with open(os.path.join(cache, "keyframes.txt")) as f:
        indices = tuple(int(v) for v in f.read().split())
    selection = KeyframeSelection(indices=indices,
                                  viewpoints=np.zeros((len(indices), 3)))
    return CloudFeatures(spatial=spatial, temporal=temporal, keyframes=selection)


def _write_cached(cache: str, result: CloudFeatures) -> None:
    os.makedirs(cache, exist_ok=True)
    feat.write_feature_file(os.path.join(cache, "spatial.oqaf"), result.spatial)
    feat.write_feature_file(os.path.join(cache, "temporal.oqaf"), result.temporal)
    with open(os.path.join(cache, "keyframes.txt"), "w") as f:
        f.write(result.keyframes.manifest_line() + "\n")


def _cache_complete(cache: str) -> bool:
    return all(os.path.exists(os.path.join(cache, name))
               for name in ("spatial.oqaf", "temporal.oqaf", "keyframes.txt"))


def cloud_features(pc_path, cfg: PipelineConfig, crop_mode: str) -> CloudFeatures:
    """Features for one cloud path, with an OQAF disk cache.

    A cache miss extracts both crop variants from a single rendering pass,
    since studies always need the random-crop features for training and the
    center-crop features for testing.
    """
    stem = os.path.splitext(os.path.basename(pc_path))[0]
    if cfg.extractor == "import":
        return load_imported_features(cfg.import_dir, stem, cfg)
    cloud_tag = f"{stem}-{_file_digest(pc_path)}"
    cache = _cache_dir(cfg, cloud_tag, crop_mode)
    if _cache_complete(cache):
        return _read_cached(cache)
    pc = load_ply(pc_path)
    modes = ("center", "random") if crop_mode in ("center", "random") else (crop_mode,)
    results = extract_reference_features_multi(pc, cfg, modes, cloud_tag=stem)
    for mode, result in results.items():
        _write_cached(_cache_dir(cfg, cloud_tag, mode), result)
    # The float32 cache file is the canonical value: re-read it so a fresh
    # extraction and a cache hit feed bit-identical features downstream.
    return _read_cached(cache)


def _resolve(path: str, base_dir: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def gather_features(entries, manifest_dir: str, cfg: PipelineConfig, crop_mode: str):
    """(n, clips, Cs) and (n, clips, Ct) blocks for every manifest entry."""
    spatial = []
    temporal = []
    for e in entries:
        f = cloud_features(_resolve(e.path, manifest_dir), cfg, crop_mode)
        spatial.append(f.spatial)
        temporal.append(f.temporal)
    return np.stack(spatial), np.stack(temporal)


@dataclass
class FoldResult:
    fold: int
    report: EvaluationReport
    test_indices: np.ndarray
    predictions: np.ndarray


@dataclass
class StudyResult:
    folds: list
    mean_srcc: float
    mean_krcc: float
    mean_plcc: float
    mean_rmse: float

    def table_text(self) -> str:
        lines = ["fold  srcc      krcc      plcc      rmse      n"]
        for fr in self.folds:
            r = fr.report
            lines.append(f"{fr.fold:<5d} {r.srcc:<9.6g} {r.krcc:<9.6g} "
                         f"{r.plcc:<9.6g} {r.rmse:<9.6g} {r.n}")
        lines.append(f"mean  {self.mean_srcc:<9.6g} {self.mean_krcc:<9.6g} "
                     f"{self.mean_plcc:<9.6g} {self.mean_rmse:<9.6g} -")
        return "\n".join(lines) + "\n"

    def table_csv(self) -> str:
        lines = ["fold," + ",".join(REPORT_CSV_HEADER)]
        for fr in self.folds:
            lines.append(f"{fr.fold}," + ",".join(fr.report.csv_row()))
        lines.append(",".join(["mean"] + [f"{v:.6g}" for v in
                                          (self.mean_srcc, self.mean_krcc,
                                           self.mean_plcc, self.mean_rmse)]
                              + [""] * 6))
        return "\n".join(lines) + "\n"


def run_study(manifest_path, cfg: PipelineConfig) -> StudyResult:
    """Grouped k-fold study: per fold, train on the train split (random
    crops) and evaluate on the test split (center crops); report per-fold
    criteria and their mean."""
    entries = read_manifest(manifest_path)
    manifest_dir = os.path.dirname(os.path.abspath(manifest_path))
    train_s, train_t = gather_features(entries, manifest_dir, cfg, crop_mode="random")
    test_s, test_t = gather_features(entries, manifest_dir, cfg, crop_mode="center")
    labels = np.array([e.mos for e in entries])

    folds = []
    for f, (train_idx, test_idx) in enumerate(kfold_split(entries, cfg.k, seed=cfg.seed)):
        result = train(train_s[train_idx], train_t[train_idx], labels[train_idx],
                       cfg.train_config(), aligned_dim=cfg.aligned_dim)
        preds = batch_predict(test_s[test_idx], test_t[test_idx],
                              result.weights, result.head)
        report = evaluate(preds, labels[test_idx])
        folds.append(FoldResult(fold=f, report=report,
                                test_indices=test_idx, predictions=preds))
    return StudyResult(
        folds=folds,
        mean_srcc=float(np.mean([fr.report.srcc for fr in folds])),
        mean_krcc=float(np.mean([fr.report.krcc for fr in folds])),
        mean_plcc=float(np.mean([fr.report.plcc for fr in folds])),
        mean_rmse=float(np.mean([fr.report.rmse for fr in folds])),
    )


def train_on_manifest(manifest_path, cfg: PipelineConfig) -> TrainResult:
    """Train one model on every manifest entry (crop mode per config)."""
    entries = read_manifest(manifest_path)
    manifest_dir = os.path.dirname(os.path.abspath(manifest_path))
    s, t = gather_features(entries, manifest_dir, cfg, crop_mode=cfg.crop_mode)
    labels = np.array([e.mos for e in entries])
    return train(s, t, labels, cfg.train_config(), aligned_dim=cfg.aligned_dim)


def predict_cloud(pc_path, cfg: PipelineConfig, weights, head) -> float:
    """Score a single cloud with a trained model (center crops)."""
    f = cloud_features(pc_path, cfg, crop_mode="center")
    scores = batch_predict(f.spatial[None], f.temporal[None], weights, head)
    return float(scores[0])


def write_capture(pc_path, cfg: PipelineConfig, out_dir) -> list:
    """cmd_capture backend: per-clip PNG directories, a trajectory table,
    and a run manifest with the config hash, seed, and one line per frame."""
    pc = load_ply(pc_path)
    trajectories = cloud_trajectories(pc, cfg)
    rcfg = render.scene_config(cfg.render_config(), pc, trajectories[0].poses[0])
    os.makedirs(out_dir, exist_ok=True)
    frame_lines = []
    for traj in trajectories:
        clip_dir = os.path.join(out_dir, f"clip_{traj.pathway}")
        os.makedirs(clip_dir, exist_ok=True)
        for k, pose in enumerate(traj.poses):
            frame = render.render_frame(pc, pose, rcfg)
            name = f"frame_{k:03d}.png"
            save_png(frame, os.path.join(clip_dir, name))
            frame_lines.append(f"{traj.pathway} {k} clip_{traj.pathway}/{name}")
    with open(os.path.join(out_dir, "trajectory.txt"), "w") as f:
        f.write(trajectory_table(trajectories))
    manifest_lines = [f"config_hash = {cfg.config_hash()}",
                      f"seed = {cfg.seed}",
                      f"source = {os.path.basename(str(pc_path))}"] + frame_lines
    with open(os.path.join(out_dir, "manifest.txt"), "w") as f:
        f.write("\n".join(manifest_lines) + "\n")
    return frame_lines


def features_from_capture(capture_dir, cfg: PipelineConfig, out_dir) -> CloudFeatures:
    """cmd_features backend: read rendered frames back from a capture
    directory, select key frames, and write per-clip OQAF feature files."""
    from .trajectory import parse_trajectory_table

    table_path = os.path.join(capture_dir, "trajectory.txt")
    if not os.path.exists(table_path):
        raise ValidationError(f"{capture_dir} has no trajectory.txt (not a capture directory?)")
    with open(table_path) as f:
        per_path = parse_trajectory_table(f.read())
    missing = [p for p in cfg.pathways if p not in per_path]
    if missing:
        raise ValidationError(f"capture lacks pathway(s) {missing}")

    clips = []
    viewpoints = []
    for p in cfg.pathways:
        positions, _ = per_path[p]
        clip_dir = os.path.join(capture_dir, f"clip_{p}")
        frames = []
        for k in range(positions.shape[0]):
            path = os.path.join(clip_dir, f"frame_{k:03d}.png")
            if not os.path.exists(path):
                raise ValidationError(f"missing frame {path}")
            frames.append(render.load_png(path))
        clips.append(Clip(pathway=p, frames=np.stack(frames)))
        viewpoints.append(positions)

    if cfg.keyframe_mode == "fixed":
        from .keyframes import select_fixed
        indices = select_fixed(cfg.keyframe_index, n_clips=len(clips),
                               n_frames=min(len(c) for c in clips))
    else:
        from .keyframes import select_vmd
        indices = select_vmd(viewpoints, objective=cfg.vmd_objective) \
            if len(clips) > 1 else (0,)
    vps = np.stack([viewpoints[i][indices[i]] for i in range(len(clips))])
    selection = KeyframeSelection(indices=indices, viewpoints=vps)

    cloud_tag = os.path.basename(os.path.normpath(capture_dir))
    os.makedirs(out_dir, exist_ok=True)
    spatial_rows = []
    temporal_rows = []
    for i, clip in enumerate(clips):
        patch = crop_patch(clip.frames[selection.indices[i]], PATCH, mode=cfg.crop_mode,
                           seed=_crop_seed(cfg.seed, cloud_tag, clip.pathway))
        s = feat.spatial_extract_ref(patch)
        t = feat.temporal_extract_ref(resize_clip(clip, PATCH, PATCH).frames)
        feat.write_feature_file(os.path.join(out_dir, f"spatial_{clip.pathway}.oqaf"), s)
        feat.write_feature_file(os.path.join(out_dir, f"temporal_{clip.pathway}.oqaf"), t)
        spatial_rows.append(s)
        temporal_rows.append(t)
    with open(os.path.join(out_dir, "keyframes.txt"), "w") as f:
        f.write(selection.manifest_line() + "\n")
    return CloudFeatures(spatial=np.stack(spatial_rows),
                         temporal=np.stack(temporal_rows), keyframes=selection)
