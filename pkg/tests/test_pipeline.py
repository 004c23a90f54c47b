import os

import numpy as np
import pytest

from orbitqa.config import PipelineConfig
from orbitqa.errors import ValidationError
from orbitqa.features import write_feature_file
from orbitqa.pipeline import (cloud_features, extract_reference_features,
                              features_from_capture, gather_features,
                              load_imported_features, run_study, write_capture)
from orbitqa.pointcloud import save_ply
from orbitqa.synthetic import add_geometric_noise, build_toy_dataset, make_shape


def tiny_cfg(tmp_path, **kw):
    kw.setdefault("width", 256)
    kw.setdefault("height", 232)
    kw.setdefault("out", str(tmp_path / "out"))
    return PipelineConfig(**kw).validate()


@pytest.fixture(scope="module")
def mini_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("mini")
    manifest = build_toy_dataset(str(root), n_points=1500, seed=0,
                                 shapes=("sphere", "cube"),
                                 levels=(0.0, 0.01, 0.02, 0.04, 0.08))
    return manifest


class TestExtraction:
    def test_shapes_and_keyframes(self, tmp_path):
        pc = make_shape("torus", n_points=1200, seed=0)
        cfg = tiny_cfg(tmp_path)
        f = extract_reference_features(pc, cfg, crop_mode="center")
        assert f.spatial.shape == (4, 15)
        assert f.temporal.shape == (4, 12)
        assert f.keyframes.indices == (7, 7, 7, 7)
        assert np.all(np.isfinite(f.spatial)) and np.all(np.isfinite(f.temporal))

    def test_pathway_subset(self, tmp_path):
        pc = make_shape("cone", n_points=800, seed=1)
        cfg = tiny_cfg(tmp_path, pathways="AC")
        f = extract_reference_features(pc, cfg, crop_mode="center")
        assert f.spatial.shape == (2, 15)

    def test_crop_mode_changes_spatial_only(self, tmp_path):
        pc = make_shape("cube", n_points=1200, seed=2)
        cfg = tiny_cfg(tmp_path)
        a = extract_reference_features(pc, cfg, crop_mode="center", cloud_tag="x")
        b = extract_reference_features(pc, cfg, crop_mode="random", cloud_tag="x")
        assert np.array_equal(a.temporal, b.temporal)
        assert not np.array_equal(a.spatial, b.spatial)

    def test_vmd_mode_runs(self, tmp_path):
        pc = make_shape("sphere", n_points=600, seed=3)
        cfg = tiny_cfg(tmp_path, keyframe_mode="vmd")
        f = extract_reference_features(pc, cfg, crop_mode="center")
        assert len(f.keyframes.indices) == 4


class TestCaching:
    def test_cache_round_trip(self, tmp_path):
        cloud = tmp_path / "c.ply"
        save_ply(make_shape("cylinder", n_points=900, seed=4), cloud)
        cfg = tiny_cfg(tmp_path)
        first = cloud_features(str(cloud), cfg, "center")
        cache_root = os.path.join(cfg.out, "features")
        assert os.path.isdir(cache_root)
        second = cloud_features(str(cloud), cfg, "center")
        assert np.allclose(first.spatial, second.spatial, atol=1e-6)
        assert np.allclose(first.temporal, second.temporal, atol=1e-6)
        # random-crop variant was filled by the same pass
        third = cloud_features(str(cloud), cfg, "random")
        assert third.spatial.shape == (4, 15)

    def test_cache_invalidated_by_content_change(self, tmp_path):
        cloud = tmp_path / "c.ply"
        base = make_shape("sphere", n_points=700, seed=5)
        save_ply(base, cloud)
        cfg = tiny_cfg(tmp_path)
        a = cloud_features(str(cloud), cfg, "center")
        save_ply(add_geometric_noise(base, 0.1, seed=1), cloud)
        b = cloud_features(str(cloud), cfg, "center")
        assert not np.array_equal(a.spatial, b.spatial)


class TestImportMode:
    def test_gap_applied_to_imported_maps(self, tmp_path):
        import_dir = tmp_path / "ext"
        stem_dir = import_dir / "cloudx"
        stem_dir.mkdir(parents=True)
        rng = np.random.default_rng(0)
        for p in "ABCD":
            smap = rng.normal(size=(2048, 7, 7)).astype(np.float32)
            tmap = rng.normal(size=(256, 4, 7, 7)).astype(np.float32)
            write_feature_file(stem_dir / f"spatial_{p}.oqaf", smap)
            write_feature_file(stem_dir / f"temporal_{p}.oqaf", tmap)
        cfg = tiny_cfg(tmp_path, extractor="import", import_dir=str(import_dir))
        f = load_imported_features(str(import_dir), "cloudx", cfg)
        assert f.spatial.shape == (4, 2048)
        assert f.temporal.shape == (4, 256)

    def test_missing_file_reported(self, tmp_path):
        cfg = tiny_cfg(tmp_path, extractor="import", import_dir=str(tmp_path))
        with pytest.raises(ValidationError, match="missing imported"):
            load_imported_features(str(tmp_path), "ghost", cfg)


class TestCaptureFeatureRoundTrip:
    def test_disk_path_matches_memory_path(self, tmp_path):
        cloud = tmp_path / "c.ply"
        pc = make_shape("torus", n_points=900, seed=6)
        save_ply(pc, cloud)
        cfg = tiny_cfg(tmp_path)
        cap_dir = str(tmp_path / "cap")
        write_capture(str(cloud), cfg, cap_dir)
        disk = features_from_capture(cap_dir, cfg, str(tmp_path / "feat"))
        mem = extract_reference_features(pc, cfg, crop_mode="center", cloud_tag="c")
        assert np.allclose(disk.temporal, mem.temporal, atol=1e-12)
        # spatial crops share the center window, so they match exactly too
        assert np.allclose(disk.spatial, mem.spatial, atol=1e-12)


class TestRunStudy:
    def test_structure_and_partition(self, mini_dataset, tmp_path):
        cfg = tiny_cfg(tmp_path, k=2, epochs=5)
        result = run_study(mini_dataset, cfg)
        assert len(result.folds) == 2
        seen = np.concatenate([fr.test_indices for fr in result.folds])
        assert sorted(seen.tolist()) == list(range(10))
        for fr in result.folds:
            assert len(fr.predictions) == len(fr.test_indices)
        text = result.table_text()
        assert text.splitlines()[0].startswith("fold")
        assert text.splitlines()[-1].startswith("mean")
        csv_text = result.table_csv()
        assert csv_text.splitlines()[0] == ("fold,srcc,krcc,plcc,rmse,"
                                            "beta1,beta2,beta3,beta4,beta5,n")

    def test_k_exceeding_groups_rejected(self, mini_dataset, tmp_path):
        cfg = tiny_cfg(tmp_path, k=3)
        with pytest.raises(ValidationError):
            run_study(mini_dataset, cfg)

    def test_gather_shapes(self, mini_dataset, tmp_path):
        from orbitqa.evaluation import read_manifest

        cfg = tiny_cfg(tmp_path)
        entries = read_manifest(mini_dataset)
        s, t = gather_features(entries, os.path.dirname(mini_dataset), cfg, "center")
        assert s.shape == (10, 4, 15)
        assert t.shape == (10, 4, 12)
