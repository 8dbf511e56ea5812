import json

import numpy as np
import pytest

from activest.cli import cli_dispatch
from activest.cloud import load_cloud, save_cloud
from activest.pipeline import ExperimentConfig, Seeds, save_dataset
from activest.sampler import Budget
from activest.classifier import TrainSchedule
from activest.supervoxel import SegmentParams, load_partition
from activest.cloud import AugmentParams
from activest.synth import SceneSpec, make_synthetic_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = SceneSpec(extent=(4.5, 4.5, 2.5), object_counts=(1, 2, 1, 2, 1, 1),
                     points_per_object=80, floor_points=600, wall_points=220)
    clouds = make_synthetic_dataset(2, seed=4, spec=spec, vary_counts=False)
    manifest = save_dataset(clouds, root / "ds")
    config = ExperimentConfig(
        budget=Budget(total_n=16, iterations_k=2, allocation="per-scene", scenes_s=2),
        k_versions=2,
        schedule=TrainSchedule(steps=80, base_lr=0.1, batch_points=64),
        segment_params=SegmentParams(k_neighbors=8, normal_angle_max=20,
                                     color_dist_max=0.17, spatial_dist_max=0.3,
                                     min_sv_size=5),
        augment=AugmentParams(rotation="none", scale_range=(0.95, 1.05),
                              jitter_sigma=0.01, jitter_clip=0.03,
                              color_jitter=0.08),
        hidden=(16, 16), feature_k=8, seeds=Seeds(1, 2, 3),
        dataset=str(manifest),
    )
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(config.to_json()))
    return root, clouds, cfg_path


def test_usage_error_exits_one(capsys):
    assert cli_dispatch(["frobnicate"]) == 1
    assert "usage error" in capsys.readouterr().err


def test_missing_file_exits_two(capsys):
    assert cli_dispatch(["segment", "--in", "nope.ply", "--out", "x.json"]) == 2
    assert "error" in capsys.readouterr().err


def test_synth_writes_dataset(tmp_path, capsys):
    out = tmp_path / "ds"
    assert cli_dispatch(["synth", "--out", str(out), "--scenes", "2",
                         "--seed", "3", "--floor-points", "500",
                         "--wall-points", "150", "--points-per-object", "60",
                         "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["scenes"] == 2
    manifest = json.loads((out / "dataset.json").read_text())
    assert len(manifest["scenes"]) == 2


def test_segment_then_partition_validates(workspace, tmp_path, capsys):
    root, clouds, _ = workspace
    scene = root / "ds" / f"{clouds[0].scene_id}.astc"
    out = tmp_path / "part.json"
    code = cli_dispatch(["segment", "--in", str(scene), "--out", str(out),
                         "--k", "8", "--dist", "0.3", "--min-size", "5", "--json"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    part = load_partition(out, expected_n=clouds[0].n)
    assert part.s == payload["s"]


def test_run_writes_metrics_and_checkpoint(workspace, tmp_path, capsys):
    root, clouds, cfg_path = workspace
    out = tmp_path / "run"
    assert cli_dispatch(["run", "--config", str(cfg_path), "--out", str(out),
                         "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["iterations"] == 2
    csv_text = (out / "metrics.csv").read_text()
    assert csv_text.splitlines()[0].startswith("iteration,miou")
    assert len(csv_text.splitlines()) == 3

    # stats on the finished checkpoint
    assert cli_dispatch(["stats", "--checkpoint", str(out), "--json"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["total_annotations"] == 16
    buckets = stats["instance_buckets"]
    assert buckets["0"] + buckets["1"] + buckets[">1"] == stats["total_instances"]


def test_eval_identical_files_is_hundred(workspace, tmp_path, capsys):
    root, clouds, _ = workspace
    labels = {"labels": clouds[0].gt_semantic.tolist()}
    pred = tmp_path / "pred.json"
    pred.write_text(json.dumps(labels))
    assert cli_dispatch(["eval", "--pred", str(pred), "--gt", str(pred),
                         "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["miou_percent"] == 100.0


def test_infer_pointwise_and_voted(workspace, tmp_path, capsys):
    root, clouds, cfg_path = workspace
    run_dir = tmp_path / "run"
    assert cli_dispatch(["run", "--config", str(cfg_path), "--out", str(run_dir)]) == 0
    capsys.readouterr()
    # export the trained model in the exchange format
    from activest.classifier import save_model
    from activest.pipeline import resume

    _, state = resume(run_dir)
    model_path = tmp_path / "model.astm"
    save_model(state.model, model_path)

    scene = root / "ds" / f"{clouds[0].scene_id}.astc"
    part_path = tmp_path / "part.json"
    assert cli_dispatch(["segment", "--in", str(scene), "--out", str(part_path),
                         "--k", "8", "--dist", "0.3", "--min-size", "5"]) == 0
    out_path = tmp_path / "pred.json"
    assert cli_dispatch(["infer", "--model", str(model_path), "--in", str(scene),
                         "--partition", str(part_path), "--out", str(out_path),
                         "--json"]) == 0
    payload = json.loads(out_path.read_text())
    assert len(payload["labels"]) == clouds[0].n
    # voted predictions are constant within each super-voxel
    part = load_partition(part_path)
    labels = np.asarray(payload["labels"])
    for members in part.members:
        assert len(set(labels[members].tolist())) == 1
    capsys.readouterr()

    # eval predictions against the ground-truth scene file
    assert cli_dispatch(["eval", "--pred", str(out_path), "--gt", str(scene),
                         "--json"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert 0.0 <= result["miou_percent"] <= 100.0
