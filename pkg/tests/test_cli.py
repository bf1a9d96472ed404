import json
import os

import pytest

from voxsem.cli import main
from voxsem.config import HyperParams, tiny_scale
from voxsem.experiment import ExperimentConfig, RunConfig
from voxsem.scenes import SceneConfig
from voxsem.vsem import load_dataset


def tiny_experiment_text(**hyper) -> str:
    """Config text for a small but structurally complete experiment."""
    defaults = dict(steps=1, batch_size=2)
    defaults.update(hyper)
    cfg = ExperimentConfig(
        arch=tiny_scale(),
        hyper=HyperParams(**defaults),
        scene=SceneConfig(extents=(20, 12, 20)),
        run=RunConfig(sample_count=4, folds=2, volume_supersample=2),
    )
    return cfg.to_text()


def gen_tiny_data(tmp_path, count=4):
    data = tmp_path / "data"
    rc = main([
        "gen-data", "--seed", "0", "--count", str(count),
        "--extents", "10,6,10", "--image-shape", "40,30",
        "--supersample", "2", "--out", str(data),
    ])
    assert rc == 0
    return data


def test_version_flag_exits_cleanly(capsys):
    assert main(["--version"]) == 0
    assert "voxsem" in capsys.readouterr().out


def test_no_arguments_is_a_usage_error(capsys):
    assert main([]) == 1


def test_unknown_command_is_a_usage_error(capsys):
    assert main(["frobnicate"]) == 1


def test_gen_data_writes_a_loadable_dataset(tmp_path, capsys):
    data = gen_tiny_data(tmp_path, count=3)
    assert (data / "meta.json").exists()
    assert (data / "00002.volume.vsem").exists()
    dataset = load_dataset(data)
    assert len(dataset) == 3
    assert dataset[0][1].extents == (10, 6, 10)
    assert "wrote 3 samples" in capsys.readouterr().out


def test_gen_data_rejects_malformed_extents(tmp_path, capsys):
    out = str(tmp_path / "d")
    assert main(["gen-data", "--extents", "8,8", "--out", out]) == 1
    assert main(["gen-data", "--extents", "a,b,c", "--out", out]) == 1
    assert main(["gen-data", "--image-shape", "40", "--out", out]) == 1
    assert "error:" in capsys.readouterr().err


def test_train_eval_export_pipeline(tmp_path, capsys):
    data = gen_tiny_data(tmp_path)
    cfg_path = tmp_path / "config.txt"
    cfg_path.write_text(tiny_experiment_text())
    run_dir = tmp_path / "run"

    assert main(["train", "--config", str(cfg_path), "--data", str(data),
                 "--out", str(run_dir)]) == 0
    assert (run_dir / "model.vsck").exists()
    assert (run_dir / "config.txt").exists()
    assert len((run_dir / "losses.jsonl").read_text().splitlines()) == 1

    report_path = tmp_path / "report.json"
    assert main(["eval", "--checkpoint", str(run_dir / "model.vsck"),
                 "--data", str(data), "--report", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert 0.0 <= report["mean_iou"] <= 1.0
    assert "weighted mean" in capsys.readouterr().out

    obj_path = tmp_path / "mesh.obj"
    assert main(["export", "--volume", str(data / "00000.volume.vsem"),
                 "--out", str(obj_path)]) == 0
    text = obj_path.read_text()
    assert text.count("v ") > 0 and text.count("f ") % 12 == 0


def test_train_rejects_unknown_config_keys(tmp_path, capsys):
    data = gen_tiny_data(tmp_path, count=2)
    cfg_path = tmp_path / "config.txt"
    cfg_path.write_text(tiny_experiment_text() + "arch.bogus = 3\n")
    rc = main(["train", "--config", str(cfg_path), "--data", str(data),
               "--out", str(tmp_path / "run")])
    assert rc == 1
    assert "bogus" in capsys.readouterr().err


def test_missing_config_file_is_a_file_error(tmp_path):
    rc = main(["train", "--config", str(tmp_path / "absent.txt"),
               "--data", str(tmp_path), "--out", str(tmp_path / "run")])
    assert rc == 3


def test_eval_missing_checkpoint_is_a_file_error(tmp_path):
    data = gen_tiny_data(tmp_path, count=2)
    rc = main(["eval", "--checkpoint", str(tmp_path / "absent.vsck"),
               "--data", str(data)])
    assert rc == 3


def test_export_rejects_a_depth_record(tmp_path, capsys):
    data = gen_tiny_data(tmp_path, count=2)
    rc = main(["export", "--volume", str(data / "00000.depth.vsem"),
               "--out", str(tmp_path / "mesh.obj")])
    assert rc == 3
    assert "volume record" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_training_is_a_numeric_failure(tmp_path, capsys):
    data = gen_tiny_data(tmp_path, count=2)
    cfg_path = tmp_path / "config.txt"
    cfg_path.write_text(tiny_experiment_text(steps=40, learning_rate=1e8))
    rc = main(["train", "--config", str(cfg_path), "--data", str(data),
               "--out", str(tmp_path / "run")])
    assert rc == 2
    assert "not finite" in capsys.readouterr().err


def test_grad_check_ops_passes(capsys):
    assert main(["grad-check", "--module", "ops", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "conv2d" in out and "deconv3d" in out and "all good" in out


def test_grad_check_all_covers_networks_and_losses(capsys):
    assert main(["grad-check", "--module", "all", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "depth-to-volume" in out and "reconstruction_loss" in out


def test_run_executes_every_fold(tmp_path, capsys):
    cfg_path = tmp_path / "config.txt"
    cfg_path.write_text(tiny_experiment_text())
    out_dir = tmp_path / "exp"
    assert main(["run", "--config", str(cfg_path), "--out", str(out_dir)]) == 0
    stdout = capsys.readouterr().out
    assert "fold 0" in stdout and "fold 1" in stdout
    for name in ("config.txt", "mean_report.json", "fold0/report.json",
                 "fold1/losses.jsonl", "data/meta.json"):
        assert (out_dir / name).exists()


def test_run_rejects_mismatched_scene_extents(tmp_path, capsys):
    cfg = ExperimentConfig(
        arch=tiny_scale(),
        hyper=HyperParams(steps=1, batch_size=2),
        scene=SceneConfig(extents=(30, 12, 20)),
        run=RunConfig(sample_count=4, folds=2, volume_supersample=2),
    )
    cfg_path = tmp_path / "config.txt"
    cfg_path.write_text(cfg.to_text())
    assert main(["run", "--config", str(cfg_path)]) == 1
    assert "extents" in capsys.readouterr().err
