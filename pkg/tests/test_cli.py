"""Command-line interface: exit codes, manifests, and artifact layouts."""

import json
import os
import shutil

import numpy as np
import pytest

from hno.cli import main
from hno.dataset import read_container, write_container
from hno.viz import field_to_rgb, save_comparison_ppm, write_ppm

THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
               "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")


# ---------------------------------------------------------------------------
# Shared artifacts (built once per module)
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def dr_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("dr_data")
    code = main(["generate", "--problem", "diffusion-reaction", "--nu", "0.2",
                 "--rho", "0.5", "--resolution", "32", "--nt", "32",
                 "--samples", "8", "--test-samples", "2", "--seed", "0",
                 "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def dr_run(dr_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("dr_run")
    code = main(["train", "--data", str(dr_dataset), "--out", str(out),
                 "--preset", "tiny_1d", "--epochs", "2", "--batch-size", "4",
                 "--lr0", "3e-3", "--walltime", "zero"])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def ns_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ns_data")
    code = main(["generate", "--problem", "navier-stokes", "--nu", "1e-3",
                 "--resolution", "8", "--samples", "3", "--test-samples", "2",
                 "--seed", "0", "--T", "1.0", "--snapshots", "4",
                 "--fine-factor", "2", "--out", str(out)])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def ns_run(ns_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("ns_run")
    code = main(["train", "--data", str(ns_dataset), "--out", str(out),
                 "--epochs", "1", "--batch-size", "2", "--lr0", "1e-3",
                 "--walltime", "zero"])
    assert code == 0
    return out


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def test_generate_outputs_and_manifest(dr_dataset, capsys):
    assert (dr_dataset / "train.hno").exists()
    assert (dr_dataset / "test.hno").exists()
    manifest = json.loads((dr_dataset / "manifest.json").read_text())
    assert manifest["seed"] == 0
    assert manifest["config"]["problem"] == "diffusion-reaction"
    assert set(manifest["dataset_hashes"]) == {"train", "test"}
    assert set(manifest["output_paths"]) == {"train", "test"}

    import hashlib
    digest = hashlib.sha256((dr_dataset / "train.hno").read_bytes()).hexdigest()
    assert manifest["dataset_hashes"]["train"] == digest

    meta, arrays = read_container(dr_dataset / "train.hno")
    assert meta["samples"] == 8
    assert arrays["input"].shape == (8, 32, 1)


def test_generate_zero_samples_exits_2(tmp_path, capsys):
    code = main(["generate", "--problem", "diffusion-reaction", "--nu", "0.2",
                 "--rho", "0.5", "--resolution", "32", "--samples", "0",
                 "--test-samples", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "--samples" in capsys.readouterr().err


def test_generate_missing_coefficient_exits_2(tmp_path, capsys):
    code = main(["generate", "--problem", "diffusion-reaction",
                 "--resolution", "32", "--samples", "1", "--test-samples", "1",
                 "--out", str(tmp_path)])
    assert code == 2
    assert "--nu" in capsys.readouterr().err


def test_generate_refuses_overwrite_then_force(dr_dataset, capsys):
    before = (dr_dataset / "train.hno").read_bytes()
    args = ["generate", "--problem", "diffusion-reaction", "--nu", "0.2",
            "--rho", "0.5", "--resolution", "32", "--nt", "32",
            "--samples", "8", "--test-samples", "2", "--seed", "0",
            "--out", str(dr_dataset)]
    assert main(args) == 3
    assert "refusing to overwrite" in capsys.readouterr().err
    assert main(args + ["--force"]) == 0
    assert (dr_dataset / "train.hno").read_bytes() == before


def test_generate_replay_from_manifest(dr_dataset):
    manifest = json.loads((dr_dataset / "manifest.json").read_text())
    assert main(manifest["command"] + ["--force"]) == 0
    replayed = json.loads((dr_dataset / "manifest.json").read_text())
    assert replayed["dataset_hashes"] == manifest["dataset_hashes"]


def test_generate_navier_stokes_metadata(ns_dataset):
    meta, arrays = read_container(ns_dataset / "train.hno")
    assert meta["problem"] == "navier_stokes_2d"
    assert meta["input_steps"] == 2 and meta["target_steps"] == 2
    assert meta["fine_n"] == 16
    assert arrays["input"].shape == (3, 64, 2)
    assert arrays["grid"].shape == (64, 2)


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_end_to_end_artifacts(dr_run, capsys):
    for name in ("best.ckpt", "final.ckpt", "train_log.csv", "manifest.json"):
        assert (dr_run / name).exists(), name
    manifest = json.loads((dr_run / "manifest.json").read_text())
    assert manifest["parameter_count"] == 17_841
    assert manifest["config"]["epochs"] == 2
    assert manifest["config"]["walltime"] == "zero"
    assert manifest["timestamps"] == {"started": "1970-01-01T00:00:00Z",
                                      "finished": "1970-01-01T00:00:00Z"}
    lines = (dr_run / "train_log.csv").read_text().splitlines()
    assert lines[0] == "epoch,step,lr,horizon,train_rel_l2,val_rel_l2,wall_s"
    assert len(lines) == 3


def test_train_unknown_config_key_exits_2(dr_dataset, tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("epochs = 1\nbogus = 3\n")
    code = main(["train", "--data", str(dr_dataset), "--out", str(tmp_path / "run"),
                 "--config", str(cfg)])
    assert code == 2
    assert "unknown config key 'bogus'" in capsys.readouterr().err


def test_train_invalid_config_value_exits_2(dr_dataset, tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("epochs = banana\n")
    code = main(["train", "--data", str(dr_dataset), "--out", str(tmp_path / "run"),
                 "--config", str(cfg)])
    assert code == 2
    assert "'epochs'" in capsys.readouterr().err


def test_train_config_file_applies(dr_dataset, tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("# tiny smoke run\n"
                   "preset = tiny_1d\n"
                   "epochs = 1\n"
                   "batch_size = 8\n"
                   "lr0 = 1e-3\n"
                   "walltime = zero\n")
    run = tmp_path / "run"
    assert main(["train", "--data", str(dr_dataset), "--out", str(run),
                 "--config", str(cfg)]) == 0
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["config"]["epochs"] == 1
    assert manifest["config"]["batch_size"] == 8
    assert manifest["config"]["preset"] == "tiny_1d"


def test_train_refuses_existing_run_exits_3(dr_dataset, dr_run, capsys):
    code = main(["train", "--data", str(dr_dataset), "--out", str(dr_run),
                 "--preset", "tiny_1d", "--epochs", "1", "--walltime", "zero"])
    assert code == 3
    assert "--force" in capsys.readouterr().err


def test_train_missing_dataset_exits_2(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nowhere"),
                 "--out", str(tmp_path / "run")])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_train_unknown_preset_exits_2(dr_dataset, tmp_path, capsys):
    code = main(["train", "--data", str(dr_dataset), "--out", str(tmp_path / "run"),
                 "--preset", "huge_3d", "--epochs", "1"])
    assert code == 2
    assert "unknown preset 'huge_3d'" in capsys.readouterr().err


def test_train_divergence_exits_4(dr_dataset, tmp_path, capsys):
    code = main(["train", "--data", str(dr_dataset), "--out", str(tmp_path / "run"),
                 "--preset", "tiny_1d", "--epochs", "15", "--batch-size", "4",
                 "--lr0", "0.1", "--walltime", "zero"])
    assert code == 4
    assert "diverged" in capsys.readouterr().err


def test_train_resume_continues_schedule(dr_dataset, tmp_path):
    # Library run with a mid-run snapshot, then `--resume` from the CLI must
    # replay the remaining epochs bit-for-bit.
    from hno.model import HyenaNeuralOperator, preset
    from hno.training import TrainConfig, train

    data = read_container(dr_dataset / "train.hno")
    cfg = TrainConfig(lr0=3e-3, epochs=4, batch_size=4, walltime="zero",
                      val_fraction=0.25, seed=0, checkpoint_every=2)
    full_dir = tmp_path / "full"
    snap = tmp_path / "snap.ckpt"

    def keep(epoch, train_loss, val_loss, horizon):
        if epoch == 1:
            shutil.copy(full_dir / "final.ckpt", snap)

    model = HyenaNeuralOperator(preset("tiny_1d"), seed=0)
    train(model, data, cfg, out_dir=full_dir, progress=keep)

    resumed_dir = tmp_path / "resumed"
    assert main(["train", "--data", str(dr_dataset), "--out", str(resumed_dir),
                 "--resume", str(snap)]) == 0
    assert (resumed_dir / "final.ckpt").read_bytes() == \
        (full_dir / "final.ckpt").read_bytes()

    full_rows = (full_dir / "train_log.csv").read_text().splitlines()
    resumed_rows = (resumed_dir / "train_log.csv").read_text().splitlines()
    assert resumed_rows[1:] == full_rows[3:]      # epochs 2..3 match exactly


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def test_eval_report_round_trip(dr_dataset, dr_run, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = main(["eval", "--checkpoint", str(dr_run / "best.ckpt"),
                 "--data", str(dr_dataset), "--out", str(report_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "relative L2 on 2 samples" in out
    report = json.loads(report_path.read_text())
    assert report["samples"] == 2
    assert len(report["per_sample"]) == 2
    assert report["mean"] == pytest.approx(np.mean(report["per_sample"]))
    assert report["dataset_sha256"]
    assert report["checkpoint_sha256"]
    assert report["problem"] == "diffusion_reaction_1d"


def test_eval_problem_mismatch_exits_2(ns_dataset, dr_run, capsys):
    code = main(["eval", "--checkpoint", str(dr_run / "best.ckpt"),
                 "--data", str(ns_dataset)])
    assert code == 2
    assert "does not match" in capsys.readouterr().err


def test_eval_perfect_prediction_scores_zero(dr_dataset, dr_run, tmp_path):
    # Build a dataset whose targets are the model's own predictions; the
    # metric must then be exactly zero.
    from hno.model import build_from_checkpoint
    from hno.training import Normalizer, predict

    meta, arrays = read_container(dr_dataset / "test.hno")
    ckpt = dr_run / "best.ckpt"
    model, _, extras = build_from_checkpoint(ckpt, seq_len=arrays["grid"].shape[0])
    preds = predict(model, Normalizer.from_extras(extras),
                    arrays["input"], arrays["grid"])
    crafted = tmp_path / "crafted"
    crafted.mkdir()
    write_container(crafted / "test.hno", meta,
                    {"input": arrays["input"], "target": preds,
                     "grid": arrays["grid"]})
    report_path = tmp_path / "report.json"
    assert main(["eval", "--checkpoint", str(ckpt), "--data", str(crafted),
                 "--out", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["mean"] == 0.0
    assert report["per_sample"] == [0.0, 0.0]


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------

def test_plot_1d_profile_csv(dr_dataset, dr_run, tmp_path, capsys):
    csv_path = tmp_path / "profile.csv"
    code = main(["plot", "--checkpoint", str(dr_run / "best.ckpt"),
                 "--data", str(dr_dataset), "--sample-index", "1",
                 "--out", str(csv_path)])
    assert code == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "x,truth,prediction"
    assert len(lines) == 1 + 32            # one row per grid point
    first = lines[1].split(",")
    assert len(first) == 3
    assert float(first[0]) == 0.0


def test_plot_sample_index_out_of_range_exits_2(dr_dataset, dr_run, tmp_path, capsys):
    code = main(["plot", "--checkpoint", str(dr_run / "best.ckpt"),
                 "--data", str(dr_dataset), "--sample-index", "99",
                 "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "out of range" in capsys.readouterr().err


def test_plot_2d_ppm_panels_and_fields(ns_dataset, ns_run, tmp_path):
    out = tmp_path / "figs"
    code = main(["plot", "--checkpoint", str(ns_run / "final.ckpt"),
                 "--data", str(ns_dataset), "--sample-index", "0",
                 "--out", str(out)])
    assert code == 0
    for k in (1, 2):
        for panel in ("truth", "prediction", "error"):
            path = out / f"{panel}_step{k:02d}.ppm"
            assert path.exists(), path.name
            blob = path.read_bytes()
            header = f"P6\n{8 * 8} {8 * 8}\n255\n".encode()
            assert blob.startswith(header)
            assert len(blob) == len(header) + 64 * 64 * 3

    meta, fields = read_container(out / "fields.hno")
    assert meta["sample_index"] == 0 and meta["horizon"] == 2
    assert fields["truth"].shape == (8, 8, 2)
    assert fields["prediction"].shape == (8, 8, 2)
    assert np.allclose(fields["abs_error"],
                       np.abs(fields["prediction"] - fields["truth"]))


# ---------------------------------------------------------------------------
# PPM/colormap helpers
# ---------------------------------------------------------------------------

def test_ppm_header_contract(tmp_path):
    rgb = np.zeros((3, 5, 3), dtype=np.uint8)
    path = tmp_path / "img.ppm"
    write_ppm(path, rgb)
    blob = path.read_bytes()
    assert blob == b"P6\n5 3\n255\n" + bytes(45)


def test_zero_error_field_renders_uniform_background():
    rgb = field_to_rgb(np.zeros((4, 4)))
    assert (rgb == rgb[0, 0]).all()
    assert tuple(rgb[0, 0]) == (255, 255, 255)


def test_diverging_colormap_endpoints():
    rgb = field_to_rgb(np.array([[-1.0, 0.0, 1.0]]), vmax=1.0)
    assert tuple(rgb[0, 0]) == (33, 102, 172)    # negative end: blue
    assert tuple(rgb[0, 1]) == (255, 255, 255)   # zero: white
    assert tuple(rgb[0, 2]) == (178, 24, 43)     # positive end: red


def test_comparison_panel_layout(tmp_path):
    truth = np.array([[1.0, -1.0], [0.0, 0.5]])
    path = tmp_path / "cmp.ppm"
    save_comparison_ppm(path, truth, truth, scale=1, gap=2)
    blob = path.read_bytes()
    # three 2x2 panels plus two 2-pixel gutters -> 10 columns by 2 rows
    assert blob.startswith(b"P6\n10 2\n255\n")


# ---------------------------------------------------------------------------
# Threads / environment
# ---------------------------------------------------------------------------

def _snapshot_thread_env():
    return {var: os.environ.get(var) for var in THREAD_VARS}


def _restore_thread_env(saved):
    for var, value in saved.items():
        if value is None:
            os.environ.pop(var, None)
        else:
            os.environ[var] = value


def test_threads_flag_sets_environment(tmp_path):
    saved = _snapshot_thread_env()
    try:
        code = main(["generate", "--problem", "diffusion-reaction", "--nu", "0.2",
                     "--rho", "0.5", "--resolution", "32", "--nt", "32",
                     "--samples", "1", "--test-samples", "1",
                     "--out", str(tmp_path), "--threads", "2"])
        assert code == 0
        for var in THREAD_VARS:
            assert os.environ[var] == "2"
    finally:
        _restore_thread_env(saved)


def test_threads_env_fallback_and_validation(tmp_path, monkeypatch, capsys):
    saved = _snapshot_thread_env()
    try:
        monkeypatch.setenv("HNO_THREADS", "3")
        code = main(["generate", "--problem", "diffusion-reaction", "--nu", "0.2",
                     "--rho", "0.5", "--resolution", "32", "--nt", "32",
                     "--samples", "1", "--test-samples", "1",
                     "--out", str(tmp_path / "a")])
        assert code == 0
        assert os.environ["OMP_NUM_THREADS"] == "3"

        monkeypatch.setenv("HNO_THREADS", "many")
        code = main(["generate", "--problem", "diffusion-reaction", "--nu", "0.2",
                     "--rho", "0.5", "--resolution", "32", "--samples", "1",
                     "--test-samples", "1", "--out", str(tmp_path / "b")])
        assert code == 2
        assert "HNO_THREADS" in capsys.readouterr().err
    finally:
        _restore_thread_env(saved)


def test_threads_rejects_nonpositive(tmp_path, capsys):
    code = main(["generate", "--problem", "diffusion-reaction", "--nu", "0.2",
                 "--rho", "0.5", "--resolution", "32", "--samples", "1",
                 "--test-samples", "1", "--out", str(tmp_path),
                 "--threads", "0"])
    assert code == 2
    assert "--threads" in capsys.readouterr().err
