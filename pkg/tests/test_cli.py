"""End-to-end runs of every subcommand on a miniature pipeline."""

from __future__ import annotations

import json
import os

import numpy as np
import pytest

from mcsteer.cli import main
from mcsteer.dataset import load_dataset
from mcsteer.manifest import sha256_file
from mcsteer.network import load_network
from mcsteer.reports import read_table

GEN_CFG = """\
tracks = 2
samples_per_track = 20
track_length = 200
image_height = 24
image_width = 32
seed = 5
"""

NET_CFG = """\
conv_channels = 3, 4
conv_strides = 2, 1
fc_widths = 8, 1
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One dataset + checkpoint shared by the read-only subcommand tests."""
    root = tmp_path_factory.mktemp("cli")
    (root / "gen.cfg").write_text(GEN_CFG, encoding="utf-8")
    (root / "net.cfg").write_text(NET_CFG, encoding="utf-8")
    assert main(["dataset", "--config", str(root / "gen.cfg"),
                 "--out", str(root / "d.mcsdata")]) == 0
    assert main(["train", "--dataset", str(root / "d.mcsdata"),
                 "--out", str(root / "net.ckpt"),
                 "--net-config", str(root / "net.cfg"),
                 "--epochs", "2", "--lr", "0.01", "--batch-size", "8",
                 "--seed", "3"]) == 0
    return root


class TestDataset:
    def test_outputs_and_manifest(self, workdir):
        ds = load_dataset(str(workdir / "d.mcsdata"))
        assert len(ds) == 40
        assert ds.images.shape[1:] == (1, 24, 32)
        manifest = json.loads((workdir / "d.mcsdata.manifest.json").read_text())
        assert manifest["command"] == "dataset"
        assert manifest["config"]["seed"] == 5
        assert manifest["outputs"][str(workdir / "d.mcsdata")] == \
            sha256_file(str(workdir / "d.mcsdata"))

    def test_refuses_overwrite_without_force(self, workdir, capsys):
        code = main(["dataset", "--config", str(workdir / "gen.cfg"),
                     "--out", str(workdir / "d.mcsdata")])
        assert code == 2
        assert "refusing to overwrite" in capsys.readouterr().err

    def test_force_allows_overwrite(self, workdir, tmp_path):
        out = tmp_path / "d2.mcsdata"
        argv = ["dataset", "--config", str(workdir / "gen.cfg"), "--out", str(out)]
        assert main(argv) == 0
        assert main(argv + ["--force"]) == 0

    def test_seed_flag_overrides_config(self, workdir, tmp_path):
        out = tmp_path / "d3.mcsdata"
        assert main(["dataset", "--config", str(workdir / "gen.cfg"),
                     "--out", str(out), "--seed", "9"]) == 0
        assert load_dataset(str(out)).seed == 9

    def test_byte_identical_rerun(self, workdir, tmp_path):
        out = tmp_path / "d4.mcsdata"
        assert main(["dataset", "--config", str(workdir / "gen.cfg"),
                     "--out", str(out)]) == 0
        assert out.read_bytes() == (workdir / "d.mcsdata").read_bytes()

    def test_unknown_config_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text(GEN_CFG + "tracs = 3\n", encoding="utf-8")
        code = main(["dataset", "--config", str(cfg), "--out", str(tmp_path / "d")])
        assert code == 2
        assert "tracs" in capsys.readouterr().err

    def test_missing_required_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("samples_per_track = 4\n", encoding="utf-8")
        code = main(["dataset", "--config", str(cfg), "--out", str(tmp_path / "d")])
        assert code == 2
        assert "tracks" in capsys.readouterr().err


class TestTrain:
    def test_outputs(self, workdir):
        net, header = load_network(str(workdir / "net.ckpt"))
        assert net.config.conv_channels == (3, 4)
        assert header["train.epochs_done"] == "2"
        assert net.scaler is not None
        columns, rows = read_table(str(workdir / "net.trainlog.tsv"))
        assert columns == ["epoch", "train_mse", "val_mse"]
        assert len(rows) == 2
        assert (workdir / "net.loss.png").stat().st_size > 1000
        manifest = json.loads((workdir / "net.manifest.json").read_text())
        assert manifest["command"] == "train"
        assert str(workdir / "d.mcsdata") in manifest["inputs"]

    def test_byte_identical_rerun(self, workdir, tmp_path):
        argv = ["train", "--dataset", str(workdir / "d.mcsdata"),
                "--out", str(tmp_path / "net.ckpt"),
                "--net-config", str(workdir / "net.cfg"),
                "--epochs", "2", "--lr", "0.01", "--batch-size", "8", "--seed", "3"]
        assert main(argv) == 0
        assert (tmp_path / "net.ckpt").read_bytes() == (workdir / "net.ckpt").read_bytes()
        assert (tmp_path / "net.trainlog.tsv").read_bytes() == \
            (workdir / "net.trainlog.tsv").read_bytes()

    def test_resume_continues_epoch_count(self, workdir, tmp_path):
        out = tmp_path / "resumed.ckpt"
        assert main(["train", "--dataset", str(workdir / "d.mcsdata"),
                     "--out", str(out), "--resume", str(workdir / "net.ckpt"),
                     "--epochs", "3", "--lr", "0.01", "--batch-size", "8",
                     "--seed", "3"]) == 0
        _, header = load_network(str(out))
        assert header["train.epochs_done"] == "5"
        _, rows = read_table(str(tmp_path / "resumed.trainlog.tsv"))
        # resumed epochs are numbered after those already done
        assert [int(r[0]) for r in rows] == [2, 3, 4]

    def test_refuses_overwrite(self, workdir, capsys):
        code = main(["train", "--dataset", str(workdir / "d.mcsdata"),
                     "--out", str(workdir / "net.ckpt"), "--epochs", "1"])
        assert code == 2
        assert "refusing to overwrite" in capsys.readouterr().err

    def test_elementwise_dropout_flag(self, workdir, tmp_path):
        out = tmp_path / "ew.ckpt"
        assert main(["train", "--dataset", str(workdir / "d.mcsdata"),
                     "--out", str(out), "--net-config", str(workdir / "net.cfg"),
                     "--dropout", "elementwise", "--epochs", "1", "--lr", "0.01",
                     "--batch-size", "8", "--seed", "3"]) == 0
        net, _ = load_network(str(out))
        assert net.conv_dropout_kind.value == "elementwise"

    def test_missing_dataset_is_io_error(self, tmp_path, capsys):
        code = main(["train", "--dataset", str(tmp_path / "absent.mcsdata"),
                     "--out", str(tmp_path / "n.ckpt"), "--epochs", "1"])
        assert code == 4
        assert "error:" in capsys.readouterr().err


class TestEval:
    def test_outputs(self, workdir, tmp_path):
        out_dir = tmp_path / "eval"
        assert main(["eval", "--checkpoint", str(workdir / "net.ckpt"),
                     "--dataset", str(workdir / "d.mcsdata"),
                     "--passes", "4", "--bins", "5", "--limit", "12",
                     "--seed", "1", "--out-dir", str(out_dir)]) == 0
        columns, rows = read_table(str(out_dir / "binned.tsv"))
        assert len(rows) == 5
        assert sum(int(r[columns.index("count")]) for r in rows) == 12
        _, summary = read_table(str(out_dir / "summary.tsv"))
        metrics = {r[0]: r[1] for r in summary}
        assert int(metrics["records"]) == 12
        assert int(metrics["passes"]) == 4
        assert float(metrics["mean_uncertainty_error"]) > 0.0
        assert float(metrics["mean_variance"]) >= 0.0
        assert (out_dir / "binned.png").stat().st_size > 1000
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert set(manifest["inputs"]) == {str(workdir / "net.ckpt"),
                                           str(workdir / "d.mcsdata")}

    def test_byte_identical_rerun(self, workdir, tmp_path):
        dirs = [tmp_path / "a", tmp_path / "b"]
        for d in dirs:
            assert main(["eval", "--checkpoint", str(workdir / "net.ckpt"),
                         "--dataset", str(workdir / "d.mcsdata"),
                         "--passes", "3", "--bins", "4", "--limit", "8",
                         "--seed", "1", "--out-dir", str(d)]) == 0
        for name in ("binned.tsv", "summary.tsv", "binned.png"):
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()

    def test_bin_range_flag(self, workdir, tmp_path):
        out_dir = tmp_path / "eval"
        assert main(["eval", "--checkpoint", str(workdir / "net.ckpt"),
                     "--dataset", str(workdir / "d.mcsdata"),
                     "--passes", "2", "--bins", "3", "--limit", "6",
                     "--bin-range=-2.0,2.0", "--out-dir", str(out_dir)]) == 0
        columns, rows = read_table(str(out_dir / "binned.tsv"))
        lo = float(rows[0][columns.index("bin_lo")])
        hi = float(rows[-1][columns.index("bin_hi")])
        assert (lo, hi) == (-2.0, 2.0)

    def test_shape_mismatch_is_config_error(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "wide.cfg"
        cfg.write_text(GEN_CFG.replace("image_width = 32", "image_width = 48"),
                       encoding="utf-8")
        wide = tmp_path / "wide.mcsdata"
        assert main(["dataset", "--config", str(cfg), "--out", str(wide)]) == 0
        code = main(["eval", "--checkpoint", str(workdir / "net.ckpt"),
                     "--dataset", str(wide), "--out-dir", str(tmp_path / "e")])
        assert code == 2
        assert "expects input" in capsys.readouterr().err


class TestSimulate:
    def test_outputs(self, workdir, tmp_path):
        out_dir = tmp_path / "sim"
        assert main(["simulate", "--checkpoint", str(workdir / "net.ckpt"),
                     "--ticks", "8", "--passes", "3", "--seed", "2",
                     "--out-dir", str(out_dir)]) == 0
        columns, rows = read_table(str(out_dir / "simlog.tsv"))
        assert columns[:4] == ["tick", "x", "y", "heading"]
        assert 1 <= len(rows) <= 8
        # no human present: sigma stays exactly zero
        assert all(float(r[columns.index("sigma")]) == 0.0 for r in rows)
        assert (out_dir / "sim.png").stat().st_size > 1000
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["config"]["human"] == "none"

    def test_byte_identical_rerun(self, workdir, tmp_path):
        dirs = [tmp_path / "a", tmp_path / "b"]
        for d in dirs:
            assert main(["simulate", "--checkpoint", str(workdir / "net.ckpt"),
                         "--ticks", "6", "--passes", "2", "--seed", "2",
                         "--human", "corrective", "--out-dir", str(d)]) == 0
        for name in ("simlog.tsv", "sim.png"):
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()

    def test_scripted_human_engages_sigma(self, workdir, tmp_path):
        out_dir = tmp_path / "sim"
        assert main(["simulate", "--checkpoint", str(workdir / "net.ckpt"),
                     "--ticks", "6", "--passes", "3", "--seed", "2",
                     "--human", "perfect", "--kappa", "1000.0",
                     "--out-dir", str(out_dir)]) == 0
        columns, rows = read_table(str(out_dir / "simlog.tsv"))
        sigmas = [float(r[columns.index("sigma")]) for r in rows]
        assert max(sigmas) > 0.0

    def test_unknown_human_is_config_error(self, workdir, tmp_path, capsys):
        code = main(["simulate", "--checkpoint", str(workdir / "net.ckpt"),
                     "--ticks", "2", "--out-dir", str(tmp_path / "s"),
                     "--human", "psychic"])
        assert code == 2
        assert "unknown human source" in capsys.readouterr().err


class TestTopLevel:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "mcsteer" in capsys.readouterr().out

    def test_corrupt_dataset_reports_offset(self, workdir, tmp_path, capsys):
        blob = (workdir / "d.mcsdata").read_bytes()
        bad = tmp_path / "cut.mcsdata"
        bad.write_bytes(blob[: len(blob) // 2])
        code = main(["train", "--dataset", str(bad),
                     "--out", str(tmp_path / "n.ckpt"), "--epochs", "1"])
        assert code == 4
        assert "byte offset" in capsys.readouterr().err
