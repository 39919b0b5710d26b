import csv
import gzip
import json
import struct

import numpy as np
import pytest

from eam import quantizer as qz
from eam.cli import load_snapshots, main, parse_float_list, parse_int_list
from eam.dataset import make_partition
from eam.features import extract_array, import_features, synthesize
from eam.iofmt import read_pgm, write_pgm


def write_idx(tmp_path, images, labels, stem="fx"):
    img = tmp_path / f"{stem}-images.gz"
    lbl = tmp_path / f"{stem}-labels.gz"
    img.write_bytes(gzip.compress(struct.pack(">IIII", 0x803, len(images), 28, 28)
                                  + images.astype(np.uint8).tobytes()))
    lbl.write_bytes(gzip.compress(struct.pack(">II", 0x801, len(labels))
                                  + labels.astype(np.uint8).tobytes()))
    return str(img), str(lbl)


@pytest.fixture
def fixture100(tmp_path, mnist5k):
    idx = np.concatenate([np.flatnonzero(mnist5k.labels == d)[:10] for d in range(10)])
    return write_idx(tmp_path, mnist5k.images[idx], mnist5k.labels[idx])


@pytest.fixture
def fixture5k(tmp_path, mnist5k):
    return write_idx(tmp_path, mnist5k.images, mnist5k.labels, "all")


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def test_parse_lists():
    assert parse_int_list("0-3,7") == [0, 1, 2, 3, 7]
    assert parse_float_list("1,2.5,100") == [1, 2.5, 100]


class TestExtract:
    def test_three_images(self, tmp_path, mnist5k):
        img, lbl = write_idx(tmp_path, mnist5k.images[:3], mnist5k.labels[:3])
        out = tmp_path / "f.txt"
        assert main(["extract", "--images", img, "--labels", lbl, "--out", str(out)]) == 0
        labels, feats = import_features(out)
        assert labels.tolist() == mnist5k.labels[:3].tolist()
        assert feats.shape == (3, 64)
        assert out.read_text().splitlines()[0] == "#eam-features n=64"

    def test_grid_sets_header(self, tmp_path, mnist5k):
        img, lbl = write_idx(tmp_path, mnist5k.images[:2], mnist5k.labels[:2])
        out = tmp_path / "f.txt"
        assert main(["extract", "--images", img, "--labels", lbl, "--grid", "4",
                     "--out", str(out)]) == 0
        assert out.read_text().startswith("#eam-features n=16\n")

    def test_missing_labels(self, tmp_path, mnist5k, capsys):
        img, _ = write_idx(tmp_path, mnist5k.images[:3], mnist5k.labels[:3])
        assert main(["extract", "--images", img, "--out", str(tmp_path / "f")]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_bad_idx_is_data_error(self, tmp_path):
        bad = tmp_path / "bad"
        bad.write_bytes(b"\x00\x00\x08\x01" + b"\x00" * 12)
        assert main(["extract", "--images", str(bad), "--labels", str(bad),
                     "--out", str(tmp_path / "f")]) == 2


class TestExp:
    def test_exp1_single_point(self, tmp_path, fixture100):
        img, lbl = fixture100
        out = tmp_path / "out"
        code = main(["exp", "1", "--images", img, "--labels", lbl, "--folds", "0",
                     "--m-range", "0", "--out", str(out), "--jobs", "1"])
        assert code == 0
        rows = read_csv(out / "exp1.csv")
        assert len(rows) == 1 and float(rows[0]["recall"]) == 1.0
        summary = json.loads((out / "exp1_summary.json").read_text())
        assert summary["points"][0]["recall"]["mean"] == 1.0

    def test_unknown_experiment(self, tmp_path, fixture100):
        img, lbl = fixture100
        assert main(["exp", "7", "--images", img, "--labels", lbl,
                     "--out", str(tmp_path)]) == 1

    def test_two_inputs_rejected(self, tmp_path, fixture100):
        img, lbl = fixture100
        feats = tmp_path / "f.txt"
        main(["extract", "--images", img, "--labels", lbl, "--out", str(feats)])
        assert main(["exp", "1", "--images", img, "--labels", lbl,
                     "--features", str(feats), "--out", str(tmp_path)]) == 1

    @pytest.mark.parametrize("which", ["1", "2", "3", "4"])
    def test_rerun_is_byte_identical(self, tmp_path, fixture100, which):
        img, lbl = fixture100
        outs = []
        for k in range(2):
            out = tmp_path / f"run{k}"
            assert main(["exp", which, "--images", img, "--labels", lbl, "--folds", "0,1",
                         "--m-range", "0-4", "--seed", "5", "--out", str(out),
                         "--jobs", "1"]) == 0
            outs.append((out / f"exp{which}.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_config_file_and_override(self, tmp_path, fixture100):
        img, lbl = fixture100
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"images": img, "labels": lbl, "m_range": [0, 1, 2],
                                   "folds": [0], "seed": 3, "jobs": 1,
                                   "out": str(tmp_path / "a")}))
        assert main(["exp", "2", "--config", str(cfg), "--m-range", "1"]) == 0
        rows = read_csv(tmp_path / "a" / "exp2.csv")
        assert [r["value"] for r in rows] == ["1"]

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"colour": "blue"}))
        assert main(["exp", "1", "--config", str(cfg)]) == 1

    def test_exp4_images(self, tmp_path, fixture5k):
        img, lbl = fixture5k
        out = tmp_path / "e4"
        assert main(["exp", "4", "--images", img, "--labels", lbl, "--fills", "50,100",
                     "--cue-source", "rem", "--out", str(out), "--jobs", "1"]) == 0
        for d in range(10):
            assert read_pgm(out / f"exp4_d{d}_fill100.pgm").shape == (28, 28)
            assert (out / f"exp4_d{d}_cue.pgm").exists()
            assert (out / f"exp4_d{d}_decoded.pgm").exists()

    def test_features_input(self, tmp_path, fixture100):
        img, lbl = fixture100
        feats = tmp_path / "f.txt"
        main(["extract", "--images", img, "--labels", lbl, "--out", str(feats)])
        for src in (["--features", str(feats)], ["--images", img, "--labels", lbl]):
            out = tmp_path / src[0].strip("-")
            assert main(["exp", "3", *src, "--folds", "0", "--out", str(out),
                         "--jobs", "1"]) == 0
        a = (tmp_path / "features" / "exp3.csv").read_text()
        b = (tmp_path / "images" / "exp3.csv").read_text()
        assert a == b


class TestBuildRetrieve:
    @pytest.fixture
    def snapshots(self, tmp_path, fixture5k):
        img, lbl = fixture5k
        snap = tmp_path / "snap"
        assert main(["build", "--images", img, "--labels", lbl, "--folds", "0",
                     "--m", "5", "--out", str(snap)]) == 0
        return snap

    def test_remembered_cue_identity(self, tmp_path, snapshots, mnist5k, capsys):
        part = make_partition(mnist5k.labels, 0, 0)
        i = part.rem_idx[0]
        cue_path, out_path = tmp_path / "cue.pgm", tmp_path / "got.pgm"
        write_pgm(cue_path, mnist5k.images[i])
        code = main(["retrieve", "--snapshots", str(snapshots), "--image", str(cue_path),
                     "--sampler", "identity", "--out", str(out_path)])
        assert code == 0
        assert "accepted" in capsys.readouterr().out
        system, spec = load_snapshots(snapshots)
        levels = qz.quantize(system.quantizer, extract_array(spec, mnist5k.images[i][None])[0])
        decoded = synthesize(spec, qz.dequantize(system.quantizer, levels))
        np.testing.assert_array_equal(read_pgm(out_path), decoded.pixels)

    def test_missing_snapshot(self, tmp_path):
        cue = tmp_path / "cue.pgm"
        write_pgm(cue, np.zeros((28, 28), np.uint8))
        assert main(["retrieve", "--snapshots", str(tmp_path / "nope"),
                     "--image", str(cue)]) == 2

    def test_noise_rejected_at_fine_granularity(self, tmp_path, fixture5k):
        img, lbl = fixture5k
        snap = tmp_path / "snap9"
        assert main(["build", "--images", img, "--labels", lbl, "--folds", "0",
                     "--m", "9", "--out", str(snap)]) == 0
        system, spec = load_snapshots(snap)
        rng = np.random.default_rng(0)
        noise = rng.integers(0, 256, size=(100, 28, 28), dtype=np.uint8)
        levels = qz.quantize_array(system.quantizer, extract_array(spec, noise))
        rejected = ~system.recognize_many(levels).any(axis=1)
        assert rejected.mean() >= 0.9
