"""CLI surface: subcommands, exit codes, and the bundled fixtures."""
import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from vcmbench.cli import main

from oracles import reference_ap


def fixture_bytes(name: str) -> bytes:
    return resources.files("vcmbench").joinpath(f"fixtures/{name}").read_bytes()


def fixture_path(tmp_path: Path, name: str) -> Path:
    path = tmp_path / name
    path.write_bytes(fixture_bytes(name))
    return path


class TestUsageAndHelp:
    def test_no_arguments_is_usage_error(self, capsys):
        assert main([]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand(self, capsys):
        assert main(["frobnicate"]) == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_bd_without_anchor_is_usage_error(self, capsys):
        assert main(["bd", "--config", "x.json"]) == 1
        err = capsys.readouterr().err
        assert "--anchor" in err and "usage" in err.lower()

    @pytest.mark.parametrize(
        "subcommand", ["compress", "manifest", "score", "bd", "report", "selftest"]
    )
    def test_every_subcommand_has_help(self, subcommand, capsys):
        assert main([subcommand, "--help"]) == 0
        out = capsys.readouterr().out
        assert "usage" in out.lower()
        assert "--" in out  # flags are listed

    def test_version(self, capsys):
        assert main(["--version"]) == 0


class TestScore:
    def test_bundled_fixture_weighted_ap(self, tmp_path, capsys):
        gt = fixture_path(tmp_path, "gt.json")
        dets = fixture_path(tmp_path, "detections.json")
        out = tmp_path / "metrics.json"
        assert main(["score", "--gt", str(gt), "--dets", str(dets), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())

        # independent oracle: flags per class per threshold, then the weighted mean
        # car: dets scored 0.9 (iou 1.0), 0.7 (iou 2/3), 0.6 (iou 0) on 2 GT
        thresholds = doc["iou_thresholds"]
        car_aps = []
        for thr in thresholds:
            flags = ["tp", "tp" if 2 / 3 >= thr else "fp", "fp"]
            car_aps.append(reference_ap(flags, 2))
        expected_car = float(np.mean(np.array(car_aps)))
        expected_person = 1.0
        expected_weighted = (2 * expected_car + 1 * expected_person) / 3

        assert doc["per_class"]["car"]["ap"] == pytest.approx(expected_car, abs=1e-12)
        assert doc["per_class"]["person"]["ap"] == expected_person
        assert doc["weighted_ap"] == pytest.approx(expected_weighted, abs=1e-12)
        assert doc["per_class"]["car"]["n_instances"] == 2

    def test_missing_file_is_data_error(self, tmp_path, capsys):
        gt = fixture_path(tmp_path, "gt.json")
        rc = main(["score", "--gt", str(gt), "--dets", str(tmp_path / "nope.json")])
        assert rc == 2

    def test_malformed_detections_is_data_error(self, tmp_path, capsys):
        gt = fixture_path(tmp_path, "gt.json")
        bad = tmp_path / "bad.json"
        bad.write_text('[{"image_id": "a", "category_id": 2, "bbox": [0,0,1,1], "score": 7}]')
        assert main(["score", "--gt", str(gt), "--dets", str(bad)]) == 2

    def test_score_without_inputs_is_usage_error(self, capsys):
        assert main(["score"]) == 1


class TestCompressAndManifest:
    def make_profile(self, tmp_path):
        import sys

        runner = f"{sys.executable} -m vcmbench.mock_codec"
        profile = {
            "schema_version": 1,
            "name": "mock",
            "encode_template": f"{runner} encode --input {{input}} --output {{output}} --qp {{qp}} --size-base-bytes 8192",
            "decode_template": f"{runner} decode --input {{input}} --output {{output}}",
            "quality_axis": {"kind": "qp_integer", "min": 0, "max": 63},
            "intra_only": True,
            "bitstream_extension": "bin",
            "decoded_extension": "npy",
        }
        path = tmp_path / "mock.json"
        path.write_text(json.dumps(profile))
        return path

    def write_images(self, tmp_path):
        indir = tmp_path / "in"
        indir.mkdir()
        for i in range(2):
            ramp = (np.arange(32, dtype=np.uint16) * 5 + i) % 200 + 10
            np.save(indir / f"shot{i}.npy", np.tile(ramp, (16, 1)).astype(np.uint8))
        return indir

    def test_compress_then_manifest_then_idempotent_rerun(self, tmp_path, capsys):
        profile = self.make_profile(tmp_path)
        indir = self.write_images(tmp_path)
        out = tmp_path / "runs"
        args = [
            "compress", "--profile", str(profile), "--in", str(indir), "--out", str(out),
            "--qps", "22,27,32,37", "--glob", "*.npy", "-j", "2",
        ]
        assert main(args) == 0
        assert "8 items: 8 executed, 0 cached" in capsys.readouterr().out
        assert (out / "runs.json").exists()

        manifest_out = tmp_path / "manifest.json"
        rc = main(
            ["manifest", "--mode", "augment", "--runs", str(out), "--name", "d",
             "--detector", "mask_rcnn", "--out", str(manifest_out)]
        )
        assert rc == 0
        doc = json.loads(manifest_out.read_text())
        assert len(doc["images"]) == 2 * (1 + 4)
        first_manifest = manifest_out.read_bytes()

        # rerun: all cached, manifest byte-identical
        assert main(args) == 0
        assert "8 cached" in capsys.readouterr().out
        assert main(
            ["manifest", "--mode", "augment", "--runs", str(out), "--name", "d",
             "--detector", "mask_rcnn", "--out", str(manifest_out)]
        ) == 0
        assert manifest_out.read_bytes() == first_manifest

    def test_strict_compress_failure_exits_three(self, tmp_path, capsys):
        profile = self.make_profile(tmp_path)
        indir = tmp_path / "in"
        indir.mkdir()
        rng = np.random.default_rng(3)
        # incompressible payload cannot satisfy the size model at high QP
        np.save(indir / "noise.npy", rng.integers(0, 256, size=(64, 64), dtype=np.uint8))
        rc = main(
            ["compress", "--profile", str(profile), "--in", str(indir), "--out",
             str(tmp_path / "runs"), "--qps", "47", "--glob", "*.npy", "--strict"]
        )
        assert rc == 3

    def test_finetune_manifest(self, tmp_path, capsys):
        out = tmp_path / "schedule.json"
        rc = main(["manifest", "--mode", "finetune", "--detector", "faster_rcnn", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert [p["iterations"] for p in doc["phases"]] == [25_000, 10_000]


def metric_doc(weighted_ap: float) -> str:
    """Minimal metrics document carrying a chosen weighted AP."""
    return json.dumps(
        {
            "schema_version": 1,
            "kind": "box",
            "weight_mode": "instances",
            "iou_thresholds": [0.5],
            "weighted_ap": weighted_ap,
            "per_class": {
                "car": {
                    "class_id": 2,
                    "ap": weighted_ap,
                    "ap_by_threshold": {"0.50": weighted_ap},
                    "n_instances": 10,
                    "weight": 1.0,
                }
            },
            "absent_classes": [],
        }
    )


class TestBdAndReport:
    def build_config(self, tmp_path):
        fixture_path(tmp_path, "gt.json")
        (tmp_path / "metrics").mkdir()
        methods = []
        for name, bonus in (("classic", 0.0), ("tuned", 0.05)):
            cells = []
            for i, qp in enumerate((22, 27, 32, 37, 42, 47)):
                wap = 0.45 - 0.05 * i + bonus  # strictly increasing with rate
                rel = f"metrics/{name}_qp{qp}.json"
                (tmp_path / rel).write_text(metric_doc(wap))
                cells.append({"qp": qp, "metrics": rel, "bitrate": {"bpp": 3.2 / 2**i}})
            methods.append({"name": name, "baseline_uncompressed": 0.5, "cells": cells})
        config = {
            "schema_version": 1,
            "variant": "det",
            "anchor": "classic",
            "qp_grid": [22, 27, 32, 37, 42, 47],
            "gt": "gt.json",
            "methods": methods,
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config))
        return path

    def test_bd_prints_tables(self, tmp_path, capsys):
        config = self.build_config(tmp_path)
        rc = main(["bd", "--config", str(config), "--anchor", "classic", "--subset", "standard",
                   "--out", str(tmp_path / "bd.json")])
        out = capsys.readouterr().out
        assert rc == 0
        assert "BD weighted AP" in out
        assert "tuned" in out
        assert (tmp_path / "bd.json").exists()
        # constant +0.05 offset between the curves
        doc = json.loads((tmp_path / "bd.json").read_text())
        assert doc["bd"]["tuned"]["standard"]["bd_metric_pp"] == pytest.approx(5.0, abs=1e-9)

    def test_report_emits_requested_formats(self, tmp_path):
        config = self.build_config(tmp_path)
        out_dir = tmp_path / "report"
        rc = main(["report", "--config", str(config), "--out", str(out_dir), "--format", "md"])
        assert rc == 0
        assert (out_dir / "report.md").exists()
        assert (out_dir / "report.json").exists()
        assert not (out_dir / "report.csv").exists()

    def test_bd_with_unknown_anchor_is_data_error(self, tmp_path, capsys):
        config = self.build_config(tmp_path)
        assert main(["bd", "--config", str(config), "--anchor", "ghost"]) == 2


class TestSelftest:
    def test_selftest_completes(self, tmp_path, capsys):
        rc = main(["selftest", "--out", str(tmp_path / "st"), "-j", "4"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "selftest OK" in out
        assert (tmp_path / "st" / "report" / "report.md").exists()
