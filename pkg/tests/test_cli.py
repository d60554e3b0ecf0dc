import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from lenetkit import cli
from lenetkit.data import load_dataset
from lenetkit.errors import DivergenceDetected


@pytest.fixture()
def synth_root(tmp_path):
    root = tmp_path / "data"
    assert cli.main(["gen-synthetic", "--out", str(root),
                     "--n-per-class", "4", "--seed", "5"]) == 0
    return root


def run_train(root, out, extra=()):
    argv = ["train", "--data", str(root), "--out", str(out),
            "--epochs", "3", "--batch-size", "4", "--seed", "9", *extra]
    return cli.main(argv)


class TestGenSynthetic:
    def test_split_counts(self, synth_root):
        assert len(list((synth_root / "train").rglob("*.pgm"))) == 12
        assert len(list((synth_root / "validation").rglob("*.pgm"))) == 3

    def test_counts_formula(self, tmp_path):
        assert cli.main(["gen-synthetic", "--out", str(tmp_path / "d"),
                         "--n-per-class", "20", "--seed", "0"]) == 0
        assert len(list((tmp_path / "d" / "train").rglob("*.pgm"))) == 60
        assert len(list((tmp_path / "d" / "validation").rglob("*.pgm"))) == 12

    def test_deterministic(self, tmp_path):
        for name in ("a", "b"):
            cli.main(["gen-synthetic", "--out", str(tmp_path / name),
                      "--n-per-class", "3", "--seed", "11"])
        files_a = sorted((tmp_path / "a").rglob("*.pgm"))
        assert files_a
        for fa in files_a:
            fb = tmp_path / "b" / fa.relative_to(tmp_path / "a")
            assert fa.read_bytes() == fb.read_bytes()

    def test_loads_via_dataset_module(self, synth_root):
        ds = load_dataset(synth_root, "train")
        assert ds.class_counts() == [4, 4, 4]


class TestTrainCommand:
    def test_artifacts_written(self, synth_root, tmp_path):
        out = tmp_path / "run"
        assert run_train(synth_root, out) == 0
        for name in ("checkpoint.lnck", "curves.csv", "curves.svg",
                     "metrics.json", "config.echo.json"):
            assert (out / name).is_file(), name
        rows = (out / "curves.csv").read_text().strip().splitlines()
        assert rows[0] == "epoch,train_loss,train_acc,val_loss,val_acc"
        assert len(rows) == 1 + 3  # header + one row per epoch

    def test_byte_identical_reruns(self, synth_root, tmp_path):
        run_train(synth_root, tmp_path / "r1", ("--threads", "1"))
        run_train(synth_root, tmp_path / "r2", ("--threads", "1"))
        for name in ("curves.csv", "checkpoint.lnck"):
            assert (tmp_path / "r1" / name).read_bytes() == \
                   (tmp_path / "r2" / name).read_bytes(), name

    def test_loss_flag_only_changes_loss_fields(self, synth_root, tmp_path):
        run_train(synth_root, tmp_path / "ce", ("--loss", "cross_entropy"))
        run_train(synth_root, tmp_path / "fo", ("--loss", "focal"))
        ce = json.loads((tmp_path / "ce" / "config.echo.json").read_text())
        fo = json.loads((tmp_path / "fo" / "config.echo.json").read_text())
        diff = {k for k in ce if ce[k] != fo[k] and k != "out_dir"}
        assert diff == {"loss_kind"}

    def test_config_file_with_flag_override(self, synth_root, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"epochs": 2, "batch_size": 3,
                                        "seed": 4}))
        out = tmp_path / "run"
        assert cli.main(["train", "--config", str(cfg_file),
                         "--data", str(synth_root), "--out", str(out),
                         "--epochs", "1"]) == 0
        echo = json.loads((out / "config.echo.json").read_text())
        assert echo["epochs"] == 1      # flag wins
        assert echo["batch_size"] == 3  # file value kept
        rows = (out / "curves.csv").read_text().strip().splitlines()
        assert len(rows) == 2

    def test_focal_with_inverse_frequency_alpha(self, synth_root, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"loss_kind": "focal",
                                        "alpha": "inverse_frequency"}))
        out = tmp_path / "run"
        assert cli.main(["train", "--config", str(cfg_file),
                         "--data", str(synth_root), "--out", str(out),
                         "--epochs", "2", "--batch-size", "4"]) == 0
        meta = json.loads((out / "checkpoint.lnck.json").read_text())
        # balanced synthetic split -> uniform resolved weights
        assert meta["train_config"]["alpha_resolved"] == [1.0, 1.0, 1.0]

    def test_augmented_training_runs(self, synth_root, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"augment": True, "max_shift_px": 1}))
        assert cli.main(["train", "--config", str(cfg_file),
                         "--data", str(synth_root),
                         "--out", str(tmp_path / "run"),
                         "--epochs", "2", "--batch-size", "4"]) == 0

    def test_augment_fields_validated_even_when_off(self, synth_root, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"augment": False, "hflip_prob": 7.0}))
        code = cli.main(["train", "--config", str(cfg_file),
                         "--data", str(synth_root),
                         "--out", str(tmp_path / "x")])
        assert code == 1
        assert not (tmp_path / "x").exists()

    def test_unknown_config_key_rejected(self, synth_root, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"learning_rat": 0.1}))
        code = cli.main(["train", "--config", str(cfg_file),
                         "--data", str(synth_root),
                         "--out", str(tmp_path / "x")])
        assert code == 1
        assert not (tmp_path / "x").exists()  # no partial artifacts

    def test_missing_dataset_is_data_error(self, tmp_path, capsys):
        code = cli.main(["train", "--data", str(tmp_path / "nope"),
                         "--out", str(tmp_path / "out")])
        assert code == 2
        assert not (tmp_path / "out").exists()
        assert "error" in capsys.readouterr().err

    def test_divergence_exit_code(self, synth_root, tmp_path, monkeypatch):
        def exploding_train(model, train_set, val_set, cfg):
            raise DivergenceDetected("boom", records=[])

        monkeypatch.setattr(cli.train_mod, "train", exploding_train)
        code = run_train(synth_root, tmp_path / "run")
        assert code == 3
        # last-good checkpoint still written
        assert (tmp_path / "run" / "checkpoint.lnck").is_file()


class TestEvaluateCommand:
    def test_reproduces_final_epoch_record(self, synth_root, tmp_path, capsys):
        out = tmp_path / "run"
        run_train(synth_root, out)
        capsys.readouterr()
        final = json.loads((out / "checkpoint.lnck.json").read_text())["final_record"]
        assert cli.main(["evaluate", "--checkpoint", str(out / "checkpoint.lnck"),
                         "--data", str(synth_root), "--split", "validation"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["loss"] == final["val_loss"]
        assert payload["accuracy"] == final["val_acc"]
        assert set(payload["reports"]) == {"binarized_nodule", "macro_ovr",
                                           "per_class"}

    def test_metrics_json_matches_evaluate_output(self, synth_root, tmp_path,
                                                  capsys):
        out = tmp_path / "run"
        run_train(synth_root, out)
        capsys.readouterr()
        cli.main(["evaluate", "--checkpoint", str(out / "checkpoint.lnck"),
                  "--data", str(synth_root), "--split", "validation"])
        stdout_payload = json.loads(capsys.readouterr().out)
        file_payload = json.loads((out / "metrics.json").read_text())
        assert stdout_payload == file_payload

    def test_corrupt_checkpoint(self, synth_root, tmp_path, capsys):
        out = tmp_path / "run"
        run_train(synth_root, out)
        path = out / "checkpoint.lnck"
        raw = bytearray(path.read_bytes())
        raw[50] ^= 0x55
        path.write_bytes(bytes(raw))
        code = cli.main(["evaluate", "--checkpoint", str(path),
                         "--data", str(synth_root)])
        assert code == 2
        assert "checkpoint" in capsys.readouterr().err.lower()


class TestPredictCommand:
    def test_output_structure(self, synth_root, tmp_path, capsys):
        out = tmp_path / "run"
        run_train(synth_root, out)
        capsys.readouterr()
        image = next((synth_root / "train" / "0_horizontal").glob("*.pgm"))
        assert cli.main(["predict", "--checkpoint", str(out / "checkpoint.lnck"),
                         "--image", str(image)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["probs"]) == 3
        assert abs(sum(payload["probs"]) - 1.0) <= 1e-9
        assert payload["class_index"] == int(np.argmax(payload["probs"]))
        assert payload["class_name"] in ("0_horizontal", "1_vertical", "2_checker")

    def test_non_image_is_data_error(self, synth_root, tmp_path, capsys):
        out = tmp_path / "run"
        run_train(synth_root, out)
        bad = tmp_path / "bad.pgm"
        bad.write_bytes(b"certainly not a pgm")
        code = cli.main(["predict", "--checkpoint", str(out / "checkpoint.lnck"),
                         "--image", str(bad)])
        assert code == 2
        assert capsys.readouterr().err


class TestExportCurves:
    def test_svg_well_formed_with_matching_points(self, synth_root, tmp_path):
        out = tmp_path / "run"
        run_train(synth_root, out)
        svg_path = tmp_path / "curves.svg"
        assert cli.main(["export-curves", "--csv", str(out / "curves.csv"),
                         "--svg", str(svg_path)]) == 0
        tree = ET.parse(svg_path)
        ns = {"svg": "http://www.w3.org/2000/svg"}
        polylines = tree.getroot().findall(".//svg:polyline", ns)
        assert len(polylines) == 4  # train/val x loss/acc
        rows = (out / "curves.csv").read_text().strip().splitlines()
        for line in polylines:
            assert len(line.attrib["points"].split()) == len(rows) - 1

    def test_single_row_csv(self, tmp_path):
        csv_path = tmp_path / "one.csv"
        csv_path.write_text("epoch,train_loss,train_acc,val_loss,val_acc\n"
                            "1,0.5,0.6,0.7,0.4\n")
        svg_path = tmp_path / "one.svg"
        assert cli.main(["export-curves", "--csv", str(csv_path),
                         "--svg", str(svg_path)]) == 0
        ET.parse(svg_path)

    def test_malformed_csv(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("not,a,curves,file\n1,2,3,4\n")
        code = cli.main(["export-curves", "--csv", str(bad),
                         "--svg", str(tmp_path / "x.svg")])
        assert code == 2
        assert not (tmp_path / "x.svg").exists()


class TestUsageErrors:
    def test_unknown_flag(self, capsys):
        assert cli.main(["train", "--frobnicate"]) == 1
        assert "error" in capsys.readouterr().err

    def test_missing_required(self, capsys):
        assert cli.main(["predict", "--image", "x.pgm"]) == 1
        capsys.readouterr()

    def test_missing_out_dir(self, synth_root, capsys):
        assert cli.main(["train", "--data", str(synth_root)]) == 1
        capsys.readouterr()

    def test_bad_threads_value(self, synth_root, tmp_path, capsys):
        code = cli.main(["train", "--data", str(synth_root),
                         "--out", str(tmp_path / "o"), "--threads", "0"])
        assert code == 1
        capsys.readouterr()
