import os
import re
import shutil

import pytest

from emplite.cli import main
from emplite.corpus import parse_dataset
from emplite.metrics import write_predictions

DATA = os.path.join(os.path.dirname(__file__), "data")
OVERFIT = os.path.join(DATA, "overfit32.tsv")
GLOVE = os.path.join(DATA, "glove_tiny.txt")


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory):
    """One small real training run shared by the CLI tests."""
    out = str(tmp_path_factory.mktemp("cli") / "model.empl")
    code = main([
        "train", "--train", OVERFIT, "--dev", OVERFIT, "--glove", GLOVE,
        "--variant", "emplite_full", "--seed", "13", "--batch-size", "4",
        "--max-epochs", "12", "--patience", "12", "--out", out,
    ])
    assert code == 0
    return out


class TestPrepare:
    def test_content_preserved_plus_pos_column(self, tmp_path, capsys):
        out = str(tmp_path / "prepared.tsv")
        assert main(["prepare", "--input", OVERFIT, "--output", out]) == 0
        before = parse_dataset(OVERFIT)
        after = parse_dataset(out)
        assert [s.tokens for s in after] == [s.tokens for s in before]
        assert [s.annotations for s in after] == [s.annotations for s in before]
        assert all(s.pos is not None for s in after)
        assert os.path.exists(out + ".manifest")

    def test_rerun_is_byte_identical(self, tmp_path):
        a = str(tmp_path / "a.tsv")
        b = str(tmp_path / "b.tsv")
        main(["prepare", "--input", OVERFIT, "--output", a])
        main(["prepare", "--input", OVERFIT, "--output", b])
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_missing_input_exits_2(self, capsys):
        assert main(["prepare", "--input", "/nonexistent/x.tsv", "--output", "/tmp/y.tsv"]) == 2
        assert "/nonexistent/x.tsv" in capsys.readouterr().err

    def test_semeval_adapter_conversion(self, tmp_path):
        release = tmp_path / "release.txt"
        release.write_text(
            "1\tKindness\tB\tB\tB\tO\tO\tO\tB\tB\tB\n"
            "2\tis\tO\tO\tO\tO\tO\tO\tI\tI\tO\n",
            encoding="utf-8",
        )
        out = str(tmp_path / "converted.tsv")
        assert main(["prepare", "--input", str(release), "--format", "semeval-adapter",
                     "--output", out]) == 0
        sents = parse_dataset(out)
        assert sents[0].tokens == ["Kindness", "is"]


class TestTrainCommand:
    def test_bad_threshold_exits_2(self, tmp_path, capsys):
        code = main([
            "train", "--train", OVERFIT, "--dev", OVERFIT, "--glove", GLOVE,
            "--threshold", "1.1", "--out", str(tmp_path / "m.empl"),
        ])
        assert code == 2

    def test_manifest_written_with_scores(self, trained_model):
        manifest = open(trained_model + ".manifest", encoding="utf-8").read()
        assert "command=train" in manifest
        assert "best_dev_avg=" in manifest
        assert "input.train.sha256=" in manifest
        assert "config.variant=emplite_full" in manifest

    def test_variant_param_ordering(self, tmp_path, capsys):
        out_base = str(tmp_path / "base.empl")
        assert main([
            "train", "--train", OVERFIT, "--dev", OVERFIT,
            "--variant", "base", "--max-epochs", "1", "--patience", "1",
            "--out", out_base,
        ]) == 0
        base_manifest = open(out_base + ".manifest", encoding="utf-8").read()
        base_params = int(re.search(r"trainable_params=(\d+)", base_manifest).group(1))
        # ...vs the full variant trained in the shared fixture
        full_run = main([
            "train", "--train", OVERFIT, "--dev", OVERFIT, "--glove", GLOVE,
            "--variant", "emplite_full", "--max-epochs", "1", "--patience", "1",
            "--out", str(tmp_path / "full.empl"),
        ])
        assert full_run == 0
        full_manifest = open(str(tmp_path / "full.empl") + ".manifest", encoding="utf-8").read()
        full_params = int(re.search(r"trainable_params=(\d+)", full_manifest).group(1))
        assert base_params < full_params


class TestEval:
    def test_ground_truth_predictions_score_one(self, tmp_path, capsys):
        sents = parse_dataset(OVERFIT)
        preds = [(s.tokens, [float(p) for p in s.emph_prob]) for s in sents]
        pred_path = str(tmp_path / "gt.preds")
        write_predictions(pred_path, preds)
        assert main(["eval", "--pred-file", pred_path, "--test", OVERFIT, "--machine"]) == 0
        out = capsys.readouterr().out
        for line in out.strip().splitlines():
            key, value = line.split("=")
            assert float(value) == 1.0, line

    def test_trained_model_scores(self, trained_model, capsys):
        assert main(["eval", "--model", trained_model, "--test", OVERFIT, "--machine"]) == 0
        out = dict(line.split("=") for line in capsys.readouterr().out.strip().splitlines())
        assert 0.0 <= float(out["average"]) <= 1.0

    def test_mismatched_predictions_exit_3(self, tmp_path, capsys):
        pred_path = str(tmp_path / "short.preds")
        write_predictions(pred_path, [(["only"], [0.5])])
        assert main(["eval", "--pred-file", pred_path, "--test", OVERFIT]) == 3


class TestPredictAndHeatmap:
    def test_predict_writes_alignable_file(self, trained_model, tmp_path):
        out = str(tmp_path / "preds.tsv")
        assert main(["predict", "--model", trained_model, "--file", OVERFIT, "--out", out]) == 0
        assert main(["eval", "--pred-file", out, "--test", OVERFIT]) == 0

    def test_heatmap_ansi_endpoints(self, capsys, trained_model):
        from emplite.heatmap import render_ansi

        text = render_ansi(["low", "high"], [0.0, 1.0])
        assert "48;2;255;255;255" in text  # zero-intensity cell
        assert "48;2;255;0;0" in text      # full-intensity cell
        assert "0.000" in text and "1.000" in text

    def test_heatmap_command_text(self, trained_model, capsys):
        assert main(["heatmap", "--model", trained_model, "--text", "Kindness is like snow"]) == 0
        out = capsys.readouterr().out
        assert "Kindness" in out and "48;2;255;" in out

    def test_heatmap_html_file(self, trained_model, tmp_path, capsys):
        out = str(tmp_path / "page.html")
        assert main(["heatmap", "--model", trained_model, "--text", "Dream big",
                     "--style", "html", "--out", out]) == 0
        page = open(out, encoding="utf-8").read()
        assert page.startswith("<!DOCTYPE html>") and "Dream" in page

    def test_heatmap_empty_text_exits_3(self, trained_model, capsys):
        assert main(["heatmap", "--model", trained_model, "--text", "   "]) == 3


class TestStatsAndSweeps:
    def test_pos_stats_percentages(self, capsys):
        assert main(["pos-stats", "--train", OVERFIT, "--threshold", "0.4"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()[1:]
        total = sum(float(line.split()[1]) for line in lines)
        assert abs(total - 100.0) < 0.1

    def test_sweep_single_value(self, tmp_path, capsys):
        train = str(tmp_path / "train.tsv")
        shutil.copy(OVERFIT, train)
        code = main([
            "sweep-threshold", "--train", train, "--dev", OVERFIT, "--glove", GLOVE,
            "--values", "0.4", "--max-epochs", "2", "--patience", "2",
            "--batch-size", "8",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert out.count("threshold=0.40") == 1

    def test_sweep_three_values_three_rows(self, tmp_path, capsys):
        train = str(tmp_path / "train.tsv")
        shutil.copy(OVERFIT, train)
        code = main([
            "sweep-threshold", "--train", train, "--dev", OVERFIT, "--glove", GLOVE,
            "--values", "0.2,0.4,0.6", "--max-epochs", "1", "--patience", "1",
            "--batch-size", "8",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert len(re.findall(r"^threshold=0\.\d0 dev_avg=", out, re.M)) == 3

    def test_manifests_append(self, tmp_path):
        out = str(tmp_path / "prep.tsv")
        main(["prepare", "--input", OVERFIT, "--output", out])
        main(["prepare", "--input", OVERFIT, "--output", out])
        manifest = open(out + ".manifest", encoding="utf-8").read()
        assert manifest.count("command=prepare") == 2

    def test_augment_none_reproduces_training(self, tmp_path, capsys):
        train = str(tmp_path / "train.tsv")
        shutil.copy(OVERFIT, train)
        code = main([
            "augment-exp", "--train", train, "--dev", OVERFIT, "--glove", GLOVE,
            "--strategy", "none", "--max-epochs", "2", "--patience", "2",
            "--batch-size", "8",
        ])
        assert code == 0
        first = re.search(r"average=([\d.]+)", capsys.readouterr().out).group(1)
        code = main([
            "train", "--train", OVERFIT, "--dev", OVERFIT, "--glove", GLOVE,
            "--max-epochs", "2", "--patience", "2", "--batch-size", "8",
            "--out", "/tmp/_aug_check.empl",
        ])
        assert code == 0
        # same data, same seed, same epochs: the augment-exp "none" row is a
        # plain run (printed to 4 decimals, manifest carries 6)
        manifest = open("/tmp/_aug_check.empl.manifest", encoding="utf-8").read()
        best = re.search(r"best_dev_avg=([\d.]+)", manifest).group(1)
        assert abs(float(first) - float(best)) < 5e-5
        os.unlink("/tmp/_aug_check.empl")
        os.unlink("/tmp/_aug_check.empl.manifest")

    def test_ablation_single_variant_row(self, tmp_path, capsys):
        train = str(tmp_path / "train.tsv")
        shutil.copy(OVERFIT, train)
        code = main([
            "ablation", "--train", train, "--dev", OVERFIT, "--test", OVERFIT,
            "--variants", "base", "--max-epochs", "1", "--patience", "1",
            "--batch-size", "8",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert re.search(r"^base\s", out, re.M)
