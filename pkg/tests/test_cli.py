"""
Command line: exit codes, artifacts and option precedence
"""
import json

import numpy as np
import pytest

from src.cli import build_parser, main, resolve
from src.core.errors import ConfigError
from src.data import load_dataset, read_label, synth_generate, write_dataset, write_rgb
from src.nn import conv as conv_module
from src.services import load_checkpoint


def train_args(data, out, *extra):
    return ["train", "--data", str(data), "--out", str(out), *extra]


@pytest.fixture
def untrained_checkpoint(dataset_dir, tmp_path):
    assert main(train_args(dataset_dir, tmp_path / "run0", "--epochs", "0")) == 0
    return tmp_path / "run0" / "last.ckpt"


class TestSynthCommand:
    """cdkit synth"""

    def test_01_writes_requested_splits(self, tmp_path):
        out = tmp_path / "synth"
        code = main(["synth", "--out", str(out), "--count", "3", "--size", "32", "--seed", "1",
                     "--val-count", "1", "--test-count", "0"])
        assert code == 0
        assert load_dataset(out).counts() == {"train": 3, "val": 1}
        assert (out / "run_config.json").exists()

    def test_02_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            assert main(["synth", "--out", str(tmp_path / name), "--count", "2", "--size", "32",
                         "--seed", "4"]) == 0
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*.png"))
        assert len(files) == 3 * (2 + 4 + 4)
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_03_invalid_size_exits_one(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path / "bad"), "--size", "50"]) == 1


class TestTrainEvalCommands:
    """cdkit train / eval"""

    def test_01_zero_epochs_writes_artifacts(self, dataset_dir, tmp_path):
        out = tmp_path / "run"
        assert main(train_args(dataset_dir, out, "--epochs", "0")) == 0
        for name in ("last.ckpt", "best.ckpt", "train_log.jsonl", "run_config.json"):
            assert (out / name).exists(), name
        start = json.loads((out / "train_log.jsonl").read_text().splitlines()[0])
        assert start["lr"] == 1e-4 and start["batch_size"] == 16
        run_config = json.loads((out / "run_config.json").read_text())
        assert run_config["model"]["preset"] == "tiny"
        assert run_config["model"]["input_size"] == [32, 32]

    def test_02_train_then_eval(self, dataset_dir, tmp_path):
        out = tmp_path / "run"
        assert main(train_args(dataset_dir, out, "--epochs", "1", "--batch-size", "2", "--no-augment")) == 0
        lines = (out / "train_log.jsonl").read_text().splitlines()
        assert [json.loads(line)["event"] for line in lines] == ["start", "epoch"]

        report_dir = tmp_path / "eval"
        code = main(["eval", "--data", str(dataset_dir), "--checkpoint", str(out / "best.ckpt"),
                     "--split", "test", "--out", str(report_dir), "--compare", "levir-cd"])
        assert code == 0
        text = (report_dir / "metrics_test.txt").read_text().splitlines()
        assert [line.split(":")[0] for line in text[:5]] == ["precision", "recall", "f1", "iou", "oa"]
        metrics = json.loads((report_dir / "metrics_test.json").read_text())
        assert metrics["counts"]["tp"] + metrics["counts"]["fp"] + metrics["counts"]["fn"] \
            + metrics["counts"]["tn"] == 2 * 32 * 32
        if metrics["f1"] > 0:
            assert metrics["iou"] == pytest.approx(metrics["f1"] / (2 - metrics["f1"]))

    def test_03_float64_runs_are_bitwise_reproducible(self, dataset_dir, tmp_path):
        for name in ("a", "b"):
            assert main(train_args(dataset_dir, tmp_path / name, "--epochs", "1", "--batch-size", "2",
                                   "--dtype", "float64", "--seed", "3")) == 0
        assert (tmp_path / "a" / "last.ckpt").read_bytes() == (tmp_path / "b" / "last.ckpt").read_bytes()

    def test_04_resume_continues_epochs(self, dataset_dir, tmp_path):
        first = tmp_path / "first"
        assert main(train_args(dataset_dir, first, "--epochs", "1", "--batch-size", "2", "--no-augment")) == 0
        resumed = tmp_path / "resumed"
        assert main(train_args(dataset_dir, resumed, "--epochs", "2", "--batch-size", "2", "--no-augment",
                               "--resume", str(first / "last.ckpt"))) == 0
        assert load_checkpoint(resumed / "last.ckpt").epoch == 2

    def test_05_resume_in_same_directory_keeps_earlier_epochs(self, dataset_dir, tmp_path):
        out = tmp_path / "run"
        flags = ("--batch-size", "2", "--no-augment")
        assert main(train_args(dataset_dir, out, "--epochs", "1", *flags)) == 0
        assert main(train_args(dataset_dir, out, "--epochs", "2", *flags, "--resume", str(out / "last.ckpt"))) == 0
        records = [json.loads(line) for line in (out / "train_log.jsonl").read_text().splitlines()]
        assert [r["epoch"] for r in records if r["event"] == "epoch"] == [0, 1]
        history = (out / "history.csv").read_text().splitlines()
        assert len(history) == 3

    def test_06_eval_records_checkpoint_preset(self, dataset_dir, tmp_path):
        out = tmp_path / "base"
        assert main(train_args(dataset_dir, out, "--epochs", "0", "--preset", "base")) == 0
        report_dir = tmp_path / "eval"
        assert main(["eval", "--data", str(dataset_dir), "--checkpoint", str(out / "last.ckpt"),
                     "--split", "test", "--out", str(report_dir)]) == 0
        run_config = json.loads((report_dir / "run_config.json").read_text())
        assert run_config["preset"] == "base"
        assert run_config["model"]["preset"] == "base"
        assert json.loads((out / "run_config.json").read_text())["preset"] == "base"

    def test_07_missing_data_exits_one(self, tmp_path, monkeypatch):
        monkeypatch.delenv("CDKIT_DATA_DIR", raising=False)
        assert main(["train", "--out", str(tmp_path / "run")]) == 1

    def test_08_bad_dataset_exits_one(self, tmp_path):
        assert main(train_args(tmp_path / "absent", tmp_path / "run")) == 1

    def test_09_corrupt_checkpoint_exits_one(self, dataset_dir, tmp_path):
        bad = tmp_path / "bad.ckpt"
        bad.write_bytes(b"garbage")
        assert main(["eval", "--data", str(dataset_dir), "--checkpoint", str(bad), "--out", str(tmp_path)]) == 1


class TestInferCommand:
    """cdkit infer"""

    def test_01_writes_binary_mask_at_input_resolution(self, untrained_checkpoint, tmp_path):
        sample = synth_generate(1, 64, seed=2)[0]
        write_rgb(tmp_path / "pre.png", sample.pre)
        write_rgb(tmp_path / "post.png", sample.post)
        code = main(["infer", "--pre", str(tmp_path / "pre.png"), "--post", str(tmp_path / "post.png"),
                     "--checkpoint", str(untrained_checkpoint), "--out", str(tmp_path / "mask.png"),
                     "--logits", str(tmp_path / "logits.npy"), "--preview", str(tmp_path / "preview.png")])
        assert code == 0
        assert read_label(tmp_path / "mask.png").shape == (64, 64)
        assert np.load(tmp_path / "logits.npy").shape == (64, 64, 2)
        assert (tmp_path / "preview.png").exists()

    def test_02_mismatched_pair_exits_one(self, untrained_checkpoint, tmp_path):
        write_rgb(tmp_path / "pre.png", np.zeros((32, 32, 3)))
        write_rgb(tmp_path / "post.png", np.zeros((64, 64, 3)))
        code = main(["infer", "--pre", str(tmp_path / "pre.png"), "--post", str(tmp_path / "post.png"),
                     "--checkpoint", str(untrained_checkpoint), "--out", str(tmp_path / "mask.png")])
        assert code == 1
        assert not (tmp_path / "mask.png").exists()

    def test_03_indivisible_size_exits_one(self, untrained_checkpoint, tmp_path):
        for name in ("pre.png", "post.png"):
            write_rgb(tmp_path / name, np.zeros((48, 48, 3)))
        code = main(["infer", "--pre", str(tmp_path / "pre.png"), "--post", str(tmp_path / "post.png"),
                     "--checkpoint", str(untrained_checkpoint), "--out", str(tmp_path / "mask.png")])
        assert code == 1


class TestGradcheckCommand:
    """cdkit gradcheck"""

    def test_01_passes(self, tmp_path):
        assert main(["gradcheck", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "gradcheck.csv").exists()

    def test_02_broken_backward_exits_two(self, monkeypatch):
        original = conv_module._conv2d_grad_input
        monkeypatch.setattr(conv_module, "_conv2d_grad_input", lambda *args: -original(*args))
        assert main(["gradcheck"]) == 2

    def test_03_output_and_help_state_model_weight_scale(self, capsys):
        assert main(["gradcheck"]) == 0
        out = capsys.readouterr().out
        assert "model.tiny.8x8.weights_x5" in out
        assert "multiplied by 5" in out
        with pytest.raises(SystemExit):
            main(["gradcheck", "--help"])
        assert "multiplied by 5" in " ".join(capsys.readouterr().out.split())


class TestPatchifyCommand:
    """cdkit patchify"""

    def test_01_crops_and_splits(self, tmp_path):
        write_dataset(tmp_path / "raw", {"scenes": synth_generate(2, 64, seed=6, prefix="scene")})
        code = main(["patchify", "--src", str(tmp_path / "raw" / "scenes"), "--out", str(tmp_path / "out"),
                     "--patch-size", "32", "--counts", "5", "2", "1"])
        assert code == 0
        assert load_dataset(tmp_path / "out").counts() == {"train": 5, "val": 2, "test": 1}

    def test_02_needs_counts(self, tmp_path):
        assert main(["patchify", "--src", str(tmp_path), "--out", str(tmp_path / "out")]) == 1


class TestOptions:
    """Flag > environment > config file > default"""

    def test_01_precedence(self, tmp_path, monkeypatch):
        config = tmp_path / "run.env"
        config.write_text("EPOCHS=3\nBATCH_SIZE=4\nDTYPE=float32\nLR=0.001\n")
        monkeypatch.setenv("CDKIT_DTYPE", "float64")
        args = build_parser().parse_args(["train", "--config", str(config), "--epochs", "5"])
        values = resolve(args)
        assert values["epochs"] == 5
        assert values["batch_size"] == 4
        assert values["dtype"] == "float64"
        assert values["lr"] == 0.001
        assert values["weight_decay"] == 0.01
        assert values["augment"] is True

    def test_02_config_file_booleans(self, tmp_path):
        config = tmp_path / "run.env"
        config.write_text("AUGMENT=false\n")
        assert resolve(build_parser().parse_args(["train", "--config", str(config)]))["augment"] is False

    def test_03_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve(build_parser().parse_args(["train", "--config", str(tmp_path / "none.env")]))

    def test_04_only_command_options_resolved(self):
        values = resolve(build_parser().parse_args(["gradcheck"]))
        assert set(values) == {"preset", "seed", "out"}

    def test_05_help_lists_defaults(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--help"])
        assert exc.value.code == 0
        text = " ".join(capsys.readouterr().out.split())
        assert "default: 200" in text and "CDKIT_DTYPE" in text

    @pytest.mark.parametrize("argv", [["train", "--bogus"], [], ["train", "--epochs", "many"]])
    def test_06_usage_errors_exit_one(self, argv):
        with pytest.raises(SystemExit) as exc:
            main(argv)
        assert exc.value.code == 1
