"""
Optimizer, learning-rate schedule, training loop and checkpoints
"""
import json

import numpy as np
import pandas as pd
import pytest

from src.core.errors import CheckpointError, ConfigError, DatasetError, NumericalError
from src.core.models import ModelConfig, TrainConfig
from src.data import synth_generate
from src.metrics import ConfusionMatrix, accumulate, report
from src.model import ChangeFormer, init_weights, parameter_specs, uncovered_pixels
from src.numerics import Tensor
from src.services import (
    AdamState,
    AdamW,
    EvaluationService,
    TrainingService,
    adamw_step,
    load_checkpoint,
    lr_at,
    save_checkpoint,
    train_epoch,
)
from src.services.training import LOG_FILE, epoch_batches, steps_per_epoch


def param(value):
    return {"w": Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)}


def reference_adam(theta, grads, lr, betas=(0.9, 0.999), eps=1e-8):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, g in enumerate(grads, start=1):
        m = betas[0] * m + (1 - betas[0]) * g
        v = betas[1] * v + (1 - betas[1]) * g * g
        m_hat = m / (1 - betas[0] ** t)
        v_hat = v / (1 - betas[1] ** t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return theta


def params_equal(a: ChangeFormer, b: ChangeFormer) -> bool:
    return all(np.array_equal(a.params[name].data, b.params[name].data) for name in a.params)


def f1_ceiling(samples) -> float:
    """Best F1 when uncovered pixels share one class and every other pixel is right"""
    labels = np.stack([s.label for s in samples]).astype(bool)
    holes = np.broadcast_to(uncovered_pixels(*labels.shape[1:]), labels.shape)
    best = 0.0
    for hole_class in (False, True):
        predicted = np.where(holes, hole_class, labels)
        best = max(best, report(accumulate(ConfusionMatrix(), predicted, labels)).f1)
    return best


class TestAdamW:
    """Decoupled weight decay and bias-corrected moments"""

    def setup_method(self):
        self.cfg = TrainConfig()

    def test_01_first_step_moves_by_lr(self):
        params = param(0.0)
        adamw_step(params, {"w": np.asarray(0.5)}, AdamState(), 1e-4, self.cfg)
        assert float(params["w"].data) == pytest.approx(-1e-4, rel=1e-6)

    def test_02_zero_gradient_decays_weights(self):
        params = param([1.0, -2.0])
        state = AdamState()
        for _ in range(10):
            adamw_step(params, {"w": np.zeros(2)}, state, 1e-4, self.cfg)
        np.testing.assert_allclose(params["w"].data, np.array([1.0, -2.0]) * (1 - 1e-6) ** 10, rtol=1e-12)
        assert state.step == 10

    def test_03_without_decay_matches_adam(self, rng):
        cfg = TrainConfig(weight_decay=0.0)
        theta = rng.standard_normal(5)
        grads = [rng.standard_normal(5) for _ in range(10)]
        params = param(theta.copy())
        state = AdamState()
        for g in grads:
            adamw_step(params, {"w": g}, state, 1e-3, cfg)
        np.testing.assert_allclose(params["w"].data, reference_adam(theta, grads, 1e-3), rtol=1e-12, atol=1e-15)

    def test_04_non_finite_gradient_names_parameter(self):
        params = param([1.0, 2.0])
        state = AdamState()
        with pytest.raises(NumericalError) as exc:
            adamw_step(params, {"w": np.array([0.1, np.nan])}, state, 1e-4, self.cfg)
        assert "'w'" in str(exc.value)
        assert state.step == 0
        assert params["w"].data.tolist() == [1.0, 2.0]

    def test_05_missing_gradient_is_skipped(self):
        params = {**param(1.0), "frozen": Tensor(np.asarray(3.0), dtype=np.float64)}
        adamw_step(params, {"w": np.asarray(1.0), "frozen": None}, AdamState(), 1e-2, self.cfg)
        assert params["frozen"].data == 3.0
        assert params["w"].data < 1.0

    def test_06_descends_a_quadratic(self, rng):
        target = rng.standard_normal(4)
        params = param(np.zeros(4))
        optimizer = AdamW(params, TrainConfig(weight_decay=0.0))
        for i in range(300):
            params["w"].grad = 2.0 * (params["w"].data - target)
            optimizer.step(0.05 * (1 - i / 300))
        np.testing.assert_allclose(params["w"].data, target, atol=5e-2)


class TestSchedule:
    """Per-step linear decay and epoch batching"""

    def setup_method(self):
        self.cfg = TrainConfig()

    @pytest.mark.parametrize("step,expected", [(0, 1e-4), (50, 5e-5), (100, 0.0)])
    def test_01_linear_decay(self, step, expected):
        assert lr_at(step, 100, self.cfg) == pytest.approx(expected, abs=1e-18)

    def test_02_out_of_range_steps(self):
        with pytest.raises(ConfigError):
            lr_at(101, 100, self.cfg)
        with pytest.raises(ConfigError):
            lr_at(-1, 100, self.cfg)

    def test_03_empty_schedule_keeps_initial_rate(self):
        assert lr_at(0, 0, self.cfg) == 1e-4

    def test_04_schedule_integral(self):
        total = 1000
        area = sum(lr_at(s, total, self.cfg) for s in range(total))
        assert area == pytest.approx(1e-4 * (total + 1) / 2, rel=1e-9)

    def test_05_steps_per_epoch_counts_partial_batch(self):
        assert steps_per_epoch(10, 4) == 3
        assert steps_per_epoch(16, 16) == 1

    def test_06_epoch_batches(self):
        batches = epoch_batches(10, 4, seed=0, epoch=3)
        assert [len(b) for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))
        again = epoch_batches(10, 4, seed=0, epoch=3)
        assert all(np.array_equal(a, b) for a, b in zip(batches, again))
        other = epoch_batches(10, 4, seed=0, epoch=4)
        assert not all(np.array_equal(a, b) for a, b in zip(batches, other))


class TestInitWeights:
    """Truncated-normal weights, zero biases, unit norm scales"""

    def setup_method(self):
        self.config = ModelConfig.from_preset("tiny")

    def test_01_deterministic_per_seed(self):
        first, second = init_weights(self.config, seed=4), init_weights(self.config, seed=4)
        assert all(np.array_equal(first[n].data, second[n].data) for n in first)
        other = init_weights(self.config, seed=5)
        assert not np.array_equal(first["decoder.fuse.weight"].data, other["decoder.fuse.weight"].data)

    def test_02_biases_and_norm_scales(self):
        params = init_weights(self.config, seed=0)
        for spec in parameter_specs(self.config):
            data = params[spec.name].data
            if spec.init == "zeros":
                assert not data.any(), spec.name
            elif spec.init == "ones":
                assert (data == 1.0).all(), spec.name
        assert all(not params[n].data.any() for n in params if n.endswith(".bias"))

    def test_03_weight_statistics(self):
        params = init_weights(self.config, seed=0)
        checked = 0
        for spec in parameter_specs(self.config):
            data = params[spec.name].data
            if spec.init != "normal":
                continue
            assert np.abs(data).max() <= 0.04 + 1e-7, spec.name
            if data.size >= 10_000:
                assert 0.8 * 0.02 <= data.std() <= 1.2 * 0.02, spec.name
                checked += 1
        assert checked > 0


class TestTrainEpoch:
    """One pass of forward, loss, backward and AdamW"""

    def setup_method(self):
        self.cfg = TrainConfig(batch_size=2, epochs=1, dtype="float64")

    def test_01_zero_learning_rate_leaves_weights(self, tiny_config, samples32):
        model = ChangeFormer.initialize(tiny_config, seed=0, dtype="float64")
        before = {n: t.data.copy() for n, t in model.params.items()}
        train_epoch(model, AdamW(model.params, self.cfg), samples32, 0, self.cfg, total_steps=2,
                    schedule=lambda step: 0.0)
        assert all(np.array_equal(before[n], model.params[n].data) for n in before)

    def test_02_float64_training_is_deterministic(self, tiny_config, samples32):
        models = [ChangeFormer.initialize(tiny_config, seed=0, dtype="float64") for _ in range(2)]
        stats = [
            train_epoch(m, AdamW(m.params, self.cfg), samples32, 0, self.cfg, total_steps=2)
            for m in models
        ]
        assert stats[0].mean_loss == stats[1].mean_loss
        assert params_equal(*models)

    def test_03_weights_and_statistics_move(self, tiny_config, samples32):
        model = ChangeFormer.initialize(tiny_config, seed=0, dtype="float64")
        before = model.params["decoder.classifier.weight"].data.copy()
        running = model.buffers["decoder.diff1.bn.running_mean"].copy()
        stats = train_epoch(model, AdamW(model.params, self.cfg), samples32, 0, self.cfg,
                            total_steps=4, global_step=1)
        assert stats.steps == 2 and stats.global_step == 3
        assert stats.lr_start == pytest.approx(1e-4 * 0.75)
        assert stats.lr_end == pytest.approx(1e-4 * 0.5)
        assert np.isfinite(stats.mean_loss)
        assert not np.array_equal(before, model.params["decoder.classifier.weight"].data)
        assert not np.array_equal(running, model.buffers["decoder.diff1.bn.running_mean"])

    def test_04_nan_loss_names_epoch_and_batch(self, tiny_config, samples32):
        model = ChangeFormer.initialize(tiny_config, seed=0, dtype="float64")
        model.params["decoder.classifier.bias"].data[...] = np.nan
        with pytest.raises(NumericalError) as exc:
            train_epoch(model, AdamW(model.params, self.cfg), samples32, 3, self.cfg, total_steps=8)
        assert "epoch 3" in str(exc.value) and "batch 0" in str(exc.value)

    def test_05_empty_dataset(self, tiny_model):
        with pytest.raises(DatasetError):
            train_epoch(tiny_model, AdamW(tiny_model.params, self.cfg), [], 0, self.cfg, total_steps=1)


class TestCheckpoints:
    """Versioned binary checkpoints"""

    def test_01_round_trip(self, tiny_model, tmp_path):
        tiny_model.buffers["decoder.diff2.bn.running_var"][:] = 2.5
        optimizer = AdamW(tiny_model.params, TrainConfig())
        optimizer.state.step = 7
        optimizer.state.m["decoder.fuse.bias"] = np.full(32, 0.25)
        path = save_checkpoint(tmp_path / "model.ckpt", tiny_model, optimizer, epoch=3, global_step=12,
                               metrics={"best_f1": 0.5})

        checkpoint = load_checkpoint(path)
        restored = checkpoint.build_model()
        assert params_equal(tiny_model, restored)
        assert restored.dtype == "float64"
        assert all(np.array_equal(tiny_model.buffers[n], restored.buffers[n]) for n in tiny_model.buffers)
        assert checkpoint.config == tiny_model.config
        assert (checkpoint.epoch, checkpoint.manifest.global_step) == (3, 12)
        assert checkpoint.manifest.metrics == {"best_f1": 0.5}
        assert checkpoint.adam.step == 7
        assert np.array_equal(checkpoint.adam.m["decoder.fuse.bias"], np.full(32, 0.25))

    def test_02_file_starts_with_magic(self, tiny_model, tmp_path):
        path = save_checkpoint(tmp_path / "model.ckpt", tiny_model)
        assert path.read_bytes().startswith(b"CDKIT-CKPT/1\n")

    def test_03_config_mismatch_names_first_parameter(self, tiny_model, tmp_path):
        path = save_checkpoint(tmp_path / "model.ckpt", tiny_model)
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path, expected_config=ModelConfig.from_preset("base"))
        assert "encoder.stage1.patch_embed.proj.weight" in str(exc.value)

    def test_04_bad_magic(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"NOT-A-CHECKPOINT\n" + b"\0" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_05_truncated_file(self, tiny_model, tmp_path):
        path = save_checkpoint(tmp_path / "model.ckpt", tiny_model)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
        path.write_bytes(raw[:20])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_06_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.ckpt")


class TestTrainingService:
    """Full recipe, run log and resume"""

    def setup_method(self):
        self.cfg = TrainConfig(batch_size=2, epochs=2, dtype="float64")

    def test_01_resume_matches_uninterrupted_run(self, tiny_config, samples32, tmp_path):
        straight = ChangeFormer.initialize(tiny_config, seed=0, dtype="float64")
        TrainingService(straight, self.cfg, tmp_path / "straight").fit(samples32)

        interrupted = ChangeFormer.initialize(tiny_config, seed=0, dtype="float64")
        first = TrainingService(interrupted, self.cfg, tmp_path / "first")
        total = steps_per_epoch(len(samples32), self.cfg.batch_size) * self.cfg.epochs
        stats = train_epoch(interrupted, first.optimizer, samples32, 0, self.cfg, total_steps=total)
        path = save_checkpoint(tmp_path / "first" / "last.ckpt", interrupted, first.optimizer, 1, stats.global_step)

        service, epoch, global_step, _ = TrainingService.resume(path, self.cfg, tmp_path / "resumed")
        assert (epoch, global_step) == (1, 2)
        service.fit(samples32, start_epoch=epoch, global_step=global_step)

        assert params_equal(straight, service.model)
        assert all(np.array_equal(straight.buffers[n], service.model.buffers[n]) for n in straight.buffers)
        assert load_checkpoint(tmp_path / "resumed" / "last.ckpt").epoch == 2

    def test_02_one_log_record_per_epoch(self, tiny_config, samples32, tmp_path):
        model = ChangeFormer.initialize(tiny_config, seed=1, dtype="float64")
        result = TrainingService(model, self.cfg, tmp_path).fit(samples32, val=samples32[:2])
        lines = [json.loads(line) for line in (tmp_path / LOG_FILE).read_text().splitlines()]
        assert [r["event"] for r in lines] == ["start", "epoch", "epoch"]
        assert [r["epoch"] for r in lines[1:]] == [0, 1]
        assert lines[1]["selection_split"] == "val"
        assert len(result.history) == 2
        assert (tmp_path / "history.csv").exists()
        assert result.best_checkpoint.exists() and result.last_checkpoint.exists()
        assert 0 <= result.best_epoch <= 1

    def test_03_zero_epochs_still_writes_checkpoints(self, tiny_model, samples32, tmp_path):
        result = TrainingService(tiny_model, TrainConfig(epochs=0), tmp_path).fit(samples32)
        assert result.last_checkpoint.exists() and result.best_checkpoint.exists()
        start = result.records[0]
        assert start["event"] == "start"
        assert start["lr"] == 1e-4 and start["batch_size"] == 16
        assert result.history.empty

    def test_04_empty_training_split(self, tiny_model, tmp_path):
        with pytest.raises(DatasetError):
            TrainingService(tiny_model, self.cfg, tmp_path).fit([])

    def test_05_resume_in_place_extends_the_log(self, tiny_config, samples32, tmp_path):
        model = ChangeFormer.initialize(tiny_config, seed=2, dtype="float64")
        one_epoch = self.cfg.model_copy(update={"epochs": 1})
        TrainingService(model, one_epoch, tmp_path).fit(samples32)

        service, epoch, global_step, metrics = TrainingService.resume(tmp_path / "last.ckpt", self.cfg, tmp_path)
        result = service.fit(samples32, start_epoch=epoch, global_step=global_step,
                             best_f1=metrics["best_f1"], best_epoch=int(metrics["best_epoch"]))

        lines = [json.loads(line) for line in (tmp_path / LOG_FILE).read_text().splitlines()]
        assert [r["event"] for r in lines] == ["start", "epoch", "start", "epoch"]
        assert [r["epoch"] for r in lines if r["event"] == "epoch"] == [0, 1]
        assert result.history["epoch"].tolist() == [0, 1]
        assert pd.read_csv(tmp_path / "history.csv")["epoch"].tolist() == [0, 1]

    def test_06_repeated_epochs_keep_latest_history_row(self, tiny_config, samples32, tmp_path):
        model = ChangeFormer.initialize(tiny_config, seed=3, dtype="float64")
        TrainingService(model, self.cfg, tmp_path).fit(samples32)
        first = tmp_path / "first"
        one_epoch = self.cfg.model_copy(update={"epochs": 1})
        TrainingService(ChangeFormer.initialize(tiny_config, seed=3, dtype="float64"), one_epoch, first).fit(samples32)

        service, epoch, global_step, _ = TrainingService.resume(first / "last.ckpt", self.cfg, tmp_path)
        result = service.fit(samples32, start_epoch=epoch, global_step=global_step)
        assert result.history["epoch"].tolist() == [0, 1]
        lines = (tmp_path / LOG_FILE).read_text().splitlines()
        assert sum(json.loads(line)["event"] == "epoch" for line in lines) == 3

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_07_uncovered_pixels_cap_synthetic_f1(self, seed):
        ceiling = f1_ceiling(synth_generate(16, 64, seed=seed))
        assert 0.5 < ceiling < 0.95

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_08_fits_synthetic_pairs_up_to_the_ceiling(self, seed, tmp_path):
        config = ModelConfig.from_preset("tiny", input_size=(64, 64))
        samples = synth_generate(16, 64, seed=seed)
        model = ChangeFormer.initialize(config, seed=seed)
        cfg = TrainConfig(epochs=200, batch_size=16, seed=seed)
        result = TrainingService(model, cfg, tmp_path).fit(samples)
        _, metrics = EvaluationService(model).evaluate(samples)

        losses = result.history["mean_loss"]
        assert losses.iloc[-1] < losses.iloc[0]
        assert metrics.f1 <= f1_ceiling(samples) + 1e-9
        print(f"✅ seed {seed}: train F1 {metrics.f1:.3f}, ceiling {f1_ceiling(samples):.3f}")
