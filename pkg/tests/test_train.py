import numpy as np
import pytest

from scourwatch.dataset import WindowSet, WindowSpec
from scourwatch.errors import InputError, TrainingDiverged
from scourwatch.neural.models import ModelConfig
from scourwatch.neural.snapshot import load_model, save_model
from scourwatch.neural.train import evaluate, train


def tiny_windows(factory, n_train=30, n_val=10, spec=WindowSpec(24, 6)):
    ws = factory.windows("ss", spec)
    train_ws = WindowSet("train", spec, ws["train"].matrix, ws["train"].entries[:n_train])
    val_ws = WindowSet(
        "validation", spec, ws["validation"].matrix, ws["validation"].entries[:n_val]
    )
    return train_ws, val_ws


def tiny_config(**kw):
    defaults = dict(variant="ss", input_width=24, label_width=6, units=8,
                    max_epochs=10, patience=5, seed=3, learning_rate=1e-2)
    defaults.update(kw)
    return ModelConfig(**defaults)


class TestEarlyStopping:
    SCHEDULE = [1.0, 0.9, 0.91, 0.92, 0.93, 0.94, 0.95]

    def test_patience_five_hand_trace(self, small_factory):
        train_ws, val_ws = tiny_windows(small_factory)
        captured = {}

        def callback(epoch, params, stats):
            captured[epoch] = {k: v.copy() for k, v in params.items()}

        trained = train(
            tiny_config(max_epochs=100, patience=5),
            train_ws,
            val_ws,
            val_loss_override=lambda epoch: self.SCHEDULE[epoch - 1],
            epoch_callback=callback,
        )
        assert trained.stopped_epoch == 7
        assert trained.restored_epoch == 2
        assert trained.restored_best
        for name, tensor in trained.params.items():
            np.testing.assert_array_equal(tensor, captured[2][name])

    def test_strictly_decreasing_runs_all_epochs(self, small_factory):
        train_ws, val_ws = tiny_windows(small_factory)
        trained = train(
            tiny_config(max_epochs=12, patience=5),
            train_ws,
            val_ws,
            val_loss_override=lambda epoch: 1.0 / epoch,
        )
        assert trained.stopped_epoch == 12
        assert trained.restored_epoch == 12
        assert len(trained.history) == 12

    def test_history_val_loss_at_restored_epoch_is_min(self, small_factory):
        train_ws, val_ws = tiny_windows(small_factory)
        trained = train(tiny_config(max_epochs=6), train_ws, val_ws)
        losses = [h.val_mse for h in trained.history]
        assert losses[trained.restored_epoch - 1] == min(losses)

    def test_divergent_validation_raises_with_epoch(self, small_factory):
        train_ws, val_ws = tiny_windows(small_factory)
        with pytest.raises(TrainingDiverged) as err:
            train(
                tiny_config(max_epochs=5),
                train_ws,
                val_ws,
                val_loss_override=lambda epoch: float("nan") if epoch == 3 else 1.0,
            )
        assert err.value.epoch == 3


class TestDeterminism:
    def test_same_seed_bitwise_identical(self, small_factory):
        train_ws, val_ws = tiny_windows(small_factory)
        cfg = tiny_config(max_epochs=3, dropout=0.2)
        a = train(cfg, train_ws, val_ws)
        b = train(cfg, train_ws, val_ws)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])
        assert [h.val_mse for h in a.history] == [h.val_mse for h in b.history]

    def test_different_seed_differs(self, small_factory):
        train_ws, val_ws = tiny_windows(small_factory)
        a = train(tiny_config(max_epochs=2, seed=1), train_ws, val_ws)
        b = train(tiny_config(max_epochs=2, seed=2), train_ws, val_ws)
        assert any(
            not np.array_equal(a.params[k], b.params[k]) for k in a.params
        )


class TestBaselineAndEvaluate:
    def test_baseline_trains_trivially(self, small_factory):
        train_ws, val_ws = tiny_windows(small_factory)
        trained = train(tiny_config(variant="baseline"), train_ws, val_ws)
        assert trained.params == {}
        model = trained.build()
        mse, mae = evaluate(model, val_ws)
        assert np.isfinite(mse)

    def test_training_reduces_validation_loss(self, small_factory):
        train_ws, val_ws = tiny_windows(small_factory, n_train=120, n_val=40)
        trained = train(tiny_config(max_epochs=8), train_ws, val_ws)
        assert trained.history[-1].val_mse < trained.history[0].val_mse * 1.05


class TestSnapshot:
    def test_round_trip_bitwise(self, small_factory, tmp_path):
        train_ws, val_ws = tiny_windows(small_factory)
        trained = train(tiny_config(max_epochs=2), train_ws, val_ws)
        trained.norm_channels = ("sonar", "stage")
        trained.norm_mean = np.array([34.0, 36.0])
        trained.norm_std = np.array([0.5, 0.8])
        path = tmp_path / "model.bin"
        save_model(trained, path)
        back = load_model(path)
        assert back.config == trained.config
        assert back.n_features == trained.n_features
        assert list(back.params) == list(trained.params)
        for name in trained.params:
            np.testing.assert_array_equal(back.params[name], trained.params[name])
        assert back.norm_channels == trained.norm_channels
        np.testing.assert_array_equal(back.norm_mean, trained.norm_mean)
        assert back.stopped_epoch == trained.stopped_epoch
        assert back.restored_epoch == trained.restored_epoch

    def test_snapshot_bytes_deterministic(self, small_factory, tmp_path):
        train_ws, val_ws = tiny_windows(small_factory)
        cfg = tiny_config(max_epochs=2)
        a, b = tmp_path / "a.bin", tmp_path / "b.bin"
        save_model(train(cfg, train_ws, val_ws), a)
        save_model(train(cfg, train_ws, val_ws), b)
        assert a.read_bytes() == b.read_bytes()

    def test_magic_validated(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"NOTAMODEL\nend_header\n")
        with pytest.raises(InputError, match="SCOURLSTM1"):
            load_model(p)

    def test_truncated_data_rejected(self, small_factory, tmp_path):
        train_ws, val_ws = tiny_windows(small_factory)
        trained = train(tiny_config(max_epochs=1), train_ws, val_ws)
        path = tmp_path / "model.bin"
        save_model(trained, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-16])
        with pytest.raises(InputError, match="truncated"):
            load_model(path)
