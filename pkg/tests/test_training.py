"""Schedule, optimizer, batching, and fold-training behavior."""

import numpy as np
import pytest

from conftest import tiny_config

from clstack import store
from clstack.autodiff import NonFiniteError, Tensor
from clstack.training import (
    AdamState,
    TrainConfig,
    TrainingDivergedError,
    adam_step,
    batch_size_for,
    group_rates,
    lr_at,
    make_batches,
    train_fold,
)


class TestSchedule:
    def test_warmup_values(self):
        cfg = TrainConfig()
        assert lr_at(500, cfg) == pytest.approx(5e-4, abs=0)
        assert lr_at(1000, cfg) == pytest.approx(1e-3, abs=0)

    def test_decay_value(self):
        assert lr_at(4000, TrainConfig()) == pytest.approx(5e-4, rel=1e-15)

    def test_continuity_at_warmup(self):
        cfg = TrainConfig()
        below = lr_at(cfg.warmup_steps, cfg)
        above = cfg.lr_max * np.sqrt(cfg.warmup_steps / (cfg.warmup_steps + 1e-9))
        assert abs(below - cfg.lr_max) < 1e-12
        assert abs(above - cfg.lr_max) < 1e-12

    def test_monotone_nonincreasing_after_warmup(self):
        cfg = TrainConfig()
        rates = [lr_at(t, cfg) for t in range(cfg.warmup_steps, 3 * cfg.total_steps, 7)]
        assert all(a >= b for a, b in zip(rates, rates[1:]))

    def test_steps_are_one_based(self):
        with pytest.raises(ValueError, match="1-based"):
            lr_at(0, TrainConfig())

    def test_invalid_config(self):
        with pytest.raises(ValueError, match="warmup"):
            TrainConfig(total_steps=10, warmup_steps=20)
        with pytest.raises(ValueError, match="positive"):
            TrainConfig(lr_max=0.0)

    def test_group_rates_cover_all_groups(self):
        rates = group_rates(10, TrainConfig())
        assert set(rates) == {"cnn", "encoder", "head"}
        assert rates["cnn"] == TrainConfig().cnn_lr


class TestAdam:
    def _scalar_store(self, value=0.0):
        from clstack.models import ParameterStore

        store_ = ParameterStore()
        store_.add("w", Tensor(np.array([value])), "head")
        return store_

    def test_first_step_closed_form(self):
        params = self._scalar_store(0.0)
        state = AdamState(params)
        params["w"].grad = np.array([1.0])
        adam_step(params, state, {"cnn": 0.01, "encoder": 0.01, "head": 0.01}, TrainConfig())
        # bias correction makes m-hat = v-hat = 1 on the first step
        assert params["w"].data[0] == pytest.approx(-0.01, rel=1e-6)

    def test_zero_gradient_leaves_parameters_unchanged(self):
        params = self._scalar_store(1.5)
        state = AdamState(params)
        for _ in range(10):
            params["w"].grad = np.array([0.0])
            adam_step(params, state, {"cnn": 0.1, "encoder": 0.1, "head": 0.1}, TrainConfig())
        assert params["w"].data[0] == 1.5

    def test_quadratic_bowl_descends(self):
        params = self._scalar_store(3.0)
        state = AdamState(params)
        cfg = TrainConfig()
        losses = []
        for _ in range(10):
            w = params["w"].data[0]
            losses.append(w * w)
            params["w"].grad = np.array([2.0 * w])
            adam_step(params, state, {"cnn": 0.05, "encoder": 0.05, "head": 0.05}, cfg)
        assert all(a > b for a, b in zip(losses, losses[1:]))

    def test_non_finite_gradient_names_parameter(self):
        params = self._scalar_store(0.0)
        state = AdamState(params)
        params["w"].grad = np.array([np.nan])
        with pytest.raises(NonFiniteError, match="'w'"):
            adam_step(params, state, {"cnn": 0.1, "encoder": 0.1, "head": 0.1}, TrainConfig())


class TestBatching:
    def test_batch_size_examples(self):
        assert batch_size_for(6000, TrainConfig(total_steps=6000, epoch_target=4)) == 4
        assert batch_size_for(30000, TrainConfig(total_steps=6000, epoch_target=4)) == 20
        assert batch_size_for(3, TrainConfig(total_steps=6000)) == 4  # floor of 4

    def test_exact_step_count(self):
        cfg = TrainConfig(total_steps=25, warmup_steps=5)
        batches = list(make_batches(10, cfg, np.random.default_rng(0)))
        assert len(batches) == 25

    def test_partial_batches_kept_and_epochs_cover_data(self):
        cfg = TrainConfig(total_steps=3, warmup_steps=1, epoch_target=1)
        batches = list(make_batches(10, cfg, np.random.default_rng(0)))
        assert [len(b) for b in batches] == [4, 4, 2]
        assert sorted(np.concatenate(batches).tolist()) == list(range(10))

    def test_same_seed_same_shuffles(self):
        cfg = TrainConfig(total_steps=12, warmup_steps=2)
        a = list(make_batches(9, cfg, np.random.default_rng(3)))
        b = list(make_batches(9, cfg, np.random.default_rng(3)))
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_reshuffled_each_epoch(self):
        cfg = TrainConfig(total_steps=6, warmup_steps=1)
        batches = list(make_batches(8, cfg, np.random.default_rng(1)))
        first_epoch = np.concatenate(batches[:2])
        second_epoch = np.concatenate(batches[2:4])
        assert not np.array_equal(first_epoch, second_epoch)


def quick_dataset(separation=6.0, n=40, classes=2, seed=0):
    return store.synth_generate(
        n_samples=n, n_classes=classes, n_layers=12, hidden=32, separation=separation, seed=seed
    )


class TestTrainFold:
    def test_reproducible_bitwise(self):
        ds = quick_dataset()
        cfg = tiny_config(n_classes=2, variant="softmax")
        tcfg = TrainConfig(total_steps=8, warmup_steps=2, seed=11)
        a = train_fold(ds.stacks[:32], ds.labels[:32], ds.stacks[32:], ds.labels[32:], cfg, tcfg)
        b = train_fold(ds.stacks[:32], ds.labels[:32], ds.stacks[32:], ds.labels[32:], cfg, tcfg)
        assert a.losses == b.losses
        assert a.accuracy == b.accuracy
        for name, t in a.params.items():
            assert np.array_equal(t.data, b.params[name].data)

    def test_learns_separable_data(self):
        ds = quick_dataset(separation=8.0, n=60)
        cfg = tiny_config(n_classes=2, variant="softmax")
        tcfg = TrainConfig(total_steps=200, warmup_steps=20, lr_max=0.02, seed=1)
        result = train_fold(ds.stacks[:48], ds.labels[:48], ds.stacks[48:], ds.labels[48:], cfg, tcfg)
        assert result.accuracy >= 0.9

    def test_divergence_marks_step(self):
        ds = quick_dataset()
        cfg = tiny_config(n_classes=2, variant="trans-enc")
        tcfg = TrainConfig(total_steps=20, warmup_steps=1, lr_max=1e160, cnn_lr=1e160, seed=0)
        with pytest.raises(TrainingDivergedError) as excinfo:
            train_fold(ds.stacks[:32], ds.labels[:32], ds.stacks[32:], ds.labels[32:], cfg, tcfg)
        assert excinfo.value.step >= 1

    def test_dropout_variant_trains(self):
        # exercises the dropout rng path end to end
        ds = quick_dataset(separation=8.0)
        cfg = tiny_config(n_classes=2, variant="cnn-cls", dropout=0.3)
        tcfg = TrainConfig(total_steps=6, warmup_steps=2, seed=5)
        result = train_fold(ds.stacks[:32], ds.labels[:32], ds.stacks[32:], ds.labels[32:], cfg, tcfg)
        assert len(result.losses) == 6
        assert np.isfinite(result.losses).all()


def test_config_dict_round_trip():
    cfg = TrainConfig(total_steps=100, warmup_steps=10, seed=3)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError, match="unknown"):
        TrainConfig.from_dict({"momentum": 0.9})
