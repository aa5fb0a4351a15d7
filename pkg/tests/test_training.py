"""
Training tests: loss, momentum recursion, step schedule and the two-stage loop.
"""

import math

import numpy as np
import pandas as pd
import pytest

from translator import tensor as T
from translator import training
from translator.config import SchedulerConfig, SgdConfig, TrainingStage, TwoStageConfig
from translator.data import PAD_ID, BatchLoader, split_dataset
from translator.errors import ConfigError, ContractError, NumericalError, VocabIndexError
from translator.model import STAGE1_TRAINABLE_PREFIXES, R1Translator, is_stage1_trainable
from translator.parameters import ParameterStore
from translator.tensor import Tensor
from translator.training import (
    LOG_COLUMNS,
    OptimizerState,
    SgdMomentum,
    TwoStageTrainer,
    cross_entropy,
    epoch_train,
    scheduled_lr,
    sgd_step,
)

from .conftest import TOY_CONFIG, toy_batch, toy_records, toy_vocab


def _loaders(n=40, batch_size=16, seed=0):
    split = split_dataset(toy_records(n, seed=seed), seed)
    vocab = toy_vocab()
    train = BatchLoader(split.train, vocab, batch_size, TOY_CONFIG.maxlen, TOY_CONFIG.maxlen + 1,
                        shuffle=True, seed=seed, dtype=np.float64)
    val = BatchLoader(
        split.dev, vocab, batch_size, TOY_CONFIG.maxlen, TOY_CONFIG.maxlen + 1, dtype=np.float64
    )
    return train, val


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def test_cross_entropy_of_uniform_logits_is_log_vocab():
    logits = Tensor(np.zeros((2, 3, 7)), dtype=np.float64)
    targets = np.array([[4, 5, PAD_ID], [1, PAD_ID, PAD_ID]])
    assert cross_entropy(logits, targets).item() == pytest.approx(math.log(7))


def test_cross_entropy_ignores_pad_positions():
    rng = np.random.default_rng(0)
    data = rng.normal(size=(2, 3, 6))
    targets = np.array([[4, 5, PAD_ID], [1, PAD_ID, PAD_ID]])
    base = cross_entropy(Tensor(data, dtype=np.float64), targets).item()
    data[0, 2] += 10.0
    data[1, 1:] -= 3.0
    moved = cross_entropy(Tensor(data, dtype=np.float64), targets).item()
    assert moved == pytest.approx(base, abs=1e-12)


def test_cross_entropy_passes_grad_check():
    data = np.random.default_rng(1).normal(size=(2, 4, 5))
    logits = Tensor(data, requires_grad=True, dtype=np.float64)
    targets = np.array([[0, 4, 1, PAD_ID], [3, 1, PAD_ID, PAD_ID]])
    assert T.grad_check(lambda: cross_entropy(logits, targets), [logits]) < 1e-6


def test_cross_entropy_errors():
    logits = Tensor(np.zeros((1, 2, 5)), dtype=np.float64)
    with pytest.raises(ContractError, match="zero real"):
        cross_entropy(logits, np.full((1, 2), PAD_ID))
    with pytest.raises(VocabIndexError, match="V=5"):
        cross_entropy(logits, np.array([[4, 9]]))
    with pytest.raises(ContractError):
        cross_entropy(logits, np.array([[4, 1, 1]]))


# ---------------------------------------------------------------------------
# Optimizer and schedule
# ---------------------------------------------------------------------------


def test_sgd_step_matches_momentum_recursion():
    rng = np.random.default_rng(0)
    for case in range(100):
        store = ParameterStore()
        theta0 = rng.normal(size=(3, 2))
        store.register("w", theta0.copy())
        cfg = SgdConfig(eta=float(rng.uniform(1e-4, 1.0)), mu=float(rng.uniform(0.0, 0.99)))
        state = OptimizerState.zeros_for(store)

        theta, v = theta0.copy(), np.zeros_like(theta0)
        for _ in range(int(rng.integers(1, 6))):
            g = rng.normal(size=theta0.shape)
            store["w"].grad = g.copy()
            sgd_step(store, state, cfg)
            v = cfg.mu * v + cfg.eta * g
            theta = theta - v
        np.testing.assert_allclose(store["w"].data, theta, atol=1e-12, err_msg=f"case {case}")


def test_sgd_step_skips_frozen_and_requires_gradients():
    store = ParameterStore()
    store.register("frozen", np.ones(2), trainable=False)
    store.register("live", np.ones(2))
    optimizer = SgdMomentum(store, SgdConfig(eta=0.5, mu=0.0))
    assert list(optimizer.state.velocity) == ["live"]
    with pytest.raises(ContractError, match="live"):
        optimizer.step()
    store["live"].grad = np.ones(2)
    optimizer.step()
    np.testing.assert_array_equal(store["live"].data, [0.5, 0.5])
    np.testing.assert_array_equal(store["frozen"].data, [1.0, 1.0])


def test_set_lr_changes_only_eta():
    optimizer = SgdMomentum(ParameterStore(), SgdConfig(eta=0.1, mu=0.8))
    optimizer.set_lr(0.01)
    assert optimizer.cfg == SgdConfig(eta=0.01, mu=0.8)


@pytest.mark.parametrize(
    "epoch, expected",
    [(0, 1.0), (19, 1.0), (20, 0.1), (39, 0.1), (40, 0.01)],
)
def test_scheduled_lr_step_decay(epoch, expected):
    schedule = SchedulerConfig(gamma=0.1, step_size=20)
    assert scheduled_lr(1.0, epoch, schedule) == pytest.approx(expected)


def test_scheduled_lr_rejects_negative_epoch():
    with pytest.raises(ContractError):
        scheduled_lr(1.0, -1, SchedulerConfig())


def test_optimizer_config_ranges():
    with pytest.raises(ConfigError):
        SgdConfig(eta=0.0)
    with pytest.raises(ConfigError):
        SgdConfig(eta=0.1, mu=1.0)
    with pytest.raises(ConfigError):
        SchedulerConfig(gamma=0.0)
    with pytest.raises(ConfigError):
        SchedulerConfig(step_size=0)
    with pytest.raises(ConfigError):
        TwoStageConfig(epochs_stage1=-1)


# ---------------------------------------------------------------------------
# Two-stage loop
# ---------------------------------------------------------------------------


def test_epoch_train_aborts_on_non_finite_loss():
    model = R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)
    model.params["proj.weight"].data[0, 0] = np.nan
    train, _ = _loaders()
    optimizer = SgdMomentum(model.params, SgdConfig(eta=0.1))
    with pytest.raises(NumericalError, match="batch 0"):
        epoch_train(model, train, optimizer)


def test_stage1_leaves_frozen_parameters_bit_identical_after_every_epoch():
    model = R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)
    initial = model.params.state_dict()
    train, val = _loaders()
    cfg = TwoStageConfig(epochs_stage1=2, epochs_stage2=0, lr_stage1=0.05, batch_size=16)
    checked = []

    def check(stage, epoch, m):
        current = m.params.state_dict()
        for name in initial:
            if not is_stage1_trainable(name):
                assert current[name].tobytes() == initial[name].tobytes(), (epoch, name)
        for prefix in STAGE1_TRAINABLE_PREFIXES:
            group = [name for name in initial if name.startswith(prefix)]
            assert group, prefix
            changed = [not np.array_equal(current[name], initial[name]) for name in group]
            assert any(changed), (epoch, prefix)
        checked.append(epoch)

    TwoStageTrainer(model, train, val, cfg, callbacks=[check]).run()
    assert checked == [1, 2]


def test_stage2_updates_the_decoder():
    model = R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)
    before = model.params["bart.decoder.0.ffn.fc1.weight"].data.copy()
    train, val = _loaders()
    cfg = TwoStageConfig(epochs_stage1=0, epochs_stage2=1, lr_stage2=0.05)
    TwoStageTrainer(model, train, val, cfg).run()
    assert not np.array_equal(model.params["bart.decoder.0.ffn.fc1.weight"].data, before)


def test_zero_epochs_returns_the_initialization():
    model = R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)
    train, val = _loaders()
    trainer = TwoStageTrainer(model, train, val, TwoStageConfig(epochs_stage1=0, epochs_stage2=0))
    best = trainer.run()
    assert best.stage == "init" and best.epoch == 0
    assert math.isinf(best.best_val_loss)
    assert trainer.history == []
    assert all(np.array_equal(best.params[n], p.data) for n, p in model.params.items())


def test_log_follows_the_schedule(tmp_path):
    model = R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)
    train, val = _loaders()
    cfg = TwoStageConfig(epochs_stage1=3, epochs_stage2=1, lr_stage1=0.02, lr_stage2=0.01,
                         step_size_stage1=2, gamma=0.5)
    seen = []
    trainer = TwoStageTrainer(
        model, train, val, cfg, callbacks=[lambda stage, epoch, m: seen.append((stage, epoch))]
    )
    best = trainer.run()

    log = pd.read_csv(trainer.save_log(tmp_path / "train_log.csv"))
    assert list(log.columns) == LOG_COLUMNS
    assert log["stage"].tolist() == [1, 1, 1, 2]
    assert log["epoch"].tolist() == [1, 2, 3, 1]
    np.testing.assert_allclose(log["lr"], [0.02, 0.02, 0.01, 0.01])
    assert seen == [(TrainingStage.STAGE1, 1), (TrainingStage.STAGE1, 2), (TrainingStage.STAGE1, 3),
                    (TrainingStage.STAGE2, 1)]
    assert best.best_val_loss == pytest.approx(log["val_loss"].min(), rel=1e-9)
    assert best.rng_state is not None


def test_train_and_val_must_not_share_sentences():
    model = R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)
    train, _ = _loaders()
    with pytest.raises(ContractError, match="share"):
        TwoStageTrainer(model, train, train, TwoStageConfig())


class _Quadratic:
    """f(w) = 0.5 * ||w - target||^2, ignoring the batch."""

    def __init__(self, target):
        self.params = ParameterStore()
        self.w = self.params.register("w", np.zeros_like(target))
        self.target = target

    def forward_loss(self, batch):
        diff = T.sub(self.w, self.target)
        return T.mul(T.sum(T.mul(diff, diff)), 0.5), diff


def test_epoch_train_descends_a_convex_loss_monotonically():
    model = _Quadratic(np.array([1.0, -2.0, 0.5]))
    optimizer = SgdMomentum(model.params, SgdConfig(eta=0.05, mu=0.5))
    losses = [epoch_train(model, [None], optimizer) for _ in range(5)]
    assert all(later < earlier for earlier, later in zip(losses, losses[1:]))


def test_epoch_train_needs_batches():
    model = _Quadratic(np.ones(2))
    with pytest.raises(ContractError, match="no batches"):
        epoch_train(model, [], SgdMomentum(model.params, SgdConfig(eta=0.1)))


def test_epoch_train_of_one_batch_returns_its_loss():
    model = R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)
    batch = toy_batch(4)
    with T.no_grad():
        expected = model.forward_loss(batch)[0].item()
    assert epoch_train(model, [batch], SgdMomentum(model.params, SgdConfig(eta=0.05))) == expected


def test_each_stage_starts_from_zero_velocity(monkeypatch):
    created = []

    class RecordingSgd(SgdMomentum):
        def __init__(self, params, cfg):
            super().__init__(params, cfg)
            created.append(self)
            assert all(not v.any() for v in self.state.velocity.values())

    monkeypatch.setattr(training, "SgdMomentum", RecordingSgd)
    model = R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)
    train, val = _loaders()
    cfg = TwoStageConfig(epochs_stage1=1, epochs_stage2=1, lr_stage1=0.05, lr_stage2=0.05)
    TwoStageTrainer(model, train, val, cfg).run()

    stage1, stage2 = created
    assert any(v.any() for v in stage1.state.velocity.values())
    assert set(stage1.state.velocity) < set(stage2.state.velocity) == set(model.params.names())


def test_default_constants_train_and_decay_on_schedule():
    cfg = TwoStageConfig()
    assert cfg.sgd(TrainingStage.STAGE2).eta == 2e-5
    schedule = cfg.scheduler(TrainingStage.STAGE2)
    assert scheduled_lr(2e-5, 29, schedule) == 2e-5
    assert scheduled_lr(2e-5, 30, schedule) == pytest.approx(2e-6, rel=1e-12)

    model = R1Translator(TOY_CONFIG, seed=0, dtype=np.float64)
    train, val = _loaders()
    trainer = TwoStageTrainer(model, train, val, TwoStageConfig(epochs_stage1=1, epochs_stage2=1))
    trainer.run()
    log = trainer.history_frame()
    assert log["lr"].tolist() == [2e-5, 2e-5]
    assert np.isfinite(log[["train_loss", "val_loss"]].to_numpy()).all()
