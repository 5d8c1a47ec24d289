import math

import numpy as np
import pytest

from sentsimp import tensor as T
from sentsimp.corpus import EvalExample
from sentsimp.model import Model, ModelConfig, forward, init_model
from sentsimp.tensor import Tensor
from sentsimp.train import (Checkpoint, CheckpointFormatError, EpochRecord, TrainConfig,
                            TrainHistory, adamw_step, history_tsv, init_opt_state,
                            load_checkpoint, model_from_checkpoint, onecycle_lr,
                            save_checkpoint, train_loop)
from sentsimp.tokenizer import build_vocab
from sentsimp.decoding import DecodeConfig, greedy_decode

from conftest import (make_toy_pairs, random_batch, tokenized_batches, toy_model_config,
                      toy_vocab)


class TestOneCycle:
    cfg = TrainConfig()

    def test_starts_at_base_lr(self):
        assert onecycle_lr(0, 1000, self.cfg) == 1e-4

    def test_peaks_at_max_lr(self):
        peak = math.floor(0.1 * 1000)
        assert onecycle_lr(peak, 1000, self.cfg) == 1e-3

    def test_ends_at_final_lr(self):
        assert onecycle_lr(999, 1000, self.cfg) == pytest.approx(1e-6, rel=1e-12)

    def test_decay_midpoint(self):
        total = 1001
        peak = math.floor(0.1 * total)
        mid = peak + (total - 1 - peak) // 2
        want = self.cfg.final_lr + (self.cfg.max_lr - self.cfg.final_lr) / 2
        assert onecycle_lr(mid, total, self.cfg) == pytest.approx(want, rel=1e-9)

    def test_continuous_and_piecewise_monotone(self):
        total = 10_000
        lrs = [onecycle_lr(s, total, self.cfg) for s in range(total)]
        peak_idx = int(np.argmax(lrs))
        assert all(b > a for a, b in zip(lrs[:peak_idx], lrs[1 : peak_idx + 1]))
        assert all(b < a for a, b in zip(lrs[peak_idx:], lrs[peak_idx + 1 :]))
        bound = (self.cfg.max_lr - self.cfg.final_lr) * (math.pi / 2) / (total - 1 - peak_idx)
        decay_jumps = np.abs(np.diff(lrs[peak_idx:]))
        assert decay_jumps.max() <= bound * 1.0000001

    def test_too_few_steps_rejected(self):
        with pytest.raises(ValueError):
            onecycle_lr(0, 1, self.cfg)


def scalar_model(value: float) -> Model:
    cfg = ModelConfig(d_model=2, n_heads=1, n_layers=1, d_ff=2, vocab_size=8)
    p = Tensor(np.array([value]), requires_grad=True)
    return Model(cfg, {"w": p}, no_decay=set())


class TestAdamW:
    def test_zero_gradient_pure_decay(self):
        model = scalar_model(1.0)
        model.params["w"].grad = np.array([0.0])
        adamw_step(model, init_opt_state(model), lr=0.1,
                   cfg=TrainConfig(weight_decay=0.01))
        assert model.params["w"].data[0] == pytest.approx(0.999, abs=1e-12)

    def test_first_step_moves_by_lr(self):
        model = scalar_model(1.0)
        model.params["w"].grad = np.array([0.5])
        adamw_step(model, init_opt_state(model), lr=0.1,
                   cfg=TrainConfig(weight_decay=0.0))
        assert model.params["w"].data[0] == pytest.approx(0.9, abs=1e-6)

    def test_three_steps_match_hand_recurrence(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        model = scalar_model(1.0)
        state = init_opt_state(model)
        cfg = TrainConfig(weight_decay=0.0)
        # hand-iterated recurrence on f(p) = p^2
        p, m, v = 1.0, 0.0, 0.0
        for t in range(1, 4):
            g = 2 * p
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            mhat = m / (1 - b1 ** t)
            vhat = v / (1 - b2 ** t)
            p = p - lr * mhat / (math.sqrt(vhat) + eps)

            model.params["w"].grad = np.array([2 * model.params["w"].data[0]])
            adamw_step(model, state, lr=lr, cfg=cfg)
        assert model.params["w"].data[0] == pytest.approx(p, abs=1e-12)

    def test_missing_gradient_rejected(self):
        model = scalar_model(1.0)
        with pytest.raises(ValueError):
            adamw_step(model, init_opt_state(model), 0.1, TrainConfig())

    def test_layer_norm_params_not_decayed(self):
        cfg = ModelConfig(d_model=2, n_heads=1, n_layers=1, d_ff=2, vocab_size=8)
        p = Tensor(np.array([1.0]), requires_grad=True)
        model = Model(cfg, {"enc.0.ln1.gain": p}, no_decay={"enc.0.ln1.gain"})
        p.grad = np.array([0.0])
        adamw_step(model, init_opt_state(model), 0.1, TrainConfig(weight_decay=0.5))
        assert p.data[0] == 1.0


class TestTrainConfig:
    def test_lr_ordering_enforced(self):
        with pytest.raises(ValueError):
            TrainConfig(base_lr=1e-2, max_lr=1e-3)

    def test_patience_floor(self):
        with pytest.raises(ValueError):
            TrainConfig(patience=0)


def tiny_setup(n_pairs=8, seed=0):
    pairs = make_toy_pairs(n_pairs, seed=seed)
    vocab = toy_vocab(pairs)
    batches = tokenized_batches(pairs, vocab, batch_size=4)
    model = init_model(toy_model_config(vocab.size), seed)
    valid = [EvalExample(s, (t,)) for s, t in pairs]
    return model, batches, valid, vocab


class TestTrainLoop:
    def test_loss_decreases_over_first_steps(self):
        model, batches, valid, vocab = tiny_setup()
        cfg = TrainConfig(epochs=10, patience=None, seed=0)
        first_losses = []

        def fake_score(m):
            return 0.0

        ckpt, history = train_loop(model, batches[:1], valid, cfg, vocab,
                                   score_fn=fake_score)
        losses = [r.train_loss for r in history.epochs]
        assert losses[9] < losses[0]

    def test_early_stop_on_injected_sequence(self):
        model, batches, valid, vocab = tiny_setup(4)
        scores = iter([10.0, 12.0, 11.0, 11.0, 11.0, 99.0])
        cfg = TrainConfig(epochs=20, patience=3, seed=0)
        ckpt, history = train_loop(model, batches, valid, cfg, vocab,
                                   score_fn=lambda m: next(scores))
        assert len(history.epochs) == 5
        assert history.stopped_early
        assert history.best_epoch == 2

    def test_monotone_improvement_runs_to_the_end(self):
        model, batches, valid, vocab = tiny_setup(4)
        counter = iter(range(100))
        cfg = TrainConfig(epochs=20, patience=3, seed=0)
        ckpt, history = train_loop(model, batches, valid, cfg, vocab,
                                   score_fn=lambda m: float(next(counter)))
        assert len(history.epochs) == 20
        assert not history.stopped_early
        assert history.best_epoch == 20

    def test_best_checkpoint_holds_best_epoch_params(self):
        model, batches, valid, vocab = tiny_setup(4)
        snapshots = []

        def score(m):
            snapshots.append({k: p.data.copy() for k, p in m.params.items()})
            return [5.0, 9.0, 1.0, 1.0, 1.0][len(snapshots) - 1]

        cfg = TrainConfig(epochs=5, patience=3, seed=0)
        ckpt, history = train_loop(model, batches, valid, cfg, vocab, score_fn=score)
        assert history.best_epoch == 2
        for name, data in ckpt.params.items():
            assert np.array_equal(data, snapshots[1][name])

    def test_reproducible_history(self):
        cfg = TrainConfig(epochs=3, patience=None, seed=0)
        histories = []
        for _ in range(2):
            model, batches, valid, vocab = tiny_setup()
            _, history = train_loop(model, batches, valid, cfg, vocab)
            histories.append(history_tsv(history))
        assert histories[0] == histories[1]

    def test_validation_sari_of_checkpoint_is_maximum(self):
        model, batches, valid, vocab = tiny_setup()
        cfg = TrainConfig(epochs=4, patience=None, seed=0)
        ckpt, history = train_loop(model, batches, valid, cfg, vocab)
        best = max(r.valid_sari for r in history.epochs)
        assert history.epochs[history.best_epoch - 1].valid_sari == best


class TestCheckpointIO:
    def make_checkpoint(self):
        pairs = make_toy_pairs(4)
        vocab = toy_vocab(pairs)
        model = init_model(toy_model_config(vocab.size), 3)
        history = TrainHistory(
            epochs=[EpochRecord(1, 2.5, 31.2, 1e-4)], best_epoch=1)
        params = {k: p.data.copy() for k, p in model.params.items()}
        return Checkpoint(model.config, vocab, params, history), model, vocab

    def test_round_trip_bitwise(self, tmp_path):
        ckpt, model, vocab = self.make_checkpoint()
        path = tmp_path / "ck.bin"
        save_checkpoint(ckpt, path)
        loaded = load_checkpoint(path)
        assert loaded.config == ckpt.config
        assert loaded.vocab == vocab
        assert loaded.history == ckpt.history
        assert set(loaded.params) == set(ckpt.params)
        for name in ckpt.params:
            assert loaded.params[name].tobytes() == ckpt.params[name].tobytes()

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointFormatError, match="magic"):
            load_checkpoint(path)

    def test_truncated_file_rejected(self, tmp_path):
        ckpt, _, _ = self.make_checkpoint()
        path = tmp_path / "ck.bin"
        save_checkpoint(ckpt, path)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(CheckpointFormatError, match="truncated"):
            load_checkpoint(path)

    def test_reloaded_model_decodes_identically(self, tmp_path):
        ckpt, model, vocab = self.make_checkpoint()
        path = tmp_path / "ck.bin"
        save_checkpoint(ckpt, path)
        restored = model_from_checkpoint(load_checkpoint(path))
        cfg = DecodeConfig(max_len=16)
        source = "the perspicacious cat saw the tree"
        assert greedy_decode(restored, vocab, source, cfg) == \
            greedy_decode(model, vocab, source, cfg)
