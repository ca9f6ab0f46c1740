#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import math

import numpy as np
import pytest
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.codec import (
    BLOCK,
    EOS,
    FRAME_DIM,
    EncodedTracing,
    fit_speed_quantizer,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils import generator as generator_module
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.generator import (
    GeneratorConfig,
    GeneratorModel,
    TrainingExample,
    batch_gradients,
    batch_loss,
    bias_project,
    evaluate_loss,
    forward_teacher_forced,
    load_checkpoint,
    sample,
    save_checkpoint,
    teacher_forced_loss,
    train,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    ConfigError,
    DimensionError,
    FormatError,
    ModelError,
    SeededRng,
    write_tensor_archive,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.numerics import grad_check, softmax
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.styles import BiasVector, letter_bias


QUANTIZER = fit_speed_quantizer(np.arange(1.0, 161.0))
LN17 = math.log(17)


def make_model(hidden_layers=2, hidden_size=4, dropout=0.0, bias_hidden=3, bias_dim=5, seed=1, **kwargs):
    config = GeneratorConfig(hidden_layers=hidden_layers, hidden_size=hidden_size, dropout=dropout,
                             bias_hidden=bias_hidden, seed=seed, **kwargs)
    return GeneratorModel(config, "letter", bias_dim, QUANTIZER, corpus_seed=7)


def bias_of(values, kind="letter"):
    return BiasVector(kind, np.asarray(values, dtype=float))


def random_examples(count, bias_dim=5, max_len=8, seed=3):
    rng = SeededRng(seed)
    examples = []
    for i in range(count):
        n = int(rng.integers(0, max_len))
        tracing = EncodedTracing.from_codes(rng.integers(0, 16, size=n), rng.integers(0, 16, size=n),
                                            sample_id=f"s{i}")
        examples.append(TrainingExample(tracing, bias_of(rng.normal(size=bias_dim))))
    return examples


class TestGeneratorConfig:
    """Tests for GeneratorConfig validation"""

    def test_defaults(self):
        config = GeneratorConfig()
        assert (config.hidden_layers, config.hidden_size, config.dropout, config.lr) == (3, 256, 0.3, 1e-3)
        assert config.frame_dim == 34 and config.max_gen_len == 99

    @pytest.mark.parametrize('overrides', [
        {'frame_dim': 32},
        {'temperature': 0.0},
        {'dropout': 1.0},
        {'dropout': -0.1},
        {'hidden_layers': 0},
        {'max_gen_len': 100},
    ])
    def test_invalid(self, overrides):
        with pytest.raises(ConfigError):
            GeneratorConfig(**overrides)

    def test_dict_round_trip_ignores_unknown_keys(self):
        config = GeneratorConfig(hidden_size=8)
        data = dict(config.to_dict(), unknown=True)
        assert GeneratorConfig.from_dict(data) == config

    def test_weights_scaled_by_input_width(self):
        """Test every weight matrix draws from uniform(-k, k) with k = 1/sqrt(rows)"""
        model = make_model(hidden_size=64, bias_hidden=16, bias_dim=26)
        store = model.store
        assert store["gru.0.W_z"].shape == (FRAME_DIM, 64)
        for name in store.names():
            value = store[name]
            if value.ndim == 1:
                assert not value.any(), name
                continue
            k = 1.0 / math.sqrt(value.shape[0])
            assert np.abs(value).max() <= k, name
            assert np.abs(value).max() > 0.9 * k, name


class TestBiasProject:
    """Tests for bias_project"""

    def test_zero_mlp_gives_zero_frame(self):
        model = make_model()
        for name in model.store.names():
            if name.startswith("bias."):
                model.store[name][...] = 0.0
        assert np.array_equal(bias_project(bias_of(np.ones(5)), model), np.zeros(FRAME_DIM))

    def test_letter_dimension(self):
        model = make_model(bias_dim=26)
        frame0 = bias_project(letter_bias("Q"), model)
        assert frame0.shape == (FRAME_DIM,)
        assert np.count_nonzero(frame0) > 2

    @pytest.mark.parametrize('bias_hidden', [0, 64])
    def test_letter_writer_dimension(self, bias_hidden):
        model = make_model(bias_dim=26 + 20, bias_hidden=bias_hidden)
        assert bias_project(bias_of(np.eye(46)[0] + np.eye(46)[26]), model).shape == (FRAME_DIM,)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError, match="dimension 4, model expects 5"):
            bias_project(bias_of(np.ones(4)), make_model())


class TestTeacherForcing:
    """Tests for forward_teacher_forced and teacher_forced_loss"""

    def test_eos_only_tracing(self):
        model = make_model()
        frame0 = bias_project(bias_of(np.ones(5)), model)
        logits = forward_teacher_forced(model, frame0, EncodedTracing.from_codes([], []))
        assert logits.shape == (1, FRAME_DIM)

    def test_output_length_matches_input(self):
        model = make_model()
        frame0 = bias_project(bias_of(np.ones(5)), model)
        for example in random_examples(10):
            logits = forward_teacher_forced(model, frame0, example.tracing)
            assert logits.shape == example.tracing.frames.shape

    def test_empty_sequence(self):
        with pytest.raises(ModelError, match="empty"):
            forward_teacher_forced(make_model(), np.zeros(FRAME_DIM), np.zeros((0, FRAME_DIM)))

    def test_initial_loss_near_uniform(self):
        model = make_model(hidden_layers=3, hidden_size=32, bias_dim=26, bias_hidden=64)
        frame0 = bias_project(letter_bias("M"), model)
        rng = SeededRng(4)
        per_step = []
        for _ in range(10):
            tracing = EncodedTracing.from_codes(rng.integers(0, 16, size=20), rng.integers(0, 16, size=20))
            logits = forward_teacher_forced(model, frame0, tracing)
            per_step.append(teacher_forced_loss(logits, tracing) / len(tracing))
        assert abs(np.mean(per_step) - 2 * LN17) < 0.5

    def test_uniform_logits(self):
        tracing = EncodedTracing.from_codes([1, 2, 3], [4, 5, 6])
        assert teacher_forced_loss(np.zeros((4, FRAME_DIM)), tracing) == pytest.approx(4 * 2 * LN17)

    def test_perfect_logits(self):
        tracing = EncodedTracing.from_codes([1, 2, 3], [4, 5, 6])
        assert teacher_forced_loss(100.0 * tracing.frames, tracing) < 1e-30

    def test_length_mismatch(self):
        tracing = EncodedTracing.from_codes([1, 2], [4, 5])
        with pytest.raises(DimensionError):
            teacher_forced_loss(np.zeros((2, FRAME_DIM)), tracing)

    def test_steps_after_eos_are_masked(self):
        tracing = EncodedTracing.from_codes([1, 2], [4, 5])
        logits = SeededRng(2).normal(size=(6, FRAME_DIM))
        garbage = np.vstack([tracing.frames, EncodedTracing.from_codes([7, 8], [9, 10]).frames])
        assert teacher_forced_loss(logits, garbage) == pytest.approx(teacher_forced_loss(logits[:3], tracing))


class TestGradients:
    """Tests for backpropagation through time"""

    def test_matches_finite_differences(self):
        """Test every parameter tensor of a 3-step, hidden-size-4 model"""
        model = make_model(hidden_layers=2, hidden_size=4)
        examples = [
            TrainingExample(EncodedTracing.from_codes([1, 5], [2, 3]), bias_of([0.5, -1.0, 0.2, 0.0, 1.5])),
            TrainingExample(EncodedTracing.from_codes([9], [15]), bias_of([-0.3, 0.4, 1.0, -2.0, 0.1])),
        ]
        _, _, grads = batch_gradients(model, examples)
        params = {name: model.store[name] for name in model.store.names()}
        report = grad_check(lambda p: batch_loss(model, examples)[0], params, grads, tolerance=1e-5)
        assert report.passed, report

    def test_padding_is_additive(self):
        """Test a padded batch gradient equals the sum of single-sequence gradients"""
        model = make_model()
        short, long = random_examples(2, seed=8)[0], TrainingExample(
            EncodedTracing.from_codes(list(range(9)), list(range(9))), bias_of(np.ones(5)))
        value, n_steps, grads = batch_gradients(model, [short, long])
        value_a, steps_a, grads_a = batch_gradients(model, [short])
        value_b, steps_b, grads_b = batch_gradients(model, [long])
        assert value == pytest.approx(value_a + value_b)
        assert n_steps == steps_a + steps_b == len(short.tracing) + 10
        for name in grads:
            assert np.allclose(grads[name], grads_a[name] + grads_b[name], rtol=1e-10, atol=1e-12)

    def test_evaluate_loss_is_sequence_mean(self):
        model = make_model()
        examples = random_examples(7)
        total, _ = batch_loss(model, examples)
        assert evaluate_loss(model, examples, batch_size=3) == pytest.approx(total / 7)


class TestTrain:
    """Tests for train"""

    def test_zero_learning_rate_keeps_parameters(self):
        model = make_model(lr=0.0, dropout=0.3)
        before = model.store.snapshot()
        train(model, random_examples(6), epochs=1, batch_size=4)
        for name, value in before.items():
            assert np.array_equal(model.store[name], value)
        assert model.store.step_count == 2

    def test_same_seed_same_report(self):
        reports = []
        for _ in range(2):
            model = make_model(dropout=0.3, seed=9)
            reports.append(train(model, random_examples(6), epochs=3, batch_size=4,
                                 validation_set=random_examples(3, seed=4)))
        assert reports[0].to_dict() == reports[1].to_dict()
        assert reports[0].epochs == 3
        assert all(loss is not None for loss in reports[0].validation_loss)

    def test_report_excludes_timing_by_default(self):
        report = train(make_model(), random_examples(4), epochs=1, batch_size=2)
        assert "wall_time" not in report.to_dict()
        assert len(report.to_dict(include_timing=True)["wall_time"]) == 1

    def test_bias_kind_mismatch(self):
        examples = random_examples(2)
        examples[1] = TrainingExample(examples[1].tracing, bias_of(np.ones(5), kind="letter_writer"))
        with pytest.raises(ModelError, match="'letter_writer' bias"):
            train(make_model(), examples, epochs=1)

    def test_bias_width_mismatch(self):
        examples = random_examples(2, bias_dim=6)
        with pytest.raises(ModelError, match="dimension 6"):
            train(make_model(), examples, epochs=1)

    def test_empty_training_set(self):
        with pytest.raises(ModelError, match="empty"):
            train(make_model(), [], epochs=1)

    def test_checkpoint_every_epoch(self, tmp_path, mocker):
        path = str(tmp_path / "generator.hwta")
        spy = mocker.spy(generator_module, "save_checkpoint")
        model = make_model()
        train(model, random_examples(4), epochs=2, batch_size=2, checkpoint_path=path)
        assert spy.call_count == 2
        assert load_checkpoint(path).store.step_count == 4

    @pytest.mark.slow
    def test_memorizes_single_sequence(self):
        """Test 50 copies of one sequence are learnt to a tenth of the initial loss"""
        model = make_model(hidden_layers=1, hidden_size=64, bias_dim=26, bias_hidden=0, lr=3e-3)
        tracing = EncodedTracing.from_codes([0, 0, 4, 4, 8, 8], [3, 3, 5, 5, 7, 7])
        examples = [TrainingExample(tracing, letter_bias("L")) for _ in range(50)]
        initial = evaluate_loss(model, examples)
        report = train(model, examples, epochs=200, batch_size=10)
        assert report.train_loss[-1] < 0.1 * initial
        windows = np.asarray(report.train_loss).reshape(-1, 5).mean(axis=1)
        early = windows[:20]
        assert np.all(early[1:] <= early[:-1] * 1.05)


class TestSample:
    """Tests for sample"""

    def test_invalid_temperature(self):
        with pytest.raises(ConfigError):
            sample(make_model(), bias_of(np.ones(5)), 0.0, SeededRng(1))

    def test_greedy_ignores_rng(self):
        model = make_model()
        first = sample(model, bias_of(np.ones(5)), 1e-7, SeededRng(1))
        second = sample(model, bias_of(np.ones(5)), 1e-7, SeededRng(2))
        assert np.array_equal(first.frames, second.frames)

    def test_fixed_seed_repeats(self):
        model = make_model()
        first = sample(model, bias_of(np.ones(5)), 1.0, SeededRng(5, (30, 0, 0)))
        second = sample(model, bias_of(np.ones(5)), 1.0, SeededRng(5, (30, 0, 0)))
        assert np.array_equal(first.frames, second.frames)

    def test_terminates_at_max_length(self):
        model = make_model(max_gen_len=10)
        model.store["head.b"][EOS] = -1e3
        tracing = sample(model, bias_of(np.ones(5)), 1.0, SeededRng(3))
        assert len(tracing) == 11
        assert tracing.direction_codes[-1] == EOS

    def test_speed_eos_is_redrawn(self):
        model = make_model(max_gen_len=20)
        model.store["head.b"][EOS] = -1e3
        model.store["head.b"][BLOCK + EOS] = 1e3
        tracing = sample(model, bias_of(np.ones(5)), 1.0, SeededRng(3))
        assert np.all(tracing.speed_codes[:-1] < 16)

    def test_provenance_is_copied(self):
        bias = BiasVector("letter", np.ones(5), {"letter": "K", "writer_id": "w003", "sample_id": "w003-K-01"})
        tracing = sample(make_model(), bias, 1.0, SeededRng(3))
        assert (tracing.letter, tracing.writer_id, tracing.sample_id) == ("K", "w003", "w003-K-01")

    def test_first_step_frequencies(self):
        """Test sampled first direction codes follow the model softmax"""
        model = make_model(hidden_size=8)
        bias = bias_of(np.ones(5))
        logits, _ = model.step(bias_project(bias, model).reshape(1, FRAME_DIM), model.initial_state())
        p = softmax(logits[0, :BLOCK])
        rng = SeededRng(6)
        n = 500
        first = np.array([sample(model, bias, 1.0, rng).direction_codes[0] for _ in range(n)])
        freq = np.bincount(first, minlength=BLOCK) / n
        sigma = np.sqrt(p * (1.0 - p) / n)
        assert np.all(np.abs(freq - p) <= 3.0 * sigma + 2.0 / n)

    def test_generated_tracings_are_valid(self):
        model = make_model()
        rng = SeededRng(7)
        for _ in range(30):
            tracing = sample(model, bias_of(rng.normal(size=5)), 1.5, rng)
            assert 1 <= len(tracing) <= 100
            assert np.all(tracing.frames.sum(axis=1) == 2)


class TestCheckpoint:
    """Tests for save_checkpoint and load_checkpoint"""

    def test_round_trip(self, tmp_path):
        model = make_model(dropout=0.2)
        train(model, random_examples(4), epochs=1, batch_size=2)
        path = str(tmp_path / "generator.hwta")
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert loaded.config == model.config
        assert loaded.quantizer == model.quantizer
        assert (loaded.bias_kind, loaded.bias_dim, loaded.corpus_seed) == ("letter", 5, 7)
        assert loaded.store.step_count == model.store.step_count
        for name in model.store.names():
            assert np.array_equal(loaded.store[name], model.store[name])
            assert np.array_equal(loaded.store.entries[name].adam_m, model.store.entries[name].adam_m)
        bias = bias_of(np.ones(5))
        assert np.array_equal(sample(model, bias, 1.0, SeededRng(1)).frames,
                              sample(loaded, bias, 1.0, SeededRng(1)).frames)

    def test_rejects_other_archives(self, tmp_path):
        path = str(tmp_path / "other.hwta")
        write_tensor_archive(path, {"format": "handwriting-style-model"}, {})
        with pytest.raises(FormatError, match="not a generator checkpoint"):
            load_checkpoint(path)

    def test_rejects_other_versions(self, tmp_path):
        path = str(tmp_path / "future.hwta")
        write_tensor_archive(path, {"format": "handwriting-generator", "version": 2}, {})
        with pytest.raises(FormatError, match="version 2"):
            load_checkpoint(path)
