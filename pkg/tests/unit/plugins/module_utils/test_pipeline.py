#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import os

import pytest
import yaml
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    ConfigError,
    DatasetError,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.pipeline import (
    DEFAULT_CONFIG,
    RunConfig,
    build_overrides,
    check_provenance,
    cmd_evaluate,
    cmd_generate,
    cmd_plot,
    cmd_preprocess,
    cmd_synth,
    cmd_train_generator,
    cmd_train_styles,
    load_tracings,
    run_benchmark,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.styles import (
    EmbeddingTable,
    save_table,
)


def tiny_overrides(out, **extra):
    overrides = {
        "out": str(out),
        "seed": 3,
        "corpus": {"alphabet": "AB", "n_writers": 5, "reps_per_writer": 2},
        "split": {"fractions": [0.6, 0.2, 0.2]},
        "generator": {"hidden_layers": 1, "hidden_size": 8, "dropout": 0.0, "epochs": 1, "batch_size": 8,
                      "bias_hidden": 4, "max_gen_len": 30},
        "styles": {
            "classifier": {"conv1_channels": 2, "conv2_channels": 2, "embedding_dim": 4, "epochs": 1, "batch_size": 4},
            "autoencoder": {"hidden": 8, "latent": 4, "epochs": 1, "batch_size": 4},
        },
        "eval": {"samples_per_reference": 2},
    }
    for section, values in extra.items():
        if isinstance(values, dict):
            overrides.setdefault(section, {}).update(values)
        else:
            overrides[section] = values
    return overrides


def tiny_config(out, **extra):
    return RunConfig.load(None, tiny_overrides(out, **extra))


def read(path):
    with open(path, "rb") as f:
        return f.read()


class TestRunConfig:
    """Tests for RunConfig"""

    def test_defaults_are_valid(self):
        config = RunConfig.load()
        assert config.data == DEFAULT_CONFIG
        assert config.seed == 7

    def test_file_then_overrides(self, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text("seed: 11\ngenerator:\n  epochs: 3\n  hidden_size: 16\n")
        config = RunConfig.load(str(path), build_overrides(epochs=5))
        assert config.seed == 11
        assert config.section("generator")["epochs"] == 5
        assert config.section("generator")["hidden_size"] == 16
        assert config.section("generator")["hidden_layers"] == 2

    def test_defaults_not_mutated(self):
        RunConfig.load(None, {"generator": {"epochs": 1}})
        assert DEFAULT_CONFIG["generator"]["epochs"] == 30

    @pytest.mark.parametrize('overrides,where', [
        ({"seed": -1}, "seed"),
        ({"seed": 2 ** 64}, "seed"),
        ({"generator": {"dropout": 1.0}}, "generator/dropout"),
        ({"eval": {"format": "xlsx"}}, "eval/format"),
        ({"corpus": {"alphabet": "ab"}}, "corpus/alphabet"),
        ({"styles": {"classifier": {"batch_size": 1}}}, "styles/classifier/batch_size"),
        ({"colour": "blue"}, "<root>"),
    ])
    def test_invalid_values(self, overrides, where):
        with pytest.raises(ConfigError, match=f"at {where}"):
            RunConfig.load(None, overrides)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigError, match="Cannot read"):
            RunConfig.load(str(tmp_path / "missing.yml"))

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError, match="must be a mapping"):
            RunConfig.load(str(path))

    def test_yaml_round_trip(self):
        config = RunConfig.load(None, {"seed": 99})
        assert yaml.safe_load(config.to_yaml()) == config.data


class TestBuildOverrides:
    """Tests for build_overrides"""

    def test_empty(self):
        assert build_overrides() == {}

    def test_all_options(self):
        assert build_overrides(seed=1, out="o", temperature=0.5, epochs=2, fmt="csv", published=True,
                               source="c.jsonl", external_table="t.txt") == {
            "seed": 1,
            "out": "o",
            "generator": {"temperature": 0.5, "epochs": 2},
            "eval": {"format": "csv", "published": True},
            "corpus": {"source": "c.jsonl"},
            "styles": {"external_table": "t.txt"},
        }

    def test_false_is_kept(self):
        assert build_overrides(published=False, seed=0) == {"seed": 0, "eval": {"published": False}}


class TestStages:
    """Tests for the benchmark commands, stage by stage"""

    def test_synth(self, tmp_path):
        summary = cmd_synth(tiny_config(tmp_path))
        assert summary["samples"] == 20 and summary["writers"] == 5
        corpus_dir = tmp_path / "corpus"
        assert sorted(os.listdir(corpus_dir)) == ["corpus.jsonl", "manifest.yml", "provenance.yml"]
        provenance = yaml.safe_load((corpus_dir / "provenance.yml").read_text())
        assert provenance["command"] == "synth"
        assert provenance["config"]["seed"] == 3
        assert not [name for name in os.listdir(tmp_path) if name.startswith(".staging-")]

    def test_synth_is_byte_identical(self, tmp_path):
        cmd_synth(tiny_config(tmp_path / "one"))
        cmd_synth(tiny_config(tmp_path / "two"))
        assert read(tmp_path / "one" / "corpus" / "corpus.jsonl") == read(tmp_path / "two" / "corpus" / "corpus.jsonl")

    def test_import_source(self, tmp_path):
        source = tmp_path / "external.jsonl"
        source.write_text(
            '{"writer_id": "w1", "letter": "A", "points": [[0, 0, 0], [1, 1, 0.01]]}\n'
            '{"writer_id": "w1", "letter": "Q", "points": [[0, 0, 0], [1, 1, 0.01]]}\n'
        )
        config = tiny_config(tmp_path / "out", corpus={"source": str(source)})
        assert cmd_synth(config)["samples"] == 1
        manifest = yaml.safe_load((tmp_path / "out" / "corpus" / "manifest.yml").read_text())
        assert manifest["load_report"]["rejected"][0]["line"] == 2

    def test_import_without_usable_samples(self, tmp_path):
        source = tmp_path / "external.jsonl"
        source.write_text("{broken\n")
        with pytest.raises(DatasetError, match="No usable samples"):
            cmd_synth(tiny_config(tmp_path / "out", corpus={"source": str(source)}))
        assert not (tmp_path / "out" / "corpus").exists()

    def test_preprocess_requires_corpus(self, tmp_path):
        with pytest.raises(ConfigError, match="run synth first"):
            cmd_preprocess(tiny_config(tmp_path))

    def test_preprocess(self, tmp_path):
        config = tiny_config(tmp_path)
        cmd_synth(config)
        summary = cmd_preprocess(config)
        assert summary["split"] == {"train": 12, "validation": 4, "test": 4}
        assert sorted(os.listdir(tmp_path / "preprocess")) == [
            "clean_report.yml", "encoded.jsonl", "provenance.yml", "quantizer.txt", "rasters.hwta"]
        provenance = yaml.safe_load((tmp_path / "preprocess" / "provenance.yml").read_text())
        assert list(provenance["inputs"]) == [os.path.join("corpus", "corpus.jsonl")]

    def test_seed_mismatch_is_refused(self, tmp_path):
        cmd_synth(tiny_config(tmp_path))
        with pytest.raises(ConfigError, match="seed 3"):
            cmd_preprocess(tiny_config(tmp_path, seed=4))

    def test_version_mismatch_is_refused(self, tmp_path):
        config = tiny_config(tmp_path)
        cmd_synth(config)
        path = tmp_path / "corpus" / "provenance.yml"
        provenance = yaml.safe_load(path.read_text())
        provenance["collection_version"] = "0.9.0"
        path.write_text(yaml.safe_dump(provenance))
        with pytest.raises(ConfigError, match="version 0.9.0"):
            check_provenance(str(tmp_path / "corpus"), config)

    def test_missing_provenance_warns(self, tmp_path, caplog):
        check_provenance(str(tmp_path), tiny_config(tmp_path))
        assert "no provenance record" in caplog.text

    def test_unknown_bias(self, tmp_path):
        with pytest.raises(ConfigError, match="Unknown bias 'slant'"):
            cmd_train_styles(tiny_config(tmp_path), "slant")


@pytest.fixture
def trained_letter_run(tmp_path):
    config = tiny_config(tmp_path)
    cmd_synth(config)
    cmd_preprocess(config)
    cmd_train_styles(config, "letter")
    cmd_train_generator(config, "letter")
    return config


class TestLetterRun:
    """Tests for a full run with letter biases"""

    def test_style_table(self, trained_letter_run, tmp_path):
        report = yaml.safe_load((tmp_path / "styles" / "letter" / "style_report.yml").read_text())
        assert report == {"bias": "letter", "kind": "letter", "dimension": 26, "entries": 26}

    def test_train_report(self, trained_letter_run, tmp_path):
        report = yaml.safe_load((tmp_path / "generator" / "letter" / "train_report.yml").read_text())
        assert [e["epoch"] for e in report["epochs"]] == [1]
        assert (tmp_path / "generator" / "letter" / "checkpoint.hwta").exists()

    def test_generate_test_split(self, trained_letter_run, tmp_path):
        summary = cmd_generate(trained_letter_run, "letter")
        assert summary["tracings"] == 8
        tracings = load_tracings(str(tmp_path / "generated" / "letter" / "tracings.jsonl"))
        assert [t.extra["repeat"] for t in tracings] == [0, 1] * 4
        assert all(t.extra["stream"][0] == 30 for t in tracings)
        assert all(len(t) <= 31 for t in tracings)

    @pytest.mark.parametrize('temperature', [1e-7, 1.0])
    def test_generate_is_byte_identical(self, trained_letter_run, tmp_path, temperature):
        config = tiny_config(tmp_path, generator={"temperature": temperature})
        path = tmp_path / "generated" / "letter" / "tracings.jsonl"
        cmd_generate(config, "letter")
        first = read(path)
        cmd_generate(config, "letter")
        assert read(path) == first

    def test_generate_by_key(self, trained_letter_run, tmp_path):
        summary = cmd_generate(trained_letter_run, "letter", keys=["B", "Z"], count=3)
        assert summary["tracings"] == 6
        tracings = load_tracings(str(tmp_path / "generated" / "letter" / "tracings.jsonl"))
        assert [t.letter for t in tracings] == ["B"] * 3 + ["Z"] * 3

    def test_generate_unknown_key(self, trained_letter_run):
        with pytest.raises(DatasetError, match="'B/w000'"):
            cmd_generate(trained_letter_run, "letter", keys=["B/w000"])

    def test_generate_before_training(self, trained_letter_run):
        with pytest.raises(ConfigError, match="train_generator for 'classifier'"):
            cmd_generate(trained_letter_run, "classifier")

    def test_evaluate(self, trained_letter_run, tmp_path):
        cmd_generate(trained_letter_run, "letter")
        result, summary = cmd_evaluate(trained_letter_run, "letter")
        assert result.model == "letter"
        assert result.eos.n_pairs == 8
        for modality in ("direction", "speed"):
            assert all(0.0 <= b <= 100.0 for b in summary["bleu"][modality])
        report = (tmp_path / "reports" / "letter" / "report.text").read_text()
        assert report.splitlines()[0].startswith("model")
        assert summary["path"].endswith("report.text")

    def test_evaluate_csv_and_per_pair(self, trained_letter_run, tmp_path):
        cmd_generate(trained_letter_run, "letter")
        config = tiny_config(tmp_path, eval={"format": "csv", "per_pair": True, "published": True})
        cmd_evaluate(config, "letter")
        report_dir = tmp_path / "reports" / "letter"
        assert "published:letter" in (report_dir / "report.csv").read_text()
        assert (report_dir / "per_pair.jsonl").exists()

    def test_plot(self, trained_letter_run, tmp_path):
        summary = cmd_generate(trained_letter_run, "letter")
        plot = cmd_plot(trained_letter_run, "letter")
        assert plot["plots"] + plot["skipped"] == summary["tracings"]
        files = os.listdir(tmp_path / "plots" / "letter")
        assert len([f for f in files if f.endswith(".svg") and f != "alphabet.svg"]) == plot["plots"]
        assert "provenance.yml" in files

    def test_plot_explicit_file(self, trained_letter_run, tmp_path):
        cmd_generate(trained_letter_run, "letter", keys=["A"], count=1)
        source = tmp_path / "mine.jsonl"
        source.write_bytes(read(tmp_path / "generated" / "letter" / "tracings.jsonl"))
        summary = cmd_plot(trained_letter_run, tracings=str(source))
        assert summary["path"] == os.path.join(str(tmp_path), "plots", "mine")


class TestExternalBias:
    """Tests for tables supplied by an outside tool"""

    def test_missing_table_option(self, tmp_path):
        with pytest.raises(ConfigError, match="external_table"):
            cmd_train_styles(tiny_config(tmp_path), "external")

    def test_wrong_kind(self, tmp_path):
        path = str(tmp_path / "table.txt")
        save_table(EmbeddingTable("letter", 1, {"A": [1.0]}), path)
        config = tiny_config(tmp_path / "out", styles={"external_table": path})
        with pytest.raises(ConfigError, match="expected 'external'"):
            cmd_train_styles(config, "external")

    def test_copied_into_run(self, tmp_path):
        path = str(tmp_path / "table.txt")
        save_table(EmbeddingTable("external", 2, {"A": [1.0, 0.0], "B": [0.0, 1.0]}), path)
        config = tiny_config(tmp_path / "out", styles={"external_table": path})
        summary = cmd_train_styles(config, "external")
        assert (summary["kind"], summary["dimension"], summary["entries"]) == ("external", 2, 2)
        assert (tmp_path / "out" / "styles" / "external" / "table.txt").exists()


@pytest.mark.slow
class TestBenchmark:
    """Tests for run_benchmark"""

    def test_all_bias_kinds(self, tmp_path):
        config = tiny_config(tmp_path, eval={"format": "csv"})
        biases = ["letter", "letter_writer", "classifier", "autoencoder"]
        results, summary = run_benchmark(config, biases)
        assert [r.model for r in results] == biases
        report = (tmp_path / "reports" / "benchmark" / "report.csv").read_text().splitlines()
        assert len(report) == 1 + 2 * len(biases)
        style = yaml.safe_load((tmp_path / "styles" / "classifier" / "style_report.yml").read_text())
        assert 0.0 <= style["accuracy"] <= 1.0
        assert set(summary["stages"]) == {"synth", "preprocess"} | set(biases)

    def test_rerun_gives_identical_reports(self, tmp_path):
        """Test two runs of one configuration write the same report and tracing bytes"""
        biases = ["letter", "letter_writer", "classifier", "autoencoder"]
        for run in ("first", "second"):
            run_benchmark(tiny_config(tmp_path / run, eval={"format": "csv", "per_pair": True}), biases)
        for name in biases + ["benchmark"]:
            assert read(tmp_path / "first" / "reports" / name / "report.csv") == \
                read(tmp_path / "second" / "reports" / name / "report.csv")
        for name in biases:
            assert read(tmp_path / "first" / "generated" / name / "tracings.jsonl") == \
                read(tmp_path / "second" / "generated" / name / "tracings.jsonl")
            assert read(tmp_path / "first" / "reports" / name / "per_pair.jsonl") == \
                read(tmp_path / "second" / "reports" / name / "per_pair.jsonl")


@pytest.mark.slow
class TestBiasOrdering:
    """Letter+writer conditioning against letter-only and autoencoder conditioning at default scale"""

    SEEDS = (1, 2, 3, 4, 5)

    @pytest.fixture(scope="class")
    def seeded_results(self, tmp_path_factory):
        results = {}
        for seed in self.SEEDS:
            out = tmp_path_factory.mktemp(f"seed{seed}")
            config = RunConfig.load(None, {"seed": seed, "out": str(out)})
            scored, _ = run_benchmark(config, ["letter", "letter_writer", "autoencoder"])
            results[seed] = {r.model: r for r in scored}
        return results

    @staticmethod
    def direction_b3(result):
        return result.bleu.modalities["direction"].bleu[2]

    def test_default_scale(self):
        corpus = DEFAULT_CONFIG["corpus"]
        generator = DEFAULT_CONFIG["generator"]
        assert (len(corpus["alphabet"]), corpus["n_writers"], corpus["reps_per_writer"]) == (10, 20, 5)
        assert (generator["hidden_layers"], generator["hidden_size"], generator["epochs"]) == (2, 128, 30)

    def test_letter_writer_direction_bleu_at_least_letter(self, seeded_results):
        wins = sum(
            self.direction_b3(runs["letter_writer"]) >= self.direction_b3(runs["letter"])
            for runs in seeded_results.values()
        )
        assert wins >= 4

    def test_letter_writer_length_correlation_above_letter(self, seeded_results):
        wins = 0
        for runs in seeded_results.values():
            with_writer, letter_only = runs["letter_writer"].eos.pearson_r, runs["letter"].eos.pearson_r
            if with_writer is not None and (letter_only is None or with_writer > letter_only):
                wins += 1
        assert wins >= 4

    def test_autoencoder_direction_bleu_at_most_letter_writer(self, seeded_results):
        wins = sum(
            self.direction_b3(runs["autoencoder"]) <= self.direction_b3(runs["letter_writer"])
            for runs in seeded_results.values()
        )
        assert wins >= 4
