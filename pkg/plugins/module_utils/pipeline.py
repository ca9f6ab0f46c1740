# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)

"""
Benchmark commands and their run configuration.

Every command reads the outputs of the previous stage from the run's output
directory, writes its own directory through a staging area and records a
provenance.yml (resolved config, collection version, input digests) next to
its outputs.

    out/
      corpus/            corpus.jsonl, manifest.yml
      preprocess/        encoded.jsonl, rasters.hwta, quantizer.txt, clean_report.yml
      styles/<bias>/     table.txt, model.hwta (image biases), style_report.yml
      generator/<bias>/  checkpoint.hwta, train_report.yml
      generated/<bias>/  tracings.jsonl
      reports/<bias>/    report.<format>
      plots/<bias>/      one SVG per tracing, alphabet.svg
"""

from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import copy
import dataclasses
import datetime
import json
import os
from dataclasses import dataclass

import jsonschema
import numpy as np
import yaml

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.codec import (
    DEFAULT_DT,
    EncodedTracing,
    QuantizerSpec,
    decode_tracing,
    displacements,
    encode_tracing,
    fit_speed_quantizer,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.dataset import (
    clean,
    load_jsonl,
    rasterize,
    save_jsonl,
    split,
    synth_corpus,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.evaluation import (
    BREVITY_MODES,
    REPORT_FORMATS,
    ModelResult,
    PairedCorpus,
    bleu_report,
    eos_analysis,
    render_report,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.generator import (
    GeneratorConfig,
    GeneratorModel,
    TrainingExample,
    load_checkpoint,
    sample,
    save_checkpoint,
    train,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    COLLECTION_VERSION,
    ConfigError,
    DatasetError,
    EvaluationError,
    ModelError,
    SeededRng,
    TrajectoryError,
    file_digest,
    get_logger,
    merge_dict,
    read_tensor_archive,
    staged_output,
    write_tensor_archive,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.plotting import (
    render_contact_sheet,
    render_letter_svg,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.styles import (
    AutoencoderConfig,
    ClassifierConfig,
    canonical_kind,
    confusion_matrix,
    is_diagonally_dominant,
    load_table,
    save_style_model,
    save_table,
    build_embedding_table,
    train_autoencoder,
    train_classifier,
)


BIAS_CHOICES = ("letter", "letter_writer", "classifier", "autoencoder", "external")

DEFAULT_CONFIG = {
    "seed": 7,
    "out": "out",
    "corpus": {
        "alphabet": "ABCDEFGHIJ",
        "n_writers": 20,
        "reps_per_writer": 5,
        "source": None,
    },
    "clean": {"max_steps": 99, "max_duration": 1.0},
    "split": {"fractions": [0.8, 0.1, 0.1], "stratify_by": "letter"},
    "codec": {"direction_levels": 16},
    "generator": {
        "hidden_layers": 2,
        "hidden_size": 128,
        "dropout": 0.3,
        "lr": 1e-3,
        "epochs": 30,
        "batch_size": 32,
        "temperature": 1.0,
        "bias_hidden": 64,
        "max_gen_len": 99,
    },
    "styles": {
        "classifier": {
            "conv1_channels": 16,
            "conv2_channels": 32,
            "embedding_dim": 64,
            "epochs": 8,
            "batch_size": 32,
            "lr": 1e-3,
        },
        "autoencoder": {"hidden": 256, "latent": 34, "epochs": 20, "batch_size": 32, "lr": 1e-3},
        "external_table": None,
    },
    "eval": {
        "brevity": "standard",
        "format": "text",
        "published": False,
        "per_pair": False,
        "samples_per_reference": 1,
    },
    "plot": {"dt": DEFAULT_DT, "size": 200, "timestamp": False},
}

_POSITIVE_INT = {"type": "integer", "minimum": 1}
_NON_NEGATIVE_INT = {"type": "integer", "minimum": 0}
_POSITIVE_NUMBER = {"type": "number", "exclusiveMinimum": 0}

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed", "out", "corpus", "clean", "split", "codec", "generator", "styles", "eval", "plot"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
        "out": {"type": "string", "minLength": 1},
        "corpus": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alphabet": {"type": "string", "pattern": "^[A-Z]+$"},
                "n_writers": _POSITIVE_INT,
                "reps_per_writer": _POSITIVE_INT,
                "source": {"type": ["string", "null"]},
            },
        },
        "clean": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"max_steps": {"type": "integer", "minimum": 1, "maximum": 99}, "max_duration": _POSITIVE_NUMBER},
        },
        "split": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fractions": {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number", "minimum": 0}},
                "stratify_by": {"enum": ["letter", "writer"]},
            },
        },
        "codec": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"direction_levels": {"const": 16}},
        },
        "generator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "hidden_layers": _POSITIVE_INT,
                "hidden_size": _POSITIVE_INT,
                "dropout": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "lr": {"type": "number", "minimum": 0},
                "epochs": _NON_NEGATIVE_INT,
                "batch_size": _POSITIVE_INT,
                "temperature": _POSITIVE_NUMBER,
                "bias_hidden": _NON_NEGATIVE_INT,
                "max_gen_len": {"type": "integer", "minimum": 1, "maximum": 99},
            },
        },
        "styles": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "classifier": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "conv1_channels": _POSITIVE_INT,
                        "conv2_channels": _POSITIVE_INT,
                        "embedding_dim": _POSITIVE_INT,
                        "epochs": _NON_NEGATIVE_INT,
                        "batch_size": {"type": "integer", "minimum": 2},
                        "lr": {"type": "number", "minimum": 0},
                    },
                },
                "autoencoder": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "hidden": _POSITIVE_INT,
                        "latent": _POSITIVE_INT,
                        "epochs": _NON_NEGATIVE_INT,
                        "batch_size": _POSITIVE_INT,
                        "lr": {"type": "number", "minimum": 0},
                    },
                },
                "external_table": {"type": ["string", "null"]},
            },
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "brevity": {"enum": list(BREVITY_MODES)},
                "format": {"enum": list(REPORT_FORMATS)},
                "published": {"type": "boolean"},
                "per_pair": {"type": "boolean"},
                "samples_per_reference": _POSITIVE_INT,
            },
        },
        "plot": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dt": _POSITIVE_NUMBER, "size": _POSITIVE_INT, "timestamp": {"type": "boolean"}},
        },
    },
}

log = get_logger(__name__)


class RunConfig:
    """
    Resolved run configuration: defaults, then the YAML document, then overrides.

    Raises:
        ConfigError: If the merged document violates RUN_CONFIG_SCHEMA
    """

    def __init__(self, data):
        error = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(RUN_CONFIG_SCHEMA).iter_errors(data))
        if error is not None:
            where = "/".join(str(p) for p in error.absolute_path) or "<root>"
            raise ConfigError(f"Invalid run configuration at {where}: {error.message}")
        self.data = data

    @classmethod
    def load(cls, path=None, overrides=None):
        data = copy.deepcopy(DEFAULT_CONFIG)
        if path:
            try:
                with open(path, "r", encoding="utf-8") as f:
                    document = yaml.safe_load(f) or {}
            except (OSError, yaml.YAMLError) as e:
                raise ConfigError(f"Cannot read run configuration {path}: {e}")
            if not isinstance(document, dict):
                raise ConfigError(f"Run configuration {path} must be a mapping")
            merge_dict(document, data)
        if overrides:
            merge_dict(overrides, data)
        return cls(data)

    @property
    def seed(self):
        return self.data["seed"]

    @property
    def out(self):
        return self.data["out"]

    def section(self, name):
        return self.data[name]

    def to_yaml(self):
        return yaml.safe_dump(self.data, sort_keys=True, default_flow_style=False)


def build_overrides(seed=None, out=None, temperature=None, epochs=None, fmt=None, published=None,
                    source=None, external_table=None):
    """Turn module options into a config overlay; unset options are left out."""
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if out is not None:
        overrides["out"] = out
    if temperature is not None:
        overrides.setdefault("generator", {})["temperature"] = temperature
    if epochs is not None:
        overrides.setdefault("generator", {})["epochs"] = epochs
    if fmt is not None:
        overrides.setdefault("eval", {})["format"] = fmt
    if published is not None:
        overrides.setdefault("eval", {})["published"] = published
    if source is not None:
        overrides.setdefault("corpus", {})["source"] = source
    if external_table is not None:
        overrides.setdefault("styles", {})["external_table"] = external_table
    return overrides


@dataclass(frozen=True)
class Layout:
    out: str

    @property
    def corpus(self):
        return os.path.join(self.out, "corpus")

    @property
    def preprocess(self):
        return os.path.join(self.out, "preprocess")

    def styles(self, bias):
        return os.path.join(self.out, "styles", bias)

    def generator(self, bias):
        return os.path.join(self.out, "generator", bias)

    def generated(self, bias):
        return os.path.join(self.out, "generated", bias)

    def reports(self, bias):
        return os.path.join(self.out, "reports", bias)

    def plots(self, name):
        return os.path.join(self.out, "plots", name)


def _write_yaml(path, data):
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=True, default_flow_style=False)


def _read_yaml(path):
    with open(path, "r", encoding="utf-8") as f:
        return yaml.safe_load(f)


def write_provenance(directory, config, command, inputs=(), extra=None):
    """Record what produced the files in `directory`."""
    data = {
        "collection_version": COLLECTION_VERSION,
        "command": command,
        "config": config.data,
        "inputs": {os.path.relpath(path, config.out): file_digest(path) for path in inputs},
    }
    if extra:
        data.update(extra)
    _write_yaml(os.path.join(directory, "provenance.yml"), data)


def _require(path, producer):
    if not os.path.exists(path):
        raise ConfigError(f"{path} does not exist; run {producer} first")
    return path


def check_provenance(directory, config):
    """
    Refuse inputs produced by another major version or another seed.

    Raises:
        ConfigError: On a version or seed mismatch
    """
    path = os.path.join(directory, "provenance.yml")
    if not os.path.exists(path):
        log.warning("%s has no provenance record", directory)
        return
    provenance = _read_yaml(path) or {}
    version = str(provenance.get("collection_version", ""))
    if version.split(".")[0] != COLLECTION_VERSION.split(".")[0]:
        raise ConfigError(f"{directory} was produced by version {version}, this is {COLLECTION_VERSION}")
    seed = (provenance.get("config") or {}).get("seed")
    if seed != config.seed:
        raise ConfigError(f"{directory} was produced with seed {seed}, the run configuration has seed {config.seed}")


def _check_bias(bias):
    if bias not in BIAS_CHOICES:
        raise ConfigError(f"Unknown bias '{bias}', expected one of {', '.join(BIAS_CHOICES)}")
    return bias


def cmd_synth(config):
    """
    Write the corpus: synthesized from the corpus section, or imported from corpus.source.

    Returns:
        dict: Summary
    """
    layout = Layout(config.out)
    corpus_cfg = config.section("corpus")
    inputs = []
    load_report = None
    if corpus_cfg.get("source"):
        source = _require(corpus_cfg["source"], "an external converter")
        samples, report = load_jsonl(source, alphabet=corpus_cfg["alphabet"])
        if not samples:
            raise DatasetError(f"No usable samples in {source}")
        load_report = report.to_dict()
        inputs.append(source)
    else:
        samples = synth_corpus(corpus_cfg["alphabet"], corpus_cfg["n_writers"], corpus_cfg["reps_per_writer"], config.seed)

    manifest = {
        "samples": len(samples),
        "letters": sorted({s.letter for s in samples}),
        "writers": sorted({s.writer_id for s in samples}),
        "source": corpus_cfg.get("source") or "synthetic",
        "seed": config.seed,
    }
    if load_report is not None:
        manifest["load_report"] = load_report
    with staged_output(layout.corpus) as stage:
        save_jsonl(samples, os.path.join(stage, "corpus.jsonl"))
        _write_yaml(os.path.join(stage, "manifest.yml"), manifest)
        write_provenance(stage, config, "synth", inputs)
    log.info("corpus of %d samples from %d writers written to %s", len(samples), len(manifest["writers"]), layout.corpus)
    return {"samples": len(samples), "writers": len(manifest["writers"]), "path": layout.corpus}


@dataclass
class PreparedSample:
    """An encoded corpus sample with its split tag and raster."""
    tracing: EncodedTracing
    split_tag: str
    raster: np.ndarray = None

    @property
    def sample_id(self):
        return self.tracing.sample_id

    @property
    def letter(self):
        return self.tracing.letter

    @property
    def writer_id(self):
        return self.tracing.writer_id


def cmd_preprocess(config):
    """
    Clean, rasterize and split the corpus, fit the speed quantizer on the
    training split and encode every sample.

    Returns:
        dict: Summary
    """
    layout = Layout(config.out)
    corpus_path = _require(os.path.join(layout.corpus, "corpus.jsonl"), "synth")
    check_provenance(layout.corpus, config)
    samples, load_report = load_jsonl(corpus_path)
    clean_cfg = config.section("clean")
    kept, clean_report = clean(samples, clean_cfg["max_steps"], clean_cfg["max_duration"])
    kept = [dataclasses.replace(s, raster=rasterize(s.trajectory)) for s in kept]
    split_cfg = config.section("split")
    tagged = split(kept, split_cfg["fractions"], config.seed, split_cfg["stratify_by"])

    train_speeds = np.concatenate([displacements(s.trajectory)[:, 1] for s in tagged if s.split_tag == "train"])
    spec = fit_speed_quantizer(train_speeds)
    counts = {tag: sum(1 for s in tagged if s.split_tag == tag) for tag in ("train", "validation", "test")}

    with staged_output(layout.preprocess) as stage:
        with open(os.path.join(stage, "encoded.jsonl"), "w", encoding="utf-8") as f:
            for s in tagged:
                encoded = encode_tracing(s.trajectory, spec)
                record = {
                    "sample_id": s.sample_id,
                    "letter": s.letter,
                    "writer_id": s.writer_id,
                    "split": s.split_tag,
                    "direction": encoded.direction_codes[:-1].tolist(),
                    "speed": encoded.speed_codes[:-1].tolist(),
                }
                f.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
        write_tensor_archive(
            os.path.join(stage, "rasters.hwta"),
            {"format": "handwriting-rasters", "count": len(tagged)},
            {s.sample_id: s.raster for s in tagged},
        )
        with open(os.path.join(stage, "quantizer.txt"), "w", encoding="utf-8") as f:
            f.write(spec.to_record())
        _write_yaml(os.path.join(stage, "clean_report.yml"), {
            "load": load_report.to_dict(),
            "clean": clean_report.to_dict(),
            "split": counts,
        })
        write_provenance(stage, config, "preprocess", [corpus_path])
    log.info("encoded %d samples (%s)", len(tagged), ", ".join(f"{k} {v}" for k, v in counts.items()))
    return {"samples": len(tagged), "dropped": clean_report.dropped, "split": counts, "path": layout.preprocess}


def load_quantizer(layout):
    path = _require(os.path.join(layout.preprocess, "quantizer.txt"), "preprocess")
    with open(path, "r", encoding="utf-8") as f:
        return QuantizerSpec.from_record(f.read())


def load_prepared(layout, config):
    """
    Returns:
        list: PreparedSample items in corpus order
    """
    encoded_path = _require(os.path.join(layout.preprocess, "encoded.jsonl"), "preprocess")
    check_provenance(layout.preprocess, config)
    _, rasters = read_tensor_archive(os.path.join(layout.preprocess, "rasters.hwta"))
    prepared = []
    with open(encoded_path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            record = json.loads(line)
            tracing = EncodedTracing.from_codes(
                record["direction"], record["speed"],
                sample_id=record["sample_id"], letter=record["letter"], writer_id=record["writer_id"],
            )
            prepared.append(PreparedSample(tracing, record["split"], rasters.get(record["sample_id"])))
    return prepared


def _subset(prepared, tag):
    return [s for s in prepared if s.split_tag == tag]


def cmd_train_styles(config, bias):
    """
    Build the bias table of one kind, training the image model it needs.

    The classifier is scored on the test split; its accuracy and confusion
    matrix go to style_report.yml.

    Returns:
        dict: Summary
    """
    bias = _check_bias(bias)
    layout = Layout(config.out)
    styles_cfg = config.section("styles")
    inputs = []
    report = {"bias": bias}
    models = {}
    prepared = []
    if bias != "external":
        prepared = load_prepared(layout, config)
        inputs += [os.path.join(layout.preprocess, "encoded.jsonl"), os.path.join(layout.preprocess, "rasters.hwta")]

    with staged_output(layout.styles(bias)) as stage:
        if bias == "classifier":
            cfg = ClassifierConfig(**styles_cfg["classifier"], seed=config.seed)
            train_set = _subset(prepared, "train")
            test_set = _subset(prepared, "test")
            model, accuracy = train_classifier(
                [s.raster for s in train_set], [s.letter for s in train_set], cfg,
                held_out=([s.raster for s in test_set], [s.letter for s in test_set]),
            )
            letters, matrix = confusion_matrix(model, [s.raster for s in test_set], [s.letter for s in test_set])
            report.update({
                "accuracy": accuracy,
                "confusion": {"letters": letters, "matrix": matrix.tolist()},
                "diagonally_dominant": is_diagonally_dominant(matrix),
            })
            save_style_model(model, os.path.join(stage, "model.hwta"))
            models["classifier"] = model
        elif bias == "autoencoder":
            cfg = AutoencoderConfig(**styles_cfg["autoencoder"], seed=config.seed)
            model = train_autoencoder([s.raster for s in _subset(prepared, "train")], cfg)
            save_style_model(model, os.path.join(stage, "model.hwta"))
            models["autoencoder"] = model

        if bias == "external":
            source = styles_cfg.get("external_table")
            if not source:
                raise ConfigError("styles.external_table must name a table file for the external bias")
            table = load_table(_require(source, "an external embedding tool"))
            if table.kind != "external":
                raise ConfigError(f"{source} holds a '{table.kind}' table, expected 'external'")
            inputs.append(source)
        else:
            table = build_embedding_table(canonical_kind(bias), prepared, models, seed=config.seed)

        save_table(table, os.path.join(stage, "table.txt"))
        report.update({"kind": table.kind, "dimension": table.dimension, "entries": len(table)})
        _write_yaml(os.path.join(stage, "style_report.yml"), report)
        write_provenance(stage, config, "train_styles", inputs,
                         {"accuracy": report["accuracy"]} if "accuracy" in report else None)
    log.info("%s table with %d entries of dimension %d", table.kind, len(table), table.dimension)
    return dict(report, path=layout.styles(bias))


def _load_bias_table(layout, config, bias):
    check_provenance(layout.styles(bias), config)
    return load_table(_require(os.path.join(layout.styles(bias), "table.txt"), f"train_styles for '{bias}'"))


def _generator_config(config):
    section = dict(config.section("generator"))
    section.pop("epochs", None)
    return GeneratorConfig(seed=config.seed, **section)


def cmd_train_generator(config, bias):
    """
    Train the generator on the training split, validating on the validation split.

    Returns:
        dict: Summary with the per-epoch losses
    """
    bias = _check_bias(bias)
    layout = Layout(config.out)
    prepared = load_prepared(layout, config)
    table = _load_bias_table(layout, config, bias)
    quantizer = load_quantizer(layout)
    train_set = [TrainingExample(s.tracing, table.bias_for(s)) for s in _subset(prepared, "train")]
    validation_set = [TrainingExample(s.tracing, table.bias_for(s)) for s in _subset(prepared, "validation")]
    model = GeneratorModel(_generator_config(config), table.kind, table.dimension, quantizer, corpus_seed=config.seed)
    epochs = config.section("generator")["epochs"]

    with staged_output(layout.generator(bias)) as stage:
        checkpoint = os.path.join(stage, "checkpoint.hwta")
        report = train(model, train_set, epochs, model.config.batch_size, validation_set, checkpoint_path=checkpoint)
        save_checkpoint(model, checkpoint)
        _write_yaml(os.path.join(stage, "train_report.yml"), report.to_dict())
        write_provenance(
            stage, config, "train_generator",
            [os.path.join(layout.preprocess, "encoded.jsonl"), os.path.join(layout.styles(bias), "table.txt")],
        )
    return {
        "bias": bias,
        "epochs": report.epochs,
        "train_loss": report.train_loss,
        "validation_loss": report.validation_loss,
        "path": layout.generator(bias),
    }


def _targets_from_keys(table, keys, prepared):
    by_id = {s.sample_id: s for s in prepared}
    targets = []
    for key in keys:
        if key not in table.entries:
            raise DatasetError(f"Bias key '{key}' is not in the '{table.kind}' table")
        if key in by_id:
            s = by_id[key]
            targets.append((key, s.letter, s.writer_id, s.sample_id))
        else:
            letter, _, writer = key.partition("/")
            targets.append((key, letter, writer, ""))
    return targets


def cmd_generate(config, bias, keys=None, count=None):
    """
    Sample tracings from a trained generator.

    Without `keys` every test-split sample is used as a reference and biased
    with its own table entry; otherwise the given table keys are sampled.
    Each target gets `count` tracings (eval.samples_per_reference by default),
    each from its own seeded stream.

    Returns:
        dict: Summary
    """
    bias = _check_bias(bias)
    layout = Layout(config.out)
    checkpoint_path = _require(os.path.join(layout.generator(bias), "checkpoint.hwta"), f"train_generator for '{bias}'")
    check_provenance(layout.generator(bias), config)
    model = load_checkpoint(checkpoint_path)
    if model.corpus_seed != config.seed:
        raise ConfigError(f"Checkpoint was trained on corpus seed {model.corpus_seed}, the run configuration has seed {config.seed}")
    table = _load_bias_table(layout, config, bias)
    if table.kind != model.bias_kind or table.dimension != model.bias_dim:
        raise ModelError(
            f"Checkpoint expects '{model.bias_kind}' biases of dimension {model.bias_dim}, "
            f"table holds '{table.kind}' of dimension {table.dimension}"
        )
    temperature = config.section("generator")["temperature"]
    count = count or config.section("eval")["samples_per_reference"]
    prepared = load_prepared(layout, config) if (not keys or table.kind != "letter") else []

    if keys:
        targets = _targets_from_keys(table, keys, prepared)
        lookups = [table.bias_by_key(key, letter, writer, sample_id) for key, letter, writer, sample_id in targets]
    else:
        test_set = _subset(prepared, "test")
        if not test_set:
            raise DatasetError("The test split is empty")
        lookups = [table.bias_for(s) for s in test_set]

    records = []
    for i, bias_vector in enumerate(lookups):
        for j in range(count):
            rng = SeededRng(config.seed, stream=(30, i, j))
            tracing = sample(model, bias_vector, temperature, rng)
            records.append({
                "key": bias_vector.provenance.get("key", ""),
                "sample_id": bias_vector.provenance.get("sample_id", ""),
                "letter": bias_vector.provenance.get("letter", ""),
                "writer_id": bias_vector.provenance.get("writer_id", ""),
                "repeat": j,
                "seed": config.seed,
                "stream": [30, i, j],
                "temperature": temperature,
                "direction": tracing.direction_codes[:-1].tolist(),
                "speed": tracing.speed_codes[:-1].tolist(),
            })

    with staged_output(layout.generated(bias)) as stage:
        save_tracings(records, os.path.join(stage, "tracings.jsonl"))
        write_provenance(stage, config, "generate", [checkpoint_path, os.path.join(layout.styles(bias), "table.txt")])
    empty = sum(1 for r in records if not r["direction"])
    log.info("generated %d tracings for '%s' at temperature %g (%d EOS-only)", len(records), bias, temperature, empty)
    return {"bias": bias, "tracings": len(records), "empty": empty, "path": layout.generated(bias)}


def save_tracings(records, path):
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")


def load_tracings(path):
    """
    Returns:
        list: EncodedTracing items carrying their record in `extra`
    """
    tracings = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            record = json.loads(line)
            tracings.append(EncodedTracing.from_codes(
                record["direction"], record["speed"],
                sample_id=record.get("sample_id", ""),
                letter=record.get("letter", ""),
                writer_id=record.get("writer_id", ""),
                extra={k: v for k, v in record.items() if k not in ("direction", "speed")},
            ))
    return tracings


def evaluate_tracings(bias, generated, references, brevity="standard", per_pair=False):
    """
    Score generated tracings against the references with the same sample id.

    Returns:
        ModelResult

    Raises:
        EvaluationError: If no generated tracing has a reference
    """
    by_id = {r.sample_id: r for r in references}
    paired = [(g, by_id[g.sample_id]) for g in generated if g.sample_id in by_id]
    if len(paired) < len(generated):
        log.warning("%d generated tracings have no reference and are not scored", len(generated) - len(paired))
    if not paired:
        raise EvaluationError("No generated tracing has a reference sample")
    gens, refs = zip(*paired)
    corpus = PairedCorpus.from_tracings(list(gens), list(refs))
    report = bleu_report(corpus, mode=brevity, per_pair=per_pair)
    eos = eos_analysis([g.content_length for g in gens], [r.content_length for r in refs])
    return ModelResult(bias, report, eos)


def cmd_evaluate(config, bias):
    """
    Score the generated tracings of one bias and write report.<format>.

    Returns:
        tuple: (ModelResult, summary dict)
    """
    bias = _check_bias(bias)
    layout = Layout(config.out)
    eval_cfg = config.section("eval")
    tracings_path = _require(os.path.join(layout.generated(bias), "tracings.jsonl"), f"generate for '{bias}'")
    check_provenance(layout.generated(bias), config)
    references = load_prepared(layout, config)
    result = evaluate_tracings(
        bias, load_tracings(tracings_path), [s.tracing for s in references],
        brevity=eval_cfg["brevity"], per_pair=eval_cfg["per_pair"],
    )
    fmt = eval_cfg["format"]
    with staged_output(layout.reports(bias)) as stage:
        with open(os.path.join(stage, f"report.{fmt}"), "w", encoding="utf-8") as f:
            f.write(render_report([result], fmt, published=eval_cfg["published"]))
        if eval_cfg["per_pair"]:
            _write_per_pair(result, os.path.join(stage, "per_pair.jsonl"))
        write_provenance(stage, config, "evaluate", [tracings_path, os.path.join(layout.preprocess, "encoded.jsonl")])
    return result, _result_summary(result, os.path.join(layout.reports(bias), f"report.{fmt}"))


def _write_per_pair(result, path):
    with open(path, "w", encoding="utf-8") as f:
        for modality, scores in result.bleu.modalities.items():
            for index, values in enumerate(scores.per_pair):
                f.write(json.dumps({"modality": modality, "pair": index, "b1": values[0], "b2": values[1], "b3": values[2]},
                                   sort_keys=True) + "\n")


def _result_summary(result, path):
    return {
        "bias": result.model,
        "bleu": {m: [round(100 * b, 1) for b in s.bleu] for m, s in result.bleu.modalities.items()},
        "pearson_r": result.eos.pearson_r,
        "pearson_p": result.eos.pearson_p,
        "wilcoxon_w": result.eos.wilcoxon_statistic,
        "wilcoxon_p": result.eos.wilcoxon_p,
        "n_empty": result.bleu.n_empty,
        "path": path,
    }


def cmd_plot(config, bias=None, tracings=None):
    """
    Decode tracings and draw one SVG per tracing plus an alphabet contact sheet.

    EOS-only tracings cannot be drawn and are skipped with a warning.

    Args:
        bias (str, optional): Plot the generated tracings of this bias
        tracings (str, optional): Plot this tracings file instead

    Returns:
        dict: Summary
    """
    layout = Layout(config.out)
    if tracings:
        source = _require(tracings, "generate")
        name = os.path.splitext(os.path.basename(source))[0]
    else:
        bias = _check_bias(bias)
        source = _require(os.path.join(layout.generated(bias), "tracings.jsonl"), f"generate for '{bias}'")
        name = bias
    quantizer = load_quantizer(layout)
    plot_cfg = config.section("plot")
    timestamp = None
    if plot_cfg["timestamp"]:
        timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()

    files = []
    first = {}
    skipped = 0
    with staged_output(layout.plots(name)) as stage:
        for index, tracing in enumerate(load_tracings(source)):
            try:
                trajectory = decode_tracing(tracing, quantizer, dt=plot_cfg["dt"])
            except TrajectoryError:
                log.warning("Tracing %d (%s) is EOS-only and is not plotted", index, tracing.letter or "?")
                skipped += 1
                continue
            filename = f"{tracing.letter or 'X'}-{index:04d}.svg"
            title = f"{tracing.letter} {tracing.writer_id} {tracing.sample_id}".strip()
            with open(os.path.join(stage, filename), "w", encoding="utf-8") as f:
                f.write(render_letter_svg(trajectory, size=plot_cfg["size"], title=title, timestamp=timestamp))
            files.append(filename)
            first.setdefault(tracing.letter, trajectory)
        if first:
            with open(os.path.join(stage, "alphabet.svg"), "w", encoding="utf-8") as f:
                f.write(render_contact_sheet(first, timestamp=timestamp))
        write_provenance(stage, config, "plot", [source])
    return {"plots": len(files), "skipped": skipped, "path": layout.plots(name)}


def run_benchmark(config, biases, skip_synth=False):
    """
    Run every stage for each bias and write a combined report to reports/benchmark.

    Returns:
        tuple: (list of ModelResult, summary dict)
    """
    for bias in biases:
        _check_bias(bias)
    layout = Layout(config.out)
    summary = {"stages": {}}
    if not skip_synth:
        summary["stages"]["synth"] = cmd_synth(config)
    summary["stages"]["preprocess"] = cmd_preprocess(config)
    results = []
    for bias in biases:
        stages = {
            "train_styles": cmd_train_styles(config, bias),
            "train_generator": cmd_train_generator(config, bias),
            "generate": cmd_generate(config, bias),
        }
        result, stages["evaluate"] = cmd_evaluate(config, bias)
        stages["plot"] = cmd_plot(config, bias)
        summary["stages"][bias] = stages
        results.append(result)

    eval_cfg = config.section("eval")
    fmt = eval_cfg["format"]
    report_dir = layout.reports("benchmark")
    inputs = [os.path.join(layout.generated(bias), "tracings.jsonl") for bias in biases]
    with staged_output(report_dir) as stage:
        with open(os.path.join(stage, f"report.{fmt}"), "w", encoding="utf-8") as f:
            f.write(render_report(results, fmt, published=eval_cfg["published"]))
        write_provenance(stage, config, "benchmark", inputs, {"biases": list(biases)})
    summary["report"] = os.path.join(report_dir, f"report.{fmt}")
    summary["results"] = [_result_summary(r, summary["report"]) for r in results]
    return results, summary

