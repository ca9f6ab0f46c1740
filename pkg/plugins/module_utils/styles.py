# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)

"""
Style bias vectors.

Four kinds are built here: letter one-hots, letter+writer one-hots, the
embedding layer of a small raster classifier and the latent code of a dense
raster autoencoder. A fifth kind, ``external``, is read from a table file
produced elsewhere.
"""

from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


from dataclasses import asdict, dataclass, field

import numpy as np

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.archetypes import ALPHABET
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.dataset import RASTER_SIZE
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    ConfigError,
    DatasetError,
    DimensionError,
    FormatError,
    ModelError,
    SeededRng,
    get_logger,
    read_tensor_archive,
    write_tensor_archive,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.numerics import (
    ParamStore,
    adam_step,
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    nll_from_logits,
    uniform_init,
)


KINDS = ("letter", "letter_writer", "classifier_embedding", "autoencoder_latent", "external")
KIND_ALIASES = {"classifier": "classifier_embedding", "autoencoder": "autoencoder_latent"}
IMAGE_KINDS = ("classifier_embedding", "autoencoder_latent")
LETTER_DIM = len(ALPHABET)
LATENT_DIM = 34
TABLE_FORMAT = "handwriting-embedding-table"
TABLE_VERSION = 1
MODEL_FORMAT = "handwriting-style-model"

log = get_logger(__name__)


def canonical_kind(kind):
    """
    Map a module-facing bias name to its table kind.

    Raises:
        ConfigError: If the kind is unknown
    """
    kind = KIND_ALIASES.get(kind, kind)
    if kind not in KINDS:
        raise ConfigError(f"Unknown bias kind '{kind}', expected one of {', '.join(KINDS)}")
    return kind


@dataclass
class BiasVector:
    kind: str
    values: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.values)):
            raise ModelError(f"Bias vector of kind '{self.kind}' holds non-finite values")

    @property
    def dimension(self):
        return self.values.size


@dataclass
class EmbeddingTable:
    """
    Persisted bias lookups of one kind.

    Keys are a letter for ``letter`` tables, ``letter/writer_id`` for
    ``letter_writer`` tables and sample ids for image kinds. External tables
    may use any of the three key forms.
    """
    kind: str
    dimension: int
    entries: dict = field(default_factory=dict)
    seed: int = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.dimension = int(self.dimension)
        for key, vector in list(self.entries.items()):
            vector = np.asarray(vector, dtype=np.float64).ravel()
            if vector.size != self.dimension:
                raise DimensionError(f"Table entry '{key}' has dimension {vector.size}, table dimension is {self.dimension}")
            if not np.all(np.isfinite(vector)):
                raise FormatError(f"Table entry '{key}' holds non-finite values")
            self.entries[key] = vector

    def __len__(self):
        return len(self.entries)

    def keys(self):
        return list(self.entries)

    def key_for(self, letter, writer_id=None, sample_id=None):
        """Return the first key form present in the table, most specific first."""
        candidates = []
        if self.kind in IMAGE_KINDS or self.kind == "external":
            candidates.append(sample_id)
        if self.kind in ("letter_writer", "external"):
            candidates.append(f"{letter}/{writer_id}")
        if self.kind in ("letter", "external"):
            candidates.append(letter)
        for key in candidates:
            if key is not None and key in self.entries:
                return key
        raise DatasetError(
            f"No '{self.kind}' bias for letter '{letter}', writer '{writer_id}', sample '{sample_id}'"
        )

    def lookup(self, letter, writer_id=None, sample_id=None):
        """
        Returns:
            BiasVector

        Raises:
            DatasetError: If no key form matches
        """
        return self.bias_by_key(self.key_for(letter, writer_id, sample_id), letter, writer_id, sample_id)

    def bias_by_key(self, key, letter="", writer_id=None, sample_id=None):
        if key not in self.entries:
            raise DatasetError(f"Bias key '{key}' is not in the '{self.kind}' table")
        return BiasVector(
            self.kind,
            self.entries[key].copy(),
            {"letter": letter, "writer_id": writer_id or "", "sample_id": sample_id or "", "key": key},
        )

    def bias_for(self, sample):
        return self.lookup(sample.letter, sample.writer_id, sample.sample_id)


def letter_bias(letter):
    """
    26-dim one-hot of a letter.

    Raises:
        DatasetError: If the letter is not A..Z
    """
    if not isinstance(letter, str) or len(letter) != 1 or letter not in ALPHABET:
        raise DatasetError(f"Unknown letter '{letter}'")
    values = np.zeros(LETTER_DIM)
    values[ALPHABET.index(letter)] = 1.0
    return BiasVector("letter", values, {"letter": letter})


def writer_index(writer_ids):
    """Stable writer -> position map over the sorted distinct ids."""
    return {writer: i for i, writer in enumerate(sorted(set(writer_ids)))}


def letter_writer_bias(letter, writer_id, writers):
    """
    [letter one-hot | writer one-hot] of width 26 + W.

    Args:
        letter (str): A..Z
        writer_id (str): Registered writer
        writers (dict): writer id -> index, see writer_index

    Raises:
        DatasetError: If the letter or the writer is unknown
    """
    if writer_id not in writers:
        raise DatasetError(f"Unknown writer '{writer_id}'")
    head = letter_bias(letter).values
    tail = np.zeros(len(writers))
    tail[writers[writer_id]] = 1.0
    return BiasVector("letter_writer", np.concatenate([head, tail]), {"letter": letter, "writer_id": writer_id})


def _batches(order, batch_size):
    """Split an index order into batches, folding a trailing singleton into its predecessor."""
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def _stack_rasters(rasters, size=None):
    images = np.asarray([np.asarray(r, dtype=np.float64) for r in rasters])
    if images.ndim != 3 or (size is not None and images.shape[1:] != (size, size)):
        raise DimensionError(f"Rasters must be {size}x{size} images, got {images.shape[1:]}")
    return images[:, None, :, :]


@dataclass
class ClassifierConfig:
    conv1_channels: int = 16
    conv2_channels: int = 32
    embedding_dim: int = 64
    classes: int = LETTER_DIM
    image_size: int = RASTER_SIZE
    epochs: int = 8
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ModelError("Batch normalization needs a batch size of at least 2")
        if self.feature_side() < 1:
            raise ConfigError(f"Image size {self.image_size} is too small for two conv/pool blocks")

    def feature_side(self):
        return ((self.image_size - 2) // 2 - 2) // 2

    def to_dict(self):
        return asdict(self)


@dataclass
class AutoencoderConfig:
    hidden: int = 256
    latent: int = LATENT_DIM
    image_size: int = RASTER_SIZE
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0

    def to_dict(self):
        return asdict(self)


class ImageClassifier:
    """
    conv3x3 + batchnorm + relu + maxpool, twice, then the embedding dense
    layer (relu) and the class logits.
    """

    name = "classifier"

    def __init__(self, config, store=None, bn_state=None, trained=False, accuracy=None):
        self.config = config
        self.store = store if store is not None else self._init_params()
        self.bn_state = bn_state or {
            f"bn{i}": {"running_mean": np.zeros(c), "running_var": np.ones(c)}
            for i, c in ((1, config.conv1_channels), (2, config.conv2_channels))
        }
        self.trained = trained
        self.accuracy = accuracy

    def _init_params(self):
        cfg = self.config
        rng = SeededRng(cfg.seed, stream=(20,))
        store = ParamStore()
        store.add("conv1.W", uniform_init(rng, (cfg.conv1_channels, 1, 3, 3), 9))
        store.add("conv1.b", np.zeros(cfg.conv1_channels))
        store.add("bn1.gamma", np.ones(cfg.conv1_channels))
        store.add("bn1.beta", np.zeros(cfg.conv1_channels))
        store.add("conv2.W", uniform_init(rng, (cfg.conv2_channels, cfg.conv1_channels, 3, 3), 9 * cfg.conv1_channels))
        store.add("conv2.b", np.zeros(cfg.conv2_channels))
        store.add("bn2.gamma", np.ones(cfg.conv2_channels))
        store.add("bn2.beta", np.zeros(cfg.conv2_channels))
        flat = cfg.conv2_channels * cfg.feature_side() ** 2
        store.add("dense1.W", uniform_init(rng, (flat, cfg.embedding_dim), flat))
        store.add("dense1.b", np.zeros(cfg.embedding_dim))
        store.add("dense2.W", uniform_init(rng, (cfg.embedding_dim, cfg.classes), cfg.embedding_dim))
        store.add("dense2.b", np.zeros(cfg.classes))
        return store

    def forward(self, images, mode="infer"):
        """
        Args:
            images (np.ndarray): (N, 1, H, W)
            mode (str): 'train' uses and updates batch statistics

        Returns:
            tuple: (logits, embedding, cache)
        """
        s = self.store
        cache = []
        x = images
        for block in (1, 2):
            x, conv = conv2d_forward(x, s[f"conv{block}.W"], s[f"conv{block}.b"])
            x, bn = batchnorm_forward(x, s[f"bn{block}.gamma"], s[f"bn{block}.beta"], self.bn_state[f"bn{block}"], mode)
            active = x > 0
            x, pool = maxpool2x2_forward(x * active)
            cache.append((conv, bn, active, pool))
        pooled_shape = x.shape
        embedding, dense1 = dense_forward(x.reshape(x.shape[0], -1), s["dense1.W"], s["dense1.b"], "relu")
        logits, dense2 = dense_forward(embedding, s["dense2.W"], s["dense2.b"], "linear")
        return logits, embedding, (cache, pooled_shape, dense1, dense2)

    def backward(self, dlogits, cache):
        blocks, pooled_shape, dense1, dense2 = cache
        grads = {}
        d, grads["dense2.W"], grads["dense2.b"] = dense_backward(dlogits, dense2)
        d, grads["dense1.W"], grads["dense1.b"] = dense_backward(d, dense1)
        d = d.reshape(pooled_shape)
        for block in (2, 1):
            conv, bn, active, pool = blocks[block - 1]
            d = maxpool2x2_backward(d, pool) * active
            d, grads[f"bn{block}.gamma"], grads[f"bn{block}.beta"] = batchnorm_backward(d, bn)
            d, grads[f"conv{block}.W"], grads[f"conv{block}.b"] = conv2d_backward(d, conv)
        return grads

    def loss_and_grads(self, images, labels):
        """Mean NLL over the batch in train mode and its gradients."""
        logits, _, cache = self.forward(images, mode="train")
        total, dlogits = nll_from_logits(logits, labels)
        n = images.shape[0]
        return total / n, self.backward(dlogits / n, cache)

    def predict(self, images):
        logits, _, _ = self.forward(images, mode="infer")
        return logits.argmax(axis=1)


class ImageAutoencoder:
    """Dense encoder to a linear latent and a dense decoder with sigmoid output."""

    name = "autoencoder"

    def __init__(self, config, store=None, trained=False):
        self.config = config
        self.store = store if store is not None else self._init_params()
        self.trained = trained

    def _init_params(self):
        cfg = self.config
        rng = SeededRng(cfg.seed, stream=(21,))
        pixels = cfg.image_size ** 2
        store = ParamStore()
        for name, n_in, n_out in (
            ("enc1", pixels, cfg.hidden),
            ("enc2", cfg.hidden, cfg.latent),
            ("dec1", cfg.latent, cfg.hidden),
            ("dec2", cfg.hidden, pixels),
        ):
            store.add(f"{name}.W", uniform_init(rng, (n_in, n_out), n_in))
            store.add(f"{name}.b", np.zeros(n_out))
        return store

    _LAYERS = (("enc1", "tanh"), ("enc2", "linear"), ("dec1", "tanh"), ("dec2", "sigmoid"))

    def forward(self, flat):
        caches = []
        x = flat
        latent = None
        for name, activation in self._LAYERS:
            x, cache = dense_forward(x, self.store[f"{name}.W"], self.store[f"{name}.b"], activation)
            caches.append((name, cache))
            if name == "enc2":
                latent = x
        return x, latent, caches

    def encode(self, flat):
        x = flat
        for name, activation in self._LAYERS[:2]:
            x, _ = dense_forward(x, self.store[f"{name}.W"], self.store[f"{name}.b"], activation)
        return x

    def loss_and_grads(self, flat):
        """Mean squared reconstruction error over every pixel of the batch and its gradients."""
        recon, _, caches = self.forward(flat)
        diff = recon - flat
        grads = {}
        d = 2.0 * diff / diff.size
        for name, cache in reversed(caches):
            d, grads[f"{name}.W"], grads[f"{name}.b"] = dense_backward(d, cache)
        return float(np.mean(diff * diff)), grads


def _fit(model, n_samples, epochs, batch_size, lr, seed, step):
    rng = SeededRng(seed, stream=(22,))
    losses = []
    for epoch in range(epochs):
        total = 0.0
        for batch in _batches(rng.permutation(n_samples), batch_size):
            value, grads = step(batch)
            for name, g in grads.items():
                model.store.accumulate(name, g)
            adam_step(model.store, lr)
            total += value * len(batch)
        losses.append(total / n_samples)
        log.debug("%s epoch %d/%d loss %.5f", model.name, epoch + 1, epochs, losses[-1])
    return losses


def train_classifier(rasters, labels, config, held_out=None):
    """
    Train the raster classifier with Adam on mean NLL.

    Args:
        rasters (list): 2-D images
        labels (list): Letters or class indices
        config (ClassifierConfig): Settings
        held_out (tuple, optional): (rasters, labels) scored for the reported accuracy;
            the training set is scored when omitted

    Returns:
        tuple: (ImageClassifier, accuracy)

    Raises:
        ModelError: If fewer than two training images are given
    """
    images = _stack_rasters(rasters, config.image_size)
    targets = _class_indices(labels)
    if images.shape[0] < 2:
        raise ModelError("Batch normalization needs at least two training images")
    model = ImageClassifier(config)
    losses = _fit(
        model, images.shape[0], config.epochs, config.batch_size, config.lr, config.seed,
        lambda batch: model.loss_and_grads(images[batch], targets[batch]),
    )
    model.trained = True
    eval_images, eval_targets = (images, targets) if held_out is None else (
        _stack_rasters(held_out[0], config.image_size), _class_indices(held_out[1]))
    model.accuracy = float(np.mean(model.predict(eval_images) == eval_targets))
    log.info("classifier trained, final loss %.4f, accuracy %.3f", losses[-1] if losses else float("nan"), model.accuracy)
    return model, model.accuracy


def _class_indices(labels):
    return np.asarray([ALPHABET.index(label) if isinstance(label, str) else int(label) for label in labels], dtype=np.int64)


def confusion_matrix(model, rasters, labels, classes=None):
    """
    Rows are true letters, columns predictions, restricted to `classes` (letters present in labels by default).

    Returns:
        tuple: (letters, matrix)
    """
    targets = _class_indices(labels)
    predicted = model.predict(_stack_rasters(rasters, model.config.image_size))
    letters = classes or sorted({ALPHABET[t] for t in targets})
    position = {ALPHABET.index(letter): i for i, letter in enumerate(letters)}
    matrix = np.zeros((len(letters), len(letters) + 1), dtype=np.int64)
    for t, p in zip(targets, predicted):
        # last column counts predictions outside the evaluated letters
        matrix[position[t], position.get(int(p), len(letters))] += 1
    return letters, matrix


def is_diagonally_dominant(matrix):
    rows = matrix[:, :matrix.shape[0]]
    return bool(np.all(rows.diagonal() == matrix.max(axis=1)))


def train_autoencoder(rasters, config):
    """
    Train the dense autoencoder on mean squared reconstruction error.

    Returns:
        ImageAutoencoder
    """
    images = _stack_rasters(rasters, config.image_size)
    flat = images.reshape(images.shape[0], -1)
    model = ImageAutoencoder(config)
    losses = _fit(
        model, flat.shape[0], config.epochs, config.batch_size, config.lr, config.seed,
        lambda batch: model.loss_and_grads(flat[batch]),
    )
    model.trained = True
    log.info("autoencoder trained, final reconstruction error %.5f", losses[-1] if losses else float("nan"))
    return model


def _require_trained(model):
    if not getattr(model, "trained", False):
        raise ModelError(f"The {model.name} has not been trained")


def classifier_embeddings(model, rasters):
    _require_trained(model)
    _, embedding, _ = model.forward(_stack_rasters(rasters, model.config.image_size), mode="infer")
    return embedding


def classifier_embedding(model, raster, provenance=None):
    """
    Embedding-layer activations of one raster with frozen batch statistics.

    Raises:
        ModelError: If the classifier is untrained
    """
    return BiasVector("classifier_embedding", classifier_embeddings(model, [raster])[0], provenance or {})


def autoencoder_latents(model, rasters):
    _require_trained(model)
    return model.encode(_stack_rasters(rasters, model.config.image_size).reshape(len(rasters), -1))


def autoencoder_latent(model, raster, provenance=None):
    """
    Raises:
        ModelError: If the autoencoder is untrained
    """
    return BiasVector("autoencoder_latent", autoencoder_latents(model, [raster])[0], provenance or {})


def build_embedding_table(kind, samples, models=None, writers=None, seed=None):
    """
    Build the bias table of one kind.

    Letter tables hold all 26 letters and letter+writer tables every letter
    for every writer, whatever the corpus holds. Image kinds get one entry
    per sample, computed from that sample's own raster.

    Args:
        kind (str): Bias kind or alias
        samples (list): LetterSample items
        models (dict, optional): {'classifier': ..., 'autoencoder': ...}
        writers (dict, optional): writer id -> index; derived from samples when omitted
        seed (int, optional): Recorded in the table header

    Raises:
        DatasetError: If an image kind meets a sample without raster
        ModelError: If the required model is missing or untrained
    """
    kind = canonical_kind(kind)
    models = models or {}
    if kind == "letter":
        entries = {letter: letter_bias(letter).values for letter in ALPHABET}
        return EmbeddingTable(kind, LETTER_DIM, entries, seed)
    if kind == "letter_writer":
        writers = writers or writer_index(s.writer_id for s in samples)
        entries = {
            f"{letter}/{writer}": letter_writer_bias(letter, writer, writers).values
            for letter in ALPHABET for writer in sorted(writers, key=writers.get)
        }
        return EmbeddingTable(kind, LETTER_DIM + len(writers), entries, seed, {"writers": sorted(writers, key=writers.get)})
    if kind == "external":
        raise ConfigError("External bias tables are loaded from a file, not built")

    model_name = "classifier" if kind == "classifier_embedding" else "autoencoder"
    model = models.get(model_name)
    if model is None:
        raise ModelError(f"A trained {model_name} is required for '{kind}' biases")
    for sample in samples:
        if sample.raster is None:
            raise DatasetError(f"Sample '{sample.sample_id}' has no raster")
    if not samples:
        raise DatasetError(f"No samples to build a '{kind}' table from")
    rasters = [s.raster for s in samples]
    extract = classifier_embeddings if model_name == "classifier" else autoencoder_latents
    vectors = np.vstack([extract(model, rasters[i:i + 256]) for i in range(0, len(rasters), 256)])
    entries = {s.sample_id: vectors[i] for i, s in enumerate(samples)}
    return EmbeddingTable(kind, vectors.shape[1], entries, seed)


def save_table(table, path):
    """
    Write a table as text: a header of ``name value`` lines, a ``records``
    line, then one ``key<TAB>v1 v2 ...`` line per entry with shortest
    round-trip float repr.
    """
    lines = [
        f"{TABLE_FORMAT} {TABLE_VERSION}",
        f"kind {table.kind}",
        f"dimension {table.dimension}",
        f"count {len(table)}",
        f"seed {'none' if table.seed is None else int(table.seed)}",
    ]
    if table.meta.get("writers"):
        lines.append("writers " + " ".join(table.meta["writers"]))
    lines.append("records")
    for key, vector in table.entries.items():
        if any(c.isspace() for c in key):
            raise FormatError(f"Table key '{key}' contains whitespace")
        lines.append(key + "\t" + " ".join(repr(float(v)) for v in vector))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_table(path):
    """
    Raises:
        FormatError: On a malformed header, count or record
    """
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != f"{TABLE_FORMAT} {TABLE_VERSION}":
        raise FormatError(f"{path} is not an embedding table")
    header = {}
    index = 1
    while index < len(lines) and lines[index] != "records":
        name, _, value = lines[index].partition(" ")
        header[name] = value
        index += 1
    for required in ("kind", "dimension", "count", "seed"):
        if required not in header:
            raise FormatError(f"Embedding table {path} lacks '{required}'")
    entries = {}
    for number, line in enumerate(lines[index + 1:], start=index + 2):
        key, sep, values = line.partition("\t")
        if not sep:
            raise FormatError(f"{path}:{number}: record without tab separator")
        try:
            entries[key] = np.array([float(v) for v in values.split()], dtype=np.float64)
        except ValueError as e:
            raise FormatError(f"{path}:{number}: {e}")
    if len(entries) != int(header["count"]):
        raise FormatError(f"Embedding table {path} declares {header['count']} records, holds {len(entries)}")
    meta = {"writers": header["writers"].split()} if header.get("writers") else {}
    return EmbeddingTable(
        canonical_kind(header["kind"]),
        int(header["dimension"]),
        entries,
        None if header["seed"] == "none" else int(header["seed"]),
        meta,
    )


def save_style_model(model, path):
    meta = {
        "format": MODEL_FORMAT,
        "model": model.name,
        "config": model.config.to_dict(),
        "trained": bool(model.trained),
    }
    tensors = model.store.to_tensors()
    if model.name == "classifier":
        meta["accuracy"] = model.accuracy
        for layer, stats in model.bn_state.items():
            for stat, value in stats.items():
                tensors[f"state/{layer}.{stat}"] = value
    write_tensor_archive(path, meta, tensors)


def load_style_model(path):
    """
    Returns:
        ImageClassifier | ImageAutoencoder

    Raises:
        FormatError: If the archive holds no style model
    """
    meta, tensors = read_tensor_archive(path)
    if meta.get("format") != MODEL_FORMAT:
        raise FormatError(f"{path} is not a style model")
    store = ParamStore.from_tensors(tensors)
    if meta["model"] == "classifier":
        bn_state = {}
        for key, value in tensors.items():
            if key.startswith("state/"):
                layer, _, stat = key[len("state/"):].partition(".")
                bn_state.setdefault(layer, {})[stat] = value.copy()
        return ImageClassifier(ClassifierConfig(**meta["config"]), store, bn_state, meta["trained"], meta.get("accuracy"))
    if meta["model"] == "autoencoder":
        return ImageAutoencoder(AutoencoderConfig(**meta["config"]), store, meta["trained"])
    raise FormatError(f"Unknown style model '{meta['model']}' in {path}")
