# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)

"""
Bias-conditioned autoregressive frame generator.

The bias vector is projected to a 34-wide frame 0 by a small MLP, a stack
of GRU layers consumes [frame 0, s_1, ..., s_{N-1}] and a dense head emits
34 logits per step: 0..16 score the direction block, 17..33 the speed block.
"""

from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.codec import (
    BLOCK,
    EOS,
    FRAME_DIM,
    LEVELS,
    MAX_STEPS,
    EncodedTracing,
    QuantizerSpec,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    ConfigError,
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
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    gru_cell_backward,
    gru_cell_forward,
    nll_from_logits,
    softmax,
    uniform_init,
)


CHECKPOINT_FORMAT = "handwriting-generator"
CHECKPOINT_VERSION = 1
GREEDY_TEMPERATURE = 1e-6

log = get_logger(__name__)


@dataclass
class GeneratorConfig:
    hidden_layers: int = 3
    hidden_size: int = 256
    dropout: float = 0.3
    lr: float = 1e-3
    frame_dim: int = FRAME_DIM
    max_gen_len: int = MAX_STEPS
    temperature: float = 1.0
    seed: int = 0
    bias_hidden: int = 64
    batch_size: int = 32

    def __post_init__(self):
        if self.frame_dim != 2 * BLOCK:
            raise ConfigError(f"frame_dim must be {2 * BLOCK}, got {self.frame_dim}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.hidden_layers < 1 or self.hidden_size < 1:
            raise ConfigError("Generator needs at least one hidden layer of positive size")
        if not 1 <= self.max_gen_len <= MAX_STEPS:
            raise ConfigError(f"max_gen_len must lie in 1..{MAX_STEPS}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class TrainingExample:
    tracing: EncodedTracing
    bias: object


@dataclass
class TrainReport:
    seed: int
    train_loss: list = field(default_factory=list)
    train_step_loss: list = field(default_factory=list)
    validation_loss: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)

    @property
    def epochs(self):
        return len(self.train_loss)

    def to_dict(self, include_timing=False):
        data = {
            "seed": self.seed,
            "epochs": [
                {
                    "epoch": i + 1,
                    "train_loss": self.train_loss[i],
                    "train_step_loss": self.train_step_loss[i],
                    "validation_loss": self.validation_loss[i] if self.validation_loss else None,
                }
                for i in range(self.epochs)
            ],
        }
        if include_timing:
            data["wall_time"] = list(self.wall_time)
        return data


class GeneratorModel:
    """
    Learnable state of the generator.

    Args:
        config (GeneratorConfig): Architecture and training settings
        bias_kind (str): Kind of bias vectors the model is conditioned on
        bias_dim (int): Width of those bias vectors
        quantizer (QuantizerSpec): Speed quantizer of the training data
        corpus_seed (int, optional): Seed of the corpus the model is trained on
    """

    def __init__(self, config, bias_kind, bias_dim, quantizer, corpus_seed=None, store=None):
        self.config = config
        self.bias_kind = bias_kind
        self.bias_dim = int(bias_dim)
        self.quantizer = quantizer
        self.corpus_seed = corpus_seed
        self.store = store if store is not None else self._init_params()

    def _init_params(self):
        rng = SeededRng(self.config.seed, stream=(10,))
        cfg = self.config
        store = ParamStore()
        if cfg.bias_hidden:
            store.add("bias.W1", uniform_init(rng, (self.bias_dim, cfg.bias_hidden), self.bias_dim))
            store.add("bias.b1", np.zeros(cfg.bias_hidden))
            store.add("bias.W2", uniform_init(rng, (cfg.bias_hidden, FRAME_DIM), cfg.bias_hidden))
        else:
            store.add("bias.W2", uniform_init(rng, (self.bias_dim, FRAME_DIM), self.bias_dim))
        store.add("bias.b2", np.zeros(FRAME_DIM))
        for layer in range(cfg.hidden_layers):
            n_in = FRAME_DIM if layer == 0 else cfg.hidden_size
            prefix = f"gru.{layer}"
            for gate in ("z", "r", "h"):
                store.add(f"{prefix}.W_{gate}", uniform_init(rng, (n_in, cfg.hidden_size), n_in))
                store.add(f"{prefix}.U_{gate}", uniform_init(rng, (cfg.hidden_size, cfg.hidden_size), cfg.hidden_size))
                store.add(f"{prefix}.b_{gate}", np.zeros(cfg.hidden_size))
        store.add("head.W", uniform_init(rng, (cfg.hidden_size, FRAME_DIM), cfg.hidden_size))
        store.add("head.b", np.zeros(FRAME_DIM))
        return store

    def layer_params(self, layer):
        return self.store.group(f"gru.{layer}")

    def initial_state(self, batch=1):
        return [np.zeros((batch, self.config.hidden_size)) for _ in range(self.config.hidden_layers)]

    def step(self, frame, state):
        """
        Advance the recurrent stack by one frame without dropout.

        Returns:
            tuple: (logits (batch, 34), new state)
        """
        inp = frame
        new_state = []
        for layer in range(self.config.hidden_layers):
            h, _ = gru_cell_forward(inp, state[layer], self.layer_params(layer))
            new_state.append(h)
            inp = h
        return inp @ self.store["head.W"] + self.store["head.b"], new_state


def _bias_matrix(model, biases):
    rows = []
    for bias in biases:
        values = np.asarray(getattr(bias, "values", bias), dtype=np.float64).ravel()
        if values.size != model.bias_dim:
            raise DimensionError(f"Bias vector has dimension {values.size}, model expects {model.bias_dim}")
        rows.append(values)
    return np.vstack(rows)


def _bias_forward(model, matrix):
    store = model.store
    caches = []
    x = matrix
    if "bias.W1" in store:
        x, cache = dense_forward(x, store["bias.W1"], store["bias.b1"], "tanh")
        caches.append(("bias.W1", "bias.b1", cache))
    frame0, cache = dense_forward(x, store["bias.W2"], store["bias.b2"], "linear")
    caches.append(("bias.W2", "bias.b2", cache))
    return frame0, caches


def _bias_backward(model, d_frame0, caches, grads):
    d = d_frame0
    for w_name, b_name, cache in reversed(caches):
        d, dW, db = dense_backward(d, cache)
        grads[w_name] = dW
        grads[b_name] = db


def bias_project(bias, model):
    """
    Project a bias vector to frame 0 (a dense 34-wide vector).

    Raises:
        DimensionError: If the bias width differs from the model's
    """
    frame0, _ = _bias_forward(model, _bias_matrix(model, [bias]))
    return frame0[0]


def _targets(frames):
    """Direction/speed targets and a mask that ends at the first direction EOS."""
    direction = frames[..., :BLOCK].argmax(axis=-1)
    speed = frames[..., BLOCK:].argmax(axis=-1)
    is_eos = direction == EOS
    after = np.cumsum(is_eos, axis=0) - is_eos
    mask = (after == 0).astype(np.float64)
    return direction, speed, mask


def _forward(model, frame0, inputs, train=False, rng=None):
    """
    Run the stack over (T, B, 34) inputs whose row 0 is replaced by frame0.

    Returns:
        tuple: (logits (T, B, 34), caches)
    """
    cfg = model.config
    steps, batch = inputs.shape[0], inputs.shape[1]
    state = model.initial_state(batch)
    layer_params = [model.layer_params(layer) for layer in range(cfg.hidden_layers)]
    head_W, head_b = model.store["head.W"], model.store["head.b"]
    logits = np.empty((steps, batch, FRAME_DIM))
    caches = []
    for t in range(steps):
        inp = frame0 if t == 0 else inputs[t]
        step_caches = []
        for layer in range(cfg.hidden_layers):
            h, cell_cache = gru_cell_forward(inp, state[layer], layer_params[layer])
            state[layer] = h
            mask = None
            out = h
            if layer < cfg.hidden_layers - 1:
                out, mask = dropout_forward(h, cfg.dropout, rng, train=train)
            step_caches.append((cell_cache, mask))
            inp = out
        logits[t] = inp @ head_W + head_b
        caches.append((step_caches, inp))
    return logits, caches


def _backward(model, dlogits, caches, bias_caches):
    cfg = model.config
    layer_params = [model.layer_params(layer) for layer in range(cfg.hidden_layers)]
    head_W = model.store["head.W"]
    grads = {name: np.zeros_like(model.store[name]) for name in model.store.names()}
    dh_next = [np.zeros((dlogits.shape[1], cfg.hidden_size)) for _ in range(cfg.hidden_layers)]
    d_frame0 = None
    for t in reversed(range(dlogits.shape[0])):
        step_caches, top = caches[t]
        grads["head.W"] += top.T @ dlogits[t]
        grads["head.b"] += dlogits[t].sum(axis=0)
        d_inp = dlogits[t] @ head_W.T
        for layer in reversed(range(cfg.hidden_layers)):
            cell_cache, _ = step_caches[layer]
            dh = d_inp + dh_next[layer]
            dx, dh_prev, cell_grads = gru_cell_backward(dh, cell_cache, layer_params[layer])
            for short, g in cell_grads.items():
                grads[f"gru.{layer}.{short}"] += g
            dh_next[layer] = dh_prev
            if layer > 0:
                d_inp = dropout_backward(dx, step_caches[layer - 1][1])
            else:
                d_inp = dx
        if t == 0:
            d_frame0 = d_inp
    bias_grads = {}
    _bias_backward(model, d_frame0, bias_caches, bias_grads)
    for name, g in bias_grads.items():
        grads[name] += g
    return grads


def _pack(tracings):
    """
    Stack tracings into time-major arrays padded to the longest one.

    Returns:
        tuple: (inputs (T, B, 34), target frames (T, B, 34))
    """
    steps = max(len(t.frames) for t in tracings)
    inputs = np.zeros((steps, len(tracings), FRAME_DIM))
    targets = np.zeros((steps, len(tracings), FRAME_DIM))
    for b, tracing in enumerate(tracings):
        frames = tracing.frames
        n = frames.shape[0]
        inputs[1:n, b] = frames[:n - 1]
        targets[:n, b] = frames
        # padding repeats EOS; the mask drops it
        targets[n:, b, EOS] = 1.0
        targets[n:, b, BLOCK + EOS] = 1.0
    return inputs, targets


def _frames_of(frames):
    return frames.frames if isinstance(frames, EncodedTracing) else np.asarray(frames, dtype=np.float64)


def forward_teacher_forced(model, frame_0, frames):
    """
    Teacher-forced logits for one tracing.

    Step t consumes frame_0 for t = 0 and s_t afterwards, and predicts s_{t+1};
    hidden states start at zero.

    Args:
        model (GeneratorModel): Model
        frame_0 (np.ndarray): 34-wide projected bias
        frames (EncodedTracing | np.ndarray): Ground-truth frames s_1..s_N

    Returns:
        np.ndarray: (N, 34) logits

    Raises:
        ModelError: If the sequence is empty
    """
    frames = _frames_of(frames)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ModelError("Cannot run the generator on an empty sequence")
    if frames.shape[1] != FRAME_DIM:
        raise DimensionError(f"Frames must be {FRAME_DIM} wide, got {frames.shape}")
    inputs = np.zeros((frames.shape[0], 1, FRAME_DIM))
    inputs[1:, 0] = frames[:-1]
    logits, _ = _forward(model, np.asarray(frame_0, dtype=np.float64).reshape(1, FRAME_DIM), inputs)
    return logits[:, 0]


def _masked_nll(logits, targets):
    direction, speed, mask = _targets(targets)
    dir_loss, d_dir = nll_from_logits(logits[..., :BLOCK], direction, mask)
    speed_loss, d_speed = nll_from_logits(logits[..., BLOCK:], speed, mask)
    return dir_loss + speed_loss, np.concatenate([d_dir, d_speed], axis=-1), float(mask.sum())


def teacher_forced_loss(logits, targets):
    """
    Sum over time steps of direction NLL plus speed NLL.

    Steps after the first EOS target are masked out.

    Args:
        logits (np.ndarray): (N, 34) logits
        targets (EncodedTracing | np.ndarray): (N, 34) target frames

    Raises:
        DimensionError: If lengths differ
    """
    targets = _frames_of(targets)
    if logits.shape != targets.shape:
        raise DimensionError(f"Logits {logits.shape} and targets {targets.shape} are not aligned")
    value, _, _ = _masked_nll(logits, targets)
    return value


def batch_gradients(model, examples, train=False, rng=None):
    """
    Summed loss and parameter gradients over a batch of examples.

    Returns:
        tuple: (loss sum, number of scored steps, grads dict)
    """
    inputs, targets = _pack([e.tracing for e in examples])
    frame0, bias_caches = _bias_forward(model, _bias_matrix(model, [e.bias for e in examples]))
    logits, caches = _forward(model, frame0, inputs, train=train, rng=rng)
    value, dlogits, n_steps = _masked_nll(logits, targets)
    grads = _backward(model, dlogits, caches, bias_caches)
    return value, n_steps, grads


def batch_loss(model, examples):
    """Summed loss and scored step count without gradients or dropout."""
    inputs, targets = _pack([e.tracing for e in examples])
    frame0, _ = _bias_forward(model, _bias_matrix(model, [e.bias for e in examples]))
    logits, _ = _forward(model, frame0, inputs)
    value, _, n_steps = _masked_nll(logits, targets)
    return value, n_steps


def _check_examples(model, examples):
    for example in examples:
        kind = getattr(example.bias, "kind", None)
        if kind != model.bias_kind:
            raise ModelError(f"Sample '{example.tracing.sample_id}' carries a '{kind}' bias, model expects '{model.bias_kind}'")
        if np.asarray(example.bias.values).size != model.bias_dim:
            raise ModelError(
                f"Sample '{example.tracing.sample_id}' bias has dimension {np.asarray(example.bias.values).size}, "
                f"model expects {model.bias_dim}"
            )


def evaluate_loss(model, examples, batch_size=64):
    """Mean per-sequence loss over `examples` without dropout."""
    total = 0.0
    for start in range(0, len(examples), batch_size):
        value, _ = batch_loss(model, examples[start:start + batch_size])
        total += value
    return total / max(len(examples), 1)


def train(model, train_set, epochs, batch_size=None, validation_set=None, checkpoint_path=None):
    """
    Fit the model with Adam on teacher-forced NLL.

    Each epoch shuffles the training set with the model's seeded stream,
    runs padded mini-batches with dropout active and averages the gradients
    over the sequences of a batch. Validation loss is computed without
    dropout. When `checkpoint_path` is given the checkpoint is rewritten
    after every epoch.

    Args:
        model (GeneratorModel): Model to update in place
        train_set (list): TrainingExample items
        epochs (int): Number of passes
        batch_size (int, optional): Defaults to the model config
        validation_set (list, optional): TrainingExample items
        checkpoint_path (str, optional): Checkpoint file

    Returns:
        TrainReport

    Raises:
        ModelError: If an example's bias kind or width differs from the model's
    """
    if not train_set:
        raise ModelError("Training set is empty")
    _check_examples(model, train_set)
    if validation_set:
        _check_examples(model, validation_set)
    batch_size = batch_size or model.config.batch_size
    rng = SeededRng(model.config.seed, stream=(11,))
    report = TrainReport(seed=model.config.seed)

    for epoch in range(epochs):
        started = time.perf_counter()
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        epoch_steps = 0.0
        for start in range(0, len(order), batch_size):
            batch = [train_set[i] for i in order[start:start + batch_size]]
            value, n_steps, grads = batch_gradients(model, batch, train=True, rng=rng)
            for name, g in grads.items():
                model.store.accumulate(name, g / len(batch))
            adam_step(model.store, model.config.lr)
            epoch_loss += value
            epoch_steps += n_steps
        report.train_loss.append(epoch_loss / len(train_set))
        report.train_step_loss.append(epoch_loss / max(epoch_steps, 1.0))
        if validation_set:
            report.validation_loss.append(evaluate_loss(model, validation_set))
        report.wall_time.append(time.perf_counter() - started)
        log.info(
            "epoch %d/%d train loss %.4f (%.4f per step)%s",
            epoch + 1, epochs, report.train_loss[-1], report.train_step_loss[-1],
            f" validation loss {report.validation_loss[-1]:.4f}" if validation_set else "",
        )
        if checkpoint_path:
            save_checkpoint(model, checkpoint_path)
    return report


def _draw(logits, temperature, rng, allow_eos=True):
    if not allow_eos:
        logits = logits[:LEVELS]
    if temperature < GREEDY_TEMPERATURE:
        return int(np.argmax(logits))
    return int(rng.categorical(softmax(logits / temperature)))


def sample(model, bias, temperature, rng):
    """
    Generate one tracing by temperature sampling.

    Frame 0 is the projected bias; each step samples a direction and a speed
    code from the two tempered softmaxes and feeds the resulting one-hot frame
    back. Generation stops when the direction block samples EOS or after
    max_gen_len frames, then a terminal EOS frame is appended. A speed EOS
    drawn while the direction continues is redrawn among the 16 speed levels.
    Temperatures below 1e-6 decode greedily.

    Returns:
        EncodedTracing
    """
    if temperature <= 0:
        raise ConfigError(f"temperature must be positive, got {temperature}")
    frame = bias_project(bias, model).reshape(1, FRAME_DIM)
    state = model.initial_state()
    direction, speed = [], []
    for _ in range(model.config.max_gen_len):
        logits, state = model.step(frame, state)
        logits = logits[0]
        d = _draw(logits[:BLOCK], temperature, rng)
        if d == EOS:
            break
        s = _draw(logits[BLOCK:], temperature, rng)
        if s == EOS:
            s = _draw(logits[BLOCK:], temperature, rng, allow_eos=False)
        direction.append(d)
        speed.append(s)
        frame = np.zeros((1, FRAME_DIM))
        frame[0, d] = 1.0
        frame[0, BLOCK + s] = 1.0
    provenance = getattr(bias, "provenance", None) or {}
    return EncodedTracing.from_codes(
        direction, speed,
        sample_id=provenance.get("sample_id", ""),
        letter=provenance.get("letter", ""),
        writer_id=provenance.get("writer_id", ""),
    )


def save_checkpoint(model, path):
    """Write config, bias kind, quantizer, parameters and Adam state to a tensor archive."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "bias_kind": model.bias_kind,
        "bias_dim": model.bias_dim,
        "quantizer": model.quantizer.to_dict(),
        "corpus_seed": model.corpus_seed,
        "step_count": model.store.step_count,
    }
    write_tensor_archive(path, meta, model.store.to_tensors())


def load_checkpoint(path):
    """
    Raises:
        FormatError: If the archive is not a generator checkpoint of a known version
    """
    meta, tensors = read_tensor_archive(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path} is not a generator checkpoint")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"Unsupported generator checkpoint version {meta.get('version')}")
    store = ParamStore.from_tensors(tensors, step_count=meta["step_count"])
    return GeneratorModel(
        GeneratorConfig.from_dict(meta["config"]),
        meta["bias_kind"],
        meta["bias_dim"],
        QuantizerSpec.from_dict(meta["quantizer"]),
        corpus_seed=meta.get("corpus_seed"),
        store=store,
    )
