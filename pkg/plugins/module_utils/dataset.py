# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.archetypes import (
    ALPHABET,
    letter_path,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.codec import (
    DEFAULT_DT,
    MAX_STEPS,
    Trajectory,
)
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    ConfigError,
    DatasetError,
    SeededRng,
    TrajectoryError,
    get_logger,
)


RASTER_SIZE = 28
RASTER_MARGIN = 2
SPLITS = ("train", "validation", "test")
CORNERS = ("top_left", "top_right", "bottom_left", "bottom_right")
_CORNER_POSITIONS = {
    "top_left": (0.0, 1.0),
    "top_right": (1.0, 1.0),
    "bottom_left": (0.0, 0.0),
    "bottom_right": (1.0, 0.0),
}

# letter height in pixels and nominal pen speed before per-writer scaling
BASE_HEIGHT = 60.0
BASE_SPEED = 450.0
MIN_DURATION = 0.35
MAX_DURATION = 0.95

RECORD_SCHEMA = {
    "type": "object",
    "required": ["writer_id", "letter", "points"],
    "properties": {
        "writer_id": {"type": "string", "minLength": 1},
        "letter": {"type": "string", "minLength": 1, "maxLength": 1},
        "sample_id": {"type": "string"},
        "points": {
            "type": "array",
            "minItems": 2,
            "items": {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}},
        },
    },
}

log = get_logger(__name__)


@dataclass
class LetterSample:
    trajectory: Trajectory
    raster: np.ndarray = None
    split_tag: str = None

    @property
    def sample_id(self):
        return self.trajectory.sample_id

    @property
    def letter(self):
        return self.trajectory.letter

    @property
    def writer_id(self):
        return self.trajectory.writer_id


@dataclass
class LoadReport:
    """Outcome of a JSONL load: accepted count and (line number, reason) rejections."""
    accepted: int = 0
    rejected: list = field(default_factory=list)

    def to_dict(self):
        return {"accepted": self.accepted, "rejected": [{"line": n, "reason": r} for n, r in self.rejected]}


@dataclass
class CleanReport:
    kept: int = 0
    dropped: dict = field(default_factory=lambda: {"too_many_steps": 0, "too_long": 0})

    def to_dict(self):
        return {"kept": self.kept, "dropped": dict(self.dropped)}


@dataclass(frozen=True)
class SynthStyle:
    """Systematic per-writer variation of the synthetic corpus."""
    writer_id: str
    slant: float
    scale: float
    speed_gain: float
    stroke_order_flip: dict
    jitter_sigma: float
    start_corner: str


def load_jsonl(path, alphabet=None, writers=None):
    """
    Read letter samples from a JSONL file.

    Each non-blank line holds {"writer_id": str, "letter": str, "points": [[x, y, t], ...]}
    and optionally "sample_id". Invalid records are skipped and reported with
    their line number; accepted samples keep file order.

    Args:
        path (str): JSONL file
        alphabet (str, optional): Accepted letters
        writers (iterable, optional): Accepted writer ids

    Returns:
        tuple: (list of LetterSample, LoadReport)
    """
    validator = jsonschema.Draft7Validator(RECORD_SCHEMA)
    writers = set(writers) if writers is not None else None
    samples = []
    report = LoadReport()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except ValueError as e:
                report.rejected.append((line_no, f"invalid JSON: {e}"))
                continue
            error = jsonschema.exceptions.best_match(validator.iter_errors(record))
            if error is not None:
                report.rejected.append((line_no, f"invalid record: {error.message}"))
                continue
            if alphabet is not None and record["letter"] not in alphabet:
                report.rejected.append((line_no, f"letter '{record['letter']}' not in alphabet"))
                continue
            if writers is not None and record["writer_id"] not in writers:
                report.rejected.append((line_no, f"unknown writer '{record['writer_id']}'"))
                continue
            try:
                trajectory = Trajectory(
                    record["points"],
                    writer_id=record["writer_id"],
                    letter=record["letter"],
                    sample_id=record.get("sample_id") or f"line-{line_no}",
                )
            except TrajectoryError as e:
                report.rejected.append((line_no, str(e)))
                continue
            samples.append(LetterSample(trajectory))
    report.accepted = len(samples)
    for line_no, reason in report.rejected:
        log.warning("%s line %d rejected: %s", path, line_no, reason)
    return samples, report


def save_jsonl(samples, path):
    """Write samples in the ingestion format, one record per line."""
    with open(path, "w", encoding="utf-8") as f:
        for sample in samples:
            record = {
                "sample_id": sample.sample_id,
                "writer_id": sample.writer_id,
                "letter": sample.letter,
                "points": sample.trajectory.points.tolist(),
            }
            f.write(json.dumps(record, separators=(",", ":")) + "\n")


def clean(samples, max_steps=MAX_STEPS, max_duration=1.0):
    """
    Drop tracings with more than `max_steps` displacements or lasting longer than `max_duration` seconds.

    Returns:
        tuple: (kept samples, CleanReport)
    """
    kept = []
    report = CleanReport()
    for sample in samples:
        if sample.trajectory.steps > max_steps:
            report.dropped["too_many_steps"] += 1
        elif sample.trajectory.duration > max_duration:
            report.dropped["too_long"] += 1
        else:
            kept.append(sample)
    report.kept = len(kept)
    return kept, report


def _writer_stream(writer_id):
    return int.from_bytes(hashlib.sha256(writer_id.encode("utf-8")).digest()[:4], "little")


def writer_style(seed, writer_id):
    """
    Deterministic style of one synthetic writer.

    The preferred start corner decides, per letter, whether the stroke order
    is reversed: the path is flipped when its far end lies closer to that corner.
    """
    rng = SeededRng(seed, stream=(1, _writer_stream(writer_id)))
    slant = float(rng.uniform(-20.0, 20.0))
    scale = float(rng.uniform(0.8, 1.2))
    speed_gain = float(rng.uniform(0.7, 1.3))
    jitter_sigma = float(rng.uniform(0.2, 0.8))
    start_corner = CORNERS[int(rng.integers(0, len(CORNERS)))]
    corner = np.array(_CORNER_POSITIONS[start_corner])
    flips = {}
    for letter in ALPHABET:
        path = letter_path(letter)
        flips[letter] = bool(np.linalg.norm(path[-1] - corner) < np.linalg.norm(path[0] - corner))
    return SynthStyle(writer_id, slant, scale, speed_gain, flips, jitter_sigma, start_corner)


def _min_jerk(tau):
    return 10.0 * tau ** 3 - 15.0 * tau ** 4 + 6.0 * tau ** 5


def _render_sample(letter, style, rng, sample_id):
    path = letter_path(letter)
    if style.stroke_order_flip[letter]:
        path = path[::-1]
    height = BASE_HEIGHT * style.scale
    shear = np.tan(np.radians(style.slant))
    xy = np.column_stack([(path[:, 0] + path[:, 1] * shear) * height, path[:, 1] * height])

    seg = np.hypot(*np.diff(xy, axis=0).T)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    length = arc[-1]
    duration = length / (BASE_SPEED * style.speed_gain) * float(rng.uniform(0.95, 1.05))
    duration = min(max(duration, MIN_DURATION), MAX_DURATION)

    steps = int(np.floor(duration / DEFAULT_DT + 1e-9))
    t = np.arange(steps + 1) * DEFAULT_DT
    s = _min_jerk(t / t[-1]) * length
    x = np.interp(s, arc, xy[:, 0])
    y = np.interp(s, arc, xy[:, 1])
    jitter = rng.normal(0.0, style.jitter_sigma, size=(steps + 1, 2))
    points = np.column_stack([x + jitter[:, 0], y + jitter[:, 1], t])
    return Trajectory(points, writer_id=style.writer_id, letter=letter, sample_id=sample_id)


def synth_corpus(alphabet, n_writers, reps_per_writer, seed):
    """
    Synthesize a multi-writer letter corpus.

    Every sample is archetype -> writer shear and scale -> optional stroke
    order flip -> minimum-jerk speed profile sampled at 100 Hz -> Gaussian
    jitter. Writers are generated one after another so the corpus depends
    only on the arguments.

    Returns:
        list of LetterSample

    Raises:
        DatasetError: If the alphabet holds a letter without archetype
    """
    unknown = sorted(set(alphabet) - set(ALPHABET))
    if unknown:
        raise DatasetError(f"No archetype for letter(s): {', '.join(unknown)}")
    samples = []
    for w in range(n_writers):
        writer_id = f"w{w:03d}"
        style = writer_style(seed, writer_id)
        rng = SeededRng(seed, stream=(2, _writer_stream(writer_id)))
        for letter in alphabet:
            for rep in range(reps_per_writer):
                sample_id = f"{writer_id}-{letter}-{rep:02d}"
                samples.append(LetterSample(_render_sample(letter, style, rng, sample_id)))
    return samples


def _segment_distances(pixels, a, b):
    ab = b - a
    denom = (ab * ab).sum(axis=1)
    denom = np.where(denom > 0.0, denom, 1.0)
    ap = pixels[:, None, :] - a[None, :, :]
    t = np.clip((ap * ab[None, :, :]).sum(axis=2) / denom[None, :], 0.0, 1.0)
    closest = a[None, :, :] + t[..., None] * ab[None, :, :]
    return np.sqrt(((pixels[:, None, :] - closest) ** 2).sum(axis=2)).min(axis=1)


def rasterize(traj, size=RASTER_SIZE, margin=RASTER_MARGIN, half_width=1.0):
    """
    Draw a trajectory as an anti-aliased size x size grayscale image in [0, 1].

    The path is scaled uniformly into the bounding box minus `margin` pixels
    and centered; rows run top to bottom. A path without extent becomes a
    centered dot.
    """
    xy = traj.points[:, :2]
    low = xy.min(axis=0)
    extent = xy.max(axis=0) - low
    box = size - 2 * margin
    largest = extent.max()
    if largest > 0.0:
        scale = box / largest
        col = margin + (xy[:, 0] - low[0]) * scale + (box - extent[0] * scale) / 2.0
        row = margin + (low[1] + extent[1] - xy[:, 1]) * scale + (box - extent[1] * scale) / 2.0
        canvas = np.column_stack([col, row])
    else:
        canvas = np.full((1, 2), size / 2.0)
    if canvas.shape[0] == 1:
        canvas = np.vstack([canvas, canvas])

    centers = np.arange(size) + 0.5
    cols, rows = np.meshgrid(centers, centers)
    pixels = np.column_stack([cols.ravel(), rows.ravel()])
    distance = _segment_distances(pixels, canvas[:-1], canvas[1:])
    image = np.clip(half_width + 0.5 - distance, 0.0, 1.0).reshape(size, size)
    peak = image.max()
    return image / peak if peak > 0.0 else image


def split(samples, fractions, seed, stratify_by="letter"):
    """
    Tag samples as train / validation / test.

    Every stratum (letter or writer) is shuffled with the seeded stream and
    cut by `fractions`; validation and test get at least one sample each.
    Samples come back in input order.

    Stratifying by letter puts every letter in every split. Stratifying by
    writer only does so for writers with enough samples; letters that end up
    missing from a split are logged as a warning.

    Raises:
        ConfigError: If fractions are not three values summing to 1
        DatasetError: If a letter has fewer than 3 samples
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0.0:
        raise ConfigError(f"Split fractions must be three non-negative values summing to 1, got {fractions}")
    if stratify_by not in ("letter", "writer"):
        raise ConfigError(f"Cannot stratify by '{stratify_by}'")

    per_letter = {}
    for sample in samples:
        per_letter[sample.letter] = per_letter.get(sample.letter, 0) + 1
    for letter in sorted(per_letter):
        if per_letter[letter] < 3:
            raise DatasetError(f"Letter '{letter}' has {per_letter[letter]} sample(s), at least 3 are needed to split")

    strata = {}
    for index, sample in enumerate(samples):
        key = sample.letter if stratify_by == "letter" else sample.writer_id
        strata.setdefault(key, []).append(index)

    rng = SeededRng(seed, stream=(3,))
    tags = [None] * len(samples)
    for key in sorted(strata):
        members = strata[key]
        order = [members[i] for i in rng.permutation(len(members))]
        n = len(order)
        n_val = max(1, int(round(fractions[1] * n))) if n >= 3 else 0
        n_test = max(1, int(round(fractions[2] * n))) if n >= 3 else 0
        while n - n_val - n_test < 1 and max(n_val, n_test) > 1:
            if n_val >= n_test:
                n_val -= 1
            else:
                n_test -= 1
        n_train = n - n_val - n_test
        for position, index in enumerate(order):
            if position < n_train:
                tags[index] = "train"
            elif position < n_train + n_val:
                tags[index] = "validation"
            else:
                tags[index] = "test"
    if stratify_by == "writer":
        _warn_missing_letters(samples, tags)
    return [dataclasses.replace(sample, split_tag=tag) for sample, tag in zip(samples, tags)]


def _warn_missing_letters(samples, tags):
    letters = {sample.letter for sample in samples}
    for tag in ("train", "validation", "test"):
        missing = letters - {sample.letter for sample, t in zip(samples, tags) if t == tag}
        if missing:
            log.warning("Letters %s are missing from the %s split", ", ".join(sorted(missing)), tag)
