# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)

"""
Conversion between pen trajectories and discrete direction/speed frames.

A frame is a 34-wide vector holding two 17-class one-hot blocks: Freeman
direction code (0..15) plus EOS (16), then speed level (0..15) plus EOS.
"""

from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


from dataclasses import dataclass, field

import numpy as np

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    FormatError,
    QuantizerError,
    TracingTooLongError,
    TrajectoryError,
    get_logger,
)


LEVELS = 16
EOS = 16
BLOCK = LEVELS + 1
FRAME_DIM = 2 * BLOCK
MAX_STEPS = 99
MAX_FRAMES = MAX_STEPS + 1
SECTOR_DEGREES = 360.0 / LEVELS
DEFAULT_DT = 0.01
QUANTIZER_RECORD_VERSION = 1

log = get_logger(__name__)


@dataclass
class Trajectory:
    """
    Raw pen path of one isolated letter.

    Coordinates are pixels with y pointing up; t is in seconds.
    """
    points: np.ndarray
    writer_id: str = ""
    letter: str = ""
    sample_id: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise TrajectoryError(f"Trajectory points must be (x, y, t) triples, got shape {self.points.shape}")
        if self.points.shape[0] < 2:
            raise TrajectoryError("Trajectory needs at least 2 points")
        if not np.all(np.isfinite(self.points)):
            raise TrajectoryError("Trajectory contains non-finite values")
        if np.any(np.diff(self.points[:, 2]) <= 0):
            raise TrajectoryError("non-monotonic timestamp")

    @property
    def duration(self):
        return float(self.points[-1, 2] - self.points[0, 2])

    @property
    def steps(self):
        return self.points.shape[0] - 1


@dataclass(frozen=True)
class QuantizerSpec:
    """
    Speed binning fitted on training speeds.

    Bin i covers [edges[i - 1], edges[i]); the first bin starts at 0 and the
    last one is open ended.
    """
    speed_bin_edges: tuple
    speed_bin_centers: tuple
    direction_levels: int = LEVELS

    def __post_init__(self):
        edges = np.asarray(self.speed_bin_edges, dtype=np.float64)
        centers = np.asarray(self.speed_bin_centers, dtype=np.float64)
        if edges.shape != (LEVELS - 1,) or centers.shape != (LEVELS,):
            raise QuantizerError(f"Quantizer needs {LEVELS - 1} edges and {LEVELS} centers")
        if np.any(np.diff(edges) <= 0):
            raise QuantizerError("Speed bin edges must be strictly ascending")
        if self.direction_levels != LEVELS:
            raise QuantizerError(f"Only {LEVELS} direction levels are supported")

    @property
    def edges(self):
        return np.asarray(self.speed_bin_edges, dtype=np.float64)

    @property
    def centers(self):
        return np.asarray(self.speed_bin_centers, dtype=np.float64)

    def speed_code(self, speed):
        """Return the speed level(s) for one or more speeds."""
        return np.searchsorted(self.edges, speed, side="right")

    def bin_bounds(self, code):
        """Return the (low, high) bounds of a speed bin; the last bin is unbounded."""
        edges = self.edges
        low = 0.0 if code == 0 else edges[code - 1]
        high = np.inf if code == LEVELS - 1 else edges[code]
        return float(low), float(high)

    def to_record(self):
        """Render the standalone text record."""
        lines = [
            f"handwriting-quantizer {QUANTIZER_RECORD_VERSION}",
            f"direction_levels {self.direction_levels}",
            "speed_edges " + " ".join(repr(float(v)) for v in self.speed_bin_edges),
            "speed_centers " + " ".join(repr(float(v)) for v in self.speed_bin_centers),
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_record(cls, text):
        """
        Parse a record produced by to_record.

        Raises:
            FormatError: If the record is malformed or of another version
        """
        fields = {}
        for line in text.strip().splitlines():
            key, _, value = line.partition(" ")
            fields[key] = value.split()
        try:
            if fields["handwriting-quantizer"] != [str(QUANTIZER_RECORD_VERSION)]:
                raise FormatError(f"Unsupported quantizer record version {fields['handwriting-quantizer']}")
            return cls(
                speed_bin_edges=tuple(float(v) for v in fields["speed_edges"]),
                speed_bin_centers=tuple(float(v) for v in fields["speed_centers"]),
                direction_levels=int(fields["direction_levels"][0]),
            )
        except (KeyError, IndexError, ValueError) as e:
            raise FormatError(f"Malformed quantizer record: {e}")

    def to_dict(self):
        return {
            "version": QUANTIZER_RECORD_VERSION,
            "direction_levels": self.direction_levels,
            "speed_bin_edges": [float(v) for v in self.speed_bin_edges],
            "speed_bin_centers": [float(v) for v in self.speed_bin_centers],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            speed_bin_edges=tuple(data["speed_bin_edges"]),
            speed_bin_centers=tuple(data["speed_bin_centers"]),
            direction_levels=int(data["direction_levels"]),
        )


@dataclass
class EncodedTracing:
    """
    Sequence of dual one-hot frames ending with a single EOS frame.
    """
    frames: np.ndarray
    sample_id: str = ""
    letter: str = ""
    writer_id: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        validate_frames(self.frames)

    @classmethod
    def from_codes(cls, direction, speed, **kwargs):
        """
        Build a tracing from content codes; the terminal EOS frame is appended.
        """
        direction = np.asarray(direction, dtype=np.int64)
        speed = np.asarray(speed, dtype=np.int64)
        if direction.shape != speed.shape or direction.ndim != 1:
            raise FormatError(f"Direction codes {direction.shape} and speed codes {speed.shape} must be equal length vectors")
        if np.any((direction < 0) | (direction >= LEVELS)) or np.any((speed < 0) | (speed >= LEVELS)):
            raise FormatError("Content codes must lie in 0..15")
        if direction.size > MAX_STEPS:
            raise TracingTooLongError(f"Tracing has {direction.size} steps, at most {MAX_STEPS} are allowed")
        n = direction.size + 1
        frames = np.zeros((n, FRAME_DIM))
        rows = np.arange(n - 1)
        frames[rows, direction] = 1.0
        frames[rows, BLOCK + speed] = 1.0
        frames[-1, EOS] = 1.0
        frames[-1, BLOCK + EOS] = 1.0
        return cls(frames, **kwargs)

    def __len__(self):
        return self.frames.shape[0]

    @property
    def direction_codes(self):
        """Direction class per frame, EOS included."""
        return self.frames[:, :BLOCK].argmax(axis=1)

    @property
    def speed_codes(self):
        return self.frames[:, BLOCK:].argmax(axis=1)

    @property
    def content_length(self):
        """Number of frames before EOS."""
        return len(self) - 1


def validate_frames(frames):
    """
    Check the dual one-hot layout of a frame matrix.

    Raises:
        FormatError: On a malformed frame or misplaced EOS
    """
    if frames.ndim != 2 or frames.shape[1] != FRAME_DIM or frames.shape[0] < 1:
        raise FormatError(f"Frames must be shaped (N, {FRAME_DIM}), got {frames.shape}")
    if frames.shape[0] > MAX_FRAMES:
        raise TracingTooLongError(f"Tracing has {frames.shape[0]} frames, at most {MAX_FRAMES} are allowed")
    if not np.all((frames == 0.0) | (frames == 1.0)):
        raise FormatError("Frames must be 0/1 valued")
    for name, block in (("direction", frames[:, :BLOCK]), ("speed", frames[:, BLOCK:])):
        hot = block.sum(axis=1)
        bad = np.flatnonzero(hot != 1)
        if bad.size:
            raise FormatError(f"Frame {int(bad[0])} has {int(hot[bad[0]])} hot bits in the {name} block")
        eos = np.flatnonzero(block[:, EOS] == 1.0)
        if eos.tolist() != [frames.shape[0] - 1]:
            raise FormatError(f"EOS must appear exactly once, on the final frame, in the {name} block")


def displacements(traj):
    """
    Direction and speed of every displacement between consecutive points.

    A point repeating the previous position has no direction; it is merged
    into the next displacement (the elapsed time carries over) and a warning
    is logged.

    Args:
        traj (Trajectory): Pen path

    Returns:
        np.ndarray: (steps, 2) array of (angle in [0, 360) degrees, speed in pixels/second)
    """
    xy = traj.points[:, :2]
    keep = np.ones(xy.shape[0], dtype=bool)
    keep[1:] = np.any(np.diff(xy, axis=0) != 0.0, axis=1)
    dropped = int((~keep).sum())
    if dropped:
        log.warning("Dropped %d duplicate point(s) from sample '%s'", dropped, traj.sample_id or traj.letter)
    points = traj.points[keep]
    delta = np.diff(points, axis=0)
    angle = np.degrees(np.arctan2(delta[:, 1], delta[:, 0])) % 360.0
    angle[angle >= 360.0] -= 360.0
    speed = np.hypot(delta[:, 0], delta[:, 1]) / delta[:, 2]
    return np.column_stack([angle, speed])


def freeman_encode(angle):
    """
    Freeman code of one or more angles (degrees in [0, 360)).

    Sixteen sectors of 22.5 degrees centered on multiples of 22.5; code k
    covers [22.5 k - 11.25, 22.5 k + 11.25).
    """
    code = np.floor(((np.asarray(angle, dtype=np.float64) + SECTOR_DEGREES / 2.0) % 360.0) / SECTOR_DEGREES).astype(np.int64)
    code = code % LEVELS
    return int(code) if code.ndim == 0 else code


def fit_speed_quantizer(speeds, levels=LEVELS):
    """
    Fit equal-mass speed bins.

    Edges sit at the k/levels quantiles (k = 1..levels-1); each center is the
    median of the training speeds falling in its bin.

    A decoded speed is the center of its bin, so its error is at most
    max(center - low, high - center). That is half the bin width only when the
    median sits at the bin midpoint. The last bin has no upper edge and its
    error is unbounded above.

    Args:
        speeds (array-like): Training speeds in pixels/second

    Returns:
        QuantizerSpec

    Raises:
        QuantizerError: If there are fewer distinct speeds than levels
    """
    speeds = np.sort(np.asarray(speeds, dtype=np.float64).ravel())
    if np.unique(speeds).size < levels:
        raise QuantizerError(f"Need at least {levels} distinct speeds to fit {levels} bins, got {np.unique(speeds).size}")
    edges = np.quantile(speeds, np.arange(1, levels) / levels)
    for i in range(1, edges.size):
        if edges[i] <= edges[i - 1]:
            edges[i] = np.nextafter(edges[i - 1], np.inf)

    codes = np.searchsorted(edges, speeds, side="right")
    centers = np.empty(levels)
    for i in range(levels):
        members = speeds[codes == i]
        if members.size:
            centers[i] = np.median(members)
        elif i == 0:
            centers[i] = edges[0] / 2.0
        elif i == levels - 1:
            centers[i] = edges[-1]
        else:
            centers[i] = (edges[i - 1] + edges[i]) / 2.0
    return QuantizerSpec(tuple(float(e) for e in edges), tuple(float(c) for c in centers), levels)


def encode_tracing(traj, spec):
    """
    Encode a trajectory as frames: one per displacement plus a terminal EOS frame.

    Raises:
        TracingTooLongError: If the trajectory has more than 99 displacement steps
    """
    steps = displacements(traj)
    if steps.shape[0] > MAX_STEPS:
        raise TracingTooLongError(
            f"Sample '{traj.sample_id or traj.letter}' has {steps.shape[0]} steps, at most {MAX_STEPS} are allowed"
        )
    return EncodedTracing.from_codes(
        freeman_encode(steps[:, 0]) if steps.size else np.zeros(0, dtype=np.int64),
        spec.speed_code(steps[:, 1]) if steps.size else np.zeros(0, dtype=np.int64),
        sample_id=traj.sample_id,
        letter=traj.letter,
        writer_id=traj.writer_id,
    )


def decode_tracing(enc, spec, start=(0.0, 0.0), dt=DEFAULT_DT):
    """
    Rebuild a trajectory from frames.

    Every content frame advances by centers[speed] * dt along its sector
    center direction (code * 22.5 degrees); decoding stops at EOS.

    Args:
        enc (EncodedTracing | np.ndarray): Tracing or raw frame matrix
        spec (QuantizerSpec): Quantizer used for encoding
        start (tuple): Start position (x, y)
        dt (float): Seconds per frame

    Returns:
        Trajectory

    Raises:
        FormatError: If a frame is malformed
        TrajectoryError: If the tracing has no content frames
    """
    if not isinstance(enc, EncodedTracing):
        enc = EncodedTracing(np.asarray(enc, dtype=np.float64))
    direction = enc.direction_codes[:-1]
    speed = enc.speed_codes[:-1]
    if direction.size == 0:
        raise TrajectoryError("Tracing has no content frames to decode")
    angle = np.radians(direction * SECTOR_DEGREES)
    step = spec.centers[speed] * dt
    points = np.zeros((direction.size + 1, 3))
    points[0, :2] = start
    points[1:, 0] = start[0] + np.cumsum(step * np.cos(angle))
    points[1:, 1] = start[1] + np.cumsum(step * np.sin(angle))
    points[:, 2] = np.arange(direction.size + 1) * dt
    return Trajectory(points, writer_id=enc.writer_id, letter=enc.letter, sample_id=enc.sample_id)
