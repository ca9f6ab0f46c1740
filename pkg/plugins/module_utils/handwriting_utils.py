# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)


from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import contextlib
import hashlib
import json
import logging
import os
import shutil
import struct
import tempfile

import numpy as np


COLLECTION_VERSION = "1.0.0"

ARCHIVE_MAGIC = b"HWTA"
ARCHIVE_VERSION = 1


class HandwritingError(Exception):
    """Base exception for handwriting benchmark operations"""
    category = "unexpected"


class DimensionError(HandwritingError, ValueError):
    """Shape mismatch between tensors"""
    category = "dimension"


class ClassIndexError(HandwritingError, IndexError):
    """Class target outside the class range"""
    category = "index"


class TrajectoryError(HandwritingError):
    """Invalid pen trajectory"""
    category = "input"


class TracingTooLongError(TrajectoryError):
    """Tracing has more displacement steps than a frame sequence can hold"""
    pass


class FormatError(HandwritingError):
    """Malformed frame, archive, table or record"""
    category = "format"


class QuantizerError(HandwritingError):
    """Speed sample cannot be quantized"""
    category = "input"


class DatasetError(HandwritingError):
    """Dataset related errors"""
    category = "input"


class ModelError(HandwritingError):
    """Model state or compatibility errors"""
    category = "model"


class EvaluationError(HandwritingError):
    """Metric computation errors"""
    category = "evaluation"


class ConfigError(HandwritingError):
    """Invalid run configuration"""
    category = "config"


def get_logger(name):
    """Return a logger below the collection namespace."""
    if not name.startswith("ansible_collections"):
        name = f"ansible_collections.cloudkrafter.handwriting.{name}"
    return logging.getLogger(name)


class AnsibleModuleLogHandler(logging.Handler):
    """
    Forwards library log records to an AnsibleModule.

    Warnings end up in the module result under 'warnings', everything below
    goes to the module debug log.
    """

    def __init__(self, module, level=logging.DEBUG):
        super(AnsibleModuleLogHandler, self).__init__(level)
        self.module = module

    def emit(self, record):
        msg = self.format(record)
        if record.levelno >= logging.WARNING:
            self.module.warn(msg)
        else:
            self.module.debug(msg)


@contextlib.contextmanager
def module_logging(module):
    """Attach an AnsibleModuleLogHandler to the collection logger for the duration of a block."""
    logger = logging.getLogger("ansible_collections.cloudkrafter.handwriting")
    handler = AnsibleModuleLogHandler(module)
    previous_level = logger.level
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG)
    try:
        yield logger
    finally:
        logger.removeHandler(handler)
        logger.setLevel(previous_level)


class SeededRng:
    """
    Counter-based random stream.

    Wraps a numpy Generator driven by the Philox bit generator, so identical
    seeds and identical call sequences give identical values on every platform.

    Args:
        seed (int): Unsigned 64-bit seed
        stream (tuple): Optional spawn key selecting an independent stream
    """

    def __init__(self, seed, stream=()):
        if seed is None or int(seed) < 0 or int(seed) >= 2 ** 64:
            raise ConfigError(f"Seed must be an unsigned 64-bit integer, got {seed!r}")
        self.seed = int(seed)
        self.stream = tuple(int(s) for s in stream)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self._generator = np.random.Generator(np.random.Philox(sequence))

    def spawn(self, index):
        """Return an independent stream, e.g. one per sampling worker."""
        return SeededRng(self.seed, self.stream + (int(index),))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self._generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self._generator.integers(low, high, size)

    def permutation(self, n):
        return self._generator.permutation(n)

    def categorical(self, probabilities):
        """
        Draw one index per row of a probability table.

        Args:
            probabilities (np.ndarray): (..., C) rows summing to one

        Returns:
            np.ndarray: integer indices with shape probabilities.shape[:-1]
        """
        probabilities = np.asarray(probabilities, dtype=np.float64)
        cumulative = np.cumsum(probabilities, axis=-1)
        draws = self._generator.uniform(0.0, 1.0, size=probabilities.shape[:-1] + (1,))
        draws = draws * cumulative[..., -1:]
        index = (cumulative <= draws).sum(axis=-1)
        return np.minimum(index, probabilities.shape[-1] - 1)

    def bernoulli_mask(self, keep, size):
        return (self._generator.uniform(0.0, 1.0, size) < keep).astype(np.float64)


def merge_dict(source, destination):
    """
    Recursively merge `source` dictionary into `destination`.
    """
    for key, value in source.items():
        if isinstance(value, dict) and key in destination and isinstance(destination[key], dict):
            merge_dict(value, destination[key])
        else:
            destination[key] = value
    return destination


def file_digest(path):
    """Return the sha256 hex digest of a file."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_tensor_archive(path, meta, tensors):
    """
    Write named float64 tensors and a JSON header to a binary archive.

    Layout (all integers little-endian):
        4 bytes   magic 'HWTA'
        uint16    archive version
        uint32    header length in bytes
        header    UTF-8 JSON, sorted keys: {"meta": ..., "tensors": [{name, shape, offset, count}]}
        payload   float64 little-endian values, tensors in sorted name order

    The same inputs always produce the same bytes.

    Args:
        path (str): Destination file
        meta (dict): JSON-serializable metadata
        tensors (dict): name -> np.ndarray
    """
    index = []
    payload = []
    offset = 0
    for name in sorted(tensors):
        value = np.asarray(tensors[name], dtype="<f8")
        index.append({"name": name, "shape": list(value.shape), "offset": offset, "count": int(value.size)})
        payload.append(value.tobytes(order="C"))
        offset += value.size
    header = json.dumps({"meta": meta, "tensors": index}, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(ARCHIVE_MAGIC)
        f.write(struct.pack("<HI", ARCHIVE_VERSION, len(header)))
        f.write(header)
        for chunk in payload:
            f.write(chunk)


def read_tensor_archive(path):
    """
    Read an archive written by write_tensor_archive.

    Returns:
        tuple: (meta, tensors) with tensors as a dict of float64 arrays

    Raises:
        FormatError: If the file is not a valid archive
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != ARCHIVE_MAGIC or len(blob) < 10:
        raise FormatError(f"Not a tensor archive: {path}")
    version, header_length = struct.unpack("<HI", blob[4:10])
    if version != ARCHIVE_VERSION:
        raise FormatError(f"Unsupported archive version {version} in {path}")
    try:
        header = json.loads(blob[10:10 + header_length].decode("utf-8"))
    except ValueError as e:
        raise FormatError(f"Corrupt archive header in {path}: {e}")
    data = np.frombuffer(blob[10 + header_length:], dtype="<f8")
    tensors = {}
    for entry in header["tensors"]:
        start, count = entry["offset"], entry["count"]
        if start + count > data.size:
            raise FormatError(f"Truncated archive {path}: tensor {entry['name']}")
        tensors[entry["name"]] = data[start:start + count].astype(np.float64).reshape(entry["shape"])
    return header["meta"], tensors


@contextlib.contextmanager
def staged_output(directory):
    """
    Stage writes for an output directory.

    Yields a temporary directory next to `directory`. On success the staged
    tree replaces `directory`; on failure it is removed and `directory` is
    left untouched.
    """
    directory = os.path.abspath(directory)
    parent = os.path.dirname(directory)
    os.makedirs(parent, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".staging-", dir=parent)
    try:
        yield staging
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if os.path.exists(directory):
        shutil.rmtree(directory)
    os.replace(staging, directory)


def error_details(exc):
    """Machine-readable error block for a module failure."""
    return {"type": getattr(exc, "category", "unexpected"), "details": type(exc).__name__}
