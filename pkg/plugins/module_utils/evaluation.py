# -*- coding: utf-8 -*-
#
# Copyright: (c) 2025, Brian Veltman <info@cloudkrafter.org>
# GNU General Public License v3.0+ (see https://www.gnu.org/licenses/gpl-3.0.txt)

"""
Scoring of generated tracings against their references.

BLEU is computed per modality (direction codes and speed codes separately)
at corpus level from clipped n-gram counts. Sequence lengths before EOS are
compared with a Wilcoxon signed-rank test and a Pearson correlation.
"""

from __future__ import (absolute_import, division, print_function)
__metaclass__ = type


import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.codec import LEVELS
from ansible_collections.cloudkrafter.handwriting.plugins.module_utils.handwriting_utils import (
    ConfigError,
    EvaluationError,
    get_logger,
)


MODALITIES = ("direction", "speed")
BREVITY_MODES = ("standard", "as_printed")
MAX_ORDER = 3
EXACT_WILCOXON_LIMIT = 20
MIN_PAIRS = 5
REPORT_FORMATS = ("text", "csv", "jsonl")
CSV_COLUMNS = ("model", "modality", "b1", "b2", "b3", "pearson_r", "pearson_p", "wilcoxon_w", "wilcoxon_p", "n")

# Published full-scale results: BLEU x100 per modality, then Pearson r and p.
PUBLISHED = {
    "letter": {"speed": (49.7, 37.3, 24.2), "direction": (47.4, 36.6, 26.8), "pearson": (0.38, 0.84)},
    "classifier": {"speed": (50.9, 38.2, 24.6), "direction": (48.5, 37.9, 28.1), "pearson": (0.32, 0.62)},
    "autoencoder": {"speed": (51.9, 37.9, 23.1), "direction": (46.4, 35.0, 24.5), "pearson": (0.25, 0.29)},
    "letter_writer": {"speed": (51.5, 41.4, 25.1), "direction": (56.7, 39.4, 28.3), "pearson": (0.55, 0.04)},
}

log = get_logger(__name__)


def _check_sequence(seq, role, index):
    seq = tuple(int(c) for c in seq)
    if not seq:
        raise EvaluationError(f"Pair {index}: {role} sequence is empty")
    if any(c < 0 or c >= LEVELS for c in seq):
        raise EvaluationError(f"Pair {index}: {role} codes must lie in 0..{LEVELS - 1}")
    return seq


@dataclass
class PairedCorpus:
    """
    Generated/reference code sequences per modality, EOS excluded.

    Attributes:
        pairs (dict): modality -> list of (generated tuple, reference tuple)
        n_empty (int): Generated tracings that were EOS-only and left out
    """
    pairs: dict
    n_empty: int = 0

    def __post_init__(self):
        checked = {}
        for modality in MODALITIES:
            rows = self.pairs.get(modality, [])
            checked[modality] = [
                (_check_sequence(g, "generated", i), _check_sequence(r, "reference", i))
                for i, (g, r) in enumerate(rows)
            ]
        if not checked["direction"]:
            raise EvaluationError("Corpus holds no pairs")
        self.pairs = checked

    def __len__(self):
        return len(self.pairs["direction"])

    def modality(self, name):
        return self.pairs[name]

    @classmethod
    def from_tracings(cls, generated, references):
        """
        Pair EncodedTracings position by position.

        EOS-only generated tracings cannot be scored; they are skipped with a
        warning and counted in n_empty.
        """
        if len(generated) != len(references):
            raise EvaluationError(f"{len(generated)} generated tracings for {len(references)} references")
        pairs = {m: [] for m in MODALITIES}
        empty = 0
        for gen, ref in zip(generated, references):
            if gen.content_length == 0:
                empty += 1
                continue
            pairs["direction"].append((gen.direction_codes[:-1], ref.direction_codes[:-1]))
            pairs["speed"].append((gen.speed_codes[:-1], ref.speed_codes[:-1]))
        if empty:
            log.warning("%d generated tracings are EOS-only and excluded from BLEU", empty)
        return cls(pairs, n_empty=empty)


def ngram_counts(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def clipped_counts(pairs, n):
    """
    Returns:
        tuple: (sum of clipped n-gram matches, total generated n-grams)
    """
    matched = 0
    total = 0
    for generated, reference in pairs:
        gen_counts = ngram_counts(generated, n)
        ref_counts = ngram_counts(reference, n)
        matched += sum(min(count, ref_counts[gram]) for gram, count in gen_counts.items())
        total += sum(gen_counts.values())
    return matched, total


def clipped_ngram_precision(pairs, n):
    """
    Corpus-level clipped n-gram precision of one modality.

    Args:
        pairs (list): (generated, reference) code sequences
        n (int): n-gram order, at least 1

    Returns:
        float: 0.0 with a warning when no generated sequence holds an n-gram
    """
    if n < 1:
        raise EvaluationError(f"n-gram order must be at least 1, got {n}")
    matched, total = clipped_counts(pairs, n)
    if total == 0:
        log.warning("No generated sequence is long enough for %d-grams; precision is 0", n)
        return 0.0
    return matched / total


def _lengths(pairs):
    generated = sum(len(g) for g, _ in pairs)
    reference = sum(len(r) for _, r in pairs)
    if generated <= 0 or reference <= 0:
        raise EvaluationError("Total generated and reference lengths must be positive")
    return reference, generated


def brevity_factor(pairs, mode="standard"):
    """
    exp(min(0, 1 - L_R / L_G)) over corpus totals. The ``as_printed`` mode
    returns min(0, 1 - L_R / L_G) without the exponential.
    """
    if mode not in BREVITY_MODES:
        raise ConfigError(f"Unknown brevity mode '{mode}'")
    ref_len, gen_len = _lengths(pairs)
    exponent = min(0.0, 1.0 - ref_len / gen_len)
    return exponent if mode == "as_printed" else float(np.exp(exponent))


def bleu(pairs, order, mode="standard"):
    """
    Cumulative BLEU of one modality: brevity x geometric mean of p_1..p_order.

    In ``as_printed`` mode the brevity term multiplies the plain product of
    the precisions. Any zero precision gives 0 without smoothing.
    """
    if order not in range(1, MAX_ORDER + 1):
        raise EvaluationError(f"BLEU order must be 1..{MAX_ORDER}, got {order}")
    precisions = [clipped_ngram_precision(pairs, n) for n in range(1, order + 1)]
    return _combine(precisions, brevity_factor(pairs, mode), mode)


def _combine(precisions, brevity, mode):
    if min(precisions) == 0.0:
        return 0.0
    if mode == "as_printed":
        return brevity * float(np.prod(precisions))
    return brevity * float(np.exp(np.mean(np.log(precisions))))


@dataclass
class ModalityScores:
    bleu: tuple
    precisions: tuple
    brevity: float
    reference_length: int
    generated_length: int
    n_pairs: int
    zero_precision: tuple = ()
    per_pair: list = field(default_factory=list)


@dataclass
class BleuReport:
    modalities: dict
    mode: str = "standard"
    n_empty: int = 0

    def __getitem__(self, modality):
        return self.modalities[modality]


def _sentence_bleu(pair, mode):
    precisions = []
    for n in range(1, MAX_ORDER + 1):
        matched, total = clipped_counts([pair], n)
        precisions.append(matched / total if total else 0.0)
    brevity = brevity_factor([pair], mode)
    return tuple(_combine(precisions[:n], brevity, mode) for n in range(1, MAX_ORDER + 1))


def bleu_report(corpus, mode="standard", per_pair=False):
    """
    B-1..B-3, raw precisions and brevity for both modalities.

    Args:
        corpus (PairedCorpus): Pairs to score
        mode (str): 'standard' or 'as_printed' brevity
        per_pair (bool): Also score every pair on its own

    Returns:
        BleuReport
    """
    modalities = {}
    for modality in MODALITIES:
        pairs = corpus.modality(modality)
        precisions = tuple(clipped_ngram_precision(pairs, n) for n in range(1, MAX_ORDER + 1))
        brevity = brevity_factor(pairs, mode)
        scores = tuple(_combine(precisions[:n], brevity, mode) for n in range(1, MAX_ORDER + 1))
        zeros = tuple(n for n, p in enumerate(precisions, start=1) if p == 0.0)
        if zeros:
            log.warning("%s: zero clipped precision for n = %s; BLEU from that order on is 0",
                        modality, ", ".join(map(str, zeros)))
        ref_len, gen_len = _lengths(pairs)
        modalities[modality] = ModalityScores(
            bleu=scores,
            precisions=precisions,
            brevity=brevity,
            reference_length=ref_len,
            generated_length=gen_len,
            n_pairs=len(pairs),
            zero_precision=zeros,
            per_pair=[_sentence_bleu(pair, mode) for pair in pairs] if per_pair else [],
        )
    return BleuReport(modalities, mode, corpus.n_empty)


def _exact_wilcoxon_p(doubled_ranks, doubled_w_plus):
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for rank in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[rank:] = counts[:total + 1 - rank]
        counts = counts + shifted
    low = min(doubled_w_plus, total - doubled_w_plus)
    tail = counts[:low + 1].sum() / float(2 ** doubled_ranks.size)
    return min(1.0, 2.0 * tail)


def wilcoxon_signed_rank(x, y):
    """
    Two-sided Wilcoxon signed-rank test on the paired differences y - x.

    Zero differences are dropped and ties get average ranks. Up to 20
    nonzero differences the p-value is exact over all sign assignments;
    beyond that a normal approximation with tie-corrected variance and
    continuity correction is used.

    Returns:
        tuple: (W = min(W+, W-), two-sided p)

    Raises:
        EvaluationError: If x and y differ in length or are empty
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size == 0:
        raise EvaluationError(f"Paired samples must be equal-length vectors, got {x.shape} and {y.shape}")
    diff = y - x
    diff = diff[diff != 0.0]
    n = diff.size
    if n == 0:
        log.warning("All paired differences are zero; Wilcoxon p is 1")
        return 0.0, 1.0
    if n < MIN_PAIRS:
        log.warning("Only %d nonzero paired differences; the Wilcoxon test has little power", n)

    ranks = stats.rankdata(np.abs(diff))
    w_plus = float(ranks[diff > 0].sum())
    w_minus = float(ranks[diff < 0].sum())
    statistic = min(w_plus, w_minus)

    if n <= EXACT_WILCOXON_LIMIT:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        p = _exact_wilcoxon_p(doubled, int(round(2.0 * w_plus)))
    else:
        _, ties = np.unique(np.abs(diff), return_counts=True)
        mean = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(ties ** 3 - ties)) / 48.0
        z = (abs(w_plus - mean) - 0.5) / np.sqrt(var)
        p = min(1.0, 2.0 * float(stats.norm.sf(z)))
    return statistic, p


def pearson(x, y):
    """
    Product-moment correlation with a two-sided t-test p-value.

    Returns:
        tuple: (r, p)

    Raises:
        EvaluationError: On fewer than three pairs or constant input
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise EvaluationError(f"Paired samples must be equal-length vectors, got {x.shape} and {y.shape}")
    n = x.size
    if n < 3:
        raise EvaluationError(f"Pearson correlation needs at least 3 pairs, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise EvaluationError("constant input")
    r = float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        return r, 0.0
    df = n - 2
    t_squared = r * r * df / (1.0 - r * r)
    return r, float(special.betainc(df / 2.0, 0.5, df / (df + t_squared)))


@dataclass
class EosReport:
    pearson_r: float
    pearson_p: float
    wilcoxon_statistic: float
    wilcoxon_p: float
    n_pairs: int


def eos_analysis(generated_lengths, reference_lengths):
    """
    Compare frame counts before EOS of generated and reference tracings.

    When either side has a single length the correlation is undefined;
    pearson_r and pearson_p are then None and a warning is logged.

    Raises:
        EvaluationError: On fewer than five pairs, or from the tests
    """
    generated_lengths = np.asarray(generated_lengths, dtype=np.float64)
    reference_lengths = np.asarray(reference_lengths, dtype=np.float64)
    if generated_lengths.size < MIN_PAIRS:
        raise EvaluationError(f"EOS analysis needs at least {MIN_PAIRS} pairs, got {generated_lengths.size}")
    if np.ptp(generated_lengths) == 0.0 or np.ptp(reference_lengths) == 0.0:
        log.warning("Generated or reference lengths are constant; no Pearson correlation")
        r, r_p = None, None
    else:
        r, r_p = pearson(generated_lengths, reference_lengths)
    w, w_p = wilcoxon_signed_rank(reference_lengths, generated_lengths)
    return EosReport(r, r_p, w, w_p, int(generated_lengths.size))


@dataclass
class ModelResult:
    """Scores of one bias kind."""
    model: str
    bleu: BleuReport
    eos: EosReport


def _fixed(value):
    return "n/a" if value is None else f"{value:.4f}"


def _rows(results, published):
    rows = []
    for result in results:
        for modality in MODALITIES:
            scores = result.bleu[modality]
            rows.append({
                "model": result.model,
                "modality": modality,
                "b1": f"{100 * scores.bleu[0]:.1f}",
                "b2": f"{100 * scores.bleu[1]:.1f}",
                "b3": f"{100 * scores.bleu[2]:.1f}",
                "p1": f"{scores.precisions[0]:.4f}",
                "p2": f"{scores.precisions[1]:.4f}",
                "p3": f"{scores.precisions[2]:.4f}",
                "pearson_r": _fixed(result.eos.pearson_r),
                "pearson_p": _fixed(result.eos.pearson_p),
                "wilcoxon_w": f"{result.eos.wilcoxon_statistic:.1f}",
                "wilcoxon_p": f"{result.eos.wilcoxon_p:.4f}",
                "n": str(scores.n_pairs),
                "flags": ",".join(f"zero_p{n}" for n in scores.zero_precision),
            })
    if published:
        for result in results:
            ref = PUBLISHED.get(result.model)
            if ref is None:
                continue
            for modality in MODALITIES:
                rows.append({
                    "model": f"published:{result.model}",
                    "modality": modality,
                    "b1": f"{ref[modality][0]:.1f}",
                    "b2": f"{ref[modality][1]:.1f}",
                    "b3": f"{ref[modality][2]:.1f}",
                    "p1": "", "p2": "", "p3": "",
                    "pearson_r": f"{ref['pearson'][0]:.4f}",
                    "pearson_p": f"{ref['pearson'][1]:.4f}",
                    "wilcoxon_w": "", "wilcoxon_p": "", "n": "", "flags": "reference",
                })
    return rows


_TEXT_COLUMNS = (
    ("model", "model", 22), ("modality", "modality", 10),
    ("b1", "B-1", 6), ("b2", "B-2", 6), ("b3", "B-3", 6),
    ("p1", "p1", 7), ("p2", "p2", 7), ("p3", "p3", 7),
    ("pearson_r", "r", 8), ("pearson_p", "p(r)", 8),
    ("wilcoxon_w", "W", 8), ("wilcoxon_p", "p(W)", 8), ("n", "n", 5),
)


def render_report(results, fmt="text", published=False):
    """
    Render model results as a text table, CSV or JSON lines.

    BLEU scores are x100 with one decimal. Output bytes depend on the inputs only.

    Args:
        results (list): ModelResult items
        fmt (str): text, csv or jsonl
        published (bool): Append the published full-scale values as ``published:<model>`` rows

    Returns:
        str
    """
    if fmt not in REPORT_FORMATS:
        raise ConfigError(f"Unknown report format '{fmt}', expected one of {', '.join(REPORT_FORMATS)}")
    rows = _rows(results, published)
    if fmt == "csv":
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buffer.getvalue()
    if fmt == "jsonl":
        return "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows)

    lines = ["".join(title.ljust(width) for _, title, width in _TEXT_COLUMNS).rstrip()]
    lines.append("-" * len(lines[0]))
    for row in rows:
        lines.append("".join(row[key].ljust(width) for key, _, width in _TEXT_COLUMNS).rstrip())
    notes = [f"{row['model']} {row['modality']}: {row['flags']}" for row in rows if row["flags"] and row["flags"] != "reference"]
    empty = [f"{r.model}: {r.bleu.n_empty} EOS-only generations excluded from BLEU" for r in results if r.bleu.n_empty]
    if notes or empty:
        lines.append("")
        lines.extend(notes + empty)
    if published:
        lines.append("")
        lines.append("published:* rows are full-scale reference values, not results of this run")
    return "\n".join(lines) + "\n"
