"""Sentence-level lexical overlap baselines: BLEU, ROUGE-1/2/L, chrF.

All scores live in [0, 1].  BLEU is smoothed for single-snippet use:
higher-order precisions with zero matches get add-one smoothing, since
unsmoothed sentence BLEU collapses to 0 the moment any order has no
overlap.  Unigram precision stays raw, so candidates sharing no token
with the reference still score 0.
"""

from __future__ import annotations

import logging
import math
from collections import Counter

logger = logging.getLogger(__name__)


def _ngram_counts(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _overlap(candidate: Counter, reference: Counter) -> int:
    return sum(min(count, reference[gram]) for gram, count in candidate.items())


def bleu(candidate, reference, max_n: int = 4) -> float:
    """Modified n-gram precision geometric mean times brevity penalty."""
    candidate = list(candidate)
    reference = list(reference)
    if not reference:
        raise ValueError("reference must be non-empty")
    if not candidate:
        logger.warning("empty candidate scored as BLEU 0")
        return 0.0

    log_precision_sum = 0.0
    for n in range(1, max_n + 1):
        cand_counts = _ngram_counts(candidate, n)
        matches = _overlap(cand_counts, _ngram_counts(reference, n))
        total = sum(cand_counts.values())
        if n == 1:
            if matches == 0:
                return 0.0
            precision = matches / total
        elif matches == 0:
            precision = (matches + 1) / (total + 1)
        else:
            precision = matches / total
        log_precision_sum += math.log(precision)

    if len(candidate) >= len(reference):
        brevity = 1.0
    else:
        brevity = math.exp(1.0 - len(reference) / len(candidate))
    return brevity * math.exp(log_precision_sum / max_n)


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _lcs_length(a, b) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            if token == other:
                current.append(prev[j - 1] + 1)
            else:
                current.append(max(prev[j], current[j - 1]))
        prev = current
    return prev[-1]


def rouge(candidate, reference, mode) -> float:
    """F1 of n-gram overlap (modes 1 and 2) or of LCS length (mode "L")."""
    candidate = list(candidate)
    reference = list(reference)
    if not reference:
        raise ValueError("reference must be non-empty")
    if not candidate:
        return 0.0
    if mode == "L":
        lcs = _lcs_length(candidate, reference)
        return _f1(lcs / len(candidate), lcs / len(reference))
    if mode not in (1, 2):
        raise ValueError(f"rouge mode must be 1, 2, or 'L', got {mode!r}")
    cand_counts = _ngram_counts(candidate, mode)
    ref_counts = _ngram_counts(reference, mode)
    if not cand_counts or not ref_counts:
        return 0.0
    matches = _overlap(cand_counts, ref_counts)
    return _f1(matches / sum(cand_counts.values()), matches / sum(ref_counts.values()))


def chrf(candidate: str, reference: str, max_n: int = 6, beta: float = 2.0) -> float:
    """Character n-gram F-beta, precision and recall averaged over n = 1..max_n.

    Whitespace is stripped before n-gram extraction; orders where neither
    string has any n-gram are excluded from the averages.
    """
    if not reference.strip():
        raise ValueError("reference must be non-empty")
    cand_chars = "".join(candidate.split())
    ref_chars = "".join(reference.split())
    precisions = []
    recalls = []
    for n in range(1, max_n + 1):
        cand_counts = _ngram_counts(cand_chars, n)
        ref_counts = _ngram_counts(ref_chars, n)
        if not cand_counts and not ref_counts:
            continue
        matches = _overlap(cand_counts, ref_counts)
        precisions.append(matches / sum(cand_counts.values()) if cand_counts else 0.0)
        recalls.append(matches / sum(ref_counts.values()) if ref_counts else 0.0)
    if not precisions:
        return 0.0
    avg_p = sum(precisions) / len(precisions)
    avg_r = sum(recalls) / len(recalls)
    denom = beta * beta * avg_p + avg_r
    if denom == 0.0:
        return 0.0
    return (1.0 + beta * beta) * avg_p * avg_r / denom
