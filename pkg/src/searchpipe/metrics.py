"""Lexical scoring: answer F1, ROUGE-L, BLEU-1, rerank mapping, final weights.

All metric values are fractions in [0, 1]; ``final_score`` works on
percentages in [0, 100]. Scores stay unrounded internally; callers round at
display boundaries only (see ``display_round``).
"""

from __future__ import annotations

import math
import string
from collections import Counter
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

from .model import WebsiteAnnotation, WebsiteLabel

TokenSequence = list[str]

_EDGE_PUNCT = string.punctuation

FINAL_WEIGHTS = {"e2e": 0.75, "requery": 0.05, "rerank": 0.1, "summarize": 0.1}


def normalize_tokens(text: str) -> TokenSequence:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    tokens = []
    for raw in text.lower().split():
        tok = raw.strip(_EDGE_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


def f1_score(pred: Sequence[str], gold: Sequence[str]) -> float:
    """Multiset-overlap F1 between two token sequences."""
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    overlap = sum((Counter(pred) & Counter(gold)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(pred)
    recall = overlap / len(gold)
    return 2 * precision * recall / (precision + recall)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    # single-row DP; O(len(a) * len(b)) time, O(len(b)) space
    if not a or not b:
        return 0
    row = [0] * (len(b) + 1)
    for x in a:
        prev_diag = 0
        for j, y in enumerate(b, start=1):
            prev_row = row[j]
            if x == y:
                row[j] = prev_diag + 1
            elif row[j - 1] > row[j]:
                row[j] = row[j - 1]
            prev_diag = prev_row
    return row[len(b)]


def rouge_l(pred: Sequence[str], gold: Sequence[str]) -> float:
    """LCS-based F-measure with equal precision/recall weighting."""
    if not pred and not gold:
        return 1.0
    if not pred or not gold:
        return 0.0
    lcs = _lcs_length(pred, gold)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred)
    recall = lcs / len(gold)
    return 2 * precision * recall / (precision + recall)


def bleu1(pred: Sequence[str], gold: Sequence[str]) -> float:
    """Modified unigram precision times the brevity penalty, unsmoothed."""
    if not pred:
        return 1.0 if not gold else 0.0
    matched = sum((Counter(pred) & Counter(gold)).values())
    if matched == 0:
        return 0.0
    precision = matched / len(pred)
    brevity = min(1.0, math.exp(1.0 - len(gold) / len(pred)))
    return precision * brevity


def requery_score(pred_requery: str, gt_requery: str) -> float:
    """Average of ROUGE-L and BLEU-1 on normalized tokens."""
    pred = normalize_tokens(pred_requery)
    gold = normalize_tokens(gt_requery)
    return (rouge_l(pred, gold) + bleu1(pred, gold)) / 2


def answer_score(pred_answer: str, gt_answer: str) -> float:
    """Answer F1 on normalized tokens (end-to-end and summarization tasks)."""
    return f1_score(normalize_tokens(pred_answer), normalize_tokens(gt_answer))


def rerank_score(choice: int | None,
                 annotations: Sequence[WebsiteAnnotation]) -> float:
    """Map a 1-based website choice to {1.0, 0.5, 0.0} by annotator label.

    Unparseable (None) or out-of-range choices score 0.
    """
    if choice is None or not 1 <= choice <= len(annotations):
        return 0.0
    label = annotations[choice - 1].label
    if label is WebsiteLabel.VALID:
        return 1.0
    if label is WebsiteLabel.UNSURE:
        return 0.5
    return 0.0


def final_score(s_e2e: float, s_req: float, s_rer: float, s_sum: float) -> float:
    """Weighted composite of the four task percentages, unrounded."""
    return (FINAL_WEIGHTS["e2e"] * s_e2e
            + FINAL_WEIGHTS["requery"] * s_req
            + FINAL_WEIGHTS["rerank"] * s_rer
            + FINAL_WEIGHTS["summarize"] * s_sum)


def display_round(value: float, places: int = 1) -> float:
    """Half-up decimal rounding for report display."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(q, rounding=ROUND_HALF_UP))


def count_tokens(text: str) -> int:
    return len(normalize_tokens(text))
