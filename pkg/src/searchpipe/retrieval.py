"""Relevance retrieval: pick the best chunks of page text under a token budget.

Token counting uses the metrics tokenizer (whitespace words), so budgets are
model-agnostic. Chunking partitions the raw text losslessly; selection is
greedy by score with document order as the tie-break.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from typing import Callable, Protocol, Sequence

from .errors import RetrievalError
from .metrics import normalize_tokens

DEFAULT_CHUNK_TOKENS = 128

_PARAGRAPH_SPLIT = re.compile(r"\n\s*\n")
_WORD = re.compile(r"\S+")


@dataclass(frozen=True)
class Chunk:
    """A contiguous piece of the source text."""

    text: str
    start_offset: int
    token_count: int
    score: float = 0.0


class RelevanceScorer(Protocol):
    """Pluggable counterpart of an embedding retriever; must be deterministic."""

    def score(self, requery: str, chunk_text: str) -> float: ...


class LexicalScorer:
    """Document-frequency-weighted term overlap over the chunk corpus.

    score(chunk) = sum over unique requery terms of tf(term, chunk) * idf(term)
    with idf(term) = ln(1 + (N - df + 0.5) / (df + 0.5)).
    """

    def __init__(self, chunks: Sequence[Chunk]):
        self._n_chunks = len(chunks)
        self._doc_freq: Counter[str] = Counter()
        for chunk in chunks:
            self._doc_freq.update(set(normalize_tokens(chunk.text)))

    def _idf(self, term: str) -> float:
        df = self._doc_freq.get(term, 0)
        return math.log(1.0 + (self._n_chunks - df + 0.5) / (df + 0.5))

    def score(self, requery: str, chunk_text: str) -> float:
        chunk_counts = Counter(normalize_tokens(chunk_text))
        total = 0.0
        for term in set(normalize_tokens(requery)):
            tf = chunk_counts.get(term, 0)
            if tf:
                total += tf * self._idf(term)
        return total


ScorerFactory = Callable[[Sequence[Chunk]], RelevanceScorer]

_SCORER_REGISTRY: dict[str, ScorerFactory] = {"lexical": LexicalScorer}


def register_scorer(name: str, factory: ScorerFactory) -> None:
    _SCORER_REGISTRY[name] = factory


def make_scorer(name: str, chunks: Sequence[Chunk]) -> RelevanceScorer:
    try:
        factory = _SCORER_REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown scorer {name!r}; "
                       f"registered: {sorted(_SCORER_REGISTRY)}") from None
    return factory(chunks)


def _split_lossless(text: str, boundaries: list[int]) -> list[str]:
    """Cut text at the given offsets; concatenation reproduces the input."""
    pieces = []
    starts = [0] + boundaries
    stops = boundaries + [len(text)]
    for start, stop in zip(starts, stops):
        pieces.append(text[start:stop])
    return pieces


def _split_long_paragraph(text: str, offset: int,
                          target_tokens: int) -> list[tuple[str, int]]:
    """Split one paragraph into word groups of at most target_tokens tokens."""
    words = list(_WORD.finditer(text))
    cuts: list[int] = []
    tokens_in_group = 0
    for match in words:
        word_tokens = len(normalize_tokens(match.group()))
        if tokens_in_group and tokens_in_group + word_tokens > target_tokens:
            cuts.append(match.start())
            tokens_in_group = 0
        tokens_in_group += word_tokens
    pieces = _split_lossless(text, cuts)
    out = []
    pos = offset
    for piece in pieces:
        out.append((piece, pos))
        pos += len(piece)
    return out


def chunk_text(raw: str, target_tokens: int = DEFAULT_CHUNK_TOKENS) -> list[Chunk]:
    """Partition text on paragraph boundaries into chunks of <= target_tokens.

    Paragraphs beyond the target split at word boundaries; adjacent small
    pieces merge while the combined count stays within the target. Chunk
    texts concatenate back to the input byte-for-byte.
    """
    if target_tokens <= 0:
        raise ValueError("target_tokens must be positive")
    if not raw:
        return []

    # paragraph-sized units, separators attached to the preceding unit
    cuts = [m.end() for m in _PARAGRAPH_SPLIT.finditer(raw) if m.end() < len(raw)]
    units: list[tuple[str, int]] = []
    pos = 0
    for piece in _split_lossless(raw, cuts):
        if len(normalize_tokens(piece)) > target_tokens:
            units.extend(_split_long_paragraph(piece, pos, target_tokens))
        else:
            units.append((piece, pos))
        pos += len(piece)

    chunks: list[Chunk] = []
    cur_text, cur_start, cur_tokens = "", 0, 0
    for text, start in units:
        tokens = len(normalize_tokens(text))
        if cur_tokens and cur_tokens + tokens > target_tokens:
            chunks.append(Chunk(cur_text, cur_start, cur_tokens))
            cur_text, cur_tokens = "", 0
        if not cur_text:
            cur_start = start
        cur_text += text
        cur_tokens += tokens
    if cur_text:
        if cur_tokens == 0 and chunks:
            # trailing tokenless piece folds into the previous chunk
            last = chunks.pop()
            chunks.append(replace(last, text=last.text + cur_text))
        else:
            chunks.append(Chunk(cur_text, cur_start, cur_tokens))

    # an input with no tokens anywhere yields no chunks at all
    return [c for c in chunks if c.token_count > 0]


def score_chunks(chunks: Sequence[Chunk], requery: str,
                 scorer: RelevanceScorer) -> list[Chunk]:
    """Attach a relevance score to every chunk."""
    scored = []
    for i, chunk in enumerate(chunks):
        try:
            value = scorer.score(requery, chunk.text)
        except Exception as exc:
            raise RetrievalError(f"scorer failed on chunk {i}: {exc}",
                                 chunk_index=i) from exc
        scored.append(replace(chunk, score=value))
    return scored


def retrieve_relevant(raw: str, requery: str, budget: int,
                      scorer: RelevanceScorer | None = None) -> str:
    """Select the highest-scoring chunks that fit the token budget.

    Selected chunks are emitted in document order, joined by paragraph
    breaks; ties go to the earlier chunk. Text that already fits the budget
    is returned verbatim.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    chunks = chunk_text(raw)
    if not chunks:
        return raw
    total = sum(c.token_count for c in chunks)
    if total <= budget:
        return raw

    if scorer is None:
        scorer = LexicalScorer(chunks)
    scored = score_chunks(chunks, requery, scorer)

    order = sorted(range(len(scored)),
                   key=lambda i: (-scored[i].score, scored[i].start_offset))
    used = 0
    picked: list[int] = []
    for i in order:
        if used + scored[i].token_count > budget:
            continue
        picked.append(i)
        used += scored[i].token_count
    picked.sort(key=lambda i: scored[i].start_offset)
    return "\n\n".join(scored[i].text.strip() for i in picked)
