"""Synthetic run-on generation from clean annotated text.

Adjacent sentence pairs passing a length/punctuation filter are fused by
deleting the terminal punctuation of the first sentence and lowercasing
the first word of the second (unless it is a proper noun).  Negatives are
unmodified sentences passing the same filter.
"""

from __future__ import annotations

from typing import Callable, Iterable, Iterator, Optional

import numpy as np

from .data import (
    PROPER_NOUN_TAGS,
    TERMINAL_PUNCT,
    AnnotatedSentence,
    DatasetSpec,
    FractionTooHigh,
    GapLabel,
    InsufficientCorpus,
    LabeledSequence,
    MissingTerminalPunctuation,
    Token,
)

MIN_TOKENS = 5
MAX_TOKENS = 50


def passes_filter(s: AnnotatedSentence) -> bool:
    """Length 5-50, no URL tokens, no colon/semicolon/dash/ellipsis tokens."""
    if not (MIN_TOKENS <= len(s) <= MAX_TOKENS):
        return False
    for t in s.tokens:
        if t.is_url() or t.is_special_punct():
            return False
    return True


def is_candidate_pair(a: AnnotatedSentence, b: AnnotatedSentence) -> bool:
    return passes_filter(a) and passes_filter(b)


class CaseStats:
    """Corpus-wide case statistics for the proper-noun fallback heuristic.

    Without POS tags, a word type counts as a proper noun iff it never
    appears lowercase mid-sentence anywhere in the corpus.
    """

    def __init__(self):
        self._lowercase_types: set[str] = set()

    def add_sentence(self, sent: AnnotatedSentence) -> None:
        for tok in sent.tokens[1:]:
            if tok.surface[0].islower():
                self._lowercase_types.add(tok.surface.lower())

    def seen_lowercase(self, word: str) -> bool:
        return word.lower() in self._lowercase_types


def make_proper_noun_test(stats: Optional[CaseStats] = None) -> Callable[[Token], bool]:
    """POS tags decide when present (NNP/NNPS); otherwise use case statistics."""

    def test(tok: Token) -> bool:
        if tok.pos is not None:
            return tok.pos in PROPER_NOUN_TAGS
        if stats is not None:
            return not stats.seen_lowercase(tok.surface)
        # no evidence at all: treat capitalized unknowns as common words
        return False

    return test


def _lowercased(tok: Token) -> Token:
    return Token(tok.surface[0].lower() + tok.surface[1:], tok.pos)


def fuse(a: AnnotatedSentence, b: AnnotatedSentence,
         is_proper_noun: Optional[Callable[[Token], bool]] = None) -> LabeledSequence:
    """Fuse adjacent sentences into an artificial run-on.

    Drops a's terminal punctuation token, lowercases b's first token when
    it is not a proper noun, and marks the gap with a PERIOD label.
    """
    if a.tokens[-1].surface not in TERMINAL_PUNCT or len(a) < 2:
        raise MissingTerminalPunctuation(
            "first sentence must end in . ! or ? (source_id=%r)" % a.source_id)
    if is_proper_noun is None:
        is_proper_noun = make_proper_noun_test()
    head = list(a.tokens[:-1])
    first_b = b.tokens[0]
    if first_b.is_capitalized and not is_proper_noun(first_b):
        first_b = _lowercased(first_b)
    tokens = head + [first_b] + list(b.tokens[1:])
    sent = AnnotatedSentence(tokens, source_id="%s+%s" % (a.source_id, b.source_id))
    labels = [GapLabel.SPACE] * len(tokens)
    labels[len(head) - 1] = GapLabel.PERIOD
    return LabeledSequence(sent, labels)


def label_negative(a: AnnotatedSentence) -> LabeledSequence:
    return LabeledSequence(a, [GapLabel.SPACE] * len(a))


def split_fused(seq: LabeledSequence, recapitalize: bool = True) -> list[list[str]]:
    """Split a labeled sequence at PERIOD gaps back into sentence token lists."""
    parts: list[list[str]] = [[]]
    boundary = False
    for tok, lab in zip(seq.sentence.tokens, seq.labels):
        surface = tok.surface
        if boundary and recapitalize and surface[0].islower():
            surface = surface[0].upper() + surface[1:]
        parts[-1].append(surface)
        boundary = lab is GapLabel.PERIOD
        if boundary:
            parts.append([])
    return [p for p in parts if p]


def build_dataset(paragraphs: Iterable[list[AnnotatedSentence]],
                  spec: DatasetSpec) -> list[LabeledSequence]:
    """Sample run-ons and negatives from a paragraph stream.

    Each source sentence contributes to at most one output example.
    Deterministic for a fixed (corpus, spec): candidate order follows the
    corpus and the shuffles are driven by spec.seed.
    """
    stats = CaseStats()
    # candidate pairs as greedy non-overlapping adjacent runs per paragraph
    runon_pairs: list[tuple[int, int, AnnotatedSentence, AnnotatedSentence]] = []
    filtered: list[tuple[int, int, AnnotatedSentence]] = []
    for p, para in enumerate(paragraphs):
        for sent in para:
            stats.add_sentence(sent)
        paired = [False] * len(para)
        for i in range(len(para) - 1):
            if paired[i] or paired[i + 1]:
                continue
            a, b = para[i], para[i + 1]
            if a.tokens[-1].surface in TERMINAL_PUNCT and is_candidate_pair(a, b):
                runon_pairs.append((p, i, a, b))
                paired[i] = paired[i + 1] = True
        for i, sent in enumerate(para):
            if passes_filter(sent):
                filtered.append((p, i, sent))

    if len(runon_pairs) < spec.runon_count:
        raise InsufficientCorpus(
            "need %d run-on pairs, corpus supplies %d" % (spec.runon_count, len(runon_pairs)))

    rng = np.random.default_rng(spec.seed)
    pair_idx = sorted(rng.permutation(len(runon_pairs))[:spec.runon_count])
    used = {(runon_pairs[i][0], runon_pairs[i][1] + d) for i in pair_idx for d in (0, 1)}
    negatives = [s for p, i, s in filtered if (p, i) not in used]
    if len(negatives) < spec.nonrunon_count:
        raise InsufficientCorpus(
            "need %d negatives, corpus supplies %d" % (spec.nonrunon_count, len(negatives)))
    neg_idx = sorted(rng.permutation(len(negatives))[:spec.nonrunon_count])

    proper = make_proper_noun_test(stats)
    out = [fuse(runon_pairs[i][2], runon_pairs[i][3], is_proper_noun=proper)
           for i in pair_idx]
    out += [label_negative(negatives[i]) for i in neg_idx]
    order = rng.permutation(len(out))
    return [out[i] for i in order]


def downsample_runons(data: Iterable[LabeledSequence], target_fraction: float,
                      seed: int) -> list[LabeledSequence]:
    """Subsample run-ons so their fraction hits target_fraction; keep negatives."""
    data = list(data)
    runon_idx = [i for i, s in enumerate(data) if s.is_runon]
    n_neg = len(data) - len(runon_idx)
    if not (0.0 < target_fraction <= 1.0):
        raise ValueError("target_fraction must lie in (0, 1]")
    current = len(runon_idx) / len(data) if data else 0.0
    if target_fraction > current:
        raise FractionTooHigh(
            "target fraction %.4f exceeds current %.4f" % (target_fraction, current))
    keep = int(round(target_fraction * n_neg / (1.0 - target_fraction))) \
        if target_fraction < 1.0 else len(runon_idx)
    keep = min(keep, len(runon_idx))
    rng = np.random.default_rng(seed)
    kept = set(np.asarray(runon_idx)[rng.permutation(len(runon_idx))[:keep]].tolist())
    return [s for i, s in enumerate(data) if not s.is_runon or i in kept]
