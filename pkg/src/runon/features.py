"""Gap feature extraction for the CRF labeler.

Each inter-token gap is described by token/POS/capitalization windows,
a positional fraction, k-gram comparison flags and a perplexity flag from
the language model, and constituency-parse features (highest uncommon
ancestors of the flanking tokens).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, TextIO

from .data import (
    AnnotatedSentence,
    DataError,
    GapLabel,
    LabeledSequence,
    MalformedTree,
    ParseNode,
)
from .ngram import NgramModel, kgram_comparison_flags, perplexity_decrease_flag

BOS_TOK = "BOS"
EOS_TOK = "EOS"
NO_PARSE = "noparse"

# window offsets relative to the gap: -2..-0 are tokens before, +1..+3 after
_WINDOW = (-2, -1, 0, 1, 2, 3)


@dataclass(frozen=True)
class GapContext:
    sentence: AnnotatedSentence
    gap: int  # space lies between tokens[gap] and tokens[gap + 1]

    def __post_init__(self):
        if not (0 <= self.gap < len(self.sentence) - 1):
            raise ValueError(
                "gap %d out of range for %d tokens" % (self.gap, len(self.sentence)))


def highest_uncommon_ancestors(parse: ParseNode, i: int):
    """For the gap after leaf i: the children of the lowest common ancestor
    of leaves i and i+1 on the paths to each leaf, with preterminal flags."""

    def path_to_leaf(node: ParseNode, target: int, counter: list) -> Optional[list]:
        if node.is_leaf:
            counter[0] += 1
            return [node] if counter[0] - 1 == target else None
        for child in node.children:
            sub = path_to_leaf(child, target, counter)
            if sub is not None:
                return [node] + sub
        return None

    n_leaves = len(parse.leaves())
    if not (0 <= i < n_leaves - 1):
        raise MalformedTree("gap %d out of range for %d leaves" % (i, n_leaves))
    left = path_to_leaf(parse, i, [0])
    right = path_to_leaf(parse, i + 1, [0])
    depth = 0
    while depth < min(len(left), len(right)) and left[depth] is right[depth]:
        depth += 1
    if depth == 0 or depth >= len(left) or depth >= len(right):
        raise MalformedTree("leaves %d and %d share no proper ancestor" % (i, i + 1))
    anc_l, anc_r = left[depth], right[depth]
    return (anc_l.label, anc_r.label, anc_l.is_preterminal, anc_r.is_preterminal)


def _tok(sentence: AnnotatedSentence, pos: int) -> str:
    if pos < 0:
        return BOS_TOK
    if pos >= len(sentence):
        return EOS_TOK
    return sentence.tokens[pos].surface


def _pos(sentence: AnnotatedSentence, pos: int) -> str:
    if pos < 0:
        return BOS_TOK
    if pos >= len(sentence):
        return EOS_TOK
    tag = sentence.tokens[pos].pos
    return tag if tag is not None else "nopos"


def extract_features(ctx: GapContext, lm: Optional[NgramModel] = None) -> list[str]:
    """Sparse indicator features for one gap, as ``template=value`` strings."""
    sent, g = ctx.sentence, ctx.gap
    n = len(sent)
    j = g + 1
    feats: list[str] = []
    toks = {off: _tok(sent, g + off) for off in _WINDOW}
    tags = {off: _pos(sent, g + off) for off in _WINDOW}
    for off in _WINDOW:
        feats.append("w[%d]=%s" % (off, toks[off]))
        feats.append("p[%d]=%s" % (off, tags[off]))
    for a, b in zip(_WINDOW, _WINDOW[1:]):
        feats.append("w[%d,%d]=%s|%s" % (a, b, toks[a], toks[b]))
        feats.append("p[%d,%d]=%s|%s" % (a, b, tags[a], tags[b]))
    for a, b, c in zip(_WINDOW, _WINDOW[1:], _WINDOW[2:]):
        feats.append("w[%d..%d]=%s|%s|%s" % (a, c, toks[a], toks[b], toks[c]))
        feats.append("p[%d..%d]=%s|%s|%s" % (a, c, tags[a], tags[b], tags[c]))
    cap_i = sent.tokens[g].is_capitalized
    cap_j = sent.tokens[j].is_capitalized
    feats.append("cap[0]=%s" % cap_i)
    feats.append("cap[+1]=%s" % cap_j)
    feats.append("cap[0,+1]=%s|%s" % (cap_i, cap_j))
    # fraction of words following the gap, floored to one decimal
    frac = (n - j) / n
    feats.append("frac=%.1f" % (math.floor(frac * 10) / 10.0))
    feats.append("nfollow=%d" % (n - j))
    if lm is not None:
        k1, k2, k3 = kgram_comparison_flags(lm, sent.surfaces, g)
        feats.append("kgram1=%s" % k1)
        feats.append("kgram2=%s" % k2)
        feats.append("kgram3=%s" % k3)
        feats.append("ppl=%d" % int(perplexity_decrease_flag(lm, sent.surfaces, g)))
    if sent.parse is not None:
        label_l, label_r, pre_l, pre_r = highest_uncommon_ancestors(sent.parse, g)
        kind = "%s/%s" % ("preterminal" if pre_l else "phrase",
                          "preterminal" if pre_r else "phrase")
        feats.append("ancL=%s" % label_l)
        feats.append("ancR=%s" % label_r)
        feats.append("ancKind=%s" % kind)
    else:
        feats.append("ancL=%s" % NO_PARSE)
        feats.append("ancR=%s" % NO_PARSE)
        feats.append("ancKind=%s" % NO_PARSE)
    return feats


def featurize_sequence(seq: LabeledSequence,
                       lm: Optional[NgramModel] = None) -> tuple[list[list[str]], list[GapLabel]]:
    """Features and gold labels for every gap of a labeled sequence."""
    sent = seq.sentence
    if len(sent) < 2:
        return [], []
    feats = [extract_features(GapContext(sent, g), lm) for g in range(len(sent) - 1)]
    return feats, seq.gap_labels


# ---------------------------------------------------------------------------
# Feature file: one gap per line, tab-separated feature values, final column
# the gold label (S/P or SPACE/PERIOD); blank line between sequences.  A
# leading '#'-comment may carry the template names.

def write_features(sequences: Iterable[tuple[list[list[str]], list[GapLabel]]],
                   fh: TextIO) -> None:
    first = True
    for feats, labels in sequences:
        if not first:
            fh.write("\n")
        first = False
        for row, lab in zip(feats, labels):
            fh.write("\t".join(row) + "\t" + lab.value + "\n")


def read_features(fh: TextIO, source: str = "features"
                  ) -> Iterator[tuple[list[list[str]], list[GapLabel]]]:
    feats: list[list[str]] = []
    labels: list[GapLabel] = []
    lineno = 0
    for line in fh:
        lineno += 1
        line = line.rstrip("\n")
        if line.startswith("#"):
            continue
        if not line.strip():
            if feats:
                yield feats, labels
            feats, labels = [], []
            continue
        cols = line.split("\t")
        if len(cols) < 2:
            raise DataError("%s:%d: expected features and a label" % (source, lineno))
        *values, lab = cols
        # generically named columns let external dumps parse as fixtures
        row = [v if "=" in v else "col%d=%s" % (k, v) for k, v in enumerate(values)]
        feats.append(row)
        labels.append(GapLabel.parse(lab))
    if feats:
        yield feats, labels
