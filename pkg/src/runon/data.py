"""Core data types and file formats.

Sentences are token sequences with optional POS tags and optional
constituency parses.  Gap labels mark, for each token, whether a
sentence-ending period is missing immediately after it (P) or not (S).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Optional, Sequence, TextIO


class DataError(Exception):
    """Malformed input data (bad file, misaligned labels, bad tree)."""


class AlignmentError(DataError):
    """Two streams that must be aligned sequence-by-sequence are not."""


class MalformedTree(DataError):
    """Parse tree leaves do not align with the token sequence."""


class MissingTerminalPunctuation(DataError):
    """First sentence of a fusion pair does not end in . ! or ?"""


class InsufficientCorpus(DataError):
    """Corpus cannot supply the requested number of examples."""


class FractionTooHigh(DataError):
    """Requested run-on fraction exceeds the fraction present."""


NO_POS = "_"

TERMINAL_PUNCT = {".", "!", "?"}
PROPER_NOUN_TAGS = {"NNP", "NNPS"}

_URL_RE = re.compile(r"^(https?://|ftp://|www\.)", re.IGNORECASE)
# standalone dash / en dash / em dash / ellipsis; intra-word hyphens pass
_SPECIAL_PUNCT = {":", ";", "-", "--", "–", "—", "...", "…"}


@dataclass(frozen=True)
class Token:
    surface: str
    pos: Optional[str] = None

    def __post_init__(self):
        if not self.surface or any(c.isspace() for c in self.surface):
            raise DataError("token surface must be non-empty and whitespace-free: %r" % (self.surface,))

    @property
    def is_capitalized(self) -> bool:
        return self.surface[0].isupper()

    def is_url(self) -> bool:
        return bool(_URL_RE.match(self.surface))

    def is_special_punct(self) -> bool:
        return self.surface in _SPECIAL_PUNCT


class ParseNode:
    """Constituency tree node.  Leaves carry the token surface as label."""

    __slots__ = ("label", "children")

    def __init__(self, label: str, children: Sequence["ParseNode"] = ()):
        self.label = label
        self.children = tuple(children)

    @property
    def is_leaf(self) -> bool:
        return not self.children

    @property
    def is_preterminal(self) -> bool:
        return len(self.children) == 1 and self.children[0].is_leaf

    def leaves(self) -> list["ParseNode"]:
        if self.is_leaf:
            return [self]
        out = []
        for c in self.children:
            out.extend(c.leaves())
        return out

    def __repr__(self):
        if self.is_leaf:
            return self.label
        return "(%s %s)" % (self.label, " ".join(repr(c) for c in self.children))

    def __eq__(self, other):
        return (isinstance(other, ParseNode)
                and self.label == other.label and self.children == other.children)

    def __hash__(self):
        return hash((self.label, self.children))


_TREE_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def parse_tree(text: str) -> ParseNode:
    """Parse a bracketed tree like ``(S (NP (DT the) (NN dog)) (VP (VBD ran)))``."""
    toks = _TREE_TOKEN_RE.findall(text)
    pos = 0

    def node() -> ParseNode:
        nonlocal pos
        if pos >= len(toks):
            raise DataError("unbalanced tree: %r" % text)
        if toks[pos] != "(":
            leaf = ParseNode(toks[pos])
            pos += 1
            return leaf
        pos += 1  # (
        if pos >= len(toks) or toks[pos] in "()":
            raise DataError("missing node label in tree: %r" % text)
        label = toks[pos]
        pos += 1
        children = []
        while pos < len(toks) and toks[pos] != ")":
            children.append(node())
        if pos >= len(toks):
            raise DataError("unbalanced tree: %r" % text)
        pos += 1  # )
        if not children:
            raise DataError("constituent %r has no children in %r" % (label, text))
        return ParseNode(label, children)

    root = node()
    if pos != len(toks):
        raise DataError("trailing material after tree: %r" % text)
    return root


@dataclass
class AnnotatedSentence:
    tokens: list[Token]
    parse: Optional[ParseNode] = None
    source_id: str = ""

    def __post_init__(self):
        if not self.tokens:
            raise DataError("sentence must have at least one token (source_id=%r)" % self.source_id)
        if self.parse is not None:
            leaves = self.parse.leaves()
            if len(leaves) != len(self.tokens) or any(
                    l.label != t.surface for l, t in zip(leaves, self.tokens)):
                raise MalformedTree(
                    "parse leaves do not match tokens (source_id=%r)" % self.source_id)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def text(self) -> str:
        return detokenize(self.surfaces)


class GapLabel(Enum):
    SPACE = "S"
    PERIOD = "P"

    def __str__(self):
        return self.value

    @classmethod
    def parse(cls, s: str) -> "GapLabel":
        key = s.strip().upper()
        if key in ("S", "SPACE"):
            return cls.SPACE
        if key in ("P", "PERIOD"):
            return cls.PERIOD
        raise DataError("unknown gap label %r" % s)


@dataclass
class LabeledSequence:
    sentence: AnnotatedSentence
    labels: list[GapLabel]

    def __post_init__(self):
        if len(self.labels) != len(self.sentence.tokens):
            raise AlignmentError(
                "%d labels for %d tokens (source_id=%r)"
                % (len(self.labels), len(self.sentence.tokens), self.sentence.source_id))
        if self.labels[-1] is not GapLabel.SPACE:
            raise DataError(
                "final token's label must be SPACE (source_id=%r)" % self.sentence.source_id)

    @property
    def is_runon(self) -> bool:
        return any(l is GapLabel.PERIOD for l in self.labels)

    @property
    def gap_labels(self) -> list[GapLabel]:
        """Labels for the N-1 inter-token gaps (drops the terminal position)."""
        return self.labels[:-1]

    @property
    def period_positions(self) -> set[int]:
        return {i for i, l in enumerate(self.labels) if l is GapLabel.PERIOD}


@dataclass(frozen=True)
class DatasetSpec:
    runon_count: int
    nonrunon_count: int
    target_runon_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.runon_count < 0 or self.nonrunon_count < 0:
            raise ValueError("counts must be non-negative")
        total = self.runon_count + self.nonrunon_count
        if self.target_runon_fraction == 0.0 and total:
            object.__setattr__(self, "target_runon_fraction", self.runon_count / total)
        if not (0.0 <= self.target_runon_fraction <= 1.0):
            raise ValueError("target_runon_fraction must lie in [0, 1]")


_ATTACHED_PUNCT = {".", ",", "!", "?", ";", ":", "'s", "n't", "%", ")", "''"}


def detokenize(surfaces: Iterable[str]) -> str:
    """Join tokens with spaces, attaching punctuation to the preceding token."""
    out: list[str] = []
    for s in surfaces:
        if out and s in _ATTACHED_PUNCT:
            out[-1] += s
        else:
            out.append(s)
    return " ".join(out)


# ---------------------------------------------------------------------------
# Corpus file format: one sentence per line as alternating
# token<TAB>POS<TAB>token<TAB>POS... columns; blank line between paragraphs.
# Optional parallel tree file: one bracketed tree per sentence line, blank
# lines mirrored.

def read_corpus(fh: TextIO, trees: Optional[TextIO] = None,
                source: str = "corpus") -> Iterator[list[AnnotatedSentence]]:
    """Yield paragraphs (lists of sentences) from an annotated corpus file."""
    paragraph: list[AnnotatedSentence] = []
    lineno = 0
    tree_lines = iter(trees) if trees is not None else None
    for line in fh:
        lineno += 1
        tree_line = next(tree_lines, "") if tree_lines is not None else ""
        line = line.rstrip("\n")
        if not line.strip():
            if paragraph:
                yield paragraph
                paragraph = []
            continue
        cols = line.split("\t")
        if len(cols) % 2:
            raise DataError("%s:%d: odd number of columns (%d)" % (source, lineno, len(cols)))
        tokens = []
        for i in range(0, len(cols), 2):
            pos = cols[i + 1]
            tokens.append(Token(cols[i], None if pos == NO_POS else pos))
        parse = None
        if tree_lines is not None and tree_line.strip():
            parse = parse_tree(tree_line.strip())
        sent = AnnotatedSentence(tokens, parse=parse, source_id="%s:%d" % (source, lineno))
        paragraph.append(sent)
    if paragraph:
        yield paragraph


def write_corpus(paragraphs: Iterable[list[AnnotatedSentence]], fh: TextIO,
                 trees: Optional[TextIO] = None) -> None:
    first = True
    for para in paragraphs:
        if not first:
            fh.write("\n")
            if trees is not None:
                trees.write("\n")
        first = False
        for sent in para:
            cols = []
            for t in sent.tokens:
                cols.append(t.surface)
                cols.append(t.pos if t.pos is not None else NO_POS)
            fh.write("\t".join(cols) + "\n")
            if trees is not None:
                trees.write((repr(sent.parse) if sent.parse is not None else "") + "\n")


# ---------------------------------------------------------------------------
# Labeled-sequence format: one token per line as surface<TAB>POS<TAB>label
# with label in {S, P}; blank line between sequences.

def read_labeled(fh: TextIO, source: str = "labeled") -> Iterator[LabeledSequence]:
    tokens: list[Token] = []
    labels: list[GapLabel] = []
    start = 1
    lineno = 0

    def flush():
        if tokens:
            sent = AnnotatedSentence(list(tokens), source_id="%s:%d" % (source, start))
            yield LabeledSequence(sent, list(labels))

    for line in fh:
        lineno += 1
        line = line.rstrip("\n")
        if not line.strip():
            yield from flush()
            tokens, labels = [], []
            start = lineno + 1
            continue
        cols = line.split("\t")
        if len(cols) != 3:
            raise DataError("%s:%d: expected 3 columns, got %d" % (source, lineno, len(cols)))
        surface, pos, lab = cols
        tokens.append(Token(surface, None if pos == NO_POS else pos))
        labels.append(GapLabel.parse(lab))
    yield from flush()


def write_labeled(seqs: Iterable[LabeledSequence], fh: TextIO) -> None:
    first = True
    for seq in seqs:
        if not first:
            fh.write("\n")
        first = False
        for tok, lab in zip(seq.sentence.tokens, seq.labels):
            fh.write("%s\t%s\t%s\n" % (tok.surface, tok.pos if tok.pos is not None else NO_POS, lab.value))
