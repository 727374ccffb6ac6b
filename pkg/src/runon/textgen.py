"""Deterministic generator of clean, POS-tagged, parsed demo text.

Produces paragraphs of simple declarative English from a small grammar,
with bracketed constituency trees.  Intended for fixtures, smoke tests,
and desk-scale experiments; any real annotated corpus can be used
instead.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .data import AnnotatedSentence, ParseNode, Token

DETS = ["the", "a"]
NOUNS = ["dog", "cat", "teacher", "garden", "river", "story", "child", "house",
         "bird", "park", "letter", "window", "farmer", "boat", "song", "road",
         "doctor", "market", "picture", "forest"]
PROPER = ["Mary", "John", "Paris", "Anna", "Peter", "Tokyo"]
PRONOUNS = ["he", "she", "they", "we", "it"]
ADJS = ["old", "small", "quiet", "bright", "young", "narrow", "tall", "busy"]
V_INTRANS = ["slept", "ran", "smiled", "waited", "arrived", "laughed", "left"]
# these verbs occur both with and without an object, so an object noun
# phrase after them never settles the analysis by itself
V_AMBI = ["chased", "watched", "followed", "painted"]
V_TRANS = ["chased", "saw", "admired", "found", "helped", "watched", "painted",
           "followed", "gave", "sent", "showed"]
V_DITRANS = ["gave", "sent", "showed"]
PREPS = ["in", "near", "under", "behind", "beside"]
TIME_NOUNS = ["morning", "evening", "afternoon", "winter", "spring"]


def _pre(tag: str, word: str) -> ParseNode:
    return ParseNode(tag, [ParseNode(word)])


def _np(rng: np.random.Generator, subject: bool = False,
        bare: bool = False) -> ParseNode:
    r = rng.random()
    if subject and r < 0.15:
        return ParseNode("NP", [_pre("NNP", str(rng.choice(PROPER)))])
    if subject and r < 0.30:
        return ParseNode("NP", [_pre("PRP", str(rng.choice(PRONOUNS)))])
    kids = [_pre("DT", str(rng.choice(DETS)))]
    if rng.random() < 0.45:
        kids.append(_pre("JJ", str(rng.choice(ADJS))))
    kids.append(_pre("NN", str(rng.choice(NOUNS))))
    head = ParseNode("NP", kids)
    if bare:
        return head
    # reduced relative clause, as in "the dog the cat chased"
    if rng.random() < 0.16:
        rc = ParseNode("SBAR", [_np(rng, bare=True),
                                _pre("VBD", str(rng.choice(V_TRANS)))])
        return ParseNode("NP", [head, rc])
    return head


def _pp(rng: np.random.Generator) -> ParseNode:
    return ParseNode("PP", [_pre("IN", str(rng.choice(PREPS))),
                            _np(rng, bare=True)])


def _vp(rng: np.random.Generator) -> ParseNode:
    r = rng.random()
    if r < 0.34:
        verbs = V_INTRANS if rng.random() < 0.55 else V_AMBI
        kids = [_pre("VBD", str(rng.choice(verbs)))]
        if rng.random() < 0.55:
            kids.append(_pp(rng))
    elif r < 0.92:
        kids = [_pre("VBD", str(rng.choice(V_TRANS))), _np(rng)]
        while len(kids) < 4 and rng.random() < 0.30:
            kids.append(_pp(rng))
    else:
        # double object: creates noun-determiner sequences inside a sentence
        kids = [_pre("VBD", str(rng.choice(V_DITRANS))), _np(rng, bare=True),
                _np(rng, bare=True)]
    return ParseNode("VP", kids)


def _sentence_tree(rng: np.random.Generator) -> ParseNode:
    kids = []
    if rng.random() < 0.2:
        time = ParseNode("PP", [_pre("IN", "in"),
                                ParseNode("NP", [_pre("DT", "the"),
                                                 _pre("NN", str(rng.choice(TIME_NOUNS)))])])
        kids += [time, _pre(",", ",")]
    kids += [_np(rng, subject=True), _vp(rng), _pre(".", ".")]
    return ParseNode("S", kids)


def _capitalize_tree(root: ParseNode) -> None:
    leaf = root.leaves()[0]
    if leaf.label[0].islower():
        leaf.label = leaf.label[0].upper() + leaf.label[1:]


def make_sentence(rng: np.random.Generator, source_id: str = "") -> AnnotatedSentence:
    while True:
        tree = _sentence_tree(rng)
        if len(tree.leaves()) >= 5:
            break
    _capitalize_tree(tree)
    tokens = []
    for pre in _preterminals(tree):
        tokens.append(Token(pre.children[0].label, pre.label))
    return AnnotatedSentence(tokens, parse=tree, source_id=source_id)


def _preterminals(node: ParseNode) -> Iterator[ParseNode]:
    if node.is_preterminal:
        yield node
    else:
        for c in node.children:
            yield from _preterminals(c)


def generate_paragraphs(n_sentences: int, seed: int = 0
                        ) -> Iterator[list[AnnotatedSentence]]:
    """Yield paragraphs of 2-6 sentences until n_sentences are produced."""
    rng = np.random.default_rng(seed)
    produced = 0
    para_id = 0
    while produced < n_sentences:
        size = min(int(rng.integers(2, 7)), n_sentences - produced)
        if size == 1 and n_sentences - produced > 1:
            size = 2
        para = [make_sentence(rng, source_id="gen:%d:%d" % (para_id, k))
                for k in range(size)]
        produced += size
        para_id += 1
        yield para
