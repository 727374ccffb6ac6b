"""N-gram language model with the gap features the CRF consumes.

Smoothing is interpolated modified Kneser-Ney with discounts estimated
from count-of-counts; orders whose discount estimates are undefined (tiny
corpora) fall back to Witten-Bell.  All arithmetic is in log space at the
sentence level; individual conditionals are small enough for linear space.

The model file stores raw counts only; smoothed probabilities are
recomputed deterministically on load, so round-trips are bit-exact.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence, TextIO

from .data import AnnotatedSentence, DataError

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
PERIOD = "."


class EmptyCorpus(DataError):
    """No sentences supplied for training."""


def _surfaces(sent) -> list[str]:
    if isinstance(sent, AnnotatedSentence):
        return sent.surfaces
    return list(sent)


class NgramModel:
    """Count-based n-gram model; immutable once trained."""

    FORMAT_VERSION = 1

    def __init__(self, order: int, min_count: int = 2):
        if order < 1:
            raise ValueError("order must be >= 1")
        self.order = order
        self.min_count = min_count
        self.vocab: set[str] = set()
        # raw[m]: m-gram tuple -> count, per-order BOS padding
        self.raw: dict[int, dict[tuple, int]] = {}
        self._derived_ready = False
        self._cache: dict[tuple, float] = {}

    # -- training ----------------------------------------------------------

    @classmethod
    def train(cls, corpus: Iterable, order: int = 5, min_count: int = 2) -> "NgramModel":
        sentences = [_surfaces(s) for s in corpus]
        if not sentences:
            raise EmptyCorpus("cannot train on an empty corpus")
        model = cls(order, min_count)
        counts: dict[str, int] = {}
        for sent in sentences:
            for w in sent:
                counts[w] = counts.get(w, 0) + 1
        model.vocab = {w for w, c in counts.items() if c >= min_count}
        for m in range(1, order + 1):
            model.raw[m] = {}
        for sent in sentences:
            words = [w if w in model.vocab else UNK for w in sent] + [EOS]
            for m in range(1, order + 1):
                padded = [BOS] * (m - 1) + words
                table = model.raw[m]
                for i in range(len(padded) - m + 1):
                    g = tuple(padded[i:i + m])
                    table[g] = table.get(g, 0) + 1
        model._build_derived()
        return model

    # -- derived structures ------------------------------------------------

    @property
    def support(self) -> list[str]:
        return self._support

    def _build_derived(self) -> None:
        self._support = sorted(self.vocab | {UNK, EOS})
        self._p0 = 1.0 / len(self._support)
        n = self.order
        # adjusted counts: raw at the top order, continuation counts below
        # (BOS-initial grams keep raw counts: nothing can precede BOS)
        self.adjusted: dict[int, dict[tuple, int]] = {n: self.raw[n]}
        for m in range(n - 1, 0, -1):
            adj: dict[tuple, int] = {}
            for g in self.raw[m + 1]:
                suffix = g[1:]
                if suffix[0] == BOS if m > 1 else False:
                    continue
                adj[suffix] = adj.get(suffix, 0) + 1
            for g, c in self.raw[m].items():
                if g[0] == BOS:
                    adj[g] = c
                elif g not in adj:
                    # seen only sentence-initially at higher order
                    adj[g] = adj.get(g, 0)
            self.adjusted[m] = {g: c for g, c in adj.items() if c > 0 or g[0] == BOS}
        # per-order context aggregates over adjusted counts
        self.ctx_total: dict[int, dict[tuple, int]] = {}
        self.ctx_nk: dict[int, dict[tuple, list]] = {}
        for m in range(1, n + 1):
            totals: dict[tuple, int] = {}
            nk: dict[tuple, list] = {}
            for g, c in self.adjusted[m].items():
                if g[-1] == BOS:
                    continue
                ctx = g[:-1]
                totals[ctx] = totals.get(ctx, 0) + c
                bucket = nk.setdefault(ctx, [0, 0, 0])
                bucket[min(c, 3) - 1] += 1
            self.ctx_total[m] = totals
            self.ctx_nk[m] = nk
        self.discounts: dict[int, Optional[tuple]] = {
            m: self._estimate_discounts(m) for m in range(1, n + 1)}
        self._derived_ready = True
        self._cache = {}

    def _estimate_discounts(self, m: int) -> Optional[tuple]:
        cofc = [0, 0, 0, 0]
        for g, c in self.adjusted[m].items():
            if g[-1] == BOS:
                continue
            if 1 <= c <= 4:
                cofc[c - 1] += 1
        n1, n2, n3, n4 = cofc
        if n1 == 0 or n2 == 0 or n3 == 0 or n4 == 0:
            return None
        y = n1 / (n1 + 2.0 * n2)
        d1 = 1.0 - 2.0 * y * n2 / n1
        d2 = 2.0 - 3.0 * y * n3 / n2
        d3 = 3.0 - 4.0 * y * n4 / n3
        if not (0.0 <= d1 <= 1.0 and 0.0 <= d2 <= 2.0 and 0.0 <= d3 <= 3.0):
            return None
        return (d1, d2, d3)

    # -- probabilities -----------------------------------------------------

    def prob(self, word: str, context: Sequence[str] = ()) -> float:
        """p(word | context); word is mapped to <unk> when out of vocabulary."""
        if not self._derived_ready:
            self._build_derived()
        w = word if (word in self.vocab or word == EOS) else UNK
        ctx = tuple(
            c if (c in self.vocab or c in (BOS, EOS)) else UNK
            for c in context)[-(self.order - 1):] if self.order > 1 else ()
        return self._p(w, ctx)

    def logprob(self, word: str, context: Sequence[str] = ()) -> float:
        return math.log(self.prob(word, context))

    def _p(self, w: str, ctx: tuple) -> float:
        key = (ctx, w)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        m = len(ctx) + 1
        if m == 0 or m < 1:
            raise AssertionError
        p = self._p_order(w, ctx, m)
        self._cache[key] = p
        return p

    def _p_order(self, w: str, ctx: tuple, m: int) -> float:
        if m == 0:
            return self._p0
        lower = (lambda: self._p_order(w, ctx[1:], m - 1)) if m > 1 else (lambda: self._p0)
        total = self.ctx_total[m].get(ctx)
        if not total:
            return lower()
        c = self.adjusted[m].get(ctx + (w,), 0)
        disc = self.discounts[m]
        n1, n2, n3 = self.ctx_nk[m][ctx]
        if disc is not None:
            d1, d2, d3 = disc
            d = 0.0 if c == 0 else (d1 if c == 1 else (d2 if c == 2 else d3))
            gamma = (d1 * n1 + d2 * n2 + d3 * n3) / total
            return max(c - d, 0.0) / total + gamma * lower()
        # Witten-Bell fallback for this order
        t = n1 + n2 + n3
        return (c + t * lower()) / (total + t)

    def score_sentence(self, tokens: Sequence[str]) -> tuple[float, int]:
        """Natural-log probability of a sentence (EOS scored) and scored count."""
        logp = 0.0
        history = [BOS] * (self.order - 1)
        for w in list(tokens) + [EOS]:
            logp += self.logprob(w, tuple(history))
            history = (history + [w])[-(self.order - 1):] if self.order > 1 else []
        return logp, len(tokens) + 1

    # -- serialization -----------------------------------------------------

    def save(self, fh: TextIO) -> None:
        fh.write("runon-ngram-model v%d\n" % self.FORMAT_VERSION)
        fh.write("order\t%d\n" % self.order)
        fh.write("min_count\t%d\n" % self.min_count)
        # perplexity convention: every scored token, inserted periods and
        # sentence-end symbols included, counts toward the mean
        fh.write("ppl_denominator\tall-scored-tokens\n")
        fh.write("vocab\t%d\n" % len(self.vocab))
        for w in sorted(self.vocab):
            fh.write("%s\n" % w)
        for m in range(1, self.order + 1):
            table = self.raw[m]
            fh.write("ngrams\t%d\t%d\n" % (m, len(table)))
            for g in sorted(table):
                fh.write("%s\t%d\n" % (" ".join(g), table[g]))

    @classmethod
    def load(cls, fh: TextIO) -> "NgramModel":
        header = fh.readline().strip()
        if not header.startswith("runon-ngram-model"):
            raise DataError("not an n-gram model file: %r" % header)
        fields = {}
        for _ in range(3):
            k, v = fh.readline().rstrip("\n").split("\t")
            fields[k] = v
        model = cls(int(fields["order"]), int(fields["min_count"]))
        tag, count = fh.readline().rstrip("\n").split("\t")
        if tag != "vocab":
            raise DataError("expected vocab section, got %r" % tag)
        model.vocab = {fh.readline().rstrip("\n") for _ in range(int(count))}
        for m in range(1, model.order + 1):
            tag, mm, size = fh.readline().rstrip("\n").split("\t")
            if tag != "ngrams" or int(mm) != m:
                raise DataError("bad ngrams section for order %d" % m)
            table: dict[tuple, int] = {}
            for _ in range(int(size)):
                gram, c = fh.readline().rstrip("\n").rsplit("\t", 1)
                table[tuple(gram.split(" "))] = int(c)
            model.raw[m] = table
        model._build_derived()
        return model


def train_lm(corpus: Iterable, order: int = 5, min_count: int = 2) -> NgramModel:
    return NgramModel.train(corpus, order=order, min_count=min_count)


def _segment(tokens: Sequence[str]) -> list[list[str]]:
    """Split a token stream on literal <s>/</s> boundary markers."""
    sents: list[list[str]] = []
    current: list[str] = []
    for tok in tokens:
        if tok == EOS:
            sents.append(current)
            current = []
        elif tok == BOS:
            continue
        else:
            current.append(tok)
    if current:
        sents.append(current)
    return [s for s in sents if s]


def mean_perplexity(model: NgramModel, tokens: Sequence[str]) -> float:
    """exp of negative mean log-probability per scored token.

    The stream may contain literal <s>/</s> markers delimiting sentences;
    each sentence's end-symbol is scored and counted in the denominator.
    """
    if not tokens:
        raise ValueError("tokens must be non-empty")
    total, count = 0.0, 0
    for sent in _segment(tokens):
        lp, n = model.score_sentence(sent)
        total += lp
        count += n
    return math.exp(-total / count)


def perplexity_decrease_flag(model: NgramModel, tokens: Sequence[str], gap: int) -> bool:
    """True iff inserting a period (and a sentence break) at the gap lowers
    mean per-word perplexity."""
    tokens = _surfaces(tokens) if isinstance(tokens, AnnotatedSentence) else list(tokens)
    if not (0 <= gap < len(tokens) - 1):
        raise ValueError("gap %d out of range for %d tokens" % (gap, len(tokens)))
    with_period = tokens[:gap + 1] + [PERIOD, EOS, BOS] + tokens[gap + 1:]
    return mean_perplexity(model, with_period) < mean_perplexity(model, tokens)


def kgram_comparison_flags(model: NgramModel, tokens: Sequence[str],
                           gap: int) -> tuple[str, str, str]:
    """Compare p(period | k preceding tokens) against p(next word | same),
    for k = 1, 2, 3; 'na' where fewer than k tokens precede the gap."""
    tokens = _surfaces(tokens) if isinstance(tokens, AnnotatedSentence) else list(tokens)
    if not (0 <= gap < len(tokens) - 1):
        raise ValueError("gap %d out of range for %d tokens" % (gap, len(tokens)))
    flags = []
    for k in (1, 2, 3):
        if gap + 1 < k:
            flags.append("na")
            continue
        ctx = tuple(tokens[gap + 1 - k:gap + 1])
        p_period = model.prob(PERIOD, ctx)
        p_word = model.prob(tokens[gap + 1], ctx)
        flags.append("gt" if p_period > p_word else "lt")
    return tuple(flags)
