"""Linear-chain CRF over gap labels.

Emission features are sparse indicators per (feature, label); transitions
are label-pair indicators.  Training maximizes the L1-penalized
conditional log-likelihood (penalty weight 1/c, matching the CRF++ knob)
with L-BFGS-B over a split of each weight into positive and negative
parts, which keeps the penalty exact and yields exact zeros.

Decoding follows the marginal-threshold rule: a gap is labeled PERIOD
when the posterior probability of SPACE falls below tau (default 0.70).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np
import scipy.optimize
import scipy.sparse

from .data import DataError, GapLabel

N_LABELS = 2
LABELS = (GapLabel.SPACE, GapLabel.PERIOD)  # index order; ties prefer SPACE


class NoData(DataError):
    """Empty training stream."""


class DegenerateLabelsWarning(UserWarning):
    """Training data contains a single label class."""


@dataclass
class CrfConfig:
    c: float = 10.0           # larger c fits tighter; penalty weight is 1/c
    cutoff: int = 5           # drop features firing on fewer gaps than this
    tau: float = 0.70         # marginal-threshold for decoding
    compare_label: GapLabel = GapLabel.SPACE  # label whose marginal tau compares
    max_iter: int = 300
    tol: float = 1e-6


def _label_index(lab: GapLabel) -> int:
    return LABELS.index(lab)


class CrfModel:
    FORMAT_VERSION = 1

    def __init__(self, features: list[str], weights: np.ndarray,
                 transitions: np.ndarray, config: CrfConfig,
                 meta: Optional[dict] = None):
        self.features = features
        self.feature_index = {f: i for i, f in enumerate(features)}
        self.weights = np.asarray(weights, dtype=np.float64)      # [F, 2]
        self.transitions = np.asarray(transitions, dtype=np.float64)  # [2, 2]
        self.config = config
        self.meta = meta or {}

    # -- scoring -----------------------------------------------------------

    def emissions(self, seq: Sequence[Sequence[str]]) -> np.ndarray:
        """Per-gap label scores [len(seq), 2] from active features."""
        out = np.zeros((len(seq), N_LABELS))
        for t, feats in enumerate(seq):
            for f in feats:
                i = self.feature_index.get(f)
                if i is not None:
                    out[t] += self.weights[i]
        return out

    def marginals(self, seq: Sequence[Sequence[str]]) -> np.ndarray:
        """Exact posterior p(label) per gap via forward-backward, [len, 2]."""
        emis = self.emissions(seq)
        alpha, beta, logz = forward_backward(emis, self.transitions)
        return np.exp(alpha + beta - logz)

    def decode(self, seq: Sequence[Sequence[str]],
               tau: Optional[float] = None) -> list[GapLabel]:
        """PERIOD wherever the compare-label marginal drops below tau."""
        if not len(seq):
            return []
        if tau is None:
            tau = self.config.tau
        marg = self.marginals(seq)
        k = _label_index(self.config.compare_label)
        return [GapLabel.PERIOD if marg[t, k] < tau else GapLabel.SPACE
                for t in range(len(seq))]

    def viterbi(self, seq: Sequence[Sequence[str]]) -> list[GapLabel]:
        """Highest-scoring labeling; ties resolve to the lexicographically
        first sequence under the order SPACE < PERIOD."""
        if not len(seq):
            return []
        emis = self.emissions(seq)
        n = len(seq)
        # suffix-best scores so the front-to-back greedy pick is lexicographic
        v = np.zeros((n, N_LABELS))
        v[n - 1] = emis[n - 1]
        for t in range(n - 2, -1, -1):
            v[t] = emis[t] + np.max(self.transitions + v[t + 1][None, :], axis=1)
        path = [int(np.argmax(v[0]))]
        for t in range(1, n):
            path.append(int(np.argmax(self.transitions[path[-1]] + v[t])))
        return [LABELS[y] for y in path]

    # -- serialization -----------------------------------------------------

    def save(self, fh: TextIO) -> None:
        cfg = self.config
        fh.write("runon-crf-model v%d\n" % self.FORMAT_VERSION)
        fh.write("c\t%r\n" % cfg.c)
        fh.write("cutoff\t%d\n" % cfg.cutoff)
        fh.write("tau\t%r\n" % cfg.tau)
        fh.write("compare_label\t%s\n" % cfg.compare_label.value)
        for k, v in sorted(self.meta.items()):
            fh.write("meta:%s\t%s\n" % (k, v))
        fh.write("transitions\t%s\n" % "\t".join(
            x.hex() for x in self.transitions.ravel()))
        fh.write("features\t%d\n" % len(self.features))
        for f, (ws, wp) in zip(self.features, self.weights):
            fh.write("%s\t%s\t%s\n" % (f, ws.hex(), wp.hex()))

    @classmethod
    def load(cls, fh: TextIO) -> "CrfModel":
        header = fh.readline().strip()
        if not header.startswith("runon-crf-model"):
            raise DataError("not a CRF model file: %r" % header)
        fields: dict[str, str] = {}
        meta: dict[str, str] = {}
        trans = None
        while True:
            line = fh.readline().rstrip("\n")
            key, _, rest = line.partition("\t")
            if key == "features":
                n_feats = int(rest)
                break
            if key == "transitions":
                trans = np.array([float.fromhex(x) for x in rest.split("\t")]).reshape(2, 2)
            elif key.startswith("meta:"):
                meta[key[5:]] = rest
            else:
                fields[key] = rest
        config = CrfConfig(
            c=float(fields["c"]), cutoff=int(fields["cutoff"]),
            tau=float(fields["tau"]),
            compare_label=GapLabel.parse(fields["compare_label"]))
        features, rows = [], []
        for _ in range(n_feats):
            f, ws, wp = fh.readline().rstrip("\n").split("\t")
            features.append(f)
            rows.append([float.fromhex(ws), float.fromhex(wp)])
        weights = np.array(rows) if rows else np.zeros((0, N_LABELS))
        return cls(features, weights, trans, config, meta)


# ---------------------------------------------------------------------------
# forward-backward and brute-force scoring


def logsumexp2(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


def forward_backward(emis: np.ndarray, trans: np.ndarray):
    """Log-space alpha/beta tables and log partition for one sequence."""
    n = emis.shape[0]
    alpha = np.zeros_like(emis)
    beta = np.zeros_like(emis)
    alpha[0] = emis[0]
    for t in range(1, n):
        alpha[t] = emis[t] + logsumexp2(alpha[t - 1][:, None] + trans, axis=0)
    for t in range(n - 2, -1, -1):
        beta[t] = logsumexp2(trans + emis[t + 1][None, :] + beta[t + 1][None, :], axis=1)
    logz = float(logsumexp2(alpha[n - 1], axis=0))
    return alpha, beta, logz


def sequence_score(emis: np.ndarray, trans: np.ndarray, labels: Sequence[int]) -> float:
    s = float(emis[0, labels[0]])
    for t in range(1, len(labels)):
        s += float(trans[labels[t - 1], labels[t]] + emis[t, labels[t]])
    return s


# ---------------------------------------------------------------------------
# training


class _Objective:
    """Penalty-free NLL and gradient over an indexed dataset.

    Sequences are bucketed by length so forward-backward vectorizes over
    whole buckets; the reduction order is fixed, so results are
    reproducible run to run.
    """

    def __init__(self, sequences: list[list[list[int]]], golds: list[list[int]],
                 n_features: int):
        self.n_features = n_features
        rows, cols = [], []
        gap = 0
        flat_gold = []
        for seq, gold in zip(sequences, golds):
            for feats, y in zip(seq, gold):
                for f in feats:
                    rows.append(gap)
                    cols.append(f)
                flat_gold.append(y)
                gap += 1
        self.n_gaps = gap
        self.x = scipy.sparse.csr_matrix(
            (np.ones(len(rows)), (rows, cols)), shape=(gap, n_features))
        self.gold = np.array(flat_gold, dtype=np.intp)
        self.gold_onehot = np.zeros((gap, N_LABELS))
        self.gold_onehot[np.arange(gap), self.gold] = 1.0
        # bucket sequences by length; remember each sequence's gap offsets
        offsets = np.cumsum([0] + [len(s) for s in sequences])
        by_len: dict[int, list[int]] = {}
        for i, s in enumerate(sequences):
            by_len.setdefault(len(s), []).append(i)
        self.buckets = []
        for length in sorted(by_len):
            idx = by_len[length]
            starts = offsets[idx]
            gather = (starts[:, None] + np.arange(length)[None, :]).ravel()
            self.buckets.append((length, np.array(idx), gather))
        self.gold_trans = np.zeros((N_LABELS, N_LABELS))
        for gold in golds:
            for a, b in zip(gold, gold[1:]):
                self.gold_trans[a, b] += 1.0

    def value_and_grad(self, weights: np.ndarray, trans: np.ndarray):
        emis = self.x @ weights  # [n_gaps, 2]
        nll = 0.0
        node_marg = np.zeros_like(emis)
        grad_trans = -self.gold_trans.copy()
        for length, seq_idx, gather in self.buckets:
            e = emis[gather].reshape(len(seq_idx), length, N_LABELS)
            b_count = len(seq_idx)
            alpha = np.empty_like(e)
            beta = np.empty_like(e)
            alpha[:, 0] = e[:, 0]
            for t in range(1, length):
                alpha[:, t] = e[:, t] + logsumexp2(
                    alpha[:, t - 1][:, :, None] + trans[None, :, :], axis=1)
            beta[:, length - 1] = 0.0
            for t in range(length - 2, -1, -1):
                beta[:, t] = logsumexp2(
                    trans[None, :, :] + (e[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
            logz = logsumexp2(alpha[:, length - 1], axis=1)  # [B]
            mu = np.exp(alpha + beta - logz[:, None, None])
            node_marg[gather] = mu.reshape(-1, N_LABELS)
            if length > 1:
                xi = np.exp(alpha[:, :-1, :, None] + trans[None, None, :, :]
                            + (e[:, 1:] + beta[:, 1:])[:, :, None, :]
                            - logz[:, None, None, None])
                grad_trans += xi.sum(axis=(0, 1))
            # gold path scores for this bucket
            g = self.gold_onehot[gather].reshape(b_count, length, N_LABELS)
            gold_score = (e * g).sum(axis=(1, 2))
            ga = np.argmax(g, axis=2)
            for t in range(1, length):
                gold_score += trans[ga[:, t - 1], ga[:, t]]
            nll += float(np.sum(logz - gold_score))
        grad_w = self.x.T @ (node_marg - self.gold_onehot)
        return nll, np.asarray(grad_w), grad_trans


def index_features(data: Iterable[tuple[list[list[str]], list[GapLabel]]],
                   cutoff: int):
    """Count feature frequencies, apply the cutoff, and index the dataset."""
    data = [(feats, labels) for feats, labels in data if feats]
    freq: dict[str, int] = {}
    for feats, _ in data:
        for row in feats:
            for f in row:
                freq[f] = freq.get(f, 0) + 1
    features = sorted(f for f, c in freq.items() if c >= cutoff)
    index = {f: i for i, f in enumerate(features)}
    sequences = [[[index[f] for f in row if f in index] for row in feats]
                 for feats, _ in data]
    golds = [[_label_index(l) for l in labels] for _, labels in data]
    return features, sequences, golds


def train_crf(data: Iterable[tuple[list[list[str]], list[GapLabel]]],
              config: Optional[CrfConfig] = None) -> CrfModel:
    """L1-regularized maximum-likelihood training."""
    config = config or CrfConfig()
    features, sequences, golds = index_features(data, config.cutoff)
    if not sequences:
        raise NoData("no non-empty training sequences")
    seen = {y for g in golds for y in g}
    if len(seen) < 2:
        warnings.warn("training data contains a single label class",
                      DegenerateLabelsWarning)
    obj = _Objective(sequences, golds, len(features))
    n_w = len(features) * N_LABELS
    n_all = n_w + N_LABELS * N_LABELS
    lam = 1.0 / config.c if config.c > 0 else 0.0

    def split(theta):
        w = theta[:n_w].reshape(len(features), N_LABELS)
        t = theta[n_w:].reshape(N_LABELS, N_LABELS)
        return w, t

    def f_and_g(uv):
        theta = uv[:n_all] - uv[n_all:]
        w, t = split(theta)
        nll, gw, gt = obj.value_and_grad(w, t)
        g = np.concatenate([gw.ravel(), gt.ravel()])
        val = nll + lam * float(np.sum(uv))
        grad = np.concatenate([g + lam, -g + lam])
        return val, grad

    x0 = np.zeros(2 * n_all)
    result = scipy.optimize.minimize(
        f_and_g, x0, jac=True, method="L-BFGS-B",
        bounds=[(0.0, None)] * (2 * n_all),
        options={"maxiter": config.max_iter, "ftol": config.tol,
                 "gtol": 1e-8, "maxls": 50})
    theta = result.x[:n_all] - result.x[n_all:]
    weights, trans = split(theta)
    meta = {"iterations": result.nit, "objective": "%r" % result.fun,
            "converged": result.success}
    return CrfModel(features, weights.copy(), trans.copy(), config, meta)


# ---------------------------------------------------------------------------
# diagnostics


def nll_and_grad(sequences, golds, n_features, weights, trans):
    """Un-penalized NLL and gradients; exposed for gradient checking."""
    obj = _Objective(sequences, golds, n_features)
    return obj.value_and_grad(weights, trans)


def sweep_threshold(model: CrfModel, seqs: list, taus: Sequence[float]):
    """Decode a dataset at each tau; returns (tau, period_count, decoded) rows."""
    margs = [model.marginals(s) if len(s) else np.zeros((0, N_LABELS)) for s in seqs]
    k = _label_index(model.config.compare_label)
    out = []
    for tau in taus:
        decoded = [[GapLabel.PERIOD if m[t, k] < tau else GapLabel.SPACE
                    for t in range(m.shape[0])] for m in margs]
        n_periods = sum(l is GapLabel.PERIOD for d in decoded for l in d)
        out.append((tau, n_periods, decoded))
    return out
