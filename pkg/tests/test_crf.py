"""Linear-chain CRF: exactness, training, decoding, serialization."""

import io
import itertools
import math

import numpy as np
import pytest

from runon import crf as M
from runon.crf import (
    LABELS,
    CrfConfig,
    CrfModel,
    DegenerateLabelsWarning,
    NoData,
    forward_backward,
    nll_and_grad,
    sequence_score,
    sweep_threshold,
    train_crf,
)
from runon.data import GapLabel

S, P = GapLabel.SPACE, GapLabel.PERIOD


def random_model(rng, n_features=20):
    features = ["f%d" % i for i in range(n_features)]
    weights = rng.normal(size=(n_features, 2))
    trans = rng.normal(size=(2, 2))
    return CrfModel(features, weights, trans, CrfConfig())


def random_sequence(rng, n_features=20, max_len=8):
    length = int(rng.integers(1, max_len + 1))
    return [["f%d" % j for j in rng.choice(n_features, size=rng.integers(0, 4),
                                           replace=False)]
            for _ in range(length)]


def brute_force(emis, trans):
    """Enumerate all labelings: log partition, node marginals, best path."""
    n = emis.shape[0]
    scores = {}
    for path in itertools.product((0, 1), repeat=n):
        scores[path] = sequence_score(emis, trans, path)
    m = max(scores.values())
    z = sum(math.exp(s - m) for s in scores.values())
    logz = m + math.log(z)
    marg = np.zeros((n, 2))
    for path, s in scores.items():
        w = math.exp(s - logz)
        for t, y in enumerate(path):
            marg[t, y] += w
    top = max(scores.values())
    optimal = sorted(p for p, s in scores.items() if s >= top - 1e-9)
    return logz, marg, [list(p) for p in optimal]


class TestExactness:
    def test_marginals_and_viterbi_match_enumeration(self):
        rng = np.random.default_rng(42)
        for _ in range(500):
            model = random_model(rng)
            seq = random_sequence(rng)
            emis = model.emissions(seq)
            logz, marg, optimal = brute_force(emis, model.transitions)
            alpha, beta, got_logz = forward_backward(emis, model.transitions)
            assert abs(got_logz - logz) / max(abs(logz), 1.0) < 1e-10
            got = model.marginals(seq)
            assert np.max(np.abs(got - marg)) < 1e-10
            path = [LABELS.index(l) for l in model.viterbi(seq)]
            assert path in optimal
            if len(optimal) == 1:
                assert path == optimal[0]

    def test_viterbi_tie_breaks_lexicographically(self):
        model = CrfModel(["f"], np.zeros((1, 2)), np.zeros((2, 2)), CrfConfig())
        seq = [["f"], ["f"], ["f"]]
        assert model.viterbi(seq) == [S, S, S]

    def test_marginals_normalize(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            model = random_model(rng)
            seq = random_sequence(rng)
            marg = model.marginals(seq)
            assert np.allclose(marg.sum(axis=1), 1.0, atol=1e-9)

    def test_length_one_is_softmax(self):
        rng = np.random.default_rng(8)
        model = random_model(rng)
        seq = [["f0", "f3"]]
        e = model.emissions(seq)[0]
        expected = np.exp(e) / np.exp(e).sum()
        assert np.allclose(model.marginals(seq)[0], expected)


class TestGradient:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(11)
        n_feat = 20
        sequences, golds = [], []
        for _ in range(6):
            seq = [list(rng.choice(n_feat, size=rng.integers(1, 4), replace=False))
                   for _ in range(5)]
            sequences.append([[int(f) for f in row] for row in seq])
            golds.append([int(rng.integers(0, 2)) for _ in range(5)])
        w = rng.normal(size=(n_feat, 2)) * 0.5
        t = rng.normal(size=(2, 2)) * 0.5
        _, gw, gt = nll_and_grad(sequences, golds, n_feat, w, t)
        h = 1e-5

        def value(w, t):
            val, _, _ = nll_and_grad(sequences, golds, n_feat, w, t)
            return val

        worst = 0.0
        for arr, grad in ((w, gw), (t, gt)):
            flat, gflat = arr.ravel(), np.asarray(grad).ravel()
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = value(w, t)
                flat[i] = orig - h
                down = value(w, t)
                flat[i] = orig
                num = (up - down) / (2 * h)
                worst = max(worst, abs(num - gflat[i]) / max(abs(num), 1e-8))
        assert worst < 1e-4


def boundary_dataset(n=40, seed=0):
    """Gaps carrying feature 'b' are PERIOD, gaps with 'i' are SPACE."""
    rng = np.random.default_rng(seed)
    data = []
    for _ in range(n):
        length = int(rng.integers(3, 7))
        boundary = int(rng.integers(0, length))
        feats, labels = [], []
        for t in range(length):
            if t == boundary:
                feats.append(["b", "x%d" % rng.integers(3)])
                labels.append(P)
            else:
                feats.append(["i", "x%d" % rng.integers(3)])
                labels.append(S)
        data.append((feats, labels))
    return data


class TestTraining:
    def test_no_data(self):
        with pytest.raises(NoData):
            train_crf([], CrfConfig())

    def test_learns_separable_pattern(self):
        data = boundary_dataset()
        model = train_crf(data, CrfConfig(c=100.0, cutoff=1, max_iter=100))
        for feats, labels in data[:10]:
            assert model.decode(feats) == labels

    def test_degenerate_labels_warn_and_predict_space(self):
        data = [([["a"], ["a"]], [S, S]), ([["a"]], [S])]
        with pytest.warns(DegenerateLabelsWarning):
            model = train_crf(data, CrfConfig(cutoff=1, max_iter=50))
        assert model.decode([["a"], ["a"], ["a"]]) == [S, S, S]

    def test_duplicating_data_equals_scaling_penalty(self):
        # tripling every sequence multiplies both the data term and, once c
        # is divided by three, the penalty term by exactly three, so the
        # optimum is unchanged
        data = boundary_dataset(20)
        a = train_crf(data, CrfConfig(c=10.0, cutoff=1, max_iter=300, tol=1e-10))
        b = train_crf(data * 3, CrfConfig(c=10.0 / 3.0, cutoff=1, max_iter=300,
                                          tol=1e-10))
        assert a.features == b.features
        assert np.max(np.abs(a.weights - b.weights)) < 0.02
        assert np.max(np.abs(a.transitions - b.transitions)) < 0.02

    def test_feature_cutoff_applied(self):
        data = boundary_dataset(30)
        data.append((([["rare-once"]]), [S]))
        model = train_crf(data, CrfConfig(cutoff=5, max_iter=30))
        assert "rare-once" not in model.features
        freq = {}
        for feats, _ in data:
            for row in feats:
                for f in row:
                    freq[f] = freq.get(f, 0) + 1
        for f in model.features:
            assert freq[f] >= 5

    def test_l1_sparsity_monotone_in_penalty(self):
        data = boundary_dataset(30, seed=2)

        def zeros(c):
            model = train_crf(data, CrfConfig(c=c, cutoff=1, max_iter=300))
            return int(np.sum(model.weights == 0.0))

        counts = [zeros(c) for c in (1000.0, 10.0, 0.5, 0.05)]
        assert all(a <= b for a, b in zip(counts, counts[1:]))
        assert counts[-1] > counts[0]


class TestDecoding:
    def test_zero_weight_model_flags_everything_at_default_tau(self):
        model = CrfModel(["f"], np.zeros((1, 2)), np.zeros((2, 2)), CrfConfig())
        assert model.decode([["f"], ["f"]]) == [P, P]  # p(SPACE)=0.5 < 0.70

    def test_boundary_is_strict(self):
        model = CrfModel(["f"], np.zeros((1, 2)), np.zeros((2, 2)), CrfConfig())
        # p(SPACE) = 0.5 exactly; tau = 0.5 must not flag
        assert model.decode([["f"]], tau=0.5) == [S]
        assert model.decode([["f"]], tau=0.5000001) == [P]

    def test_threshold_monotonicity(self):
        model = train_crf(boundary_dataset(30), CrfConfig(cutoff=1, max_iter=60))
        seqs = [feats for feats, _ in boundary_dataset(20, seed=9)]
        taus = [0.05 * k for k in range(1, 20)]
        rows = sweep_threshold(model, seqs, taus)
        counts = [n for _, n, _ in rows]
        assert counts == sorted(counts)

    def test_empty_sequence(self):
        model = CrfModel(["f"], np.zeros((1, 2)), np.zeros((2, 2)), CrfConfig())
        assert model.decode([]) == []
        assert model.viterbi([]) == []


class TestSerialization:
    def test_round_trip_bit_exact(self):
        model = train_crf(boundary_dataset(25), CrfConfig(c=5.0, cutoff=1,
                                                          max_iter=80))
        buf = io.StringIO()
        model.save(buf)
        buf.seek(0)
        clone = CrfModel.load(buf)
        assert clone.features == model.features
        assert np.array_equal(clone.weights, model.weights)
        assert np.array_equal(clone.transitions, model.transitions)
        assert clone.config.c == model.config.c
        assert clone.config.tau == model.config.tau
        seqs = [feats for feats, _ in boundary_dataset(10, seed=5)]
        for seq in seqs:
            assert np.array_equal(clone.marginals(seq), model.marginals(seq))

    def test_rejects_foreign_file(self):
        with pytest.raises(Exception):
            CrfModel.load(io.StringIO("something else\n"))
