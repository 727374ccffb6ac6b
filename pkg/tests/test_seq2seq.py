"""Attention labeler: gradients, training behavior, decoding, serialization."""

import numpy as np
import pytest

from runon.data import GapLabel, Token
from runon.seq2seq import (
    UNK,
    EmptyInput,
    LengthMismatch,
    NoData,
    S2SConfig,
    S2SModel,
    build_vocab,
    evaluate_loss,
    fuse_output,
    gradient_check,
    load_embeddings,
    train_s2s,
)
from conftest import labeled, sent

S, P = GapLabel.SPACE, GapLabel.PERIOD

TINY = dict(hidden_size=3, embedding_size=4, label_embedding_size=2,
            attention_size=3, vocab_size=6, dropout_rate=0.0, batch_size=4,
            epochs=1, seed=13)


def tiny_model(dtype=np.float32, **over):
    cfg = S2SConfig(**{**TINY, **over})
    vocab = [UNK, "a", "b", "c", "d", "e"]
    return S2SModel(cfg, vocab, dtype=dtype)


def boundary_data(n=60, seed=0):
    """PERIOD always falls after the word 'stop'."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        left = [str(w) for w in rng.choice(["a", "b", "c"], size=rng.integers(2, 4))]
        right = [str(w) for w in rng.choice(["d", "e"], size=rng.integers(2, 4))]
        words = left + ["stop"] + right
        labs = "S" * len(left) + "P" + "S" * len(right)
        out.append(labeled(" ".join(words), labs[:-1] + "S"))
    return out


class TestGradients:
    def test_matches_central_differences(self):
        model = tiny_model(dtype=np.float64)
        rng = np.random.default_rng(21)
        batch = []
        for _ in range(2):
            n = int(rng.integers(2, 5))
            ids = [int(i) for i in rng.integers(0, 6, size=n)]
            gold = [int(g) for g in rng.integers(0, 2, size=n)]
            batch.append((ids, gold))
        assert gradient_check(model, batch) < 1e-4

    def test_requires_float64(self):
        with pytest.raises(ValueError):
            gradient_check(tiny_model(), [([1], [0])])

    def test_unused_token_embedding_gets_zero_gradient(self):
        model = tiny_model(dtype=np.float64)
        _, grads = model.loss_and_grads([([1, 2], [0, 1])])
        assert np.all(grads["emb_tok"][5] == 0.0)
        assert np.any(grads["emb_tok"][1] != 0.0)


class TestForward:
    def test_attention_rows_normalize(self):
        model = tiny_model()
        out = model.predict(["a", "b", "c", "zzz"])
        assert out.attention.shape == (4, 4)
        assert np.allclose(out.attention.sum(axis=1), 1.0, atol=1e-5)
        assert np.allclose(out.probs.sum(axis=1), 1.0, atol=1e-5)

    def test_empty_input(self):
        model = tiny_model()
        with pytest.raises(EmptyInput):
            model.predict([])
        with pytest.raises(EmptyInput):
            model.encode([])

    def test_truncation_copies_tail_through(self):
        model = tiny_model(max_input_length=3)
        out = model.predict(["a", "b", "c", "d", "e"])
        assert out.truncated == 2
        assert out.labels[3:] == [S, S]
        assert np.array_equal(out.probs[3:, 0], [1.0, 1.0])
        assert model.truncation_count == 2

    def test_label_sequence_final_gap_is_space(self):
        model = tiny_model()
        seq = model.label_sequence(sent("a b c d e"))
        assert seq.labels[-1] is S
        assert len(seq.labels) == 5


class TestTraining:
    def test_no_data(self):
        with pytest.raises(NoData):
            train_s2s([], S2SConfig(**TINY))

    def test_loss_decreases_and_pattern_learned(self):
        data = boundary_data()
        cfg = S2SConfig(**{**TINY, "epochs": 25, "learning_rate": 0.15,
                           "hidden_size": 8, "embedding_size": 8,
                           "attention_size": 4, "vocab_size": 10})
        model = train_s2s(data, cfg, val_data=data[:10])
        first, last = model.history[0][1], model.history[-1][1]
        assert last < first
        hits = 0
        for seq in data[:20]:
            pred = model.label_sequence(seq.sentence)
            hits += pred.labels == seq.labels
        assert hits >= 15

    def test_deterministic_given_seed(self):
        data = boundary_data(20)
        cfg = dict(TINY, epochs=2, learning_rate=0.05)
        a = train_s2s(data, S2SConfig(**cfg))
        b = train_s2s(data, S2SConfig(**cfg))
        assert a.history == b.history
        for k in a.params:
            assert np.array_equal(a.params[k], b.params[k])

    def test_zero_learning_rate_keeps_init(self):
        data = boundary_data(20)
        cfg = S2SConfig(**dict(TINY, learning_rate=0.0, epochs=2))
        model = train_s2s(data, cfg)
        fresh = S2SModel(S2SConfig(**dict(TINY, learning_rate=0.0, epochs=2)),
                         model.vocab)
        for k in model.params:
            assert np.array_equal(model.params[k], fresh.params[k])

    def test_evaluate_loss_matches_batch_loss(self):
        model = tiny_model(dtype=np.float64)
        batch = [([1, 2, 3], [0, 1, 0]), ([4, 5], [1, 0])]
        loss, _ = model.loss_and_grads(batch)
        assert evaluate_loss(model, batch) == pytest.approx(loss)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            S2SConfig(hidden_size=0).validate()
        with pytest.raises(ValueError):
            S2SConfig(dropout_rate=1.0).validate()


class TestVocabAndEmbeddings:
    def test_build_vocab_ranked_with_unk_first(self):
        vocab = build_vocab([["b", "a", "b"], ["a", "b", "c"]], size=3)
        assert vocab == [UNK, "b", "a"]

    def test_unknown_words_map_to_unk(self):
        model = tiny_model()
        assert model.token_ids(["a", "zzz"]) == [1, 0]

    def test_load_embeddings_and_init(self):
        import io
        emb = load_embeddings(io.StringIO("a 1 2 3 4\nzzz 9 9 9 9\n\n"))
        assert list(emb) == ["a", "zzz"]
        cfg = S2SConfig(**TINY)
        model = S2SModel(cfg, [UNK, "a", "b", "c", "d", "e"],
                         embeddings={"a": [1, 2, 3, 4]})
        assert np.array_equal(model.params["emb_tok"][1], [1, 2, 3, 4])


class TestSerialization:
    def test_round_trip_predictions_identical(self, tmp_path):
        data = boundary_data(20)
        model = train_s2s(data, S2SConfig(**dict(TINY, epochs=2,
                                                 learning_rate=0.05)))
        path = tmp_path / "model.npz"
        model.save(path)
        clone = S2SModel.load(path)
        assert clone.vocab == model.vocab
        for seq in data[:5]:
            a = model.predict(seq.sentence.surfaces)
            b = clone.predict(seq.sentence.surfaces)
            assert np.array_equal(a.probs, b.probs)
            assert a.labels == b.labels

    def test_rejects_wrong_version(self, tmp_path):
        model = tiny_model()
        path = tmp_path / "model.npz"
        model.save(path)
        import numpy as np_
        with np_.load(path) as z:
            arrays = dict(z)
        arrays["format_version"] = np_.array([99])
        np_.savez(path, **arrays)
        with pytest.raises(Exception):
            S2SModel.load(path)


class TestFuseOutput:
    def test_inserts_period_and_capitalizes(self):
        s = sent("the dog ran it slept .")
        labels = [S, S, P, S, S, S]
        assert fuse_output(s, labels) == "the dog ran. It slept."

    def test_no_boundaries_is_plain_detokenization(self):
        s = sent("the dog ran .")
        assert fuse_output(s, [S] * 4) == "the dog ran."

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            fuse_output(sent("a b"), [S])
