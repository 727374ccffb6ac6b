"""Seq2Seq attention labeler: bidirectional LSTM encoder, unidirectional
LSTM decoder with additive attention, one binary gap label per token.

Everything is plain numpy: forward, backpropagation through time, and
Adagrad updates are hand-rolled so the whole model fits in one file and
can be verified against finite differences.  Training runs in float32;
gradient checking uses float64 with dropout off.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import (
    AnnotatedSentence,
    DataError,
    GapLabel,
    LabeledSequence,
    detokenize,
)

UNK = "<unk>"
N_CLASSES = 2          # SPACE, PERIOD
START_LABEL = 2        # decoder input at the first step


class EmptyInput(DataError):
    pass


class NoData(DataError):
    pass


class LengthMismatch(DataError):
    pass


@dataclass
class S2SConfig:
    hidden_size: int = 64          # desk-scale default; raise for real corpora
    embedding_size: int = 300
    label_embedding_size: int = 16
    attention_size: int = 32
    vocab_size: int = 2000
    max_input_length: int = 100
    dropout_rate: float = 0.5
    batch_size: int = 128
    learning_rate: float = 1e-4
    lr_decay: float = 0.5
    lr_patience: int = 5   # epochs without validation improvement before decay
    epochs: int = 10
    seed: int = 0

    def validate(self):
        for name in ("hidden_size", "embedding_size", "label_embedding_size",
                     "attention_size", "vocab_size", "max_input_length",
                     "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be >= 1" % name)
        if not (0.0 <= self.dropout_rate < 1.0):
            raise ValueError("dropout_rate must lie in [0, 1)")


@dataclass
class LabelOutput:
    probs: np.ndarray          # [L, 2]
    labels: list[GapLabel]
    attention: np.ndarray      # [L, L]
    truncated: int = 0         # tokens beyond max_input_length copied through


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _softmax(x, axis=-1):
    m = np.max(x, axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def _lstm_step(w, b, x, h_prev, c_prev):
    hsz = h_prev.shape[0]
    z = np.concatenate([x, h_prev]) @ w + b
    i = _sigmoid(z[:hsz])
    f = _sigmoid(z[hsz:2 * hsz])
    o = _sigmoid(z[2 * hsz:3 * hsz])
    g = np.tanh(z[3 * hsz:])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c, (x, h_prev, c_prev, i, f, o, g, c)


def _lstm_back(w, cache, dh, dc):
    x, h_prev, c_prev, i, f, o, g, c = cache
    tc = np.tanh(c)
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    dc_prev = dc * f
    dz = np.concatenate([di * i * (1 - i), df * f * (1 - f),
                         do * o * (1 - o), dg * (1 - g * g)])
    xh = np.concatenate([x, h_prev])
    dw = np.outer(xh, dz)
    dxh = w @ dz
    return dxh[:x.shape[0]], dxh[x.shape[0]:], dc_prev, dw, dz


class S2SModel:
    FORMAT_VERSION = 1

    PARAM_NAMES = ("emb_tok", "emb_lab", "enc_f_w", "enc_f_b", "enc_b_w",
                   "enc_b_b", "init_w", "init_b", "att_enc", "att_dec",
                   "att_v", "dec_w", "dec_b", "out_w", "out_b")

    def __init__(self, config: S2SConfig, vocab: list[str],
                 params: Optional[dict] = None, dtype=np.float32,
                 embeddings: Optional[dict] = None):
        config.validate()
        self.config = config
        self.vocab = list(vocab)
        self.word_to_id = {w: i for i, w in enumerate(self.vocab)}
        if UNK not in self.word_to_id:
            raise ValueError("vocabulary must contain %s" % UNK)
        self.dtype = dtype
        self.params = params if params is not None else self._init_params(embeddings)
        self.truncation_count = 0

    def _init_params(self, embeddings: Optional[dict]) -> dict:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        h, de, dl, a = (cfg.hidden_size, cfg.embedding_size,
                        cfg.label_embedding_size, cfg.attention_size)
        v = len(self.vocab)

        def u(*shape):
            return rng.uniform(-0.1, 0.1, size=shape).astype(self.dtype)

        params = {
            "emb_tok": u(v, de),
            "emb_lab": u(3, dl),
            "enc_f_w": u(de + h, 4 * h), "enc_f_b": np.zeros(4 * h, self.dtype),
            "enc_b_w": u(de + h, 4 * h), "enc_b_b": np.zeros(4 * h, self.dtype),
            "init_w": u(2 * h, h), "init_b": np.zeros(h, self.dtype),
            "att_enc": u(2 * h, a), "att_dec": u(h, a), "att_v": u(a),
            "dec_w": u(dl + 2 * h + h, 4 * h), "dec_b": np.zeros(4 * h, self.dtype),
            "out_w": u(h + 2 * h, N_CLASSES), "out_b": np.zeros(N_CLASSES, self.dtype),
        }
        if embeddings:
            for i, w in enumerate(self.vocab):
                vec = embeddings.get(w)
                if vec is not None:
                    params["emb_tok"][i] = np.asarray(vec, self.dtype)
        return params

    def token_ids(self, surfaces: Sequence[str]) -> list[int]:
        unk = self.word_to_id[UNK]
        return [self.word_to_id.get(w, unk) for w in surfaces]

    # -- forward -----------------------------------------------------------

    def encode(self, ids: Sequence[int], dropout_rng=None):
        """Per-token encoder states [L, 2h], decoder init state, and caches."""
        if not len(ids):
            raise EmptyInput("cannot encode an empty sequence")
        p = self.params
        cfg = self.config
        h = cfg.hidden_size
        x = p["emb_tok"][np.asarray(ids)].astype(self.dtype, copy=True)
        drop_x = None
        if dropout_rng is not None and cfg.dropout_rate > 0:
            keep = 1.0 - cfg.dropout_rate
            drop_x = (dropout_rng.random(x.shape) < keep).astype(self.dtype) / keep
            x = x * drop_x
        n = len(ids)
        hf = np.zeros((n, h), self.dtype)
        hb = np.zeros((n, h), self.dtype)
        caches_f, caches_b = [], []
        hp = np.zeros(h, self.dtype)
        cp = np.zeros(h, self.dtype)
        for t in range(n):
            hp, cp, cache = _lstm_step(p["enc_f_w"], p["enc_f_b"], x[t], hp, cp)
            hf[t] = hp
            caches_f.append(cache)
        hp = np.zeros(h, self.dtype)
        cp = np.zeros(h, self.dtype)
        for t in range(n - 1, -1, -1):
            hp, cp, cache = _lstm_step(p["enc_b_w"], p["enc_b_b"], x[t], hp, cp)
            hb[t] = hp
            caches_b.append(cache)
        states = np.concatenate([hf, hb], axis=1)
        summary = np.concatenate([hf[n - 1], hb[0]])
        s0_pre = summary @ p["init_w"] + p["init_b"]
        s0 = np.tanh(s0_pre)
        cache = {"x": x, "drop_x": drop_x, "ids": list(ids), "caches_f": caches_f,
                 "caches_b": caches_b, "summary": summary, "s0_pre": s0_pre,
                 "states": states}
        return states, s0, cache

    def _attend(self, states, hw, s_prev):
        p = self.params
        u = np.tanh(hw + s_prev @ p["att_dec"])
        e = u @ p["att_v"]
        a = _softmax(e)
        ctx = a @ states
        return ctx, a, u

    def _decode_steps(self, states, s0, gold: Optional[Sequence[int]],
                      dropout_rng=None):
        """Run the decoder; teacher-forced when gold labels are given."""
        p = self.params
        cfg = self.config
        n = states.shape[0]
        hw = states @ p["att_enc"]
        s_prev = s0
        c_prev = np.zeros(cfg.hidden_size, self.dtype)
        prev_label = START_LABEL
        keep = 1.0 - cfg.dropout_rate
        steps = []
        probs = np.zeros((n, N_CLASSES), self.dtype)
        attn = np.zeros((n, n), self.dtype)
        hard = []
        for t in range(n):
            ctx, a, u = self._attend(states, hw, s_prev)
            lab = p["emb_lab"][prev_label]
            x = np.concatenate([lab, ctx])
            s, c, cell_cache = _lstm_step(p["dec_w"], p["dec_b"], x, s_prev, c_prev)
            o_in = np.concatenate([s, ctx])
            drop_o = None
            if dropout_rng is not None and cfg.dropout_rate > 0:
                drop_o = (dropout_rng.random(o_in.shape) < keep).astype(self.dtype) / keep
                o_in = o_in * drop_o
            logits = o_in @ p["out_w"] + p["out_b"]
            pr = _softmax(logits)
            probs[t] = pr
            attn[t] = a
            y = int(np.argmax(pr))
            hard.append(y)
            steps.append({"a": a, "u": u, "ctx": ctx, "prev_label": prev_label,
                          "s_prev": s_prev, "cell": cell_cache, "o_in": o_in,
                          "drop_o": drop_o, "pr": pr})
            prev_label = gold[t] if gold is not None else y
            s_prev, c_prev = s, c
        return probs, attn, hard, steps, hw

    def predict(self, surfaces: Sequence[str]) -> LabelOutput:
        """Greedy labeling; inputs beyond max_input_length are copied through
        unlabeled (SPACE) and counted."""
        if not surfaces:
            raise EmptyInput("cannot label an empty sentence")
        cfg = self.config
        head = list(surfaces[:cfg.max_input_length])
        tail = len(surfaces) - len(head)
        if tail:
            self.truncation_count += tail
        ids = self.token_ids(head)
        states, s0, _ = self.encode(ids)
        probs, attn, hard, _, _ = self._decode_steps(states, s0, gold=None)
        labels = [GapLabel.PERIOD if y == 1 else GapLabel.SPACE for y in hard]
        if tail:
            pad = np.zeros((tail, N_CLASSES), self.dtype)
            pad[:, 0] = 1.0
            probs = np.concatenate([probs, pad])
            labels += [GapLabel.SPACE] * tail
        return LabelOutput(probs=probs, labels=labels, attention=attn, truncated=tail)

    def label_sequence(self, sentence: AnnotatedSentence) -> LabeledSequence:
        out = self.predict(sentence.surfaces)
        labels = list(out.labels)
        labels[-1] = GapLabel.SPACE  # terminal boundary is not a target
        return LabeledSequence(sentence, labels)

    # -- loss and gradients ------------------------------------------------

    def loss_and_grads(self, batch: Sequence[tuple[Sequence[int], Sequence[int]]],
                       dropout_rng=None):
        """Mean per-token cross-entropy and parameter gradients over a batch
        of (token ids, gold label ids) pairs; teacher forcing throughout."""
        p = self.params
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        total_loss = 0.0
        total_tokens = 0
        h = self.config.hidden_size
        dl = self.config.label_embedding_size
        for ids, gold in batch:
            n = len(ids)
            total_tokens += n
            states, s0, enc_cache = self.encode(ids, dropout_rng)
            probs, _, _, steps, hw = self._decode_steps(states, s0, gold, dropout_rng)
            total_loss -= float(np.sum(np.log(
                probs[np.arange(n), np.asarray(gold)] + 1e-12)))
            d_states = np.zeros_like(states)
            d_hw = np.zeros_like(hw)
            ds_next = np.zeros(h, self.dtype)
            dc_next = np.zeros(h, self.dtype)
            for t in range(n - 1, -1, -1):
                st = steps[t]
                dlogits = st["pr"].copy()
                dlogits[gold[t]] -= 1.0
                grads["out_w"] += np.outer(st["o_in"], dlogits)
                grads["out_b"] += dlogits
                do_in = p["out_w"] @ dlogits
                if st["drop_o"] is not None:
                    do_in = do_in * st["drop_o"]
                ds = ds_next + do_in[:h]
                dctx = do_in[h:].copy()
                dx, ds_prev, dc_prev, dw, db = _lstm_back(
                    p["dec_w"], st["cell"], ds, dc_next)
                grads["dec_w"] += dw
                grads["dec_b"] += db
                grads["emb_lab"][st["prev_label"]] += dx[:dl]
                dctx += dx[dl:]
                # context backward: ctx = a @ states
                a, u = st["a"], st["u"]
                da = states @ dctx
                d_states += np.outer(a, dctx)
                de = a * (da - float(a @ da))
                du = np.outer(de, p["att_v"])
                grads["att_v"] += u.T @ de
                dpre = du * (1.0 - u * u)
                d_hw += dpre
                dsum = dpre.sum(axis=0)
                grads["att_dec"] += np.outer(st["s_prev"], dsum)
                ds_prev = ds_prev + p["att_dec"] @ dsum
                ds_next, dc_next = ds_prev, dc_prev
            # attention key projection: hw = states @ att_enc
            grads["att_enc"] += states.T @ d_hw
            d_states += d_hw @ p["att_enc"].T
            # decoder init
            ds0 = ds_next
            ds0_pre = ds0 * (1.0 - np.tanh(enc_cache["s0_pre"]) ** 2)
            grads["init_w"] += np.outer(enc_cache["summary"], ds0_pre)
            grads["init_b"] += ds0_pre
            dsummary = p["init_w"] @ ds0_pre
            dhf = d_states[:, :h].copy()
            dhb = d_states[:, h:].copy()
            dhf[n - 1] += dsummary[:h]
            dhb[0] += dsummary[h:]
            dx_tokens = np.zeros_like(enc_cache["x"])
            # forward encoder runs 0..n-1; backprop n-1..0
            dh = np.zeros(h, self.dtype)
            dc = np.zeros(h, self.dtype)
            for t in range(n - 1, -1, -1):
                dxe, dh, dc, dw, db = _lstm_back(
                    p["enc_f_w"], enc_cache["caches_f"][t], dh + dhf[t], dc)
                grads["enc_f_w"] += dw
                grads["enc_f_b"] += db
                dx_tokens[t] += dxe
            # backward encoder runs n-1..0; caches_b[k] holds token n-1-k
            dh = np.zeros(h, self.dtype)
            dc = np.zeros(h, self.dtype)
            for k in range(n - 1, -1, -1):
                t = n - 1 - k
                dxe, dh, dc, dw, db = _lstm_back(
                    p["enc_b_w"], enc_cache["caches_b"][k], dh + dhb[t], dc)
                grads["enc_b_w"] += dw
                grads["enc_b_b"] += db
                dx_tokens[t] += dxe
            if enc_cache["drop_x"] is not None:
                dx_tokens = dx_tokens * enc_cache["drop_x"]
            for t, tok in enumerate(enc_cache["ids"]):
                grads["emb_tok"][tok] += dx_tokens[t]
        scale = 1.0 / max(total_tokens, 1)
        for k in grads:
            grads[k] *= scale
        return total_loss * scale, grads

    # -- serialization -----------------------------------------------------

    def save(self, path) -> None:
        arrays = {k: np.ascontiguousarray(v, dtype="<f4") for k, v in self.params.items()}
        np.savez(path, format_version=np.array([self.FORMAT_VERSION]),
                 config=np.frombuffer(
                     json.dumps(asdict(self.config)).encode(), dtype=np.uint8),
                 vocab=np.frombuffer(
                     json.dumps(self.vocab).encode(), dtype=np.uint8),
                 **arrays)

    @classmethod
    def load(cls, path) -> "S2SModel":
        with np.load(path) as z:
            if int(z["format_version"][0]) != cls.FORMAT_VERSION:
                raise DataError("unsupported model format version")
            config = S2SConfig(**json.loads(bytes(z["config"]).decode()))
            vocab = json.loads(bytes(z["vocab"]).decode())
            params = {k: z[k].astype(np.float32) for k in cls.PARAM_NAMES}
        return cls(config, vocab, params=params)


# ---------------------------------------------------------------------------
# training


def build_vocab(sequences: Iterable[Sequence[str]], size: int) -> list[str]:
    freq: dict[str, int] = {}
    for seq in sequences:
        for w in seq:
            freq[w] = freq.get(w, 0) + 1
    ranked = sorted(freq, key=lambda w: (-freq[w], w))
    return [UNK] + ranked[:size - 1]


def load_embeddings(fh) -> dict:
    """Read `word v1 ... vD` text embeddings."""
    out = {}
    for line in fh:
        parts = line.rstrip("\n").split(" ")
        if len(parts) < 2:
            continue
        out[parts[0]] = np.array([float(x) for x in parts[1:]], dtype=np.float32)
    return out


def _label_ids(seq: LabeledSequence) -> list[int]:
    return [1 if l is GapLabel.PERIOD else 0 for l in seq.labels]


def train_s2s(data: Sequence[LabeledSequence], config: Optional[S2SConfig] = None,
              val_data: Optional[Sequence[LabeledSequence]] = None,
              embeddings: Optional[dict] = None,
              log=None) -> S2SModel:
    """Adagrad training with teacher forcing; halves the learning rate when
    validation loss fails to improve and keeps the best-validation model."""
    config = config or S2SConfig()
    config.validate()
    data = list(data)
    if not data:
        raise NoData("no training sequences")
    rng = np.random.default_rng(config.seed)
    if val_data is None:
        if len(data) >= 20:
            n_val = max(1, len(data) // 10)
            order = rng.permutation(len(data))
            val_data = [data[i] for i in order[:n_val]]
            data = [data[i] for i in order[n_val:]]
        else:
            val_data = data
    vocab = build_vocab((s.sentence.surfaces for s in data), config.vocab_size)
    model = S2SModel(config, vocab, embeddings=embeddings)

    def prepare(seqs):
        out = []
        for s in seqs:
            ids = model.token_ids(s.sentence.surfaces)[:config.max_input_length]
            gold = _label_ids(s)[:config.max_input_length]
            out.append((ids, gold))
        return out

    train_set = prepare(data)
    val_set = prepare(val_data)
    accum = {k: np.zeros_like(v) for k, v in model.params.items()}
    lr = config.learning_rate
    best_val = np.inf
    stale = 0
    best_params = {k: v.copy() for k, v in model.params.items()}
    history = []
    drop_rng = np.random.default_rng(config.seed + 1)
    for epoch in range(config.epochs):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            loss, grads = model.loss_and_grads(batch, dropout_rng=drop_rng)
            epoch_loss += loss
            n_batches += 1
            for k, g in grads.items():
                accum[k] += g * g
                model.params[k] -= lr * g / (np.sqrt(accum[k]) + 1e-8)
        val_loss = evaluate_loss(model, val_set)
        history.append((epoch, epoch_loss / max(n_batches, 1), val_loss, lr))
        if log:
            log("epoch %d train_loss %.4f val_loss %.4f lr %.6g"
                % (epoch, epoch_loss / max(n_batches, 1), val_loss, lr))
        if val_loss < best_val:
            best_val = val_loss
            best_params = {k: v.copy() for k, v in model.params.items()}
            stale = 0
        else:
            stale += 1
            if stale >= config.lr_patience:
                lr *= config.lr_decay
                stale = 0
    model.params = best_params
    model.history = history
    return model


def evaluate_loss(model: S2SModel, prepared: Sequence[tuple]) -> float:
    total, count = 0.0, 0
    for ids, gold in prepared:
        states, s0, _ = model.encode(ids)
        probs, _, _, _, _ = model._decode_steps(states, s0, gold)
        total -= float(np.sum(np.log(
            probs[np.arange(len(ids)), np.asarray(gold)] + 1e-12)))
        count += len(ids)
    return total / max(count, 1)


def gradient_check(model: S2SModel, batch: Sequence[tuple[Sequence[int], Sequence[int]]],
                   h: float = 1e-4) -> float:
    """Max relative error between analytic and central-difference gradients.

    The model must be float64 with dropout off.
    """
    if model.dtype != np.float64:
        raise ValueError("gradient_check requires a float64 model")
    _, grads = model.loss_and_grads(batch)

    def loss_only():
        total, count = 0.0, 0
        for ids, gold in batch:
            states, s0, _ = model.encode(ids)
            probs, _, _, _, _ = model._decode_steps(states, s0, gold)
            total -= float(np.sum(np.log(
                probs[np.arange(len(ids)), np.asarray(gold)] + 1e-12)))
            count += len(ids)
        return total / max(count, 1)

    worst = 0.0
    for name, arr in model.params.items():
        flat = arr.ravel()
        gflat = grads[name].ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_only()
            flat[i] = orig - h
            down = loss_only()
            flat[i] = orig
            numeric = (up - down) / (2 * h)
            # below the floor, central differences are dominated by roundoff;
            # such coordinates are effectively compared absolutely
            denom = max(abs(numeric), abs(gflat[i]), 1e-6)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


def fuse_output(sentence: AnnotatedSentence, labels: Sequence[GapLabel]) -> str:
    """Insert '. ' at each PERIOD gap, uppercasing the following token."""
    if len(labels) != len(sentence):
        raise LengthMismatch(
            "%d labels for %d tokens" % (len(labels), len(sentence)))
    out: list[str] = []
    boundary = False
    for tok, lab in zip(sentence.tokens, labels):
        surface = tok.surface
        if boundary:
            surface = surface[0].upper() + surface[1:]
        out.append(surface)
        boundary = lab is GapLabel.PERIOD
        if boundary:
            out.append(".")
    return detokenize(out)
