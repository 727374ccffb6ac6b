"""Command-line interface for the run-on correction pipeline.

Exit codes: 0 success, 1 usage error, 2 data error.  Diagnostics go to
stderr; data goes to the declared output paths or stdout.
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path
from typing import Optional

from . import corpus as corpus_mod
from . import crf as crf_mod
from . import evaluate as eval_mod
from . import features as feat_mod
from . import ngram as ngram_mod
from . import seq2seq as s2s_mod
from . import textgen
from .data import (
    DataError,
    GapLabel,
    DatasetSpec,
    LabeledSequence,
    parse_tree,
    read_corpus,
    read_labeled,
    write_corpus,
    write_labeled,
)
from .util import derive_seed

log = logging.getLogger("runon")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


def _add_seed(p, default=0):
    p.add_argument("--seed", type=int, default=default,
                   help="master seed; each stage derives its own substream")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="runon",
        description="Detect and correct run-on sentences by labeling "
                    "inter-token gaps as SPACE or PERIOD.")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--workers", type=int, default=1,
                    help="parallelism cap (results are independent of it)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo-corpus", help="generate clean demo text with POS and parses")
    p.add_argument("--sentences", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trees", help="write bracketed parse trees here")
    _add_seed(p)

    p = sub.add_parser("synthesize", help="build a labeled dataset of artificial "
                       "run-ons and negatives from clean text")
    p.add_argument("--corpus", required=True)
    p.add_argument("--trees")
    p.add_argument("--runons", type=int, required=True)
    p.add_argument("--negatives", type=int, required=True)
    p.add_argument("--target-fraction", type=float,
                   help="additionally down-sample run-ons to this fraction")
    p.add_argument("--out", required=True)
    _add_seed(p)

    p = sub.add_parser("train-lm", help="train the n-gram language model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--out", required=True)

    p = sub.add_parser("featurize", help="extract CRF gap features")
    p.add_argument("--input", required=True, help="labeled-sequence file")
    p.add_argument("--trees", help="one bracketed tree per sequence")
    p.add_argument("--lm", help="language model for perplexity features")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-crf", help="train the CRF gap labeler")
    p.add_argument("--features", required=True)
    p.add_argument("--c", type=float, default=10.0,
                   help="regularization trade-off; penalty weight is 1/c")
    p.add_argument("--cutoff", type=int, default=5,
                   help="drop features occurring fewer times than this")
    p.add_argument("--tau", type=float, default=0.70,
                   help="decode threshold on the SPACE marginal")
    p.add_argument("--max-iter", type=int, default=300)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train-s2s", help="train the Seq2Seq attention labeler")
    p.add_argument("--input", required=True, help="labeled-sequence file")
    p.add_argument("--val", help="held-out labeled file (default: 10%% split)")
    p.add_argument("--hidden", type=int, default=64,
                   help="hidden state size")
    p.add_argument("--embedding", type=int, default=300)
    p.add_argument("--vocab-size", type=int, default=2000)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--lr-decay", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--embeddings", help="pre-trained `word v1 ... vD` vectors")
    p.add_argument("--out", required=True)
    _add_seed(p)

    for name, help_text in (("tag", "predict gap labels"),
                            ("correct", "emit corrected text")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--model", required=True, help=".crf text or .npz model")
        p.add_argument("--input", required=True, help="labeled-sequence file")
        p.add_argument("--trees")
        p.add_argument("--lm", help="language model (CRF models only)")
        p.add_argument("--tau", type=float, help="override the decode threshold")
        p.add_argument("--out", help="default: stdout")

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--system", default="system")
    p.add_argument("--dataset", default="dataset")
    p.add_argument("--csv", help="write a CSV report here")
    p.add_argument("--json", help="write a JSON report here")
    p.add_argument("--figure", help="write a P/R/F0.5 bar chart here")

    p = sub.add_parser("significance", help="paired bootstrap test")
    p.add_argument("--pred-a", required=True)
    p.add_argument("--pred-b", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--replicates", type=int, default=10000)
    p.add_argument("--json", help="write the result here")
    _add_seed(p)

    return ap


def _read_labeled_file(path: str) -> list[LabeledSequence]:
    with open(path, encoding="utf-8") as fh:
        seqs = list(read_labeled(fh, source=path))
    if not seqs:
        raise DataError("%s: no sequences" % path)
    return seqs


def _attach_trees(seqs: list[LabeledSequence], path: Optional[str]) -> None:
    if not path:
        return
    with open(path, encoding="utf-8") as fh:
        lines = [l.strip() for l in fh if l.strip()]
    if len(lines) != len(seqs):
        raise DataError("%s: %d trees for %d sequences" % (path, len(lines), len(seqs)))
    for seq, line in zip(seqs, lines):
        seq.sentence.parse = parse_tree(line)
        seq.sentence.__post_init__()  # re-check leaf alignment


def _load_lm(path: Optional[str]):
    if not path:
        return None
    with open(path, encoding="utf-8") as fh:
        return ngram_mod.NgramModel.load(fh)


def _is_npz(path: str) -> bool:
    with open(path, "rb") as fh:
        return fh.read(2) == b"PK"


def _predict(args, seqs: list[LabeledSequence]) -> list[LabeledSequence]:
    if _is_npz(args.model):
        model = s2s_mod.S2SModel.load(args.model)
        out = []
        for seq in seqs:
            pred = model.label_sequence(seq.sentence)
            out.append(pred)
        if model.truncation_count:
            log.warning("truncated %d tokens beyond max input length",
                        model.truncation_count)
        return out
    with open(args.model, encoding="utf-8") as fh:
        model = crf_mod.CrfModel.load(fh)
    lm = _load_lm(args.lm)
    _attach_trees(seqs, args.trees)
    out = []
    for seq in seqs:
        feats, _ = feat_mod.featurize_sequence(seq, lm)
        gap_labels = model.decode(feats, tau=args.tau)
        out.append(LabeledSequence(seq.sentence, gap_labels + [GapLabel.SPACE]))
    return out


def _open_out(path: Optional[str]):
    if path:
        return open(path, "w", encoding="utf-8")
    return sys.stdout


def _cmd_demo_corpus(args) -> int:
    paras = list(textgen.generate_paragraphs(args.sentences,
                                             derive_seed(args.seed, "textgen")))
    trees_fh = open(args.trees, "w", encoding="utf-8") if args.trees else None
    with open(args.out, "w", encoding="utf-8") as fh:
        write_corpus(paras, fh, trees=trees_fh)
    if trees_fh:
        trees_fh.close()
    log.info("wrote %d paragraphs", len(paras))
    return EXIT_OK


def _cmd_synthesize(args) -> int:
    trees_fh = open(args.trees, encoding="utf-8") if args.trees else None
    with open(args.corpus, encoding="utf-8") as fh:
        paras = list(read_corpus(fh, trees=trees_fh, source=args.corpus))
    if trees_fh:
        trees_fh.close()
    spec = DatasetSpec(runon_count=args.runons, nonrunon_count=args.negatives,
                       seed=derive_seed(args.seed, "corpus"))
    data = corpus_mod.build_dataset(paras, spec)
    if args.target_fraction is not None:
        data = corpus_mod.downsample_runons(
            data, args.target_fraction, derive_seed(args.seed, "downsample"))
    with open(args.out, "w", encoding="utf-8") as fh:
        write_labeled(data, fh)
    n_ro = sum(s.is_runon for s in data)
    log.info("wrote %d sequences (%d run-ons, %.1f%%)",
             len(data), n_ro, 100.0 * n_ro / max(len(data), 1))
    return EXIT_OK


def _cmd_train_lm(args) -> int:
    with open(args.corpus, encoding="utf-8") as fh:
        sentences = [s for para in read_corpus(fh, source=args.corpus) for s in para]
    model = ngram_mod.train_lm(sentences, order=args.order, min_count=args.min_count)
    with open(args.out, "w", encoding="utf-8") as fh:
        model.save(fh)
    log.info("trained order-%d model, vocab %d", model.order, len(model.vocab))
    return EXIT_OK


def _cmd_featurize(args) -> int:
    seqs = _read_labeled_file(args.input)
    _attach_trees(seqs, args.trees)
    lm = _load_lm(args.lm)
    with open(args.out, "w", encoding="utf-8") as fh:
        feat_mod.write_features(
            (feat_mod.featurize_sequence(s, lm) for s in seqs), fh)
    return EXIT_OK


def _cmd_train_crf(args) -> int:
    with open(args.features, encoding="utf-8") as fh:
        data = list(feat_mod.read_features(fh, source=args.features))
    config = crf_mod.CrfConfig(c=args.c, cutoff=args.cutoff, tau=args.tau,
                               max_iter=args.max_iter)
    model = crf_mod.train_crf(data, config)
    with open(args.out, "w", encoding="utf-8") as fh:
        model.save(fh)
    log.info("trained CRF: %d features, %s", len(model.features), model.meta)
    return EXIT_OK


def _cmd_train_s2s(args) -> int:
    data = _read_labeled_file(args.input)
    val = _read_labeled_file(args.val) if args.val else None
    config = s2s_mod.S2SConfig(
        hidden_size=args.hidden, embedding_size=args.embedding,
        vocab_size=args.vocab_size, dropout_rate=args.dropout,
        batch_size=args.batch_size, learning_rate=args.lr,
        lr_decay=args.lr_decay, epochs=args.epochs,
        seed=derive_seed(args.seed, "s2s"))
    embeddings = None
    if args.embeddings:
        with open(args.embeddings, encoding="utf-8") as fh:
            embeddings = s2s_mod.load_embeddings(fh)
    model = s2s_mod.train_s2s(data, config, val_data=val, embeddings=embeddings,
                              log=log.info)
    model.save(args.out)
    return EXIT_OK


def _cmd_tag(args) -> int:
    seqs = _read_labeled_file(args.input)
    pred = _predict(args, seqs)
    fh = _open_out(args.out)
    write_labeled(pred, fh)
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def _cmd_correct(args) -> int:
    seqs = _read_labeled_file(args.input)
    pred = _predict(args, seqs)
    fh = _open_out(args.out)
    for seq in pred:
        fh.write(s2s_mod.fuse_output(seq.sentence, seq.labels) + "\n")
    if fh is not sys.stdout:
        fh.close()
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    pred = _read_labeled_file(args.pred)
    gold = _read_labeled_file(args.gold)
    report = eval_mod.score(pred, gold, system=args.system, dataset=args.dataset)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            eval_mod.write_report_csv([report], fh)
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            eval_mod.write_report_json([report], fh)
    if args.figure:
        eval_mod.render_report_figure([report], args.figure)
    print(eval_mod.format_table([report]))
    return EXIT_OK


def _cmd_significance(args) -> int:
    pred_a = _read_labeled_file(args.pred_a)
    pred_b = _read_labeled_file(args.pred_b)
    gold = _read_labeled_file(args.gold)
    result = eval_mod.bootstrap_significance(
        pred_a, pred_b, gold, replicates=args.replicates,
        seed=derive_seed(args.seed, "bootstrap"))
    text = ("deltas (a-b): " +
            ", ".join("%s %+0.4f" % (m, result.metric_deltas[m])
                      for m in ("precision", "recall", "f05")) + "\n" +
            "p-values:     " +
            ", ".join("%s %.4f" % (m, result.p_values[m])
                      for m in ("precision", "recall", "f05")))
    if args.json:
        import json
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"p_values": result.p_values,
                       "metric_deltas": result.metric_deltas,
                       "replicates": result.replicates,
                       "seed": result.seed}, fh, indent=2)
            fh.write("\n")
    print(text)
    return EXIT_OK


_COMMANDS = {
    "demo-corpus": _cmd_demo_corpus,
    "synthesize": _cmd_synthesize,
    "train-lm": _cmd_train_lm,
    "featurize": _cmd_featurize,
    "train-crf": _cmd_train_crf,
    "train-s2s": _cmd_train_s2s,
    "tag": _cmd_tag,
    "correct": _cmd_correct,
    "evaluate": _cmd_evaluate,
    "significance": _cmd_significance,
}


def run(argv) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s",
        level=logging.DEBUG if args.verbose else logging.INFO)
    resolved = {k: v for k, v in sorted(vars(args).items()) if k != "command"}
    log.info("command=%s config=%s", args.command, resolved)
    try:
        return _COMMANDS[args.command](args)
    except (DataError, FileNotFoundError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_DATA


def main() -> None:
    sys.exit(run(sys.argv[1:]))


# ---------------------------------------------------------------------------
# end-to-end smoke run over the bundled fixture corpus


def fixture_path(name: str) -> Path:
    return Path(str(resources.files("runon").joinpath("fixtures", name)))


def pipeline_smoke(tmpdir, seed: int = 7) -> dict:
    """synthesize -> train-lm -> featurize -> train-crf -> tag -> evaluate
    over the bundled 200-sentence fixture; asserts the overfit bound."""
    tmp = Path(tmpdir)
    corpus = fixture_path("clean_200.tsv")
    trees = fixture_path("clean_200.trees")
    labeled = tmp / "labeled.tsv"
    seq_trees = tmp / "labeled.trees"
    lm = tmp / "lm.txt"
    feats = tmp / "feats.tsv"
    model = tmp / "model.crf"
    pred = tmp / "pred.tsv"
    report = tmp / "report.json"

    stages = [
        ["synthesize", "--corpus", str(corpus), "--trees", str(trees),
         "--runons", "40", "--negatives", "80", "--seed", str(seed),
         "--out", str(labeled)],
        ["train-lm", "--corpus", str(corpus), "--order", "3", "--min-count", "1",
         "--out", str(lm)],
        ["featurize", "--input", str(labeled), "--lm", str(lm),
         "--out", str(feats)],
        ["train-crf", "--features", str(feats), "--cutoff", "1", "--c", "1000",
         "--max-iter", "150", "--out", str(model)],
        ["tag", "--model", str(model), "--input", str(labeled),
         "--lm", str(lm), "--out", str(pred)],
        ["evaluate", "--pred", str(pred), "--gold", str(labeled),
         "--system", "roCRF", "--dataset", "fixture",
         "--json", str(report)],
    ]
    for argv in stages:
        code = run(argv)
        if code != EXIT_OK:
            raise RuntimeError("stage %s failed with exit code %d" % (argv[0], code))
    import json
    row = json.loads(report.read_text())[0]
    if row["f05"] < 0.95:
        raise AssertionError("overfit bound not met: F0.5 = %.3f" % row["f05"])
    return row
