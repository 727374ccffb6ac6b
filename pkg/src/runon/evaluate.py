"""Precision / recall / F0.5 scoring, random baseline, bootstrap
significance, and report rendering (delimited output plus figures).

The unit of scoring is the individual gold PERIOD position: a true
positive is a gap where both prediction and gold carry a PERIOD.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .data import AlignmentError, GapLabel, LabeledSequence


def f_beta(p: float, r: float, beta: float = 0.5) -> float:
    if p + r == 0.0 or p == 0.0 or r == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * p * r / (b2 * p + r)


def f05(p: float, r: float) -> float:
    return f_beta(p, r, beta=0.5)


@dataclass
class Judgment:
    """Per-sequence predicted and gold PERIOD positions with counts."""
    predicted: frozenset
    gold: frozenset

    @property
    def tp(self) -> int:
        return len(self.predicted & self.gold)

    @property
    def fp(self) -> int:
        return len(self.predicted - self.gold)

    @property
    def fn(self) -> int:
        return len(self.gold - self.predicted)


@dataclass
class BootstrapResult:
    metric_deltas: dict
    p_values: dict
    replicates: int
    seed: int


@dataclass
class EvalReport:
    system: str = ""
    dataset: str = ""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    bootstrap: Optional[BootstrapResult] = None

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f05(self) -> float:
        return f05(self.precision, self.recall)

    def merged(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(self.system, self.dataset, self.tp + other.tp,
                          self.fp + other.fp, self.fn + other.fn)


def judgments(pred: Iterable[LabeledSequence],
              gold: Iterable[LabeledSequence]) -> list[Judgment]:
    out = []
    pred, gold = list(pred), list(gold)
    if len(pred) != len(gold):
        raise AlignmentError("prediction stream has %d sequences, gold has %d"
                             % (len(pred), len(gold)))
    for i, (p, g) in enumerate(zip(pred, gold)):
        if len(p.labels) != len(g.labels):
            raise AlignmentError("sequence %d: %d predicted labels vs %d gold"
                                 % (i, len(p.labels), len(g.labels)))
        out.append(Judgment(frozenset(p.period_positions),
                            frozenset(g.period_positions)))
    return out


def score(pred: Iterable[LabeledSequence], gold: Iterable[LabeledSequence],
          system: str = "", dataset: str = "") -> EvalReport:
    report = EvalReport(system=system, dataset=dataset)
    for j in judgments(pred, gold):
        report.tp += j.tp
        report.fp += j.fp
        report.fn += j.fn
    return report


# ---------------------------------------------------------------------------
# balanced random baseline


def random_baseline(gold: Sequence[LabeledSequence], rate: float,
                    seed: int = 0) -> list[LabeledSequence]:
    """Flag each sequence as a run-on with probability = rate; flagged
    sequences get one PERIOD at a uniformly random gap."""
    if not (0.0 <= rate <= 1.0):
        raise ValueError("rate must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    out = []
    for seq in gold:
        n = len(seq.labels)
        labels = [GapLabel.SPACE] * n
        if n > 1 and rng.random() < rate:
            labels[int(rng.integers(0, n - 1))] = GapLabel.PERIOD
        out.append(LabeledSequence(seq.sentence, labels))
    return out


def random_baseline_expected(gold: Sequence[LabeledSequence], rate: float,
                             system: str = "Random",
                             dataset: str = "") -> EvalReport:
    """Closed-form expected TP/FP/FN of the sampled baseline (fractional
    counts rounded to nearest integers for reporting)."""
    tp = fp = 0.0
    fn = 0.0
    for seq in gold:
        n_gaps = len(seq.labels) - 1
        gold_periods = len(seq.period_positions)
        if n_gaps < 1:
            fn += gold_periods
            continue
        hit = rate * gold_periods / n_gaps
        tp += hit
        fp += rate * (1.0 - gold_periods / n_gaps)
        fn += gold_periods - hit
    return EvalReport(system=system, dataset=dataset,
                      tp=round(tp), fp=round(fp), fn=round(fn))


# ---------------------------------------------------------------------------
# paired bootstrap


_METRICS = ("precision", "recall", "f05")


def _metrics_from_counts(tp, fp, fn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    return {"precision": p, "recall": r, "f05": f05(p, r)}


def bootstrap_significance(pred_a: Sequence[LabeledSequence],
                           pred_b: Sequence[LabeledSequence],
                           gold: Sequence[LabeledSequence],
                           replicates: int = 10000,
                           seed: int = 0) -> BootstrapResult:
    """Paired bootstrap over sequences: p-value per metric is the fraction
    of replicates where the observed winner does not strictly win.
    Per-replicate streams are counter-based, so results do not depend on
    how replicates are scheduled."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    ja = judgments(pred_a, gold)
    jb = judgments(pred_b, gold)
    counts_a = np.array([[j.tp, j.fp, j.fn] for j in ja], dtype=np.int64)
    counts_b = np.array([[j.tp, j.fp, j.fn] for j in jb], dtype=np.int64)
    n = counts_a.shape[0]
    obs_a = _metrics_from_counts(*counts_a.sum(axis=0))
    obs_b = _metrics_from_counts(*counts_b.sum(axis=0))
    winner = {m: ("a" if obs_a[m] >= obs_b[m] else "b") for m in _METRICS}
    losses = {m: 0 for m in _METRICS}
    deltas = {m: obs_a[m] - obs_b[m] for m in _METRICS}
    for rep in range(replicates):
        rng = np.random.default_rng([seed, rep])
        idx = rng.integers(0, n, size=n)
        ma = _metrics_from_counts(*counts_a[idx].sum(axis=0))
        mb = _metrics_from_counts(*counts_b[idx].sum(axis=0))
        for m in _METRICS:
            win, lose = (ma[m], mb[m]) if winner[m] == "a" else (mb[m], ma[m])
            if not win > lose:
                losses[m] += 1
    p_values = {m: losses[m] / replicates for m in _METRICS}
    return BootstrapResult(metric_deltas=deltas, p_values=p_values,
                           replicates=replicates, seed=seed)


# ---------------------------------------------------------------------------
# report rendering


def _round2(x: float) -> float:
    # half-up to two decimals, as printed tables round
    return int(x * 100 + 0.5) / 100.0


def report_rows(reports: Sequence[EvalReport]) -> list[dict]:
    rows = []
    for r in reports:
        row = {"system": r.system, "dataset": r.dataset,
               "tp": r.tp, "fp": r.fp, "fn": r.fn,
               "p": r.precision, "r": r.recall, "f05": r.f05}
        if r.bootstrap is not None:
            row["p_value"] = r.bootstrap.p_values["f05"]
        rows.append(row)
    return rows


def write_report_csv(reports: Sequence[EvalReport], fh) -> None:
    rows = report_rows(reports)
    names = ["system", "dataset", "tp", "fp", "fn", "p", "r", "f05"]
    if any("p_value" in row for row in rows):
        names.append("p_value")
    writer = csv.DictWriter(fh, fieldnames=names, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def write_report_json(reports: Sequence[EvalReport], fh) -> None:
    json.dump(report_rows(reports), fh, indent=2)
    fh.write("\n")


def format_table(reports: Sequence[EvalReport]) -> str:
    """Human-readable table, two decimal places."""
    if not reports:
        raise ValueError("need at least one report")
    lines = ["%-20s %-14s %5s %5s %5s" % ("system", "dataset", "P", "R", "F0.5")]
    for r in reports:
        lines.append("%-20s %-14s %5.2f %5.2f %5.2f"
                     % (r.system or "-", r.dataset or "-",
                        _round2(r.precision), _round2(r.recall), _round2(r.f05)))
    return "\n".join(lines)


def render_report_figure(reports: Sequence[EvalReport], path) -> None:
    """Grouped bar chart of P/R/F0.5 per report, written to a file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = ["%s/%s" % (r.system or "-", r.dataset or "-") for r in reports]
    x = np.arange(len(reports))
    width = 0.25
    fig, ax = plt.subplots(figsize=(max(6, 1.6 * len(reports)), 4))
    ax.bar(x - width, [r.precision for r in reports], width, label="P")
    ax.bar(x, [r.recall for r in reports], width, label="R")
    ax.bar(x + width, [r.f05 for r in reports], width, label="F0.5")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("score")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep_figure(taus: Sequence[float], reports: Sequence[EvalReport],
                        path) -> None:
    """Precision/recall trade-off across decode thresholds."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(taus, [r.precision for r in reports], marker="o", label="P")
    ax.plot(taus, [r.recall for r in reports], marker="s", label="R")
    ax.plot(taus, [r.f05 for r in reports], marker="^", label="F0.5")
    ax.axvline(0.70, color="gray", linestyle="--", linewidth=1)
    ax.set_xlabel("decode threshold tau")
    ax.set_ylabel("score")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
