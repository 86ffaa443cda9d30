"""Exact-match NER scoring.

A prediction counts as a true positive only when both its entity type and
its text span match a gold mention. ``surface`` mode matches (type, surface
string) multisets, each gold item consumable once; ``grounded`` mode grounds
payloads to offsets first and requires (type, start, end) equality. Reports
carry per-type precision/recall/F1 plus macro (unweighted mean over types
present in gold or predictions) and micro (pooled counts) aggregates.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .codec import TypedPair, ground_pairs
from .corpus import Mention


@dataclass
class MatchCounts:
    """Associative scoring accumulator (per-type tp/pred/gold + rates)."""

    tp: Counter = field(default_factory=Counter)
    pred: Counter = field(default_factory=Counter)
    gold: Counter = field(default_factory=Counter)
    n_sentences: int = 0
    n_parse_failures: int = 0
    n_pairs: int = 0
    n_ungroundable: int = 0

    def merge(self, other: "MatchCounts") -> "MatchCounts":
        out = MatchCounts()
        for counts in (self, other):
            out.tp.update(counts.tp)
            out.pred.update(counts.pred)
            out.gold.update(counts.gold)
            out.n_sentences += counts.n_sentences
            out.n_parse_failures += counts.n_parse_failures
            out.n_pairs += counts.n_pairs
            out.n_ungroundable += counts.n_ungroundable
        return out

    def check(self) -> None:
        for t in set(self.pred) | set(self.gold) | set(self.tp):
            if self.tp[t] > min(self.pred[t], self.gold[t]):
                raise ValueError(f"tp exceeds min(pred, gold) for type {t!r}")


def score_sentence(
    pred_pairs: Sequence[TypedPair],
    gold_mentions: Sequence[Mention],
    match_mode: str = "surface",
    text: str | None = None,
) -> MatchCounts:
    """Score one sentence's NULL-filtered predictions against gold."""
    if match_mode not in ("surface", "grounded"):
        raise ValueError(f"unknown match mode {match_mode!r}")
    if any(p.is_null for p in pred_pairs):
        raise ValueError("NULL pairs must be filtered out before scoring")
    counts = MatchCounts(n_sentences=1, n_pairs=len(pred_pairs))
    for m in gold_mentions:
        counts.gold[m.type_id] += 1
    for p in pred_pairs:
        counts.pred[p.type_id] += 1

    if match_mode == "surface":
        pred_items = Counter((p.type_id, p.payload) for p in pred_pairs)
        gold_items = Counter((m.type_id, m.text) for m in gold_mentions)
        for (type_id, _), n in (pred_items & gold_items).items():
            counts.tp[type_id] += n
    else:
        if text is None:
            raise ValueError("grounded mode needs the sentence text")
        grounded = ground_pairs(text, list(pred_pairs))
        counts.n_ungroundable += len(grounded.ungroundable)
        gold_spans = {(m.type_id, m.start, m.end) for m in gold_mentions}
        for m in grounded.mentions:
            key = (m.type_id, m.start, m.end)
            if key in gold_spans:
                counts.tp[m.type_id] += 1
                gold_spans.discard(key)
    counts.check()
    return counts


@dataclass(frozen=True)
class TypeScore:
    precision: float
    recall: float
    f1: float
    tp: int
    pred: int
    gold: int


@dataclass(frozen=True)
class EvalReport:
    per_type: dict[str, TypeScore]
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    parse_validity_rate: float
    ungroundable_rate: float
    n_sentences: int

    def to_dict(self) -> dict:
        return {
            "per_type": {
                t: {
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "tp": s.tp,
                    "pred": s.pred,
                    "gold": s.gold,
                }
                for t, s in sorted(self.per_type.items())
            },
            "macro_f1": self.macro_f1,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "micro_f1": self.micro_f1,
            "parse_validity_rate": self.parse_validity_rate,
            "ungroundable_rate": self.ungroundable_rate,
            "n_sentences": self.n_sentences,
        }


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def aggregate(counts: MatchCounts) -> EvalReport:
    """Fold match counts into a report.

    Per-type conventions: P = 0 when nothing was predicted, R = 0 when gold
    is empty but something was predicted; types absent from both gold and
    predictions are excluded from the macro mean.
    """
    counts.check()
    types = sorted(set(counts.pred) | set(counts.gold))
    included = [t for t in types if counts.gold[t] > 0 or counts.pred[t] > 0]
    if not included and counts.n_sentences == 0:
        raise ValueError("nothing to aggregate: no sentences, gold, or predictions")
    per_type = {}
    for t in included:
        tp, pred, gold = counts.tp[t], counts.pred[t], counts.gold[t]
        p = tp / pred if pred else 0.0
        r = tp / gold if gold else 0.0
        per_type[t] = TypeScore(p, r, _f1(p, r), tp, pred, gold)
    macro = sum(s.f1 for s in per_type.values()) / len(per_type) if per_type else 0.0
    tp_all = sum(counts.tp.values())
    pred_all = sum(counts.pred.values())
    gold_all = sum(counts.gold.values())
    micro_p = tp_all / pred_all if pred_all else 0.0
    micro_r = tp_all / gold_all if gold_all else 0.0
    n = counts.n_sentences
    return EvalReport(
        per_type=per_type,
        macro_f1=macro,
        micro_precision=micro_p,
        micro_recall=micro_r,
        micro_f1=_f1(micro_p, micro_r),
        parse_validity_rate=1.0 - (counts.n_parse_failures / n if n else 0.0),
        ungroundable_rate=counts.n_ungroundable / counts.n_pairs if counts.n_pairs else 0.0,
        n_sentences=n,
    )


# ---------------------------------------------------------------------------
# Run comparison tables (joint vs single style)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunReport:
    """One run's per-dataset reports, plus how many models it deploys."""

    label: str
    n_models: int
    reports: dict[str, EvalReport]

    def mean_macro_f1(self) -> float:
        return sum(r.macro_f1 for r in self.reports.values()) / len(self.reports)

    def mean_micro_f1(self) -> float:
        return sum(r.micro_f1 for r in self.reports.values()) / len(self.reports)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n_models": self.n_models,
            "reports": {ds: r.to_dict() for ds, r in sorted(self.reports.items())},
        }


@dataclass(frozen=True)
class ComparisonTable:
    dataset_ids: tuple[str, ...]
    rows: tuple[tuple[str, tuple[float, ...], float, int], ...]  # label, per-ds F1, mean, n_models
    deltas: tuple[float, ...]  # row[-1] - row[0] per dataset
    mean_delta: float

    def to_text(self) -> str:
        headers = ["Run"] + list(self.dataset_ids) + ["Avg. Score", "# models"]
        body = [
            [label] + [f"{v:.4f}" for v in scores] + [f"{mean:.4f}", str(n_models)]
            for label, scores, mean, n_models in self.rows
        ]
        body.append(
            ["delta"]
            + [f"{d:+.4f}" for d in self.deltas]
            + [f"{self.mean_delta:+.4f}", ""]
        )
        widths = [max(len(r[i]) for r in [headers] + body) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "dataset_ids": list(self.dataset_ids),
            "rows": [
                {
                    "label": label,
                    "f1": list(scores),
                    "mean": mean,
                    "n_models": n_models,
                }
                for label, scores, mean, n_models in self.rows
            ],
            "deltas": list(self.deltas),
            "mean_delta": self.mean_delta,
        }


def compare_runs(
    run_a: RunReport, run_b: RunReport, metric: str = "macro_f1"
) -> ComparisonTable:
    """Side-by-side per-dataset comparison; both runs must cover the same
    dataset list. Deltas are run_b minus run_a."""
    if set(run_a.reports) != set(run_b.reports):
        raise ValueError(
            f"dataset lists differ: {sorted(run_a.reports)} vs {sorted(run_b.reports)}"
        )
    if metric not in ("macro_f1", "micro_f1"):
        raise ValueError(f"unknown metric {metric!r}")
    ds = tuple(sorted(run_a.reports))
    rows = []
    for run in (run_a, run_b):
        scores = tuple(getattr(run.reports[d], metric) for d in ds)
        rows.append((run.label, scores, sum(scores) / len(scores), run.n_models))
    deltas = tuple(b - a for a, b in zip(rows[0][1], rows[1][1]))
    return ComparisonTable(
        dataset_ids=ds,
        rows=tuple(rows),
        deltas=deltas,
        mean_delta=rows[1][2] - rows[0][2],
    )


def report_table(reports: dict[str, dict[str, EvalReport]], metric: str = "macro_f1") -> str:
    """Aligned text table: one row per run label, one column per dataset."""
    labels = sorted(reports)
    datasets = sorted({ds for label in labels for ds in reports[label]})
    headers = ["Run"] + datasets + ["Avg. Score"]
    body = []
    for label in labels:
        row = [label]
        vals = []
        for ds in datasets:
            rep = reports[label].get(ds)
            row.append(f"{getattr(rep, metric):.4f}" if rep else "-")
            if rep:
                vals.append(getattr(rep, metric))
        row.append(f"{sum(vals) / len(vals):.4f}" if vals else "-")
        body.append(row)
    widths = [max(len(r[i]) for r in [headers] + body) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines.extend("  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in body)
    return "\n".join(lines)


def write_report_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
