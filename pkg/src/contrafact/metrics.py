"""Classification metrics and distance-weighted external-score transforms.

Macro averaging runs over the scheme's labels (unweighted mean), with the
0/0 -> 0 convention for degenerate precision, recall, and F1. The base
AlignScore/RQUGE scorers live behind ExternalScorer; only the distance
weighting is computed here.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .verification import LabelScheme, SchemeError, Verdict


class MetricsError(ValueError):
    pass


@dataclass
class ConfusionTable:
    """Per-label TP/FP/FN counts plus the count of excluded cases."""

    labels: tuple[str, ...]
    tp: dict[str, int] = field(default_factory=dict)
    fp: dict[str, int] = field(default_factory=dict)
    fn: dict[str, int] = field(default_factory=dict)
    excluded: int = 0
    total: int = 0

    @classmethod
    def from_pairs(
        cls, pairs: Sequence[tuple[str, str]], scheme: LabelScheme, excluded: int = 0
    ) -> "ConfusionTable":
        table = cls(labels=scheme.labels, excluded=excluded)
        for label in scheme.labels:
            table.tp[label] = 0
            table.fp[label] = 0
            table.fn[label] = 0
        for gold, predicted in pairs:
            gold_c = scheme.canonical(gold)
            pred_c = scheme.canonical(predicted)
            table.total += 1
            if gold_c == pred_c:
                table.tp[gold_c] += 1
            else:
                table.fn[gold_c] += 1
                table.fp[pred_c] += 1
        return table


@dataclass(frozen=True)
class PrfScores:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class PrfReport:
    per_label: dict[str, PrfScores]
    macro: PrfScores
    balanced_accuracy: float
    evaluated: int
    excluded: int

    def to_dict(self) -> dict:
        return {
            "per_label": {
                label: {
                    "precision": scores.precision,
                    "recall": scores.recall,
                    "f1": scores.f1,
                }
                for label, scores in self.per_label.items()
            },
            "macro": {
                "precision": self.macro.precision,
                "recall": self.macro.recall,
                "f1": self.macro.f1,
            },
            "balanced_accuracy": self.balanced_accuracy,
            "evaluated": self.evaluated,
            "excluded": self.excluded,
        }


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def prf(
    pairs: Sequence[tuple[str, str]], scheme: LabelScheme, excluded: int = 0
) -> PrfReport:
    """Per-label and macro precision/recall/F1 over (gold, predicted) pairs.

    The macro average runs over the labels observed in the evaluation (gold or
    predicted), so a perfect predictor scores 100% even when some scheme
    labels never occur. Balanced accuracy averages recall over gold labels.
    """
    if not pairs:
        raise MetricsError("cannot compute metrics over an empty prediction list")
    table = ConfusionTable.from_pairs(pairs, scheme, excluded=excluded)
    canonical_pairs = [(scheme.canonical(g), scheme.canonical(p)) for g, p in pairs]
    gold_labels = {g for g, _ in canonical_pairs}
    observed = [
        label
        for label in scheme.labels
        if label in gold_labels or any(p == label for _, p in canonical_pairs)
    ]
    per_label: dict[str, PrfScores] = {}
    for label in scheme.labels:
        precision = _safe_div(table.tp[label], table.tp[label] + table.fp[label])
        recall = _safe_div(table.tp[label], table.tp[label] + table.fn[label])
        f1 = _safe_div(2 * precision * recall, precision + recall)
        per_label[label] = PrfScores(precision, recall, f1)
    macro = PrfScores(
        precision=sum(per_label[l].precision for l in observed) / len(observed),
        recall=sum(per_label[l].recall for l in observed) / len(observed),
        f1=sum(per_label[l].f1 for l in observed) / len(observed),
    )
    balanced = sum(per_label[l].recall for l in sorted(gold_labels)) / len(gold_labels)
    return PrfReport(
        per_label=per_label,
        macro=macro,
        balanced_accuracy=balanced,
        evaluated=table.total,
        excluded=excluded,
    )


# -- distance weighting ------------------------------------------------------


@dataclass(frozen=True)
class DistanceWeight:
    """1 minus the squared normalized gap between predicted and gold values."""

    value: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise MetricsError(f"weight out of [0, 1]: {self.value}")


def distance_weight(
    predicted: Verdict | str, gold: str, scheme: LabelScheme
) -> DistanceWeight:
    predicted_value = (
        predicted.value if isinstance(predicted, Verdict) else scheme.value_of(predicted)
    )
    gold_value = scheme.value_of(gold)
    span = scheme.y_max - scheme.y_min
    if span == 0:
        return DistanceWeight(1.0)
    gap = (predicted_value - gold_value) ** 2 / span**2
    return DistanceWeight(1.0 - gap)


@dataclass(frozen=True)
class ExternalScore:
    value: float
    scorer_id: str = ""


ALIGN_RANGE = (0.0, 1.0)
RQUGE_RANGE = (1.0, 5.0)


def _check_range(value: float, bounds: tuple[float, float], what: str) -> float:
    lo, hi = bounds
    if not lo <= value <= hi:
        raise MetricsError(f"{what} score {value} outside [{lo}, {hi}]")
    return value


def weighted_alignscore(
    base: ExternalScore | float,
    weight: DistanceWeight,
    bounds: tuple[float, float] = ALIGN_RANGE,
) -> float:
    """Scale a summary/claim alignment score by the class-distance weight."""
    value = base.value if isinstance(base, ExternalScore) else float(base)
    return weight.value * _check_range(value, bounds, "alignment")


def weighted_rquge(
    scores: Sequence[ExternalScore | float],
    weight: DistanceWeight,
    bounds: tuple[float, float] = RQUGE_RANGE,
) -> float:
    """Scale the mean per-question quality score by the class-distance weight."""
    if not scores:
        raise MetricsError("weighted question-quality needs at least one score")
    values = [
        _check_range(
            s.value if isinstance(s, ExternalScore) else float(s), bounds, "question"
        )
        for s in scores
    ]
    return weight.value * (sum(values) / len(values))


@dataclass(frozen=True)
class CorpusAggregate:
    mean: float | None
    evaluated: int
    excluded: int


def aggregate_corpus(
    per_claim: Sequence[float], excluded: int = 0
) -> CorpusAggregate:
    """Arithmetic mean over evaluated claims; exclusions counted separately."""
    if not per_claim:
        return CorpusAggregate(mean=None, evaluated=0, excluded=excluded)
    return CorpusAggregate(
        mean=sum(per_claim) / len(per_claim),
        evaluated=len(per_claim),
        excluded=excluded,
    )


# -- external scorers --------------------------------------------------------


class ExternalScorer(Protocol):
    scorer_id: str

    def score(self, text_a: str, text_b: str, answer: str | None = None) -> float: ...


_TOKEN = re.compile(r"\w+")


class TokenOverlapScorer:
    """Deterministic offline stand-in for an external scorer.

    Jaccard overlap of token sets, linearly mapped onto the configured output
    range. This is a plumbing stub for tests and offline runs, not a
    reimplementation of any published scorer.
    """

    def __init__(self, bounds: tuple[float, float] = ALIGN_RANGE, scorer_id: str = "") -> None:
        self.bounds = bounds
        self.scorer_id = scorer_id or f"token-overlap[{bounds[0]},{bounds[1]}]"

    def score(self, text_a: str, text_b: str, answer: str | None = None) -> float:
        parts = [text_b] + ([answer] if answer else [])
        tokens_a = {t.casefold() for t in _TOKEN.findall(text_a)}
        tokens_b = {t.casefold() for part in parts for t in _TOKEN.findall(part)}
        union = tokens_a | tokens_b
        overlap = len(tokens_a & tokens_b) / len(union) if union else 0.0
        lo, hi = self.bounds
        return lo + (hi - lo) * overlap


def weighted_run_report(
    records: Sequence[dict],
    scheme: LabelScheme,
    align_scorer: ExternalScorer,
    rquge_scorer: ExternalScorer,
) -> dict:
    """Macro and distance-weighted external-score rows over run records.

    Records are the stable per-case dicts of a run directory. Alignment scores
    pair the summary with the claim; question-quality scores take (question,
    claim, answer) per successful pair. Cases without the needed stage output
    are counted, not silently dropped.
    """
    align_macro: list[float] = []
    align_weighted: list[float] = []
    rquge_macro: list[float] = []
    rquge_weighted: list[float] = []
    excluded = 0
    without_summary = 0
    without_qa = 0
    for record in records:
        if (
            record.get("status") != "done"
            or not record.get("gold_label")
            or not record.get("verdict")
        ):
            excluded += 1
            continue
        claim = record["claim"]
        weight = distance_weight(
            record["verdict"]["label"], record["gold_label"], scheme
        )
        summary = (record.get("summary") or {}).get("text")
        if summary:
            base = align_scorer.score(summary, claim)
            align_macro.append(base)
            align_weighted.append(weighted_alignscore(base, weight))
        else:
            without_summary += 1
        ok_pairs = [p for p in record.get("qa_pairs") or [] if p.get("answer")]
        if ok_pairs:
            scores = [
                rquge_scorer.score(p["question_text"], claim, p["answer"])
                for p in ok_pairs
            ]
            rquge_macro.append(sum(scores) / len(scores))
            rquge_weighted.append(weighted_rquge(scores, weight))
        else:
            without_qa += 1

    def row(values: list[float]) -> dict:
        aggregate = aggregate_corpus(values, excluded=excluded)
        return {"mean": aggregate.mean, "evaluated": aggregate.evaluated}

    return {
        "alignscore_macro": row(align_macro),
        "alignscore_weighted": row(align_weighted),
        "rquge_macro": row(rquge_macro),
        "rquge_weighted": row(rquge_weighted),
        "excluded": excluded,
        "without_summary": without_summary,
        "without_qa": without_qa,
        "align_scorer": align_scorer.scorer_id,
        "rquge_scorer": rquge_scorer.scorer_id,
    }


def metrics_markdown(name: str, report: PrfReport) -> str:
    """One-row table in the Pr / Re / F1 percent layout."""
    lines = [
        "| Run | Pr | Re | F1 |",
        "| --- | --- | --- | --- |",
        "| {} | {:.2f} | {:.2f} | {:.2f} |".format(
            name,
            report.macro.precision * 100,
            report.macro.recall * 100,
            report.macro.f1 * 100,
        ),
    ]
    return "\n".join(lines) + "\n"


def verdict_pairs(
    records: Sequence[tuple[str, str]], scheme: LabelScheme
) -> list[tuple[str, str]]:
    """Validate (gold, predicted) label pairs against a scheme."""
    out = []
    for gold, predicted in records:
        if gold not in scheme:
            raise SchemeError(f"gold label {gold!r} not in scheme {scheme.name!r}")
        if predicted not in scheme:
            raise SchemeError(
                f"predicted label {predicted!r} not in scheme {scheme.name!r}"
            )
        out.append((scheme.canonical(gold), scheme.canonical(predicted)))
    return out
