"""Scoring and reporting: WER alignment, intent accuracy, F1, result tables.

All text comparisons run over canonically normalized token sequences
(see :mod:`slubench.textnorm`). Report rendering rounds half-up to two
decimals; every internal value keeps full precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .errors import ContractError
from .textnorm import tokenize


@dataclass(frozen=True)
class AlignmentResult:
    """Counts from a minimum-edit-distance alignment against a reference."""

    substitutions: int
    deletions: int
    insertions: int
    hits: int
    ref_len: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class F1Result:
    micro: float
    macro: float
    per_class: dict[str, ClassScores]


@dataclass(frozen=True)
class ReportRow:
    """One (experiment, dataset variant, split) cell group of a result table."""

    experiment: str
    variant: str
    split: str
    accuracy: float | None = None
    f1_micro: float | None = None
    f1_macro: float | None = None
    per_class: dict[str, ClassScores] = field(default_factory=dict)
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass
class EvalReport:
    rows: list[ReportRow] = field(default_factory=list)

    def validate(self) -> None:
        for row in self.rows:
            if row.failed:
                continue
            for value in (row.accuracy, row.f1_micro, row.f1_macro):
                if value is None or not 0.0 <= value <= 1.0:
                    raise ContractError(
                        f"report row {row.experiment}/{row.variant}/{row.split}: "
                        f"metric {value!r} outside [0, 1]"
                    )


def align(reference: str, hypothesis: str) -> AlignmentResult:
    """Minimum-edit-distance alignment with unit costs.

    Backtrace prefers hit > substitution > deletion > insertion on cost
    ties. Raises ContractError for an empty reference (WER undefined).
    """
    ref = tokenize(reference)
    hyp = tokenize(hypothesis)
    if not ref:
        raise ContractError("empty reference: WER is undefined")
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = dist[i - 1][j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            dist[i][j] = min(diag, dist[i - 1][j] + 1, dist[i][j - 1] + 1)

    hits = subs = dels = inss = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i][j] == dist[i - 1][j - 1]:
            hits += 1
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            subs += 1
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            inss += 1
            j -= 1
    return AlignmentResult(subs, dels, inss, hits, n)


def wer(reference: str, hypothesis: str) -> float:
    """(S + D + I) / reference length; may exceed 1."""
    a = align(reference, hypothesis)
    return a.errors / a.ref_len


def intent_accuracy(gold: list[str], pred: list[str]) -> float:
    if len(gold) != len(pred):
        raise ContractError(f"label lists differ in length: {len(gold)} vs {len(pred)}")
    if not gold:
        raise ContractError("empty label lists")
    return sum(g == p for g, p in zip(gold, pred)) / len(gold)


def f1_scores(gold: list[str], pred: list[str]) -> F1Result:
    """Per-class precision/recall/F1 with the 0/0 -> 0 convention.

    Macro-F1 averages only over classes present in gold; classes that
    appear only in predictions are still reported per class. Micro
    scores come from pooled counts.
    """
    if len(gold) != len(pred):
        raise ContractError(f"label lists differ in length: {len(gold)} vs {len(pred)}")
    if not gold:
        raise ContractError("empty label lists")

    labels = sorted(set(gold) | set(pred))
    per_class: dict[str, ClassScores] = {}
    pooled_tp = pooled_fp = pooled_fn = 0
    for label in labels:
        tp = sum(1 for g, p in zip(gold, pred) if g == label and p == label)
        fp = sum(1 for g, p in zip(gold, pred) if g != label and p == label)
        fn = sum(1 for g, p in zip(gold, pred) if g == label and p != label)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[label] = ClassScores(precision, recall, f1, tp + fn)
        pooled_tp += tp
        pooled_fp += fp
        pooled_fn += fn

    gold_classes = [label for label in labels if per_class[label].support > 0]
    macro = sum(per_class[label].f1 for label in gold_classes) / len(gold_classes)
    micro_p = pooled_tp / (pooled_tp + pooled_fp) if pooled_tp + pooled_fp else 0.0
    micro_r = pooled_tp / (pooled_tp + pooled_fn) if pooled_tp + pooled_fn else 0.0
    micro = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    return F1Result(micro, macro, per_class)


def relative_improvement(baseline: float, candidate: float) -> float:
    """Percentage change of candidate over baseline; baseline must be > 0."""
    if baseline <= 0:
        raise ContractError(f"relative improvement needs a positive baseline, got {baseline}")
    return 100.0 * (candidate - baseline) / baseline


def round2(value: float) -> str:
    """Half-up rounding to two decimals, as printed in result tables."""
    return str(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


_METRICS = ("acc", "f1_micro", "f1_macro")


def _cells(row: ReportRow) -> list[str]:
    if row.failed:
        return ["FAILED"] * len(_METRICS)
    return [round2(row.accuracy), round2(row.f1_micro), round2(row.f1_macro)]


def render_report(report: EvalReport, fmt: str = "markdown") -> str:
    """Render a table with experiments as rows and variant x split x metric columns.

    Row and column-group order follow first appearance in the report, so
    rendering the same report twice yields identical bytes.
    """
    if fmt not in ("markdown", "csv"):
        raise ContractError(f"unknown report format {fmt!r}")
    report.validate()

    experiments: list[str] = []
    groups: list[tuple[str, str]] = []
    cells: dict[tuple[str, str, str], ReportRow] = {}
    for row in report.rows:
        if row.experiment not in experiments:
            experiments.append(row.experiment)
        group = (row.variant, row.split)
        if group not in groups:
            groups.append(group)
        cells[(row.experiment, row.variant, row.split)] = row

    header = ["experiment"]
    for variant, split in groups:
        header.extend(f"{variant}/{split}/{metric}" for metric in _METRICS)

    table: list[list[str]] = [header]
    for experiment in experiments:
        line = [experiment]
        for variant, split in groups:
            row = cells.get((experiment, variant, split))
            line.extend(_cells(row) if row is not None else [""] * len(_METRICS))
        table.append(line)

    if fmt == "csv":
        return "\n".join(",".join(line) for line in table) + "\n"
    widths = [max(len(line[i]) for line in table) for i in range(len(header))]
    out = []
    for k, line in enumerate(table):
        out.append("| " + " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)) + " |")
        if k == 0:
            out.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    return "\n".join(out) + "\n"
