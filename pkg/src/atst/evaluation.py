"""CER metric, confidence-ranked selection, AUC curves, kNN CER estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .manifest import CorpusManifest, LineRecord, Origin


class EvaluationError(ValueError):
    pass


class MissingConfidenceError(EvaluationError):
    pass


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance, two-row iterative."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cer(reference: str, hypothesis: str) -> float:
    """Character error rate: edit distance over max(1, reference length).

    The max keeps an empty reference well defined; inserting against it can
    push the rate above 1.
    """
    return levenshtein(reference, hypothesis) / max(1, len(reference))


def corpus_cer(pairs) -> float:
    """Aggregate CER: total edit distance over total reference length."""
    dist = 0
    length = 0
    for reference, hypothesis in pairs:
        dist += levenshtein(reference, hypothesis)
        length += len(reference)
    return dist / max(1, length)


def _ceil_portion(portion: float, n: int) -> int:
    # 0.1 * 1000 lands a hair above 100.0 in floats; nudge before the ceil
    return math.ceil(portion * n - 1e-9)


def _require_confidences(manifest: CorpusManifest) -> None:
    for rec in manifest:
        if rec.confidence is None:
            raise MissingConfidenceError(f"record {rec.line_id!r} has no confidence")


def rank_by_confidence(manifest: CorpusManifest) -> list[LineRecord]:
    """Records sorted most-confident first, ties by ascending line_id."""
    _require_confidences(manifest)
    return sorted(manifest.records, key=lambda r: (-r.confidence, r.line_id))


def select_top(manifest: CorpusManifest, portion: float) -> CorpusManifest:
    """Promote the best-scoring portion of records to machine-annotated.

    Keeps ceil(portion * N) records; each gets origin machine_annotated and
    its hypothesis promoted to transcript.
    """
    if not 0.0 < portion <= 1.0:
        raise EvaluationError(f"portion must be in (0, 1], got {portion}")
    ranked = rank_by_confidence(manifest)
    chosen = ranked[: _ceil_portion(portion, len(ranked))]
    promoted = []
    for rec in chosen:
        if rec.hypothesis is None:
            raise EvaluationError(f"record {rec.line_id!r} has no hypothesis to promote")
        promoted.append(
            rec.with_fields(origin=Origin.MACHINE_ANNOTATED, transcript=rec.hypothesis)
        )
    return manifest.with_records(promoted)


@dataclass(frozen=True)
class ConfidenceCurve:
    """Cumulative corpus CER (percent) over growing most-confident prefixes."""

    points: tuple[tuple[float, float], ...]

    def __post_init__(self):
        fracs = [f for f, _ in self.points]
        if not fracs:
            raise EvaluationError("curve needs at least one point")
        if any(b <= a for a, b in zip(fracs, fracs[1:])) or not (
            0.0 < fracs[0] and abs(fracs[-1] - 1.0) < 1e-12
        ):
            raise EvaluationError("fractions must increase strictly and end at 1.0")


def confidence_curve(manifest: CorpusManifest) -> ConfidenceCurve:
    """Curve over the descending-confidence ordering of the manifest.

    Every record needs confidence, hypothesis and a reference transcript.
    """
    ranked = rank_by_confidence(manifest)
    n = len(ranked)
    if n == 0:
        raise EvaluationError("cannot build a curve from an empty manifest")
    points = []
    dist = 0
    length = 0
    for k, rec in enumerate(ranked, start=1):
        if rec.transcript is None or rec.hypothesis is None:
            raise EvaluationError(
                f"record {rec.line_id!r} lacks transcript or hypothesis"
            )
        dist += levenshtein(rec.transcript, rec.hypothesis)
        length += len(rec.transcript)
        points.append((k / n, 100.0 * dist / max(1, length)))
    return ConfidenceCurve(points=tuple(points))


def auc(curve: ConfidenceCurve) -> float:
    """Right-endpoint rectangle rule: mean of the curve's CER values."""
    values = [v for _, v in curve.points]
    return sum(values) / len(values)


def curve_from_ordering(records) -> ConfidenceCurve:
    """Curve for an explicit record ordering (oracle/random baselines)."""
    records = list(records)
    if not records:
        raise EvaluationError("cannot build a curve from no records")
    points = []
    dist = 0
    length = 0
    for k, rec in enumerate(records, start=1):
        dist += levenshtein(rec.transcript, rec.hypothesis)
        length += len(rec.transcript)
        points.append((k / len(records), 100.0 * dist / max(1, length)))
    return ConfidenceCurve(points=tuple(points))


def knn_cer_estimate(validation, query_confidence: float, k: int = 10) -> float:
    """Mean CER of the k validation entries nearest in confidence.

    Ties in |confidence delta| resolve by ascending validation index.
    """
    validation = list(validation)
    if not validation:
        raise EvaluationError("validation set must be non-empty")
    if k < 1:
        raise EvaluationError(f"k must be >= 1, got {k}")
    order = sorted(
        range(len(validation)),
        key=lambda i: (abs(validation[i][0] - query_confidence), i),
    )
    chosen = order[: min(k, len(validation))]
    return sum(validation[i][1] for i in chosen) / len(chosen)


def estimate_portion_cers(manifest: CorpusManifest, validation, portions, k: int = 10):
    """Per portion: mean kNN CER estimate over the selected top lines.

    ``validation`` is a list of (confidence, cer) pairs.  Returns a list of
    (portion, estimate) in the given portion order.
    """
    ranked = rank_by_confidence(manifest)
    rows = []
    for portion in portions:
        if not 0.0 < portion <= 1.0:
            raise EvaluationError(f"portion must be in (0, 1], got {portion}")
        chosen = ranked[: _ceil_portion(portion, len(ranked))]
        estimates = [knn_cer_estimate(validation, rec.confidence, k) for rec in chosen]
        rows.append((portion, sum(estimates) / len(estimates) if estimates else 0.0))
    return rows
