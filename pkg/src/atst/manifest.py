"""Line records and corpus manifests (JSON-lines on disk).

A manifest is one header line (alphabet reference, iteration counter) followed
by one JSON object per text line.  Field order and float formatting are fixed
so that equal manifests serialize to identical bytes.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path


class ManifestError(ValueError):
    pass


class MalformedRecordError(ManifestError):
    pass


class DuplicateLineIdError(ManifestError):
    pass


class Origin(str, enum.Enum):
    """Where a line's supervision came from."""

    RELATED = "related"
    TARGET_ANNOTATED = "target_annotated"
    TARGET_UNANNOTATED = "target_unannotated"
    MACHINE_ANNOTATED = "machine_annotated"


_RECORD_FIELDS = (
    "line_id",
    "frames_path",
    "origin",
    "transcript",
    "hypothesis",
    "confidence",
    "cer",
    "weight",
)


@dataclass(frozen=True)
class LineRecord:
    """One text line: frame matrix location plus whatever labels it has.

    ``transcript`` is trusted supervision (or promoted machine output),
    ``hypothesis`` is decoder output, ``confidence`` scores the hypothesis.
    ``weight`` is a repetition count applied when corpora are merged for
    training.
    """

    line_id: str
    frames_path: str
    origin: Origin
    transcript: str | None = None
    hypothesis: str | None = None
    confidence: float | None = None
    cer: float | None = None
    weight: int = 1

    def __post_init__(self):
        if not self.line_id:
            raise MalformedRecordError("line_id must be non-empty")
        if not self.frames_path:
            raise MalformedRecordError("frames_path must be non-empty")
        try:
            origin = Origin(self.origin)
        except ValueError:
            raise MalformedRecordError(f"unknown origin {self.origin!r}") from None
        object.__setattr__(self, "origin", origin)
        if self.confidence is not None:
            c = float(self.confidence)
            if not (0.0 <= c <= 1.0) or math.isnan(c):
                raise ManifestError(f"confidence {c} outside [0, 1]")
            object.__setattr__(self, "confidence", c)
        if self.cer is not None:
            c = float(self.cer)
            if c < 0 or math.isnan(c):
                raise ManifestError(f"cer {c} must be >= 0")
            object.__setattr__(self, "cer", c)
        if origin is Origin.MACHINE_ANNOTATED and (
            self.hypothesis is None or self.confidence is None
        ):
            raise ManifestError(
                "machine_annotated lines need both hypothesis and confidence"
            )
        if not isinstance(self.weight, int) or self.weight < 1:
            raise ManifestError(f"weight must be a positive integer, got {self.weight!r}")

    def with_fields(self, **changes) -> "LineRecord":
        return replace(self, **changes)


@dataclass(frozen=True)
class CorpusManifest:
    """Ordered collection of records with unique line ids."""

    records: tuple[LineRecord, ...]
    alphabet_ref: str = ""
    iteration: int = 0
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        if self.iteration < 0:
            raise ManifestError("iteration must be >= 0")
        by_id = {}
        for rec in records:
            if rec.line_id in by_id:
                raise DuplicateLineIdError(f"duplicate line_id {rec.line_id!r}")
            by_id[rec.line_id] = rec
        object.__setattr__(self, "_by_id", by_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, line_id: str) -> LineRecord:
        try:
            return self._by_id[line_id]
        except KeyError:
            raise ManifestError(f"no record with line_id {line_id!r}") from None

    def with_records(self, records) -> "CorpusManifest":
        return CorpusManifest(
            records=tuple(records),
            alphabet_ref=self.alphabet_ref,
            iteration=self.iteration,
        )


def _record_to_obj(rec: LineRecord) -> dict:
    obj = {"line_id": rec.line_id, "frames_path": rec.frames_path, "origin": rec.origin.value}
    if rec.transcript is not None:
        obj["transcript"] = rec.transcript
    if rec.hypothesis is not None:
        obj["hypothesis"] = rec.hypothesis
    if rec.confidence is not None:
        obj["confidence"] = rec.confidence
    if rec.cer is not None:
        obj["cer"] = rec.cer
    if rec.weight != 1:
        obj["weight"] = rec.weight
    return obj


def _record_from_obj(obj, lineno: int) -> LineRecord:
    if not isinstance(obj, dict):
        raise MalformedRecordError(f"line {lineno}: record is not an object")
    unknown = set(obj) - set(_RECORD_FIELDS)
    if unknown:
        raise MalformedRecordError(f"line {lineno}: unknown fields {sorted(unknown)}")
    missing = {"line_id", "frames_path", "origin"} - set(obj)
    if missing:
        raise MalformedRecordError(f"line {lineno}: missing fields {sorted(missing)}")
    try:
        return LineRecord(**obj)
    except ManifestError as exc:
        raise type(exc)(f"line {lineno}: {exc}") from None


def write_manifest(manifest: CorpusManifest, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = {"alphabet_ref": manifest.alphabet_ref, "iteration": manifest.iteration}
        fh.write(json.dumps(header, ensure_ascii=False, separators=(",", ":")) + "\n")
        for rec in manifest.records:
            fh.write(
                json.dumps(_record_to_obj(rec), ensure_ascii=False, separators=(",", ":"))
                + "\n"
            )


def read_manifest(path) -> CorpusManifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ManifestError(f"{path}: empty manifest file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedRecordError(f"{path} line 1: {exc}") from None
    if not isinstance(header, dict) or "alphabet_ref" not in header:
        raise MalformedRecordError(f"{path} line 1: expected a manifest header")
    records = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedRecordError(f"{path} line {lineno}: {exc}") from None
        records.append(_record_from_obj(obj, lineno))
    return CorpusManifest(
        records=tuple(records),
        alphabet_ref=str(header["alphabet_ref"]),
        iteration=int(header.get("iteration", 0)),
    )


def resolve_frames_path(manifest_path, record: LineRecord) -> Path:
    """Frames paths are stored relative to the manifest's directory."""
    p = Path(record.frames_path)
    return p if p.is_absolute() else Path(manifest_path).parent / p
