"""Orchestration of the self-training loop over manifests.

One iteration: score the unannotated corpus with a confidence measure, select
the most confident portion as machine-annotated data, merge it with the seed
corpora, and report curves/AUCs/portion estimates against a validation set.
Per-line work runs in a process pool; every reduction collects results in
submission order, so worker count never changes any output byte.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from functools import partial
from pathlib import Path

import numpy as np

from .alphabet import Alphabet, read_alphabet
from .confidence import (
    MEASURE_NAMES,
    SIGMA_DEGENERATE,
    ConfidenceMeasure,
    MeasureConfigError,
    conf_char_probs_mean,
    conf_ctc_loss,
    conf_posterior,
    conf_probs_mean,
    conf_worst_best,
)
from .ctc import greedy_decode
from .decoder import DecodeParams, prefix_search_decode
from .evaluation import (
    cer,
    corpus_cer,
    auc,
    confidence_curve,
    curve_from_ordering,
    estimate_portion_cers,
    rank_by_confidence,
    select_top,
)
from .frames import read_frame_matrix
from .lm import NGramLM, train_stage
from .manifest import (
    CorpusManifest,
    DuplicateLineIdError,
    read_manifest,
    resolve_frames_path,
    write_manifest,
)
from .seeding import derive_seed

DEFAULT_ALPHA_GRID = tuple(round(0.1 * i, 1) for i in range(16))
DEFAULT_BEAM_GRID = (1, 2, 4, 8, 16)
DEFAULT_REPORT_PORTIONS = (0.01, 0.03, 0.10, 0.32, 0.56, 1.0)


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Everything one iteration needs; loadable from a JSON file.

    Paths are kept as given; ``load_pipeline_config`` resolves them relative
    to the config file.  ``validation_manifest`` falls back to the annotated
    target manifest.  ``target_weight`` is the repetition count given to
    annotated target lines in the merged corpus.
    """

    unannotated_manifest: str
    out_dir: str
    related_manifest: str | None = None
    target_annotated_manifest: str | None = None
    validation_manifest: str | None = None
    measure: str = "posterior"
    portion: float = 0.1
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    insertion_bonus: float = 1.0
    beam_width_grid: tuple[int, ...] = DEFAULT_BEAM_GRID
    posterior_beam_width: int = 16
    lm_order: int = 6
    lm_path: str | None = None
    lm_related_corpus: str | None = None
    lm_machine_annotated_corpus: str | None = None
    lm_target_corpus: str | None = None
    target_weight: int = 1
    report_portions: tuple[float, ...] = DEFAULT_REPORT_PORTIONS
    iteration: int = 1
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        if not 0.0 < self.portion <= 1.0:
            raise PipelineError(f"portion must be in (0, 1], got {self.portion}")
        if self.measure not in MEASURE_NAMES:
            raise PipelineError(f"unknown measure {self.measure!r}")
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        if any(not 0.0 <= a <= 1.5 for a in self.alpha_grid) or not self.alpha_grid:
            raise PipelineError("alpha_grid values must lie in [0.0, 1.5]")
        object.__setattr__(self, "beam_width_grid", tuple(int(k) for k in self.beam_width_grid))
        if any(k < 1 for k in self.beam_width_grid) or not self.beam_width_grid:
            raise PipelineError("beam_width_grid values must be >= 1")
        object.__setattr__(self, "report_portions", tuple(float(p) for p in self.report_portions))
        if self.iteration < 1:
            raise PipelineError(f"iteration must be >= 1, got {self.iteration}")
        if self.target_weight < 1:
            raise PipelineError(f"target_weight must be >= 1, got {self.target_weight}")
        if self.jobs < 1:
            raise PipelineError(f"jobs must be >= 1, got {self.jobs}")


_PATH_FIELDS = (
    "unannotated_manifest",
    "out_dir",
    "related_manifest",
    "target_annotated_manifest",
    "validation_manifest",
    "lm_path",
    "lm_related_corpus",
    "lm_machine_annotated_corpus",
    "lm_target_corpus",
)


def load_pipeline_config(path, **overrides) -> PipelineConfig:
    """Read a JSON config; relative paths resolve against the file's directory."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PipelineError(f"{path}: {exc}") from None
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(obj) - known
    if unknown:
        raise PipelineError(f"{path}: unknown config fields {sorted(unknown)}")
    obj.update(overrides)
    missing = {"unannotated_manifest", "out_dir"} - set(obj)
    if missing:
        raise PipelineError(f"{path}: missing config fields {sorted(missing)}")
    for key in ("alpha_grid", "beam_width_grid", "report_portions"):
        if key in obj:
            obj[key] = tuple(obj[key])
    cfg = PipelineConfig(**obj)
    base = path.parent
    resolved = {}
    for name in _PATH_FIELDS:
        value = getattr(cfg, name)
        if value is not None and not Path(value).is_absolute():
            resolved[name] = str((base / value).resolve())
    return replace(cfg, **resolved) if resolved else cfg


def _parallel_map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    chunk = max(1, math.ceil(len(items) / (jobs * 4)))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def _score_one(frames_path: str, measure: ConfidenceMeasure, alphabet: Alphabet):
    matrix = read_frame_matrix(frames_path, alphabet)
    return greedy_decode(matrix, alphabet), measure.score(matrix, alphabet)


def _line_maxima(frames_path: str, alphabet: Alphabet):
    matrix = read_frame_matrix(frames_path, alphabet)
    return np.exp(matrix.log_probs.max(axis=1).astype(np.float64))


def fit_measure(
    measure: ConfidenceMeasure, manifest: CorpusManifest, manifest_path, alphabet: Alphabet, jobs: int = 1
) -> ConfidenceMeasure:
    """Attach the corpus-level Gaussian fit to an inliers-rate measure."""
    if measure.kind != "inliers-rate":
        return measure
    paths = [str(resolve_frames_path(manifest_path, rec)) for rec in manifest]
    maxima = _parallel_map(partial(_line_maxima, alphabet=alphabet), paths, jobs)
    pooled = np.concatenate(maxima)
    return measure.with_fit(float(pooled.mean()), float(pooled.std()))


def score_corpus(
    manifest: CorpusManifest,
    manifest_path,
    measure: ConfidenceMeasure,
    alphabet: Alphabet,
    jobs: int = 1,
) -> CorpusManifest:
    """Fill hypothesis (greedy) and confidence on every record.

    Transcripts are left untouched; rescoring is idempotent.  An unfitted
    inliers-rate measure raises; run fit_measure first.
    """
    paths = [str(resolve_frames_path(manifest_path, rec)) for rec in manifest]
    if measure.kind == "inliers-rate" and measure.inliers_fit is None:
        raise MeasureConfigError(
            "inliers-rate needs a fitted (mu, sigma); run the fit pass first"
        )
    results = _parallel_map(
        partial(_score_one, measure=measure, alphabet=alphabet), paths, jobs
    )
    records = [
        rec.with_fields(hypothesis=hyp, confidence=conf)
        for rec, (hyp, conf) in zip(manifest.records, results)
    ]
    return manifest.with_records(records)


def _all_measures_one(frames_path: str, alphabet: Alphabet, beam_width: int):
    matrix = read_frame_matrix(frames_path, alphabet)
    maxima = np.exp(matrix.log_probs.max(axis=1).astype(np.float64))
    hyp = greedy_decode(matrix, alphabet)
    confs = {
        "ctc-loss": conf_ctc_loss(matrix, alphabet),
        "posterior": conf_posterior(matrix, alphabet, beam_width),
        "probs-mean": conf_probs_mean(matrix),
        "char-probs-mean": conf_char_probs_mean(matrix, alphabet),
        "worst-best": conf_worst_best(matrix, alphabet),
    }
    return hyp, confs, maxima


def score_all_measures(
    manifest: CorpusManifest, manifest_path, alphabet: Alphabet, beam_width: int = 16, jobs: int = 1
):
    """Hypotheses plus per-measure confidences for every record, in order.

    Returns (hypotheses, {measure name: [confidence]}).  The inliers fit is
    taken over this same corpus, so a single pass suffices.
    """
    paths = [str(resolve_frames_path(manifest_path, rec)) for rec in manifest]
    results = _parallel_map(
        partial(_all_measures_one, alphabet=alphabet, beam_width=beam_width), paths, jobs
    )
    hyps = [hyp for hyp, _, _ in results]
    by_measure = {name: [confs[name] for _, confs, _ in results] for name in results[0][1]} if results else {}
    pooled = np.concatenate([mx for _, _, mx in results]) if results else np.array([])
    if pooled.size:
        mu, sigma = float(pooled.mean()), float(pooled.std())
        by_measure["inliers-rate"] = [
            conf_inliers_rate_from_maxima(mx, mu, sigma) for _, _, mx in results
        ]
    return hyps, {name: by_measure[name] for name in MEASURE_NAMES if name in by_measure}


def conf_inliers_rate_from_maxima(maxima: np.ndarray, mu: float, sigma: float) -> float:
    if sigma < SIGMA_DEGENERATE:
        return 1.0
    return float((np.abs(maxima - mu) <= 2.0 * sigma).mean())


def report_auc_table(
    manifest: CorpusManifest,
    manifest_path,
    alphabet: Alphabet,
    beam_width: int = 16,
    seed: int = 0,
    jobs: int = 1,
):
    """AUC per measure on a reference-bearing corpus, plus oracle and random rows.

    Returns (rows, hypotheses, by_measure) where rows is a list of
    (label, auc_value) with the six measures first, then oracle and random.
    """
    for rec in manifest:
        if rec.transcript is None:
            raise PipelineError(f"record {rec.line_id!r} has no reference transcript")
    hyps, by_measure = score_all_measures(manifest, manifest_path, alphabet, beam_width, jobs)
    rows = []
    for name in MEASURE_NAMES:
        scored = manifest.with_records(
            rec.with_fields(hypothesis=h, confidence=c)
            for rec, h, c in zip(manifest.records, hyps, by_measure[name])
        )
        rows.append((name, auc(confidence_curve(scored))))

    with_hyps = [
        rec.with_fields(hypothesis=h) for rec, h in zip(manifest.records, hyps)
    ]
    oracle_order = sorted(
        with_hyps, key=lambda r: (cer(r.transcript, r.hypothesis), r.line_id)
    )
    rows.append(("oracle", auc(curve_from_ordering(oracle_order))))
    rng = np.random.default_rng(derive_seed(seed, "auc-random"))
    random_order = [with_hyps[i] for i in rng.permutation(len(with_hyps))]
    rows.append(("random", auc(curve_from_ordering(random_order))))
    return rows, hyps, by_measure


@dataclass(frozen=True)
class IterationReport:
    """Artifact paths and headline numbers from one pipeline iteration."""

    iteration: int
    scored_manifest: str
    selected_manifest: str
    merged_manifest: str
    auc_table: str
    curve_csv: str
    portion_table: str
    summary_json: str
    summary: dict


def _absolutize(manifest: CorpusManifest, manifest_path) -> CorpusManifest:
    return manifest.with_records(
        rec.with_fields(frames_path=str(resolve_frames_path(manifest_path, rec).resolve()))
        for rec in manifest
    )


def _load_corpus(path, alphabet_hash) -> tuple[CorpusManifest, Alphabet]:
    manifest = read_manifest(path)
    alpha_path = Path(path).parent / manifest.alphabet_ref
    alphabet = read_alphabet(alpha_path)
    if alphabet_hash is not None and alphabet.content_hash() != alphabet_hash:
        raise PipelineError(f"{path}: alphabet disagrees with the unannotated corpus")
    return manifest, alphabet


def _fmt(value: float) -> str:
    return repr(float(value))


def run_iteration(config: PipelineConfig) -> IterationReport:
    """Score, select, merge and report one self-training iteration.

    Writes scored/selected/merged manifests and report files under
    config.out_dir; byte-identical for identical config+seed regardless of
    worker count.
    """
    unannotated, alphabet = _load_corpus(config.unannotated_manifest, None)
    ahash = alphabet.content_hash()

    validation_path = config.validation_manifest or config.target_annotated_manifest
    if validation_path is None:
        raise PipelineError("need validation_manifest or target_annotated_manifest")
    validation, _ = _load_corpus(validation_path, ahash)

    out_dir = Path(config.out_dir)
    report_dir = out_dir / "report"
    report_dir.mkdir(parents=True, exist_ok=True)

    measure = ConfidenceMeasure(config.measure, beam_width=config.posterior_beam_width)
    measure = fit_measure(measure, unannotated, config.unannotated_manifest, alphabet, config.jobs)
    scored = score_corpus(unannotated, config.unannotated_manifest, measure, alphabet, config.jobs)
    scored = _absolutize(scored, config.unannotated_manifest)
    scored = CorpusManifest(
        records=scored.records, alphabet_ref=scored.alphabet_ref, iteration=config.iteration
    )
    scored_path = out_dir / "scored.jsonl"
    write_manifest(scored, scored_path)

    # validation: AUC table over all measures, curve for the configured one
    rows, val_hyps, val_confs = report_auc_table(
        validation, validation_path, alphabet, config.posterior_beam_width, config.seed, config.jobs
    )
    auc_path = report_dir / "auc.tsv"
    with open(auc_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("measure\tauc_percent\n")
        for label, value in rows:
            fh.write(f"{label}\t{_fmt(value)}\n")

    val_scored = validation.with_records(
        rec.with_fields(hypothesis=h, confidence=c)
        for rec, h, c in zip(validation.records, val_hyps, val_confs[config.measure])
    )
    curve = confidence_curve(val_scored)
    curve_path = report_dir / "curve.csv"
    with open(curve_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("fraction,cer_percent\n")
        for fraction, value in curve.points:
            fh.write(f"{_fmt(fraction)},{_fmt(value)}\n")

    selected = select_top(scored, config.portion)
    selected_true_cer = None
    if all(rec.transcript is not None for rec in scored):
        chosen = {rec.line_id for rec in selected}
        selected_true_cer = corpus_cer(
            (rec.transcript, rec.hypothesis) for rec in scored if rec.line_id in chosen
        )
    selected_path = out_dir / "selected.jsonl"
    write_manifest(selected, selected_path)

    merged_records = []
    for source_path, origin_weight in (
        (config.related_manifest, 1),
        (config.target_annotated_manifest, config.target_weight),
    ):
        if source_path is None:
            continue
        source, _ = _load_corpus(source_path, ahash)
        source = _absolutize(source, source_path)
        for rec in source:
            merged_records.append(
                rec.with_fields(weight=origin_weight) if origin_weight != 1 else rec
            )
    merged_records.extend(selected.records)
    try:
        merged = CorpusManifest(
            records=tuple(merged_records), alphabet_ref=scored.alphabet_ref, iteration=config.iteration
        )
    except DuplicateLineIdError as exc:
        raise PipelineError(f"merge collision across corpora: {exc}") from None
    merged_path = out_dir / "merged.jsonl"
    write_manifest(merged, merged_path)

    # portion estimates from validation kNN pairs; true values when possible
    val_pairs = [
        (c, cer(rec.transcript, h))
        for rec, h, c in zip(validation.records, val_hyps, val_confs[config.measure])
    ]
    estimates = estimate_portion_cers(scored, val_pairs, config.report_portions, k=10)
    have_truth = all(rec.transcript is not None for rec in scored)
    ranked = rank_by_confidence(scored)
    portion_path = report_dir / "portion_estimates.tsv"
    with open(portion_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("portion\testimated_cer" + ("\ttrue_cer\n" if have_truth else "\n"))
        for portion, estimate in estimates:
            line = f"{_fmt(portion)}\t{_fmt(estimate)}"
            if have_truth:
                top = ranked[: math.ceil(portion * len(ranked) - 1e-9)]
                true_value = corpus_cer((r.transcript, r.hypothesis) for r in top)
                line += f"\t{_fmt(true_value)}"
            fh.write(line + "\n")

    summary = {
        "iteration": config.iteration,
        "measure": config.measure,
        "portion": config.portion,
        "seed": config.seed,
        "lines_unannotated": len(scored),
        "lines_selected": len(selected),
        "lines_merged": len(merged),
        "auc": {label: value for label, value in rows},
        "validation_corpus_cer": corpus_cer(
            (rec.transcript, h) for rec, h in zip(validation.records, val_hyps)
        ),
    }
    if selected_true_cer is not None:
        summary["selected_true_cer"] = selected_true_cer
        summary["unannotated_corpus_cer"] = corpus_cer(
            (rec.transcript, rec.hypothesis) for rec in scored
        )
    summary_path = report_dir / "summary.json"
    with open(summary_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return IterationReport(
        iteration=config.iteration,
        scored_manifest=str(scored_path),
        selected_manifest=str(selected_path),
        merged_manifest=str(merged_path),
        auc_table=str(auc_path),
        curve_csv=str(curve_path),
        portion_table=str(portion_path),
        summary_json=str(summary_path),
        summary=summary,
    )


def _decode_grid_one(frames_path: str, alphabet: Alphabet, lm, grid, insertion_bonus: float):
    matrix = read_frame_matrix(frames_path, alphabet)
    texts = []
    for lm_weight, beam_width in grid:
        params = DecodeParams(
            lm_weight=lm_weight, insertion_bonus=insertion_bonus, beam_width=beam_width
        )
        hyps = prefix_search_decode(matrix, alphabet, params, lm)
        texts.append(hyps[0].text if hyps else "")
    return texts


@dataclass(frozen=True)
class TuneResult:
    lm_weight: float
    beam_width: int
    corpus_cer: float
    rows: tuple[tuple[float, int, float], ...]  # (alpha, K, cer)


def tune_decode(
    validation: CorpusManifest,
    validation_path,
    alphabet: Alphabet,
    lm,
    alpha_grid=DEFAULT_ALPHA_GRID,
    beam_width_grid=DEFAULT_BEAM_GRID,
    insertion_bonus: float = 1.0,
    jobs: int = 1,
) -> TuneResult:
    """Grid-search (lm_weight, beam_width) minimizing validation corpus CER.

    Ties break toward smaller beam width, then smaller lm_weight.  The full
    CER grid comes back for reporting.
    """
    for rec in validation:
        if rec.transcript is None:
            raise PipelineError(f"record {rec.line_id!r} has no reference transcript")
    grid = [(float(a), int(k)) for a in alpha_grid for k in beam_width_grid]
    if any(a > 0 for a, _ in grid) and lm is None:
        raise PipelineError("alpha_grid includes positive weights but no LM was given")
    paths = [str(resolve_frames_path(validation_path, rec)) for rec in validation]
    per_line = _parallel_map(
        partial(
            _decode_grid_one,
            alphabet=alphabet,
            lm=lm,
            grid=grid,
            insertion_bonus=insertion_bonus,
        ),
        paths,
        jobs,
    )
    references = [rec.transcript for rec in validation]
    rows = []
    for gi, (lm_weight, beam_width) in enumerate(grid):
        value = corpus_cer((ref, line[gi]) for ref, line in zip(references, per_line))
        rows.append((lm_weight, beam_width, value))
    best = min(rows, key=lambda r: (r[2], r[1], r[0]))
    return TuneResult(
        lm_weight=best[0], beam_width=best[1], corpus_cer=best[2], rows=tuple(rows)
    )


def train_staged_lm(config: PipelineConfig, alphabet: Alphabet) -> NGramLM:
    """Build an n-gram model from whichever stage corpora the config names."""
    lm = NGramLM(alphabet=alphabet, order=config.lm_order)
    stages = (
        ("related", config.lm_related_corpus),
        ("machine_annotated", config.lm_machine_annotated_corpus),
        ("target", config.lm_target_corpus),
    )
    named = [(stage, path) for stage, path in stages if path is not None]
    if not named:
        raise PipelineError("no LM stage corpora configured")
    for stage, path in named:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
        lm = train_stage(lm, stage, lines)
    return lm
