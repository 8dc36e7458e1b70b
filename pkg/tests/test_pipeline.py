"""Pipeline orchestration: config handling, scoring passes, reports, iterations.

The shared fixture corpora are small simulated sets with per-line noise
jitter, enough to give the confidence measures a real easy-to-hard spread
while keeping every test fast.  Determinism claims are checked by byte
comparison, never by "looks close".
"""

import dataclasses
import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from atst.alphabet import Alphabet
from atst.confidence import (
    MEASURE_NAMES,
    ConfidenceMeasure,
    MeasureConfigError,
    conf_char_probs_mean,
    conf_ctc_loss,
    conf_inliers_rate,
    conf_posterior,
    conf_probs_mean,
    conf_worst_best,
)
from atst.ctc import greedy_decode
from atst.decoder import DecodeParams, prefix_search_decode
from atst.evaluation import cer, corpus_cer
from atst.frames import read_frame_matrix
from atst.lm import NGramLM, UniformLM, train_stage
from atst.manifest import Origin, read_manifest, resolve_frames_path
from atst.pipeline import (
    DEFAULT_ALPHA_GRID,
    DEFAULT_BEAM_GRID,
    PipelineConfig,
    PipelineError,
    fit_measure,
    load_pipeline_config,
    report_auc_table,
    run_iteration,
    score_all_measures,
    score_corpus,
    train_staged_lm,
    tune_decode,
)
from atst.simulate import MarkovTextSource, SimParams, generate_texts, simulate_corpus

SYMBOLS = ("-", "a", "b", "c", "d", "e", "f")


def load_matrices(manifest, manifest_path, alphabet):
    return [
        read_frame_matrix(resolve_frames_path(manifest_path, rec), alphabet)
        for rec in manifest
    ]


def file_digests(paths):
    return {Path(p).name: hashlib.sha256(Path(p).read_bytes()).hexdigest() for p in paths}


@pytest.fixture(scope="module")
def alphabet():
    return Alphabet(symbols=SYMBOLS, blank_index=0)


@pytest.fixture(scope="module")
def corpora(tmp_path_factory, alphabet):
    """Unannotated / validation / related corpora over one alphabet.

    The unannotated and validation sets share the noisy jittered regime so
    kNN transfer makes sense; the related set is cleaner, standing in for
    out-of-domain supervision.  Text files for LM training sit alongside.
    """
    root = tmp_path_factory.mktemp("pipeline_corpora")
    source = MarkovTextSource.random(
        "abcdef", seed=11, concentration=0.8, length_range=(10, 14)
    )
    noisy = SimParams(
        confusion=0.2,
        per_line_noise_jitter=(0.20, 0.60),
        confusion_concentration=0.3,
        per_line_sharpness_jitter=(0.35, 2.8),
    )
    mild = SimParams(confusion=0.1)

    un_texts = generate_texts(source, 40, seed=21)
    val_texts = generate_texts(source, 60, seed=22)
    rel_texts = generate_texts(source, 12, seed=23)

    un = simulate_corpus(
        un_texts, alphabet, noisy, 31, root / "un",
        origin=Origin.TARGET_UNANNOTATED, id_prefix="un",
    )
    val = simulate_corpus(
        val_texts, alphabet, noisy, 32, root / "val",
        origin=Origin.TARGET_ANNOTATED, id_prefix="val",
    )
    rel = simulate_corpus(
        rel_texts, alphabet, mild, 33, root / "rel",
        origin=Origin.RELATED, id_prefix="rel",
    )
    (root / "rel_texts.txt").write_text("\n".join(rel_texts) + "\n", encoding="utf-8")
    (root / "tgt_texts.txt").write_text("\n".join(val_texts) + "\n", encoding="utf-8")
    return {
        "root": root,
        "un": un,
        "un_path": root / "un" / "manifest.jsonl",
        "val": val,
        "val_path": root / "val" / "manifest.jsonl",
        "rel": rel,
        "rel_path": root / "rel" / "manifest.jsonl",
        "rel_texts": root / "rel_texts.txt",
        "tgt_texts": root / "tgt_texts.txt",
    }


def base_config(corpora, out_dir, **changes):
    kwargs = dict(
        unannotated_manifest=str(corpora["un_path"]),
        out_dir=str(out_dir),
        related_manifest=str(corpora["rel_path"]),
        target_annotated_manifest=str(corpora["val_path"]),
        portion=0.25,
        seed=7,
    )
    kwargs.update(changes)
    return PipelineConfig(**kwargs)


class TestConfigValidation:
    def test_defaults(self):
        cfg = PipelineConfig(unannotated_manifest="m.jsonl", out_dir="out")
        assert cfg.measure == "posterior"
        assert cfg.portion == 0.1
        assert cfg.alpha_grid == DEFAULT_ALPHA_GRID
        assert cfg.beam_width_grid == DEFAULT_BEAM_GRID
        assert cfg.insertion_bonus == 1.0
        assert cfg.iteration == 1 and cfg.jobs == 1

    def test_alpha_grid_spans_zero_to_one_point_five(self):
        assert DEFAULT_ALPHA_GRID[0] == 0.0
        assert DEFAULT_ALPHA_GRID[-1] == 1.5
        assert len(DEFAULT_ALPHA_GRID) == 16
        steps = np.diff(DEFAULT_ALPHA_GRID)
        assert np.allclose(steps, 0.1)

    @pytest.mark.parametrize("portion", [0.0, -0.2, 1.0001])
    def test_bad_portion(self, portion):
        with pytest.raises(PipelineError):
            PipelineConfig(unannotated_manifest="m", out_dir="o", portion=portion)

    def test_unknown_measure(self):
        with pytest.raises(PipelineError):
            PipelineConfig(unannotated_manifest="m", out_dir="o", measure="magic")

    @pytest.mark.parametrize("grid", [(), (-0.1,), (1.6,)])
    def test_bad_alpha_grid(self, grid):
        with pytest.raises(PipelineError):
            PipelineConfig(unannotated_manifest="m", out_dir="o", alpha_grid=grid)

    @pytest.mark.parametrize("grid", [(), (0,), (-1, 4)])
    def test_bad_beam_grid(self, grid):
        with pytest.raises(PipelineError):
            PipelineConfig(unannotated_manifest="m", out_dir="o", beam_width_grid=grid)

    @pytest.mark.parametrize(
        "field,value",
        [("iteration", 0), ("target_weight", 0), ("jobs", 0)],
    )
    def test_bad_counters(self, field, value):
        with pytest.raises(PipelineError):
            PipelineConfig(unannotated_manifest="m", out_dir="o", **{field: value})


class TestConfigLoading:
    def write(self, tmp_path, obj, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(obj), encoding="utf-8")
        return path

    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        sub = tmp_path / "configs"
        sub.mkdir()
        path = self.write(sub, {"unannotated_manifest": "../data/m.jsonl", "out_dir": "run1"})
        cfg = load_pipeline_config(path)
        assert cfg.unannotated_manifest == str((sub / "../data/m.jsonl").resolve())
        assert cfg.out_dir == str((sub / "run1").resolve())

    def test_absolute_paths_kept(self, tmp_path):
        path = self.write(
            tmp_path,
            {"unannotated_manifest": "/abs/m.jsonl", "out_dir": "/abs/out"},
        )
        cfg = load_pipeline_config(path)
        assert cfg.unannotated_manifest == "/abs/m.jsonl"
        assert cfg.out_dir == "/abs/out"

    def test_unknown_field_rejected(self, tmp_path):
        path = self.write(
            tmp_path,
            {"unannotated_manifest": "m", "out_dir": "o", "portoin": 0.1},
        )
        with pytest.raises(PipelineError, match="portoin"):
            load_pipeline_config(path)

    def test_missing_required_field(self, tmp_path):
        path = self.write(tmp_path, {"out_dir": "o"})
        with pytest.raises(PipelineError, match="unannotated_manifest"):
            load_pipeline_config(path)

    def test_overrides_win(self, tmp_path):
        path = self.write(
            tmp_path,
            {"unannotated_manifest": "m", "out_dir": "o", "seed": 1, "jobs": 2},
        )
        cfg = load_pipeline_config(path, seed=99, jobs=8)
        assert cfg.seed == 99 and cfg.jobs == 8

    def test_grids_from_json_lists(self, tmp_path):
        path = self.write(
            tmp_path,
            {
                "unannotated_manifest": "m",
                "out_dir": "o",
                "alpha_grid": [0.0, 0.5],
                "beam_width_grid": [1, 8],
                "report_portions": [0.1, 1.0],
            },
        )
        cfg = load_pipeline_config(path)
        assert cfg.alpha_grid == (0.0, 0.5)
        assert cfg.beam_width_grid == (1, 8)
        assert cfg.report_portions == (0.1, 1.0)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(PipelineError):
            load_pipeline_config(path)

    def test_bad_values_still_validated(self, tmp_path):
        path = self.write(
            tmp_path, {"unannotated_manifest": "m", "out_dir": "o", "portion": 2.0}
        )
        with pytest.raises(PipelineError):
            load_pipeline_config(path)


class TestScoring:
    def test_fills_hypothesis_and_confidence(self, corpora, alphabet):
        measure = ConfidenceMeasure("posterior")
        scored = score_corpus(corpora["un"], corpora["un_path"], measure, alphabet)
        assert len(scored) == len(corpora["un"])
        for rec, orig in zip(scored, corpora["un"]):
            assert rec.hypothesis is not None
            assert 0.0 <= rec.confidence <= 1.0
            assert rec.transcript == orig.transcript
            assert rec.origin is orig.origin

    def test_matches_per_line_functions(self, corpora, alphabet):
        measure = ConfidenceMeasure("ctc-loss")
        scored = score_corpus(corpora["un"], corpora["un_path"], measure, alphabet)
        matrices = load_matrices(corpora["un"], corpora["un_path"], alphabet)
        for rec, matrix in zip(scored, matrices):
            assert rec.hypothesis == greedy_decode(matrix, alphabet)
            assert rec.confidence == conf_ctc_loss(matrix, alphabet)

    def test_rescoring_is_idempotent(self, corpora, alphabet):
        measure = ConfidenceMeasure("probs-mean")
        once = score_corpus(corpora["un"], corpora["un_path"], measure, alphabet)
        twice = score_corpus(once, corpora["un_path"], measure, alphabet)
        assert once == twice

    def test_unfitted_inliers_rejected(self, corpora, alphabet):
        with pytest.raises(MeasureConfigError):
            score_corpus(
                corpora["un"], corpora["un_path"], ConfidenceMeasure("inliers-rate"), alphabet
            )

    def test_fit_measure_pools_population_moments(self, corpora, alphabet):
        measure = fit_measure(
            ConfidenceMeasure("inliers-rate"), corpora["un"], corpora["un_path"], alphabet
        )
        matrices = load_matrices(corpora["un"], corpora["un_path"], alphabet)
        pooled = np.concatenate(
            [np.exp(m.log_probs.max(axis=1).astype(np.float64)) for m in matrices]
        )
        mu, sigma = measure.inliers_fit
        assert mu == pytest.approx(pooled.mean(), abs=1e-12)
        assert sigma == pytest.approx(pooled.std(), abs=1e-12)

    def test_fit_measure_noop_for_other_kinds(self, corpora, alphabet):
        measure = ConfidenceMeasure("posterior")
        assert fit_measure(measure, corpora["un"], corpora["un_path"], alphabet) is measure

    def test_worker_count_does_not_change_scores(self, corpora, alphabet):
        measure = ConfidenceMeasure("posterior")
        serial = score_corpus(corpora["un"], corpora["un_path"], measure, alphabet, jobs=1)
        parallel = score_corpus(corpora["un"], corpora["un_path"], measure, alphabet, jobs=3)
        assert serial == parallel


class TestScoreAllMeasures:
    def test_all_measures_present_in_order(self, corpora, alphabet):
        hyps, by_measure = score_all_measures(corpora["val"], corpora["val_path"], alphabet)
        assert tuple(by_measure) == MEASURE_NAMES
        assert len(hyps) == len(corpora["val"])
        for values in by_measure.values():
            assert len(values) == len(corpora["val"])
            assert all(0.0 <= v <= 1.0 for v in values)

    def test_values_match_single_measure_functions(self, corpora, alphabet):
        hyps, by_measure = score_all_measures(
            corpora["val"], corpora["val_path"], alphabet, beam_width=16
        )
        matrices = load_matrices(corpora["val"], corpora["val_path"], alphabet)
        maxima = [np.exp(m.log_probs.max(axis=1).astype(np.float64)) for m in matrices]
        pooled = np.concatenate(maxima)
        mu, sigma = float(pooled.mean()), float(pooled.std())
        for i, matrix in enumerate(matrices):
            assert hyps[i] == greedy_decode(matrix, alphabet)
            assert by_measure["ctc-loss"][i] == conf_ctc_loss(matrix, alphabet)
            assert by_measure["posterior"][i] == conf_posterior(matrix, alphabet, 16)
            assert by_measure["probs-mean"][i] == conf_probs_mean(matrix)
            assert by_measure["char-probs-mean"][i] == conf_char_probs_mean(matrix, alphabet)
            assert by_measure["inliers-rate"][i] == conf_inliers_rate(matrix, mu, sigma)
            assert by_measure["worst-best"][i] == conf_worst_best(matrix, alphabet)

    def test_empty_manifest(self, corpora, alphabet):
        empty = corpora["val"].with_records(())
        hyps, by_measure = score_all_measures(empty, corpora["val_path"], alphabet)
        assert hyps == [] and by_measure == {}


class TestAucTable:
    def test_rows_cover_measures_plus_baselines(self, corpora, alphabet):
        rows, hyps, by_measure = report_auc_table(
            corpora["val"], corpora["val_path"], alphabet, seed=7
        )
        assert [label for label, _ in rows] == list(MEASURE_NAMES) + ["oracle", "random"]
        assert len(hyps) == len(corpora["val"])
        assert all(value >= 0.0 for _, value in rows)

    def test_oracle_is_smallest(self, corpora, alphabet):
        rows, _, _ = report_auc_table(corpora["val"], corpora["val_path"], alphabet, seed=7)
        values = dict(rows)
        assert values["oracle"] == min(values.values())
        assert values["oracle"] < values["random"]

    def test_posterior_ranks_at_least_as_well_as_probs_mean(self, corpora, alphabet):
        rows, _, _ = report_auc_table(corpora["val"], corpora["val_path"], alphabet, seed=7)
        values = dict(rows)
        assert values["posterior"] <= values["probs-mean"]

    def test_random_row_depends_only_on_seed(self, corpora, alphabet):
        first, _, _ = report_auc_table(corpora["val"], corpora["val_path"], alphabet, seed=3)
        again, _, _ = report_auc_table(corpora["val"], corpora["val_path"], alphabet, seed=3)
        assert first == again

    def test_requires_references(self, corpora, alphabet):
        stripped = corpora["val"].with_records(
            rec.with_fields(transcript=None) for rec in corpora["val"]
        )
        with pytest.raises(PipelineError):
            report_auc_table(stripped, corpora["val_path"], alphabet)


class TestTuneDecode:
    def test_grid_shape_and_row_values(self, corpora, alphabet):
        lm = UniformLM(alphabet=alphabet)
        result = tune_decode(
            corpora["val"], corpora["val_path"], alphabet, lm,
            alpha_grid=(0.0, 0.4), beam_width_grid=(1, 4),
        )
        assert len(result.rows) == 4
        assert [(a, k) for a, k, _ in result.rows] == [
            (0.0, 1), (0.0, 4), (0.4, 1), (0.4, 4)
        ]
        # recompute one cell directly; corpus CER must match bit for bit
        params = DecodeParams(lm_weight=0.4, insertion_bonus=1.0, beam_width=4)
        pairs = []
        for rec in corpora["val"]:
            matrix = read_frame_matrix(
                resolve_frames_path(corpora["val_path"], rec), alphabet
            )
            hyps = prefix_search_decode(matrix, alphabet, params, lm)
            pairs.append((rec.transcript, hyps[0].text))
        expected = corpus_cer(pairs)
        row = next(r for r in result.rows if r[0] == 0.4 and r[1] == 4)
        assert row[2] == expected

    def test_best_minimizes_cer(self, corpora, alphabet):
        lm = UniformLM(alphabet=alphabet)
        result = tune_decode(
            corpora["val"], corpora["val_path"], alphabet, lm,
            alpha_grid=(0.0, 0.3), beam_width_grid=(1, 4),
        )
        assert result.corpus_cer == min(v for _, _, v in result.rows)
        assert (result.lm_weight, result.beam_width) in [
            (a, k) for a, k, v in result.rows if v == result.corpus_cer
        ]

    def test_ties_prefer_small_beam_then_small_alpha(self, tmp_path, alphabet):
        # noiseless corpus: every grid point decodes perfectly, so the
        # tie-break alone picks the answer
        texts = generate_texts(
            MarkovTextSource.random("abcd", seed=5, length_range=(4, 8)), 6, seed=6
        )
        clean = SimParams(confusion=0.0, blank_floor=0.0)
        manifest = simulate_corpus(texts, alphabet, clean, 9, tmp_path / "clean")
        path = tmp_path / "clean" / "manifest.jsonl"
        result = tune_decode(
            manifest, path, alphabet, UniformLM(alphabet=alphabet),
            alpha_grid=(0.0, 0.5, 1.0), beam_width_grid=(1, 2, 4),
        )
        assert result.corpus_cer == 0.0
        assert result.beam_width == 1
        assert result.lm_weight == 0.0

    def test_uniform_lm_keeps_alpha_zero(self, corpora, alphabet):
        result = tune_decode(
            corpora["val"], corpora["val_path"], alphabet, UniformLM(alphabet=alphabet),
            alpha_grid=(0.0, 0.2, 0.4), beam_width_grid=(1, 4),
        )
        zero_rows = {k: v for a, k, v in result.rows if a == 0.0}
        assert result.corpus_cer <= min(zero_rows.values())

    def test_positive_alpha_without_lm_rejected(self, corpora, alphabet):
        with pytest.raises(PipelineError):
            tune_decode(
                corpora["val"], corpora["val_path"], alphabet, None,
                alpha_grid=(0.0, 0.5), beam_width_grid=(1,),
            )

    def test_alpha_zero_without_lm_allowed(self, corpora, alphabet):
        result = tune_decode(
            corpora["val"], corpora["val_path"], alphabet, None,
            alpha_grid=(0.0,), beam_width_grid=(1, 2),
        )
        assert result.lm_weight == 0.0

    def test_requires_references(self, corpora, alphabet):
        stripped = corpora["val"].with_records(
            rec.with_fields(transcript=None) for rec in corpora["val"]
        )
        with pytest.raises(PipelineError):
            tune_decode(stripped, corpora["val_path"], alphabet, None, (0.0,), (1,))

    def test_worker_count_does_not_change_rows(self, corpora, alphabet):
        lm = UniformLM(alphabet=alphabet)
        serial = tune_decode(
            corpora["val"], corpora["val_path"], alphabet, lm,
            alpha_grid=(0.0, 0.3), beam_width_grid=(1, 4), jobs=1,
        )
        parallel = tune_decode(
            corpora["val"], corpora["val_path"], alphabet, lm,
            alpha_grid=(0.0, 0.3), beam_width_grid=(1, 4), jobs=3,
        )
        assert serial == parallel


class TestTrainStagedLm:
    def test_trains_named_stages_only(self, corpora, alphabet, tmp_path):
        cfg = base_config(
            corpora, tmp_path,
            lm_related_corpus=str(corpora["rel_texts"]),
            lm_target_corpus=str(corpora["tgt_texts"]),
            lm_order=3,
        )
        lm = train_staged_lm(cfg, alphabet)
        assert isinstance(lm, NGramLM)
        assert lm.order == 3
        assert lm.stage_counts[0]  # related
        assert not lm.stage_counts[1]  # machine_annotated: not configured
        assert lm.stage_counts[2]  # target

    def test_matches_direct_training(self, corpora, alphabet, tmp_path):
        cfg = base_config(
            corpora, tmp_path, lm_related_corpus=str(corpora["rel_texts"]), lm_order=2
        )
        lm = train_staged_lm(cfg, alphabet)
        lines = corpora["rel_texts"].read_text(encoding="utf-8").splitlines()
        direct = train_stage(NGramLM(alphabet=alphabet, order=2), "related", lines)
        assert lm.stage_counts == direct.stage_counts

    def test_no_stages_rejected(self, corpora, alphabet, tmp_path):
        cfg = base_config(corpora, tmp_path)
        with pytest.raises(PipelineError):
            train_staged_lm(cfg, alphabet)

    def test_blank_lines_skipped(self, alphabet, tmp_path):
        corpus = tmp_path / "texts.txt"
        corpus.write_text("ab\n\n  \ncd\n", encoding="utf-8")
        cfg = PipelineConfig(
            unannotated_manifest="m", out_dir="o", lm_target_corpus=str(corpus), lm_order=2
        )
        lm = train_staged_lm(cfg, alphabet)
        direct = train_stage(NGramLM(alphabet=alphabet, order=2), "target", ["ab", "cd"])
        assert lm.stage_counts == direct.stage_counts


class TestRunIteration:
    ARTIFACTS = (
        "scored.jsonl",
        "selected.jsonl",
        "merged.jsonl",
        "report/auc.tsv",
        "report/curve.csv",
        "report/portion_estimates.tsv",
        "report/summary.json",
    )

    def run(self, corpora, out_dir, **changes):
        return run_iteration(base_config(corpora, out_dir, **changes))

    def test_writes_all_artifacts(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run")
        for rel in self.ARTIFACTS:
            assert (tmp_path / "run" / rel).is_file(), rel
        assert report.summary["lines_unannotated"] == 40
        assert report.summary["lines_selected"] == 10  # ceil(0.25 * 40)
        assert report.summary["lines_merged"] == 12 + 60 + 10

    def test_scored_manifest_complete(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run")
        scored = read_manifest(report.scored_manifest)
        assert len(scored) == 40
        for rec in scored:
            assert rec.hypothesis is not None
            assert rec.confidence is not None
            assert rec.transcript is not None
            assert Path(rec.frames_path).is_absolute()

    def test_selection_promotes_top_confidence(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run")
        scored = read_manifest(report.scored_manifest)
        selected = read_manifest(report.selected_manifest)
        assert len(selected) == 10
        cutoff = sorted((r.confidence for r in scored), reverse=True)[9]
        for rec in selected:
            assert rec.origin is Origin.MACHINE_ANNOTATED
            assert rec.transcript == rec.hypothesis
            assert rec.confidence >= cutoff

    def test_merged_keeps_every_source_with_origins(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run")
        merged = read_manifest(report.merged_manifest)
        by_origin = {}
        for rec in merged:
            by_origin.setdefault(rec.origin, []).append(rec)
        assert len(by_origin[Origin.RELATED]) == 12
        assert len(by_origin[Origin.TARGET_ANNOTATED]) == 60
        assert len(by_origin[Origin.MACHINE_ANNOTATED]) == 10
        assert len(merged) == 82
        rel_ids = {rec.line_id for rec in corpora["rel"]}
        assert {r.line_id for r in by_origin[Origin.RELATED]} == rel_ids

    def test_target_weight_applied_in_merge(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run", target_weight=3)
        merged = read_manifest(report.merged_manifest)
        for rec in merged:
            expected = 3 if rec.origin is Origin.TARGET_ANNOTATED else 1
            assert rec.weight == expected

    def test_summary_headline_numbers(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run")
        summary = json.loads(Path(report.summary_json).read_text(encoding="utf-8"))
        assert summary == report.summary
        assert summary["iteration"] == 1
        assert summary["measure"] == "posterior"
        assert set(summary["auc"]) == set(MEASURE_NAMES) | {"oracle", "random"}
        # confident subset must decode better than the full pool on this fixture
        assert summary["selected_true_cer"] < summary["unannotated_corpus_cer"]

    def test_rerun_is_byte_identical(self, corpora, tmp_path):
        first = self.run(corpora, tmp_path / "run")
        digests = file_digests(
            [tmp_path / "run" / rel for rel in self.ARTIFACTS]
        )
        second = self.run(corpora, tmp_path / "run")
        assert first == second
        assert digests == file_digests([tmp_path / "run" / rel for rel in self.ARTIFACTS])

    def test_worker_count_does_not_change_bytes(self, corpora, tmp_path):
        self.run(corpora, tmp_path / "serial", jobs=1)
        self.run(corpora, tmp_path / "parallel", jobs=4)
        serial = file_digests([tmp_path / "serial" / rel for rel in self.ARTIFACTS])
        parallel = file_digests([tmp_path / "parallel" / rel for rel in self.ARTIFACTS])
        assert serial == parallel

    def test_iteration_number_stamped_through(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run", iteration=2)
        assert report.iteration == 2
        assert read_manifest(report.scored_manifest).iteration == 2
        assert read_manifest(report.merged_manifest).iteration == 2
        assert report.summary["iteration"] == 2

    def test_validation_falls_back_to_target_annotated(self, corpora, tmp_path):
        explicit = self.run(corpora, tmp_path / "a", validation_manifest=str(corpora["val_path"]))
        fallback = self.run(corpora, tmp_path / "b")
        assert explicit.summary == fallback.summary

    def test_without_any_validation_rejected(self, corpora, tmp_path):
        cfg = base_config(
            corpora, tmp_path / "run", target_annotated_manifest=None, validation_manifest=None
        )
        with pytest.raises(PipelineError):
            run_iteration(cfg)

    def test_alphabet_mismatch_rejected(self, corpora, tmp_path):
        other = Alphabet(symbols=("-", "x", "y"), blank_index=0)
        texts = ["xy", "yx", "xx"]
        simulate_corpus(
            texts, other, SimParams(confusion=0.1), 4, tmp_path / "other",
            origin=Origin.TARGET_ANNOTATED, id_prefix="other",
        )
        cfg = base_config(
            corpora, tmp_path / "run",
            validation_manifest=str(tmp_path / "other" / "manifest.jsonl"),
        )
        with pytest.raises(PipelineError, match="alphabet"):
            run_iteration(cfg)

    def test_colliding_line_ids_rejected(self, corpora, alphabet, tmp_path):
        # a "related" corpus reusing the unannotated ids cannot be merged
        texts = [rec.transcript for rec in corpora["un"]][:5]
        simulate_corpus(
            texts, alphabet, SimParams(confusion=0.1), 4, tmp_path / "clash",
            origin=Origin.RELATED, id_prefix="un",
        )
        cfg = base_config(
            corpora, tmp_path / "run",
            related_manifest=str(tmp_path / "clash" / "manifest.jsonl"),
        )
        with pytest.raises(PipelineError, match="collision"):
            run_iteration(cfg)

    def test_auc_table_file_matches_summary(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run")
        lines = Path(report.auc_table).read_text(encoding="utf-8").splitlines()
        assert lines[0] == "measure\tauc_percent"
        parsed = dict(line.split("\t") for line in lines[1:])
        assert set(parsed) == set(report.summary["auc"])
        for label, value in report.summary["auc"].items():
            assert float(parsed[label]) == value

    def test_curve_csv_shape(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run")
        lines = Path(report.curve_csv).read_text(encoding="utf-8").splitlines()
        assert lines[0] == "fraction,cer_percent"
        fractions = [float(line.split(",")[0]) for line in lines[1:]]
        assert len(fractions) == 60
        assert fractions == sorted(fractions)
        assert fractions[-1] == 1.0

    def test_portion_table_has_truth_column_when_possible(self, corpora, tmp_path):
        report = self.run(corpora, tmp_path / "run")
        lines = Path(report.portion_table).read_text(encoding="utf-8").splitlines()
        assert lines[0] == "portion\testimated_cer\ttrue_cer"
        assert len(lines) == 1 + len(base_config(corpora, tmp_path).report_portions)
        for line in lines[1:]:
            portion, estimate, truth = (float(x) for x in line.split("\t"))
            assert 0.0 < portion <= 1.0
            assert estimate >= 0.0 and truth >= 0.0

    def test_portion_table_without_truth(self, corpora, tmp_path):
        # hide the unannotated transcripts; validation keeps its own
        blind_dir = tmp_path / "blind"
        blind_dir.mkdir()
        blind = corpora["un"].with_records(
            rec.with_fields(transcript=None) for rec in corpora["un"]
        )
        blind = blind.with_records(
            rec.with_fields(
                frames_path=str(resolve_frames_path(corpora["un_path"], rec).resolve())
            )
            for rec in blind
        )
        from atst.manifest import write_manifest
        from atst.alphabet import write_alphabet

        write_manifest(blind, blind_dir / "manifest.jsonl")
        write_alphabet(
            Alphabet(symbols=SYMBOLS, blank_index=0), blind_dir / "alphabet.json"
        )
        report = self.run(
            corpora, tmp_path / "run", unannotated_manifest=str(blind_dir / "manifest.jsonl")
        )
        lines = Path(report.portion_table).read_text(encoding="utf-8").splitlines()
        assert lines[0] == "portion\testimated_cer"
        assert "selected_true_cer" not in report.summary
