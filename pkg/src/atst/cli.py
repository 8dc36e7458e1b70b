"""Command-line interface: the self-training loop and its pieces as subcommands."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .alphabet import Alphabet, read_alphabet, write_alphabet
from .confidence import MEASURE_NAMES, ConfidenceMeasure
from .decoder import DecodeParams, prefix_search_decode, total_score
from .evaluation import cer, corpus_cer, auc, confidence_curve, estimate_portion_cers, select_top
from .frames import read_frame_matrix
from .lm import NGramLM, load_lm, save_lm, train_stage, tune_stage_weights, perplexity
from .manifest import (
    CorpusManifest,
    Origin,
    read_manifest,
    resolve_frames_path,
    write_manifest,
)
from .augment import MaskingParams, mask_line, masking_setting, read_pgm, write_pgm
from .pipeline import (
    PipelineError,
    fit_measure,
    load_pipeline_config,
    report_auc_table,
    run_iteration,
    score_corpus,
    tune_decode,
)
from .simulate import SimParams, simulate_corpus


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="global random seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    parser.add_argument("--config", type=Path, default=None, help="pipeline config file (JSON)")


def _load_with_alphabet(manifest_path) -> tuple[CorpusManifest, Alphabet]:
    manifest = read_manifest(manifest_path)
    alphabet = read_alphabet(Path(manifest_path).parent / manifest.alphabet_ref)
    return manifest, alphabet


def _cmd_simulate(args) -> int:
    with open(args.texts, "r", encoding="utf-8") as fh:
        texts = [line.rstrip("\n") for line in fh if line.strip()]
    if not texts:
        print("no texts to simulate", file=sys.stderr)
        return 2
    if args.alphabet is not None:
        alphabet = read_alphabet(args.alphabet)
    else:
        alphabet = Alphabet.from_text("".join(texts))
    jitter = None
    if args.jitter > 0:
        lo = max(0.0, args.epsilon - args.jitter)
        hi = min(args.epsilon + args.jitter, 0.98 - args.blank_floor)
        jitter = (lo, max(lo, hi))
    params = SimParams(
        confusion=args.epsilon,
        frames_per_char=(args.frames_min, args.frames_max),
        blank_gap_prob=args.gap_prob,
        blank_floor=args.blank_floor,
        per_line_noise_jitter=jitter,
    )
    manifest = simulate_corpus(
        texts,
        alphabet,
        params,
        args.seed,
        args.out,
        origin=Origin(args.origin),
        id_prefix=args.prefix,
    )
    print(f"simulated {len(manifest)} lines into {args.out}")
    return 0


def _cmd_decode(args) -> int:
    lm = None
    if args.frames is not None:
        if args.alphabet is None:
            print("--frames needs --alphabet", file=sys.stderr)
            return 2
        alphabet = read_alphabet(args.alphabet)
        if args.lm is not None:
            lm = load_lm(args.lm, alphabet)
        params = DecodeParams(
            lm_weight=args.alpha, insertion_bonus=args.beta, beam_width=args.beam_width
        )
        matrix = read_frame_matrix(args.frames, alphabet)
        for hyp in prefix_search_decode(matrix, alphabet, params, lm):
            print(f"{total_score(hyp, params)!r}\t{hyp.text}")
        return 0
    manifest, alphabet = _load_with_alphabet(args.manifest)
    if args.lm is not None:
        lm = load_lm(args.lm, alphabet)
    params = DecodeParams(
        lm_weight=args.alpha, insertion_bonus=args.beta, beam_width=args.beam_width
    )
    records = []
    for rec in manifest:
        matrix = read_frame_matrix(resolve_frames_path(args.manifest, rec), alphabet)
        hyps = prefix_search_decode(matrix, alphabet, params, lm)
        records.append(rec.with_fields(hypothesis=hyps[0].text if hyps else ""))
    out = manifest.with_records(records)
    write_manifest(out, args.out)
    print(f"decoded {len(out)} lines -> {args.out}")
    return 0


def _cmd_score(args) -> int:
    manifest, alphabet = _load_with_alphabet(args.manifest)
    measure = ConfidenceMeasure(args.measure, beam_width=args.beam_width)
    measure = fit_measure(measure, manifest, args.manifest, alphabet, args.jobs)
    scored = score_corpus(manifest, args.manifest, measure, alphabet, args.jobs)
    write_manifest(scored, args.out)
    print(f"scored {len(scored)} lines with {args.measure} -> {args.out}")
    return 0


def _cmd_select(args) -> int:
    manifest = read_manifest(args.manifest)
    selected = select_top(manifest, args.portion)
    write_manifest(selected, args.out)
    print(f"selected {len(selected)} of {len(manifest)} lines -> {args.out}")
    return 0


def _cmd_merge(args) -> int:
    merged = []
    alphabet_ref = None
    ahash = None
    for path in args.manifests:
        manifest, alphabet = _load_with_alphabet(path)
        if ahash is None:
            ahash = alphabet.content_hash()
            alphabet_ref = str((Path(path).parent / manifest.alphabet_ref).resolve())
        elif alphabet.content_hash() != ahash:
            print(f"{path}: alphabet disagrees with the first manifest", file=sys.stderr)
            return 2
        for rec in manifest:
            rec = rec.with_fields(
                frames_path=str(resolve_frames_path(path, rec).resolve())
            )
            if args.target_weight != 1 and rec.origin is Origin.TARGET_ANNOTATED:
                rec = rec.with_fields(weight=args.target_weight)
            merged.append(rec)
    out = CorpusManifest(
        records=tuple(merged), alphabet_ref=alphabet_ref or "", iteration=args.iteration
    )
    write_manifest(out, args.out)
    print(f"merged {len(out)} lines -> {args.out}")
    return 0


def _cmd_eval_auc(args) -> int:
    manifest, alphabet = _load_with_alphabet(args.manifest)
    rows, _, _ = report_auc_table(
        manifest, args.manifest, alphabet, args.beam_width, args.seed, args.jobs
    )
    lines = ["measure\tauc_percent"]
    lines += [f"{label}\t{value!r}" for label, value in rows]
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _cmd_estimate_cer(args) -> int:
    manifest = read_manifest(args.manifest)
    validation = read_manifest(args.validation)
    pairs = []
    for rec in validation:
        if rec.transcript is None or rec.hypothesis is None or rec.confidence is None:
            print(
                f"validation record {rec.line_id} needs transcript, hypothesis and confidence",
                file=sys.stderr,
            )
            return 2
        pairs.append((rec.confidence, cer(rec.transcript, rec.hypothesis)))
    portions = [float(p) for p in args.portions.split(",")]
    rows = estimate_portion_cers(manifest, pairs, portions, k=args.k)
    lines = ["portion\testimated_cer"]
    lines += [f"{portion!r}\t{estimate!r}" for portion, estimate in rows]
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _cmd_augment(args) -> int:
    image = read_pgm(args.image)
    if args.setting is not None:
        params = masking_setting(args.setting)
    else:
        params = MaskingParams(
            success_probability=args.mask_p, width_range=(args.mask_wmin, args.mask_wmax)
        )
    write_pgm(mask_line(image, params, args.seed), args.out)
    print(f"masked {args.image} -> {args.out}")
    return 0


def _cmd_lm_train(args) -> int:
    alphabet = read_alphabet(args.alphabet)
    lm = NGramLM(alphabet=alphabet, order=args.order)
    stages = (
        ("related", args.related),
        ("machine_annotated", args.machine_annotated),
        ("target", args.target),
    )
    trained_any = False
    for stage, path in stages:
        if path is None:
            continue
        with open(path, "r", encoding="utf-8") as fh:
            lines = [line.rstrip("\n") for line in fh if line.strip()]
        lm = train_stage(lm, stage, lines)
        trained_any = True
    if not trained_any:
        print("no stage corpora given", file=sys.stderr)
        return 2
    if args.tune_on is not None:
        with open(args.tune_on, "r", encoding="utf-8") as fh:
            val = [line.rstrip("\n") for line in fh if line.strip()]
        lm = tune_stage_weights(lm, val)
        print(f"stage weights {lm.stage_weights}, validation perplexity {perplexity(lm, val):.4f}")
    save_lm(lm, args.out)
    print(f"saved order-{lm.order} model -> {args.out}")
    return 0


def _cmd_tune(args) -> int:
    validation, alphabet = _load_with_alphabet(args.validation)
    lm = load_lm(args.lm, alphabet) if args.lm is not None else None
    alpha_grid = [float(a) for a in args.alpha_grid.split(",")]
    beam_grid = [int(k) for k in args.beam_widths.split(",")]
    result = tune_decode(
        validation,
        args.validation,
        alphabet,
        lm,
        alpha_grid=alpha_grid,
        beam_width_grid=beam_grid,
        insertion_bonus=args.beta,
        jobs=args.jobs,
    )
    lines = ["alpha\tbeam_width\tcer"]
    lines += [f"{a!r}\t{k}\t{c!r}" for a, k, c in result.rows]
    text = "\n".join(lines) + "\n"
    if args.out is not None:
        Path(args.out).write_text(text, encoding="utf-8")
    print(f"best: alpha={result.lm_weight!r} K={result.beam_width} cer={result.corpus_cer!r}")
    return 0


def _cmd_run_iteration(args) -> int:
    if args.config is None:
        print("run-iteration needs --config", file=sys.stderr)
        return 2
    overrides = {}
    if args.seed_given:
        overrides["seed"] = args.seed
    if args.jobs_given:
        overrides["jobs"] = args.jobs
    config = load_pipeline_config(args.config, **overrides)
    report = run_iteration(config)
    print(f"iteration {report.iteration}: selected {report.summary['lines_selected']} lines")
    print(f"summary -> {report.summary_json}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atst",
        description="Self-training adaptation toolkit for CTC text recognition",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate frame matrices from texts")
    _common_flags(p)
    p.add_argument("--texts", required=True, help="one line of text per line")
    p.add_argument("--epsilon", type=float, default=0.2, help="confusion mass per frame")
    p.add_argument("--jitter", type=float, default=0.0, help="half-width of per-line epsilon range")
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--alphabet", default=None, help="reuse an existing alphabet file")
    p.add_argument("--frames-min", type=int, default=1)
    p.add_argument("--frames-max", type=int, default=3)
    p.add_argument("--gap-prob", type=float, default=0.5)
    p.add_argument("--blank-floor", type=float, default=0.05)
    p.add_argument("--origin", default="target_unannotated", choices=[o.value for o in Origin])
    p.add_argument("--prefix", default="line", help="line id prefix, keep unique across corpora")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("decode", help="prefix-search decode a manifest or one frames file")
    _common_flags(p)
    p.add_argument("--manifest", default=None)
    p.add_argument("--frames", default=None, help="single FPM1 file (needs --alphabet)")
    p.add_argument("--alphabet", default=None)
    p.add_argument("--alpha", type=float, default=0.0, help="LM weight")
    p.add_argument("--beta", type=float, default=1.0, help="insertion bonus")
    p.add_argument("--beam-width", type=int, default=16)
    p.add_argument("--lm", default=None, help="language model file")
    p.add_argument("--out", default=None, help="output manifest (manifest mode)")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("score", help="fill greedy hypotheses and confidences")
    _common_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--measure", default="posterior", choices=list(MEASURE_NAMES))
    p.add_argument("--beam-width", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("select", help="promote the most confident portion")
    _common_flags(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--portion", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("merge", help="concatenate manifests, absolutizing frame paths")
    _common_flags(p)
    p.add_argument("manifests", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--target-weight", type=int, default=1)
    p.add_argument("--iteration", type=int, default=0)
    p.set_defaults(func=_cmd_merge)

    p = sub.add_parser("eval-auc", help="AUC table over all measures plus oracle/random")
    _common_flags(p)
    p.add_argument("--manifest", required=True, help="manifest with reference transcripts")
    p.add_argument("--beam-width", type=int, default=16)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_eval_auc)

    p = sub.add_parser("estimate-cer", help="kNN CER estimates for confidence portions")
    _common_flags(p)
    p.add_argument("--manifest", required=True, help="scored manifest to estimate")
    p.add_argument("--validation", required=True, help="scored manifest with references")
    p.add_argument("--portions", default="0.01,0.03,0.1,0.32,0.56,1.0")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_estimate_cer)

    p = sub.add_parser("augment", help="mask random spans of a line image")
    _common_flags(p)
    p.add_argument("--image", required=True, help="input PGM (binary, 8-bit)")
    p.add_argument("--out", required=True)
    p.add_argument("--setting", default=None, choices=["half", "base", "double"])
    p.add_argument("--mask-p", type=float, default=5e-3)
    p.add_argument("--mask-wmin", type=int, default=5)
    p.add_argument("--mask-wmax", type=int, default=40)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("lm-train", help="train (and optionally tune) the n-gram model")
    _common_flags(p)
    p.add_argument("--alphabet", required=True)
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--related", default=None, help="related-domain text corpus")
    p.add_argument("--machine-annotated", default=None, help="machine-annotated text corpus")
    p.add_argument("--target", default=None, help="annotated target text corpus")
    p.add_argument("--tune-on", default=None, help="validation text for stage-weight tuning")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_lm_train)

    p = sub.add_parser("tune", help="grid-search decode parameters on a validation manifest")
    _common_flags(p)
    p.add_argument("--validation", required=True)
    p.add_argument("--lm", default=None)
    p.add_argument("--alpha-grid", default=",".join(repr(round(0.1 * i, 1)) for i in range(16)))
    p.add_argument("--beam-widths", default="1,2,4,8,16")
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("run-iteration", help="score, select, merge and report")
    _common_flags(p)
    p.set_defaults(func=_cmd_run_iteration)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    argv = sys.argv[1:] if argv is None else list(argv)
    args.seed_given = "--seed" in argv
    args.jobs_given = "--jobs" in argv
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
