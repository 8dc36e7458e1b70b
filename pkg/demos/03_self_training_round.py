"""
One self-training round, end to end
===================================

The full loop on synthetic data: score an unannotated corpus, keep the most
confident machine annotations, merge them with the annotated material, and
read the quality report.  Also tunes the language-model fusion weight on the
validation split first, the way a real adaptation run would.
"""

import json
import tempfile
from pathlib import Path

from atst import Alphabet
from atst.lm import NGramLM, train_stage
from atst.manifest import Origin
from atst.pipeline import PipelineConfig, run_iteration, tune_decode
from atst.simulate import MarkovTextSource, SimParams, generate_texts, simulate_corpus

workdir = Path(tempfile.mkdtemp(prefix="self_training_demo_"))
alphabet = Alphabet(symbols=("-", "a", "b", "c", "d", "e", "f"), blank_index=0)
source = MarkovTextSource.random("abcdef", seed=5, concentration=0.8, length_range=(10, 14))
noisy = SimParams(
    confusion=0.2,
    per_line_noise_jitter=(0.20, 0.60),
    confusion_concentration=0.3,
    per_line_sharpness_jitter=(0.35, 2.8),
)

# three corpora: a small annotated target set, a validation split, and the
# large unannotated pile the loop is supposed to put to work
target = simulate_corpus(
    generate_texts(source, 40, seed=11), alphabet, noisy, 12,
    workdir / "target", origin=Origin.TARGET_ANNOTATED, id_prefix="tgt",
)
validation = simulate_corpus(
    generate_texts(source, 80, seed=21), alphabet, noisy, 22,
    workdir / "validation", origin=Origin.TARGET_ANNOTATED, id_prefix="val",
)
unannotated = simulate_corpus(
    generate_texts(source, 400, seed=31), alphabet, noisy, 32,
    workdir / "unannotated", origin=Origin.TARGET_UNANNOTATED, id_prefix="un",
)
print(f"corpora: {len(target)} annotated, {len(validation)} validation, "
      f"{len(unannotated)} unannotated")

# a character n-gram model from related-domain text
lm = train_stage(
    NGramLM(alphabet=alphabet, order=6), "related", generate_texts(source, 2000, seed=41)
)

# pick the fusion weight and beam width on the validation split
tuned = tune_decode(
    validation, workdir / "validation" / "manifest.jsonl", alphabet, lm,
    alpha_grid=(0.0, 0.3, 0.5, 0.8), beam_width_grid=(1, 4, 16), jobs=4,
)
print(f"tuned decode: alpha={tuned.lm_weight} K={tuned.beam_width} "
      f"validation CER {tuned.corpus_cer:.4f}")

# one pipeline round: score, select the confident tenth, merge, report
config = PipelineConfig(
    unannotated_manifest=workdir / "unannotated" / "manifest.jsonl",
    target_annotated_manifest=workdir / "target" / "manifest.jsonl",
    validation_manifest=workdir / "validation" / "manifest.jsonl",
    out_dir=workdir / "round1",
    portion=0.1,
    target_weight=3,
    seed=0,
    jobs=4,
)
report = run_iteration(config)
summary = json.loads(Path(report.summary_json).read_text(encoding="utf-8"))

print(f"\nselected {summary['lines_selected']} of {summary['lines_unannotated']} "
      f"unannotated lines, merged training set holds {summary['lines_merged']} lines")
print(f"selected lines' true CER   {summary['selected_true_cer']:.4f}")
print(f"whole unannotated pile CER {summary['unannotated_corpus_cer']:.4f}")
print(f"\nreport files under {workdir / 'round1' / 'report'}:")
for name, auc_value in summary["auc"].items():
    print(f"  AUC {name:16s} {auc_value:.3f}")
