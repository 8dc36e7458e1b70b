"""
Ranking transcriptions by confidence
====================================

Builds a 200-line noisy corpus, scores every line with the six confidence
measures, and prints the AUC leaderboard: lower area under the error-vs-
coverage curve means the measure sorts good transcriptions to the front.
"""

import tempfile
from pathlib import Path

from atst import Alphabet
from atst.manifest import Origin
from atst.pipeline import report_auc_table
from atst.simulate import MarkovTextSource, SimParams, generate_texts, simulate_corpus

workdir = Path(tempfile.mkdtemp(prefix="confidence_demo_"))
alphabet = Alphabet(symbols=("-", "a", "b", "c", "d", "e", "f"), blank_index=0)

# a Markov text source plus per-line noise and sharpness jitter: some lines
# come out crisp, others smeared, the way a real scan batch behaves
source = MarkovTextSource.random("abcdef", seed=5, concentration=0.8, length_range=(10, 14))
params = SimParams(
    confusion=0.2,
    per_line_noise_jitter=(0.20, 0.60),
    confusion_concentration=0.3,
    per_line_sharpness_jitter=(0.35, 2.8),
)
manifest = simulate_corpus(
    generate_texts(source, 200, seed=1),
    alphabet,
    params,
    2,
    workdir,
    origin=Origin.TARGET_ANNOTATED,
)
print(f"simulated {len(manifest)} lines under {workdir}")

# the AUC table appends two anchors: the oracle ordering (sorted by true
# error) and a random shuffle; useful measures land between them
rows, _, _ = report_auc_table(manifest, workdir / "manifest.jsonl", alphabet, seed=0)
print()
print("measure            AUC (lower is better)")
for label, value in sorted(rows, key=lambda row: row[1]):
    print(f"{label:18s} {value:6.3f}")
