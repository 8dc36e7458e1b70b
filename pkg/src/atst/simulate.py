"""Synthetic optical-model frontend: text in, frame matrices out.

Stands in for a real recognizer so the whole self-training loop can run at
desk scale.  Each character emits a few frames whose distribution favors it;
a confusion mass is scattered over the other symbols, and a per-line jitter
of that mass produces the easy-to-hard spread that confidence-ranked
selection needs.  Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alphabet import Alphabet, write_alphabet
from .frames import FrameMatrix, write_frame_matrix
from .manifest import CorpusManifest, LineRecord, Origin, write_manifest
from .seeding import derive_seed

# keeps log-probs finite at zero confusion; invisible at every tolerance in use
PROB_FLOOR = 1e-30


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class SimParams:
    """Noise and pacing knobs for the synthetic optical model.

    ``confusion`` is the probability mass moved off the true character of a
    frame (spread over the other non-blank symbols).  When
    ``per_line_noise_jitter`` is set, each line draws its own effective
    confusion from that range instead, which grades the corpus from easy to
    hard lines.  ``confusion_concentration`` shapes the per-frame split of
    the confusion mass: 1 is a flat random split, below 1 most of the mass
    lands on a single random look-alike, large values approach an even
    spread.

    ``per_line_sharpness_jitter`` draws a per-line temperature and raises
    every frame distribution to that power (renormalized).  Sharpening
    never changes a decode, only how confident the line looks, so it
    reproduces the per-line miscalibration of real optical models.
    """

    confusion: float = 0.2
    frames_per_char: tuple[int, int] = (1, 3)
    blank_gap_prob: float = 0.5
    blank_floor: float = 0.05
    per_line_noise_jitter: tuple[float, float] | None = None
    confusion_concentration: float = 1.0
    per_line_sharpness_jitter: tuple[float, float] | None = None

    def __post_init__(self):
        if not 0.0 <= self.confusion < 1.0:
            raise SimulationError(f"confusion must be in [0, 1), got {self.confusion}")
        if not self.confusion_concentration > 0.0:
            raise SimulationError(
                f"confusion_concentration must be > 0, got {self.confusion_concentration}"
            )
        lo, hi = self.frames_per_char
        if lo < 1 or lo > hi:
            raise SimulationError(f"frames_per_char must satisfy 1 <= lo <= hi, got {self.frames_per_char}")
        if not 0.0 <= self.blank_gap_prob <= 1.0:
            raise SimulationError(f"blank_gap_prob must be in [0, 1], got {self.blank_gap_prob}")
        if not 0.0 <= self.blank_floor < 1.0:
            raise SimulationError(f"blank_floor must be in [0, 1), got {self.blank_floor}")
        if self.confusion + self.blank_floor >= 1.0:
            raise SimulationError("confusion + blank_floor must stay below 1")
        if self.per_line_noise_jitter is not None:
            jlo, jhi = self.per_line_noise_jitter
            if not 0.0 <= jlo <= jhi or jhi >= 1.0 - self.blank_floor:
                raise SimulationError(
                    f"jitter range must satisfy 0 <= lo <= hi < 1 - blank_floor, got {self.per_line_noise_jitter}"
                )
        if self.per_line_sharpness_jitter is not None:
            slo, shi = self.per_line_sharpness_jitter
            if not 0.0 < slo <= shi:
                raise SimulationError(
                    f"sharpness range must satisfy 0 < lo <= hi, got {self.per_line_sharpness_jitter}"
                )


def _char_row(size: int, true_idx: int, blank_idx: int, others, shares, eps: float, floor: float) -> np.ndarray:
    row = np.zeros(size)
    if others:
        row[others] = eps * shares
        row[true_idx] = 1.0 - eps - floor
    else:
        row[true_idx] = 1.0 - floor
    row[blank_idx] += floor
    return row


def _gap_row(rng, size: int, blank_idx: int, eps: float, conc: float) -> np.ndarray:
    row = np.zeros(size)
    others = [i for i in range(size) if i != blank_idx]
    row[others] = eps * rng.dirichlet(np.full(len(others), conc))
    row[blank_idx] = 1.0 - eps
    return row


def simulate_line(text: str, alphabet: Alphabet, params: SimParams, seed: int, line_id: str = "") -> FrameMatrix:
    """Frames for one line.  Empty text produces a single blank frame.

    Repeated characters always get a separating blank frame so the greedy
    round-trip stays exact at zero confusion.  The confusion split is drawn
    once per character occurrence and shared by all of its frames, the way a
    degraded glyph resembles the same look-alike for its whole width.
    """
    seq = alphabet.encode(text)
    rng = np.random.default_rng(seed)
    if params.per_line_noise_jitter is not None:
        jlo, jhi = params.per_line_noise_jitter
        eps = float(rng.uniform(jlo, jhi))
    else:
        eps = params.confusion
    sharp = 1.0
    if params.per_line_sharpness_jitter is not None:
        slo, shi = params.per_line_sharpness_jitter
        sharp = float(rng.uniform(slo, shi))
    lo, hi = params.frames_per_char
    blank = alphabet.blank_index
    size = alphabet.size
    rows = []
    conc = params.confusion_concentration
    for pos, idx in enumerate(seq):
        others = [i for i in range(size) if i not in (idx, blank)]
        shares = rng.dirichlet(np.full(len(others), conc)) if others else None
        for _ in range(int(rng.integers(lo, hi + 1))):
            rows.append(_char_row(size, idx, blank, others, shares, eps, params.blank_floor))
        if pos + 1 < len(seq):
            forced = seq[pos + 1] == idx
            if forced or rng.random() < params.blank_gap_prob:
                rows.append(_gap_row(rng, size, blank, eps, conc))
    if not rows:
        rows.append(_gap_row(rng, size, blank, eps, conc))
    probs = np.asarray(rows)
    if sharp != 1.0:
        probs = probs**sharp
    probs += PROB_FLOOR
    probs /= probs.sum(axis=1, keepdims=True)
    return FrameMatrix(log_probs=np.log(probs).astype(np.float32), line_id=line_id)


def simulate_corpus(
    texts,
    alphabet: Alphabet,
    params: SimParams,
    seed: int,
    out_dir,
    origin: Origin = Origin.TARGET_UNANNOTATED,
    keep_transcripts: bool = True,
    iteration: int = 0,
    id_prefix: str = "line",
) -> CorpusManifest:
    """Write frame files, an alphabet file and a manifest under out_dir.

    Per-line seeds derive from (seed, index); the manifest keeps the true
    transcripts (unless asked not to) so oracle evaluation stays possible.
    Returns the manifest, which is also written to out_dir/manifest.jsonl.
    Give each corpus its own id_prefix when they will be merged later.
    """
    out_dir = Path(out_dir)
    frames_dir = out_dir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    write_alphabet(alphabet, out_dir / "alphabet.json")
    records = []
    for index, text in enumerate(texts):
        line_id = f"{id_prefix}_{index:06d}"
        matrix = simulate_line(text, alphabet, params, derive_seed(seed, index), line_id)
        rel = f"frames/{line_id}.fpm"
        write_frame_matrix(matrix, out_dir / rel)
        records.append(
            LineRecord(
                line_id=line_id,
                frames_path=rel,
                origin=origin,
                transcript=text if keep_transcripts else None,
            )
        )
    manifest = CorpusManifest(
        records=tuple(records), alphabet_ref="alphabet.json", iteration=iteration
    )
    write_manifest(manifest, out_dir / "manifest.jsonl")
    return manifest


@dataclass(frozen=True)
class MarkovTextSource:
    """First-order character chain for generating language-like lines.

    Peaked transition rows give the text enough structure for an n-gram
    model to exploit.
    """

    symbols: tuple[str, ...]
    initial: tuple[float, ...]
    transitions: tuple[tuple[float, ...], ...]
    length_range: tuple[int, int] = (8, 20)

    def __post_init__(self):
        n = len(self.symbols)
        if n < 2:
            raise SimulationError("need at least two symbols")
        if len(set(self.symbols)) != n:
            raise SimulationError("duplicate symbols")
        if len(self.initial) != n or len(self.transitions) != n:
            raise SimulationError("initial/transitions must match the symbol count")
        for dist in (self.initial, *self.transitions):
            arr = np.asarray(dist)
            if len(arr) != n or (arr < 0).any() or abs(arr.sum() - 1.0) > 1e-9:
                raise SimulationError("distributions must be non-negative and sum to 1")
        lo, hi = self.length_range
        if lo < 1 or lo > hi:
            raise SimulationError(f"bad length_range {self.length_range}")

    @classmethod
    def random(cls, symbols, seed: int, concentration: float = 0.15, length_range=(8, 20)) -> "MarkovTextSource":
        """Random peaked source; low concentration makes rows predictable."""
        symbols = tuple(symbols)
        rng = np.random.default_rng(seed)
        initial = rng.dirichlet(np.full(len(symbols), 1.0))
        transitions = rng.dirichlet(np.full(len(symbols), concentration), size=len(symbols))
        return cls(
            symbols=symbols,
            initial=tuple(float(x) for x in initial),
            transitions=tuple(tuple(float(x) for x in row) for row in transitions),
            length_range=tuple(length_range),
        )

    def sample_line(self, rng) -> str:
        lo, hi = self.length_range
        n = int(rng.integers(lo, hi + 1))
        probs = np.asarray(self.initial)
        out = []
        for _ in range(n):
            idx = int(rng.choice(len(self.symbols), p=probs / probs.sum()))
            out.append(self.symbols[idx])
            probs = np.asarray(self.transitions[idx])
        return "".join(out)


def generate_texts(source, count: int, seed: int) -> list[str]:
    """Lines from a Markov source, or lines of words drawn from a word list."""
    if count < 0:
        raise SimulationError(f"count must be >= 0, got {count}")
    rng = np.random.default_rng(seed)
    if isinstance(source, MarkovTextSource):
        return [source.sample_line(rng) for _ in range(count)]
    words = list(source)
    if not words or any(not isinstance(w, str) or not w for w in words):
        raise SimulationError("word list must be non-empty strings")
    lines = []
    for _ in range(count):
        n = int(rng.integers(3, 9))
        lines.append(" ".join(words[int(rng.integers(0, len(words)))] for _ in range(n)))
    return lines
