"""Line-level confidence measures for greedy CTC output.

Each measure maps a frame matrix (plus, for some, decoding byproducts) to a
score in [0, 1] meant to predict how wrong the greedy hypothesis is.  The
inliers measure is corpus-relative: it needs a Gaussian fitted over pooled
per-frame maxima first, so corpus scoring is a two-pass affair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .alphabet import Alphabet
from .ctc import ctc_forward_log_prob, greedy_decode, viterbi_align
from .decoder import DecodeParams, prefix_search_decode
from .frames import FrameMatrix

MEASURE_NAMES = (
    "ctc-loss",
    "posterior",
    "probs-mean",
    "char-probs-mean",
    "inliers-rate",
    "worst-best",
)

SIGMA_DEGENERATE = 1e-12


class MeasureConfigError(ValueError):
    pass


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


def _frame_maxima(matrix: FrameMatrix) -> np.ndarray:
    return np.exp(matrix.log_probs.max(axis=1).astype(np.float64))


def conf_ctc_loss(matrix: FrameMatrix, alphabet: Alphabet) -> float:
    """Per-character geometric mean of the greedy hypothesis's marginal mass."""
    hyp = greedy_decode(matrix, alphabet)
    log_p = ctc_forward_log_prob(matrix, hyp, alphabet)
    return _clamp(math.exp(log_p / max(1, len(hyp))))


def conf_posterior(matrix: FrameMatrix, alphabet: Alphabet, beam_width: int = 16) -> float:
    """Greedy hypothesis mass normalized over a pure-optical beam.

    Decodes with lm_weight = insertion_bonus = 0 and normalizes the optical
    scores over the returned hypotheses; a greedy hypothesis that did not
    survive the beam scores 0.
    """
    if beam_width < 1:
        raise MeasureConfigError(f"beam_width must be >= 1, got {beam_width}")
    hyp = greedy_decode(matrix, alphabet)
    params = DecodeParams(lm_weight=0.0, insertion_bonus=0.0, beam_width=beam_width)
    candidates = prefix_search_decode(matrix, alphabet, params)
    scores = np.array([c.optical_log_score for c in candidates])
    target = None
    for c in candidates:
        if c.text == hyp:
            target = c.optical_log_score
            break
    if target is None:
        return 0.0
    denom = float(np.logaddexp.reduce(scores))
    return _clamp(math.exp(target - denom))


def conf_probs_mean(matrix: FrameMatrix) -> float:
    """Mean over frames of the per-frame maximum probability."""
    return _clamp(float(_frame_maxima(matrix).mean()))


def conf_char_probs_mean(matrix: FrameMatrix, alphabet: Alphabet) -> float:
    """Mean per-frame maximum over frames whose best symbol is not blank."""
    idx = np.argmax(matrix.log_probs, axis=1)
    mask = idx != alphabet.blank_index
    if not mask.any():
        return 0.0
    return _clamp(float(_frame_maxima(matrix)[mask].mean()))


def fit_inliers_gaussian(matrices) -> tuple[float, float]:
    """Population mean and standard deviation of pooled per-frame maxima."""
    pooled = np.concatenate([_frame_maxima(m) for m in matrices])
    if pooled.size == 0:
        raise MeasureConfigError("cannot fit a Gaussian on an empty corpus")
    return float(pooled.mean()), float(pooled.std())


def conf_inliers_rate(matrix: FrameMatrix, mu: float, sigma: float) -> float:
    """Fraction of frames whose maximum lies within two sigma of the fit."""
    if sigma < SIGMA_DEGENERATE:
        return 1.0
    maxima = _frame_maxima(matrix)
    return _clamp(float((np.abs(maxima - mu) <= 2.0 * sigma).mean()))


def conf_worst_best(matrix: FrameMatrix, alphabet: Alphabet) -> float:
    """Weakest character of the greedy hypothesis under forced alignment.

    Every character gets the best per-frame maximum over its aligned frames;
    the score is the minimum across characters.  An empty hypothesis has no
    characters to defend and scores 0.
    """
    hyp = greedy_decode(matrix, alphabet)
    if not hyp:
        return 0.0
    alignment = viterbi_align(matrix, hyp, alphabet)
    maxima = _frame_maxima(matrix)
    return _clamp(min(float(maxima[start:stop].max()) for start, stop in alignment.char_frames))


@dataclass(frozen=True)
class ConfidenceMeasure:
    """A named measure plus the parameters it needs.

    ``kind`` is one of MEASURE_NAMES.  The posterior carries its beam width;
    the inliers rate carries the fitted (mu, sigma) and refuses to run
    without one.
    """

    kind: str
    beam_width: int = 16
    inliers_fit: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in MEASURE_NAMES:
            raise MeasureConfigError(
                f"unknown measure {self.kind!r}, expected one of {MEASURE_NAMES}"
            )
        if self.beam_width < 1:
            raise MeasureConfigError(f"beam_width must be >= 1, got {self.beam_width}")

    def score(self, matrix: FrameMatrix, alphabet: Alphabet) -> float:
        if self.kind == "ctc-loss":
            return conf_ctc_loss(matrix, alphabet)
        if self.kind == "posterior":
            return conf_posterior(matrix, alphabet, self.beam_width)
        if self.kind == "probs-mean":
            return conf_probs_mean(matrix)
        if self.kind == "char-probs-mean":
            return conf_char_probs_mean(matrix, alphabet)
        if self.kind == "inliers-rate":
            if self.inliers_fit is None:
                raise MeasureConfigError(
                    "inliers-rate needs a fitted (mu, sigma); run the fit pass first"
                )
            return conf_inliers_rate(matrix, *self.inliers_fit)
        return conf_worst_best(matrix, alphabet)

    def with_fit(self, mu: float, sigma: float) -> "ConfidenceMeasure":
        return ConfidenceMeasure(self.kind, self.beam_width, (mu, sigma))
