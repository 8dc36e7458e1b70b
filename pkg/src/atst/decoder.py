"""Prefix search decoding over frame matrices, with optional LM fusion.

Beam state is a map from prefix text to two log masses: paths ending in blank
and paths ending in the prefix's last character.  Keeping them separate is
what allows a repeated character to be distinguished from a held one.  A
hypothesis is ranked by

    optical log mass + lm_weight * LM log score + insertion_bonus * length

and the LM score of a completed hypothesis includes its end-of-line term.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .alphabet import Alphabet
from .frames import FrameMatrix
from .lm import CharLM

NEG_INF = float("-inf")


class DecoderConfigError(ValueError):
    pass


def _logaddexp(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


@dataclass(frozen=True)
class DecodeParams:
    """Search knobs: LM weight (alpha), per-character insertion bonus (beta),
    beam width (number of prefixes kept per frame)."""

    lm_weight: float = 0.0
    insertion_bonus: float = 1.0
    beam_width: int = 16

    def __post_init__(self):
        if self.lm_weight < 0:
            raise DecoderConfigError(f"lm_weight must be >= 0, got {self.lm_weight}")
        if self.beam_width < 1:
            raise DecoderConfigError(f"beam_width must be >= 1, got {self.beam_width}")


@dataclass(frozen=True)
class Hypothesis:
    """A decoded candidate with its score components."""

    text: str
    log_p_blank: float
    log_p_non_blank: float
    optical_log_score: float
    lm_log_score: float

    def __post_init__(self):
        mass = math.exp(self.optical_log_score)
        if not mass <= 1.0 + 1e-6:
            raise ValueError(f"optical mass {mass} exceeds 1")
        if self.optical_log_score == NEG_INF:
            raise ValueError("hypothesis carries no probability mass")

    @property
    def length(self) -> int:
        return len(self.text)


def total_score(hyp: Hypothesis, params: DecodeParams) -> float:
    return (
        hyp.optical_log_score
        + params.lm_weight * hyp.lm_log_score
        + params.insertion_bonus * hyp.length
    )


def prefix_search_decode(
    matrix: FrameMatrix,
    alphabet: Alphabet,
    params: DecodeParams = DecodeParams(),
    lm: CharLM | None = None,
) -> list[Hypothesis]:
    """Decode one line, returning up to beam_width hypotheses, best first.

    Ordering is by total score, ties by lexicographically smaller text.  When
    lm_weight is zero the LM is never consulted, so scores are bit-identical
    with and without one.
    """
    use_lm = params.lm_weight > 0.0
    if use_lm and lm is None:
        raise DecoderConfigError("lm_weight > 0 requires a language model")

    lp = matrix.log_probs.astype(float).tolist()
    blank = alphabet.blank_index
    others = [(i, alphabet.symbols[i]) for i in alphabet.non_blank_indices]
    alpha = params.lm_weight
    beta = params.insertion_bonus

    # prefix -> [log mass ending in blank, log mass ending in last char, lm log score]
    beams: dict[str, list[float]] = {"": [0.0, NEG_INF, 0.0]}

    for row in lp:
        nxt: dict[str, list[float]] = {}

        def cell(text: str, parent_lm: float, last_step: str) -> list[float]:
            entry = nxt.get(text)
            if entry is None:
                if use_lm and text:
                    lm_score = parent_lm + lm.log_prob(text[:-1], last_step)
                else:
                    lm_score = parent_lm if text else 0.0
                entry = [NEG_INF, NEG_INF, lm_score]
                nxt[text] = entry
            return entry

        for text, (p_b, p_nb, lm_score) in beams.items():
            total = _logaddexp(p_b, p_nb)
            # stay on blank, or re-enter it: prefix unchanged
            entry = nxt.get(text)
            if entry is None:
                entry = [NEG_INF, NEG_INF, lm_score]
                nxt[text] = entry
            entry[0] = _logaddexp(entry[0], total + row[blank])
            if text:
                # hold the final character: prefix unchanged, non-blank mass
                last_idx = alphabet.index(text[-1])
                entry[1] = _logaddexp(entry[1], p_nb + row[last_idx])
            for idx, sym in others:
                ext = text + sym
                if text and sym == text[-1]:
                    # a repeat needs a blank in between: only blank-ending
                    # mass may extend
                    mass = p_b + row[idx]
                else:
                    mass = total + row[idx]
                dest = cell(ext, lm_score, sym)
                dest[1] = _logaddexp(dest[1], mass)

        if len(nxt) > params.beam_width:
            scored = sorted(
                nxt.items(),
                key=lambda kv: (
                    -(_logaddexp(kv[1][0], kv[1][1]) + alpha * kv[1][2] + beta * len(kv[0])),
                    kv[0],
                ),
            )
            nxt = dict(scored[: params.beam_width])
        beams = nxt

    results = []
    for text, (p_b, p_nb, lm_score) in beams.items():
        optical = _logaddexp(p_b, p_nb)
        if optical == NEG_INF:
            continue
        if use_lm:
            lm_score = lm_score + lm.finalize_log_prob(text)
        results.append(
            Hypothesis(
                text=text,
                log_p_blank=p_b,
                log_p_non_blank=p_nb,
                optical_log_score=optical,
                lm_log_score=lm_score if use_lm else 0.0,
            )
        )
    results.sort(key=lambda h: (-total_score(h, params), h.text))
    return results
