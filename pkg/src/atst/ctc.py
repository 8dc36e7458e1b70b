"""CTC primitives: marginal transcript probability, greedy decoding, alignment.

All three work on the blank-expanded label sequence: a transcript of L
characters becomes 2L+1 states (blank, c1, blank, c2, ..., cL, blank).  A
frame-to-state path is monotone; from state u a frame may stay on u, advance
to u+1, or skip to u+2 when u+2 is a label state different from the label at
u (skipping a blank between distinct characters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .alphabet import Alphabet
from .frames import FrameMatrix

NEG_INF = float("-inf")


class InfeasibleTranscriptError(ValueError):
    """Transcript cannot be emitted in the available number of frames."""


def _expand(seq: list[int], blank: int) -> np.ndarray:
    states = np.full(2 * len(seq) + 1, blank, dtype=np.int64)
    states[1::2] = seq
    return states


def _skip_allowed(states: np.ndarray) -> np.ndarray:
    """Mask over states: may a path arrive here from u-2?"""
    allowed = np.zeros(len(states), dtype=bool)
    if len(states) > 3:
        # only label states, and only when the label two back differs
        allowed[3::2] = states[3::2] != states[1:-2:2]
    return allowed


def ctc_forward_log_prob(matrix: FrameMatrix, transcript: str, alphabet: Alphabet) -> float:
    """Natural log of the total probability mass of all paths emitting the transcript.

    Returns -inf when no monotone path exists (transcript longer than the
    frames allow).  The empty transcript is the all-blank path's mass.
    """
    seq = alphabet.encode(transcript)
    lp = matrix.log_probs.astype(np.float64)
    T = matrix.num_frames
    states = _expand(seq, alphabet.blank_index)
    S = len(states)
    skip_ok = _skip_allowed(states)

    alpha = np.full(S, NEG_INF)
    alpha[0] = lp[0, states[0]]
    if S > 1:
        alpha[1] = lp[0, states[1]]
    for t in range(1, T):
        stay = alpha
        step = np.full(S, NEG_INF)
        step[1:] = alpha[:-1]
        skip = np.full(S, NEG_INF)
        if S > 2:
            skip[2:] = np.where(skip_ok[2:], alpha[:-2], NEG_INF)
        alpha = np.logaddexp(np.logaddexp(stay, step), skip) + lp[t, states]
    tail = alpha[-1] if S == 1 else np.logaddexp(alpha[-1], alpha[-2])
    return float(tail)


def greedy_decode(matrix: FrameMatrix, alphabet: Alphabet) -> str:
    """Best symbol per frame, merge repeats, drop blanks.

    Ties within a frame go to the lowest symbol index (numpy argmax order).
    """
    idx = np.argmax(matrix.log_probs, axis=1)
    keep = np.empty(len(idx), dtype=bool)
    keep[0] = True
    keep[1:] = idx[1:] != idx[:-1]
    merged = idx[keep]
    return "".join(alphabet.symbols[i] for i in merged if i != alphabet.blank_index)


@dataclass(frozen=True)
class Alignment:
    """Forced alignment of a transcript onto frames.

    ``char_frames[i]`` is the half-open frame range [start, stop) during which
    character i of the transcript is emitted; ranges are non-empty, ordered
    and disjoint.  ``path_log_prob`` is the probability of the single best
    path, so it is always <= the forward (marginal) log probability.
    """

    char_frames: tuple[tuple[int, int], ...]
    path_log_prob: float

    def __post_init__(self):
        prev_stop = 0
        for start, stop in self.char_frames:
            if not (prev_stop <= start < stop):
                raise ValueError(f"bad alignment ranges {self.char_frames}")
            prev_stop = stop


def viterbi_align(matrix: FrameMatrix, transcript: str, alphabet: Alphabet) -> Alignment:
    """Most-probable path for the transcript, with deterministic tie handling.

    On score ties every transition is taken as late as possible: states are
    held until a move is forced, the final label state is preferred over the
    trailing blank, and backtracking prefers the farthest reachable
    predecessor.  Raises InfeasibleTranscriptError when the transcript does
    not fit.
    """
    seq = alphabet.encode(transcript)
    lp = matrix.log_probs.astype(np.float64)
    T = matrix.num_frames
    states = _expand(seq, alphabet.blank_index)
    S = len(states)
    skip_ok = _skip_allowed(states)

    score = np.full(S, NEG_INF)
    score[0] = lp[0, states[0]]
    if S > 1:
        score[1] = lp[0, states[1]]
    back = np.zeros((T, S), dtype=np.int8)
    for t in range(1, T):
        stay = score
        step = np.full(S, NEG_INF)
        step[1:] = score[:-1]
        skip = np.full(S, NEG_INF)
        if S > 2:
            skip[2:] = np.where(skip_ok[2:], score[:-2], NEG_INF)
        choices = np.stack([skip, step, stay])
        # first maximum wins: prefer the farthest predecessor on ties, which
        # defers every transition to the latest tying frame
        move = np.argmax(choices, axis=0)
        score = choices[move, np.arange(S)] + lp[t, states]
        back[t] = 2 - move

    if S == 1:
        final = 0
        best = score[0]
    else:
        final = S - 2 if score[S - 2] >= score[S - 1] else S - 1
        best = score[final]
    if best == NEG_INF:
        raise InfeasibleTranscriptError(
            f"transcript of {len(seq)} characters does not fit in {T} frames"
        )

    path = np.empty(T, dtype=np.int64)
    u = final
    for t in range(T - 1, -1, -1):
        path[t] = u
        if t > 0:
            u -= back[t, u]

    ranges: list[tuple[int, int]] = []
    for t, u in enumerate(path):
        if u % 2 == 1:  # label state
            char_pos = (u - 1) // 2
            if len(ranges) == char_pos:
                ranges.append((t, t + 1))
            else:
                start, _ = ranges[char_pos]
                ranges[char_pos] = (start, t + 1)
    return Alignment(char_frames=tuple(ranges), path_log_prob=float(best))
