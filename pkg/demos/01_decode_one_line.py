"""
Decoding a single simulated text line
=====================================

Simulates frame probabilities for one line of text, then walks through the
three decoding views: greedy collapse, forced alignment, and prefix beam
search with ranked alternatives.
"""

import numpy as np

from atst import (
    Alphabet,
    DecodeParams,
    ctc_forward_log_prob,
    greedy_decode,
    prefix_search_decode,
    viterbi_align,
)
from atst.simulate import SimParams, simulate_line

# an alphabet is the blank symbol plus the characters the recognizer can emit
alphabet = Alphabet(symbols=("-", "a", "b", "c", "d", "e"), blank_index=0)

text = "decade"
params = SimParams(confusion=0.25, per_line_noise_jitter=None)
matrix = simulate_line(text, alphabet, params, seed=7, line_id="demo")
print(f"true text      {text!r}")
print(f"frame matrix   {matrix.log_probs.shape[0]} frames x {matrix.log_probs.shape[1]} symbols")

# greedy: argmax per frame, merge repeats, drop blanks
greedy = greedy_decode(matrix, alphabet)
print(f"greedy decode  {greedy!r}")

# the forward probability marginalizes over every path that collapses to the
# transcript; comparing true text and greedy output shows how much optical
# mass each explanation holds
for candidate in {text, greedy}:
    log_p = ctc_forward_log_prob(matrix, candidate, alphabet)
    print(f"  log P({candidate!r}) = {log_p:.4f}")

# forced alignment pins each character to its frame range
alignment = viterbi_align(matrix, text, alphabet)
print("alignment      ", end="")
print(", ".join(f"{ch}:{lo}-{hi}" for ch, (lo, hi) in zip(text, alignment.char_frames)))

# prefix beam search keeps several explanations alive and ranks them
hypotheses = prefix_search_decode(
    matrix, alphabet, DecodeParams(insertion_bonus=0.0, beam_width=8)
)
print("beam ranking")
for hyp in hypotheses[:5]:
    print(f"  {hyp.optical_log_score:9.4f}  {hyp.text!r}")
