"""Character n-gram language models with interpolated Witten-Bell smoothing.

Models score the non-blank symbols of an alphabet plus an end-of-line event.
Counts live in three stage tables (related corpus, machine-annotated lines,
manually annotated target lines) that are mixed with stage weights, so a model
can be retrained stage by stage as self-training progresses.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace

import numpy as np

from .alphabet import Alphabet

BOL = ""
EOL = ""
STAGES = ("related", "machine_annotated", "target")
DEFAULT_ORDER = 6

_LM_MAGIC = b"ATLM"
_LM_VERSION = 1


class LMError(ValueError):
    pass


class LMFormatError(LMError):
    pass


class LMAlphabetMismatchError(LMError):
    pass


class CharLM(ABC):
    """Conditional distribution over next characters given a text prefix.

    The support is the alphabet's non-blank symbols plus EOL; probabilities
    over that support sum to one.
    """

    alphabet: Alphabet

    @abstractmethod
    def log_prob(self, history: str, next_symbol: str) -> float:
        """log P(next_symbol | history); next_symbol may be EOL."""

    def finalize_log_prob(self, history: str) -> float:
        """log P(line ends | history)."""
        return self.log_prob(history, EOL)

    def sequence_log_prob(self, line: str) -> float:
        """Sum of per-character conditionals; the EOL event is not included."""
        return sum(self.log_prob(line[:i], line[i]) for i in range(len(line)))


def _check_next_symbol(alphabet: Alphabet, symbol: str) -> None:
    if symbol == EOL:
        return
    if symbol not in alphabet or symbol == alphabet.blank:
        raise LMError(f"symbol {symbol!r} is not a scorable character")


@dataclass(frozen=True)
class UniformLM(CharLM):
    """Equal probability for every non-blank symbol and EOL."""

    alphabet: Alphabet

    def log_prob(self, history: str, next_symbol: str) -> float:
        _check_next_symbol(self.alphabet, next_symbol)
        return -math.log(len(self.alphabet.non_blank_indices) + 1)


def _count_corpus(lines, alphabet: Alphabet, order: int) -> dict:
    """Count (context, symbol) events for every context length 0..order-1.

    Lines are left-padded with BOL; each line additionally emits one EOL
    event.  Returns {context_tuple: {symbol: count}}.
    """
    counts: dict[tuple, dict[str, int]] = {}
    nb = set(alphabet.non_blank_symbols)
    for line in lines:
        for ch in line:
            if ch not in nb:
                raise LMError(f"corpus character {ch!r} not a non-blank alphabet symbol")
        padded = (BOL,) * (order - 1) + tuple(line)
        events = list(line) + [EOL]
        for i, sym in enumerate(events):
            for k in range(order):
                ctx = padded[i + order - 1 - k : i + order - 1]
                table = counts.setdefault(ctx, {})
                table[sym] = table.get(sym, 0) + 1
    return counts


@dataclass(frozen=True)
class NGramLM(CharLM):
    """Witten-Bell interpolated n-gram model over three count stages.

    Each stage is smoothed independently down to the uniform distribution;
    the final probability is the stage mixture with ``stage_weights`` (order:
    related, machine_annotated, target).  Instances are immutable; training
    returns a new model.
    """

    alphabet: Alphabet
    order: int = DEFAULT_ORDER
    stage_counts: tuple[dict, dict, dict] = None  # type: ignore[assignment]
    stage_weights: tuple[float, float, float] = (1.0, 0.0, 0.0)
    _totals: tuple = field(init=False, repr=False, compare=False)
    _cache: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 1:
            raise LMError(f"order must be >= 1, got {self.order}")
        for sentinel in (BOL, EOL):
            if sentinel in self.alphabet:
                raise LMError("alphabet collides with the BOL/EOL sentinels")
        if self.stage_counts is None:
            object.__setattr__(self, "stage_counts", ({}, {}, {}))
        if len(self.stage_counts) != len(STAGES):
            raise LMError("stage_counts must have one table per stage")
        w = tuple(float(x) for x in self.stage_weights)
        if len(w) != len(STAGES) or any(x < 0 for x in w):
            raise LMError(f"stage_weights must be three non-negative floats, got {w}")
        if abs(sum(w) - 1.0) > 1e-12:
            raise LMError(f"stage_weights must sum to 1, got {sum(w)}")
        object.__setattr__(self, "stage_weights", w)
        totals = tuple(
            {ctx: (sum(tab.values()), len(tab)) for ctx, tab in stage.items()}
            for stage in self.stage_counts
        )
        object.__setattr__(self, "_totals", totals)
        object.__setattr__(self, "_cache", {})

    @property
    def _uniform(self) -> float:
        return 1.0 / (len(self.alphabet.non_blank_indices) + 1)

    def _context(self, history: str) -> tuple:
        if self.order == 1:
            return ()
        padded = (BOL,) * (self.order - 1) + tuple(history)
        return padded[len(padded) - (self.order - 1) :]

    def _stage_prob(self, stage_idx: int, ctx: tuple, symbol: str) -> float:
        counts = self.stage_counts[stage_idx]
        totals = self._totals[stage_idx]
        p = self._uniform
        for k in range(self.order):
            sub = ctx[len(ctx) - k :] if k else ()
            table = counts.get(sub)
            if not table:
                continue
            n, types = totals[sub]
            lam = n / (n + types)
            p = lam * (table.get(symbol, 0) / n) + (1.0 - lam) * p
        return p

    def prob(self, history: str, next_symbol: str) -> float:
        _check_next_symbol(self.alphabet, next_symbol)
        ctx = self._context(history)
        key = (ctx, next_symbol)
        cached = self._cache.get(key)
        if cached is not None:
            return cached
        p = 0.0
        for i, w in enumerate(self.stage_weights):
            if w > 0.0:
                p += w * self._stage_prob(i, ctx, next_symbol)
        self._cache[key] = p
        return p

    def log_prob(self, history: str, next_symbol: str) -> float:
        return math.log(self.prob(history, next_symbol))

    def with_stage_weights(self, weights) -> "NGramLM":
        return replace(self, stage_weights=tuple(weights))


def train_stage(lm: NGramLM, stage: str, corpus_lines) -> NGramLM:
    """Return a model whose counts for ``stage`` are rebuilt from the corpus."""
    if stage not in STAGES:
        raise LMError(f"unknown stage {stage!r}, expected one of {STAGES}")
    counts = _count_corpus(corpus_lines, lm.alphabet, lm.order)
    tables = list(lm.stage_counts)
    tables[STAGES.index(stage)] = counts
    return replace(lm, stage_counts=tuple(tables))


def perplexity(lm: CharLM, lines) -> float:
    """Per-event perplexity over the lines; the EOL event counts."""
    nll = 0.0
    events = 0
    for line in lines:
        nll -= lm.sequence_log_prob(line) + lm.finalize_log_prob(line)
        events += len(line) + 1
    if events == 0:
        raise LMError("cannot compute perplexity on an empty corpus")
    return math.exp(nll / events)


def _weight_grid(steps: int = 10):
    seen = set()
    for i in range(steps + 1):
        for j in range(steps + 1):
            for k in range(steps + 1):
                s = i + j + k
                if s == 0:
                    continue
                w = (i / s, j / s, k / s)
                key = tuple(round(x, 12) for x in w)
                if key not in seen:
                    seen.add(key)
                    yield w


def tune_stage_weights(lm: NGramLM, validation_lines) -> NGramLM:
    """Grid-search stage weights (0.1 steps) minimizing validation perplexity.

    Near-ties (mean NLL equal to 9 decimals) are resolved toward the heavier
    target weight, then the heavier machine-annotated weight.
    """
    lines = list(validation_lines)
    if not lines:
        raise LMError("cannot tune on an empty validation corpus")
    # Per-event per-stage probabilities are weight-independent; collect once.
    stage_probs = []
    for line in lines:
        events = list(line) + [EOL]
        for i, sym in enumerate(events):
            ctx = lm._context(line[:i])
            stage_probs.append(
                [lm._stage_prob(s, ctx, sym) for s in range(len(STAGES))]
            )
    probs = np.asarray(stage_probs)

    best = None
    for w in _weight_grid():
        mix = probs @ np.asarray(w)
        mean_nll = float(-np.log(mix).mean())
        key = (round(mean_nll, 9), -w[2], -w[1])
        if best is None or key < best[0]:
            best = (key, w)
    return lm.with_stage_weights(best[1])


def save_lm(lm: NGramLM, path) -> None:
    payload = {
        "order": lm.order,
        "alphabet_hash": lm.alphabet.content_hash(),
        "stage_weights": list(lm.stage_weights),
        "counts": [
            {"".join(ctx): dict(table) for ctx, table in stage.items()}
            for stage in lm.stage_counts
        ],
    }
    blob = zlib.compress(json.dumps(payload, ensure_ascii=False).encode("utf-8"))
    with open(path, "wb") as fh:
        fh.write(_LM_MAGIC)
        fh.write(struct.pack("<H", _LM_VERSION))
        fh.write(blob)


def load_lm(path, alphabet: Alphabet) -> NGramLM:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 6 or data[:4] != _LM_MAGIC:
        raise LMFormatError(f"{path}: not a language-model file (bad magic)")
    (version,) = struct.unpack("<H", data[4:6])
    if version != _LM_VERSION:
        raise LMFormatError(f"{path}: unsupported version {version}")
    try:
        payload = json.loads(zlib.decompress(data[6:]).decode("utf-8"))
    except (zlib.error, json.JSONDecodeError) as exc:
        raise LMFormatError(f"{path}: corrupt payload ({exc})") from None
    if payload.get("alphabet_hash") != alphabet.content_hash():
        raise LMAlphabetMismatchError(
            f"{path}: model was trained on a different alphabet"
        )
    stage_counts = tuple(
        {tuple(ctx): {s: int(n) for s, n in table.items()} for ctx, table in stage.items()}
        for stage in payload["counts"]
    )
    return NGramLM(
        alphabet=alphabet,
        order=int(payload["order"]),
        stage_counts=stage_counts,
        stage_weights=tuple(payload["stage_weights"]),
    )
