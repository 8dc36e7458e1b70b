"""Boundary layer for callers that produce frame matrices in-process.

A neural toolkit that already holds a T x |V| log-probability array should
not have to write FPM1 files or learn the library's internal types.  This
module accepts raw buffers and opaque handles, validates everything up
front, and delegates to the native implementation.  Three rules hold at the
boundary:

- validation is eager: every argument is checked before any work starts;
- failures surface as BindingError; no partial results cross the boundary;
- nothing is cached at module level, so concurrent callers never interact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from atst import Alphabet, FrameMatrix
from atst.confidence import MEASURE_NAMES, ConfidenceMeasure
from atst.decoder import DecodeParams, prefix_search_decode, total_score
from atst.evaluation import cer
from atst.lm import STAGES, NGramLM, load_lm, train_stage


class BindingError(ValueError):
    """Any invalid input or delegated failure at the boundary."""


@dataclass(frozen=True)
class AlphabetHandle:
    """Opaque validated alphabet, created once and reused across calls."""

    alphabet: Alphabet


@dataclass(frozen=True)
class LmHandle:
    """Opaque trained language model bound to its alphabet."""

    lm: NGramLM


@dataclass(frozen=True)
class BoundFrameMatrix:
    """A validated frame matrix tied to the alphabet it was checked against."""

    matrix: FrameMatrix
    alphabet: Alphabet


def make_alphabet(symbols, blank_index: int = 0) -> AlphabetHandle:
    """Build an alphabet handle from a sequence of single-character symbols."""
    try:
        symbols = tuple(symbols)
    except TypeError as exc:
        raise BindingError(f"symbols must be a sequence of characters: {exc}") from exc
    if not isinstance(blank_index, int) or isinstance(blank_index, bool):
        raise BindingError(f"blank_index must be an integer, got {blank_index!r}")
    try:
        return AlphabetHandle(Alphabet(symbols=symbols, blank_index=blank_index))
    except ValueError as exc:
        raise BindingError(f"invalid alphabet: {exc}") from exc


def _resolve_alphabet(alphabet) -> Alphabet:
    if isinstance(alphabet, AlphabetHandle):
        return alphabet.alphabet
    if isinstance(alphabet, Alphabet):
        return alphabet
    raise BindingError(
        f"alphabet must be an AlphabetHandle (see make_alphabet), got {type(alphabet).__name__}"
    )


def bind_matrix(buffer, alphabet) -> BoundFrameMatrix:
    """Validate a raw log-probability buffer against an alphabet.

    The buffer must be 2-d, numeric, one column per alphabet symbol (blank
    included), with finite non-positive entries whose rows exponentiate to
    distributions.  The data is snapshotted, so later caller-side writes to
    the buffer cannot corrupt results.
    """
    resolved = _resolve_alphabet(alphabet)
    try:
        arr = np.asarray(buffer, dtype=np.float32)
    except (TypeError, ValueError) as exc:
        raise BindingError(f"buffer is not numeric: {exc}") from exc
    if arr.ndim != 2:
        raise BindingError(f"buffer must be 2-d (frames x symbols), got shape {arr.shape}")
    if arr.shape[1] != len(resolved.symbols):
        raise BindingError(
            f"buffer has {arr.shape[1]} columns but the alphabet has "
            f"{len(resolved.symbols)} symbols"
        )
    try:
        matrix = FrameMatrix(log_probs=arr)
    except ValueError as exc:
        raise BindingError(f"invalid frame matrix: {exc}") from exc
    return BoundFrameMatrix(matrix=matrix, alphabet=resolved)


def _resolve_lm(lm_handle) -> NGramLM | None:
    if lm_handle is None:
        return None
    if isinstance(lm_handle, LmHandle):
        return lm_handle.lm
    raise BindingError(
        f"lm_handle must be an LmHandle or None, got {type(lm_handle).__name__}"
    )


def _decode_params(alpha, beta, beam_width) -> DecodeParams:
    for name, value in (("alpha", alpha), ("beta", beta)):
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise BindingError(f"{name} must be a real number, got {value!r}")
    if not isinstance(beam_width, int) or isinstance(beam_width, bool):
        raise BindingError(f"beam_width must be an integer, got {beam_width!r}")
    try:
        return DecodeParams(
            lm_weight=float(alpha), insertion_bonus=float(beta), beam_width=beam_width
        )
    except ValueError as exc:
        raise BindingError(f"invalid decode parameters: {exc}") from exc


def bound_decode(
    buffer,
    alphabet,
    alpha: float = 0.0,
    beta: float = 1.0,
    beam_width: int = 16,
    lm_handle: LmHandle | None = None,
) -> list[tuple[str, float]]:
    """Prefix beam search over a raw buffer: (text, total score), best first.

    Identical semantics and bit-identical scores to the native decoder on
    the same inputs; alpha > 0 requires an lm_handle.
    """
    bound = bind_matrix(buffer, alphabet)
    params = _decode_params(alpha, beta, beam_width)
    lm = _resolve_lm(lm_handle)
    if params.lm_weight > 0.0 and lm is None:
        raise BindingError("alpha > 0 requires an lm_handle")
    hypotheses = prefix_search_decode(bound.matrix, bound.alphabet, params, lm)
    return [(hyp.text, total_score(hyp, params)) for hyp in hypotheses]


_PARAM_KEYS = frozenset({"beam_width", "inliers_mu", "inliers_sigma"})


def bound_confidence(buffer, alphabet, measure_name, params=None) -> float:
    """Score one line with a named confidence measure.

    ``params`` may carry ``beam_width`` (posterior) and ``inliers_mu`` /
    ``inliers_sigma`` (both required for the inliers rate).
    """
    bound = bind_matrix(buffer, alphabet)
    if not isinstance(measure_name, str):
        raise BindingError(f"measure_name must be a string, got {measure_name!r}")
    if measure_name not in MEASURE_NAMES:
        raise BindingError(
            f"unknown measure {measure_name!r}, expected one of {', '.join(MEASURE_NAMES)}"
        )
    if params is None:
        params = {}
    if not isinstance(params, Mapping):
        raise BindingError(f"params must be a mapping, got {type(params).__name__}")
    unknown = set(params) - _PARAM_KEYS
    if unknown:
        raise BindingError(f"unknown params: {', '.join(sorted(map(repr, unknown)))}")
    beam_width = params.get("beam_width", 16)
    if not isinstance(beam_width, int) or isinstance(beam_width, bool):
        raise BindingError(f"beam_width must be an integer, got {beam_width!r}")
    fit = None
    if ("inliers_mu" in params) != ("inliers_sigma" in params):
        raise BindingError("inliers_mu and inliers_sigma must be given together")
    if "inliers_mu" in params:
        mu, sigma = params["inliers_mu"], params["inliers_sigma"]
        for name, value in (("inliers_mu", mu), ("inliers_sigma", sigma)):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise BindingError(f"{name} must be a real number, got {value!r}")
        fit = (float(mu), float(sigma))
    if measure_name == "inliers-rate" and fit is None:
        raise BindingError("inliers-rate needs inliers_mu and inliers_sigma")
    try:
        measure = ConfidenceMeasure(measure_name, beam_width=beam_width, inliers_fit=fit)
        return measure.score(bound.matrix, bound.alphabet)
    except ValueError as exc:
        raise BindingError(f"confidence scoring failed: {exc}") from exc


def bound_cer(reference, hypothesis) -> float:
    """Character error rate of a hypothesis against a reference string."""
    for name, value in (("reference", reference), ("hypothesis", hypothesis)):
        if not isinstance(value, str):
            raise BindingError(f"{name} must be a string, got {type(value).__name__}")
    return cer(reference, hypothesis)


def load_lm_handle(path, alphabet) -> LmHandle:
    """Load a saved n-gram model, checking it against the alphabet."""
    resolved = _resolve_alphabet(alphabet)
    try:
        return LmHandle(load_lm(path, resolved))
    except (OSError, ValueError) as exc:
        raise BindingError(f"cannot load language model: {exc}") from exc


def train_lm_handle(alphabet, order: int, stages: Mapping[str, object]) -> LmHandle:
    """Train an n-gram model from named stage corpora.

    ``stages`` maps stage names (related, machine_annotated, target) to
    iterables of text lines; stages apply in that canonical order.
    """
    resolved = _resolve_alphabet(alphabet)
    if not isinstance(order, int) or isinstance(order, bool):
        raise BindingError(f"order must be an integer, got {order!r}")
    if not isinstance(stages, Mapping):
        raise BindingError(f"stages must be a mapping, got {type(stages).__name__}")
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise BindingError(
            f"unknown stages: {', '.join(sorted(map(repr, unknown)))}; "
            f"expected a subset of {', '.join(STAGES)}"
        )
    if not stages:
        raise BindingError("at least one stage corpus is required")
    try:
        lm = NGramLM(alphabet=resolved, order=order)
        for stage in STAGES:
            if stage in stages:
                lm = train_stage(lm, stage, list(stages[stage]))
        return LmHandle(lm)
    except ValueError as exc:
        raise BindingError(f"training failed: {exc}") from exc
