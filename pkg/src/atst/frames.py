"""Per-frame log-probability matrices and their binary container format.

A frame matrix holds the recognizer output for one text line: T frames, one
row per frame, |V| log-probabilities per row.  Rows are distributions, so each
row's probabilities must sum to one.  Matrices are stored as float32 both in
memory and on disk so that write/read round-trips are bit-exact.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .alphabet import Alphabet

MAGIC = b"FPM1"
# |exp-row-sum - 1| tolerated on construction; float32 rounding stays well under.
ROW_SUM_TOL = 1e-6


class FrameError(ValueError):
    """Base class for frame-matrix violations."""


class FrameFormatError(FrameError):
    """Bad magic, truncated payload, or otherwise unparseable container."""


class FrameShapeError(FrameError):
    """Row width disagrees with the alphabet size."""


class NonFiniteFrameError(FrameError):
    """NaN or infinity in the matrix."""


class FrameInvariantError(FrameError):
    """Finite values that do not form per-frame log distributions."""


@dataclass(frozen=True)
class FrameMatrix:
    """T x |V| natural-log probabilities, one row per frame.

    Invariants checked on construction: T >= 1, all entries finite and <= 0,
    and each row exponentiates to a distribution within ROW_SUM_TOL.
    """

    log_probs: np.ndarray
    line_id: str = ""

    def __post_init__(self):
        arr = np.asarray(self.log_probs, dtype=np.float32)
        if arr.ndim != 2:
            raise FrameShapeError(f"expected a 2-d matrix, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 2:
            raise FrameInvariantError(
                f"need at least one frame and two symbols, got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            raise NonFiniteFrameError("frame matrix contains non-finite values")
        if (arr > 0).any():
            raise FrameInvariantError("log-probabilities must be <= 0")
        sums = np.exp(arr.astype(np.float64)).sum(axis=1)
        bad = np.abs(sums - 1.0) > ROW_SUM_TOL
        if bad.any():
            t = int(np.argmax(bad))
            raise FrameInvariantError(
                f"frame {t} probabilities sum to {sums[t]:.9f}, not 1"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "log_probs", arr)

    @property
    def num_frames(self) -> int:
        return self.log_probs.shape[0]

    @property
    def num_symbols(self) -> int:
        return self.log_probs.shape[1]


def write_frame_matrix(matrix: FrameMatrix, path) -> None:
    """Write magic, u32 T, u32 |V| and the row-major float32 payload (all LE)."""
    arr = np.ascontiguousarray(matrix.log_probs, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_frame_matrix(path, alphabet: Alphabet | None = None, line_id: str = "") -> FrameMatrix:
    """Read a matrix back, optionally checking the width against an alphabet.

    Raises FrameFormatError for container damage, FrameShapeError when the
    width disagrees with the alphabet, NonFiniteFrameError / FrameInvariantError
    for value-level violations.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 12 or data[:4] != MAGIC:
        raise FrameFormatError(f"{path}: not a frame-matrix file (bad magic)")
    num_frames, num_symbols = struct.unpack("<II", data[4:12])
    expected = 12 + 4 * num_frames * num_symbols
    if len(data) != expected:
        raise FrameFormatError(
            f"{path}: payload is {len(data) - 12} bytes, header implies {expected - 12}"
        )
    if alphabet is not None and num_symbols != alphabet.size:
        raise FrameShapeError(
            f"{path}: {num_symbols} symbols per frame, alphabet has {alphabet.size}"
        )
    arr = np.frombuffer(data, dtype="<f4", offset=12).reshape(num_frames, num_symbols)
    return FrameMatrix(log_probs=arr, line_id=line_id)


def frame_matrix_from_probs(probs, line_id: str = "") -> FrameMatrix:
    """Convenience constructor from linear-domain probabilities."""
    p = np.asarray(probs, dtype=np.float64)
    if (p <= 0).any():
        raise FrameInvariantError("probabilities must be strictly positive; floor them first")
    return FrameMatrix(log_probs=np.log(p).astype(np.float32), line_id=line_id)
