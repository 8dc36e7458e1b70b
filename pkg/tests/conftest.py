import numpy as np
import pytest

from atst import Alphabet, FrameMatrix


@pytest.fixture
def ab_alphabet():
    """Blank plus two letters; the workhorse for small exact cases."""
    return Alphabet(symbols=("-", "a", "b"), blank_index=0)


@pytest.fixture
def abc_alphabet():
    return Alphabet(symbols=("-", "a", "b", "c"), blank_index=0)


def matrix_from_probs(probs, line_id=""):
    probs = np.asarray(probs, dtype=np.float64)
    return FrameMatrix(log_probs=np.log(probs).astype(np.float32), line_id=line_id)


def probs_seen_by_code(matrix):
    """The float64 probabilities the implementation actually works with."""
    return np.exp(matrix.log_probs.astype(np.float64))
