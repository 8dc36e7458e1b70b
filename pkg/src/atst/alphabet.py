"""Symbol table shared by frame matrices, decoders and language models."""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field

# Placeholder glyph used for the blank label when building alphabets from text.
DEFAULT_BLANK = "␀"


class AlphabetError(ValueError):
    pass


@dataclass(frozen=True)
class Alphabet:
    """Ordered symbol set with a designated blank label.

    Symbols are single characters, unique, in model output order: row/column
    ``i`` of a frame matrix is the score of ``symbols[i]``.
    """

    symbols: tuple[str, ...]
    blank_index: int = 0
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if len(symbols) < 2:
            raise AlphabetError("alphabet needs the blank plus at least one symbol")
        for s in symbols:
            if not isinstance(s, str) or len(s) != 1:
                raise AlphabetError(f"symbols must be single characters, got {s!r}")
        if len(set(symbols)) != len(symbols):
            raise AlphabetError("duplicate symbols in alphabet")
        if not 0 <= self.blank_index < len(symbols):
            raise AlphabetError(
                f"blank_index {self.blank_index} out of range for {len(symbols)} symbols"
            )
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(symbols)})

    @property
    def size(self) -> int:
        return len(self.symbols)

    @property
    def blank(self) -> str:
        return self.symbols[self.blank_index]

    @property
    def non_blank_indices(self) -> tuple[int, ...]:
        return tuple(i for i in range(len(self.symbols)) if i != self.blank_index)

    @property
    def non_blank_symbols(self) -> tuple[str, ...]:
        return tuple(self.symbols[i] for i in self.non_blank_indices)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def index(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise AlphabetError(f"symbol {symbol!r} not in alphabet") from None

    def encode(self, text: str) -> list[int]:
        """Map text to symbol indices; the blank character is not writable text."""
        out = []
        for ch in text:
            i = self.index(ch)
            if i == self.blank_index:
                raise AlphabetError("text may not contain the blank symbol")
            out.append(i)
        return out

    def content_hash(self) -> str:
        payload = json.dumps(
            {"symbols": list(self.symbols), "blank_index": self.blank_index},
            ensure_ascii=True,
        ).encode("ascii")
        return hashlib.sha256(payload).hexdigest()

    @classmethod
    def from_text(cls, text: str, blank: str = DEFAULT_BLANK) -> "Alphabet":
        """Alphabet over the distinct characters of ``text``, blank first."""
        seen = sorted(set(text))
        if blank in seen:
            raise AlphabetError("blank character occurs in the text")
        return cls(symbols=(blank, *seen), blank_index=0)


def write_alphabet(alphabet: Alphabet, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(
            {"symbols": list(alphabet.symbols), "blank_index": alphabet.blank_index},
            fh,
            ensure_ascii=False,
        )
        fh.write("\n")


def read_alphabet(path) -> Alphabet:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise AlphabetError(f"unparseable alphabet file {path}: {exc}") from None
    if not isinstance(obj, dict) or "symbols" not in obj:
        raise AlphabetError(f"alphabet file {path} missing 'symbols'")
    return Alphabet(
        symbols=tuple(obj["symbols"]), blank_index=int(obj.get("blank_index", 0))
    )
