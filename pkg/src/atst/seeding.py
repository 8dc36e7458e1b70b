"""Deterministic seed derivation for per-item RNG streams."""

import hashlib


def derive_seed(*parts) -> int:
    """Derive a 64-bit seed from a tuple of ints/strings.

    Stable across processes and runs (unlike the builtin ``hash``, which is
    salted per interpreter).  Each part is length-prefixed so that
    ("ab", "c") and ("a", "bc") cannot collide.
    """
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, bool) or not isinstance(part, (int, str)):
            raise TypeError(f"seed parts must be int or str, got {type(part).__name__}")
        data = str(part).encode("utf-8")
        tag = b"i" if isinstance(part, int) else b"s"
        h.update(tag + len(data).to_bytes(4, "little") + data)
    return int.from_bytes(h.digest(), "little")
