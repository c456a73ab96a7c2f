"""Small shared helpers: deterministic seeding and rounding."""

from __future__ import annotations

import math
import zlib

_MASK32 = 0xFFFFFFFF


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero toward +inf."""
    return int(math.floor(x + 0.5))


def mix_seed(*parts: object) -> int:
    """Fold arbitrary parts into a stable 32-bit seed.

    Uses crc32 over the repr of each part, so the result is reproducible
    across processes (unlike the builtin hash).
    """
    acc = 0
    for part in parts:
        acc = zlib.crc32(repr(part).encode("utf-8"), acc)
    return acc & _MASK32
