"""Deterministic random streams shared by every randomized component.

All sampling in this package goes through Philox, a 64-bit counter-based
generator that behaves identically across platforms. Independent streams are
derived by hashing a root seed together with a tuple of labels (for example
``(seed, "batch", epoch, batch_index)``), so parallel consumers never share
state and any stream can be reconstructed in isolation.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

__all__ = ["philox_key", "rng_stream"]


def philox_key(seed: int, *labels: object) -> int:
    """Derive a 128-bit Philox key from a root seed and a label path."""
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<q", int(seed)))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def rng_stream(seed: int, *labels: object) -> np.random.Generator:
    """Generator for the stream identified by ``(seed, *labels)``.

    Calling this twice with equal arguments yields generators that produce
    identical sequences; distinct label paths give statistically independent
    streams.
    """
    return np.random.Generator(np.random.Philox(key=philox_key(seed, *labels)))
