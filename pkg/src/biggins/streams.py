"""Counter-based splittable random streams.

Every sampling entry point takes an explicit `numpy` Generator backed by
Philox (a counter-based generator).  Streams are derived from a 64-bit root
seed and a path of integer/string labels through `SeedSequence` spawn keys,
so any (tree, level, task) substream is reproducible independently of
scheduling or worker count.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["derive", "derive_seed", "substream_key"]


def _encode(item) -> int:
    if isinstance(item, (int, np.integer)):
        if item < 0:
            raise ValueError("stream path labels must be non-negative")
        return int(item)
    if isinstance(item, str):
        return zlib.crc32(item.encode("utf-8"))
    raise TypeError(f"unsupported stream path label: {item!r}")


def substream_key(*path) -> tuple[int, ...]:
    """Encode a derivation path as a spawn key tuple."""
    return tuple(_encode(p) for p in path)


def derive(seed: int, *path) -> np.random.Generator:
    """Derive a Philox generator from a root seed and a label path.

    The empty path yields the root stream itself.  Identical (seed, path)
    pairs always yield identical streams.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=substream_key(*path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path) -> int:
    """Derive a 64-bit integer seed from a root seed and a label path.

    Used to hand independent per-task seeds to workers; the derivation is a
    pure function of (seed, path), so results never depend on scheduling.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1),
                                spawn_key=substream_key(*path))
    return int(ss.generate_state(2, dtype=np.uint64)[0])
