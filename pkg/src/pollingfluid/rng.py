"""Reproducible random-stream derivation.

A stream is identified by (base_seed, purpose_tag, replication_index) and is
realised as a PCG64 generator seeded with
``SeedSequence([base_seed, blake2s(tag), replication_index])``.  SeedSequence
hashing guarantees that distinct triples give statistically independent
streams and identical triples give bitwise-identical draw sequences; the tag
is folded through blake2s so the derivation does not depend on Python's
per-process string hashing.

Monte Carlo batches are partitioned into fixed-size chunks of replications,
one derived stream per chunk.  The partition depends only on the replication
count, never on the worker count, so results are bit-stable under any number
of threads.
"""

from __future__ import annotations

from hashlib import blake2s

import numpy as np

CHUNK = 1024


def _tag_word(tag: str) -> int:
    return int.from_bytes(blake2s(tag.encode("utf-8"), digest_size=8).digest(), "little")


def rng_stream(base_seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Derive the generator for (base_seed, tag, index)."""
    return np.random.default_rng(np.random.SeedSequence([int(base_seed), _tag_word(tag), int(index)]))


def chunk_bounds(total: int, chunk: int = CHUNK) -> list[tuple[int, int, int]]:
    """(chunk_index, start, stop) triples covering range(total)."""
    return [(ci, start, min(start + chunk, total)) for ci, start in enumerate(range(0, total, chunk))]
