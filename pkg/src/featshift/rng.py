"""Deterministic random-stream management.

Every randomized routine in the package takes a ``numpy.random.Generator``.
Experiment drivers fan a single user-facing 64-bit seed out into independent
streams with :func:`spawn_rng`, keyed by ``(seed, label, index)``:

* ``seed``  - the run's global seed,
* ``label`` - a short string naming the consumer (``"trial"``, ``"boot"``, ...),
* ``index`` - replicate / trial / window number.

The label is hashed with SHA-256 so the mapping is stable across processes,
platforms and Python hash randomization. Identical triples always produce
identical streams; distinct triples produce independent streams.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_key(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def spawn_rng(seed: int, label: str, index: int = 0) -> np.random.Generator:
    """Derive an independent generator from ``(seed, label, index)``.

    Args:
        seed: global run seed (any int; reduced modulo 2**64).
        label: name of the consuming stream.
        index: replicate index within the labeled family.

    Returns:
        A freshly seeded ``numpy.random.Generator``.
    """
    entropy = [int(seed) & _MASK64, _label_key(label), int(index) & _MASK64]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def as_rng(seed_or_rng: int | np.random.Generator | None) -> np.random.Generator:
    """Coerce an int seed, ``None`` or an existing generator to a generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
