"""Seed plumbing and canonical JSON helpers.

Every random quantity in the package is drawn from a generator obtained
through :func:`substream`, so a single root seed plus a (stage, id, ...)
label tuple fully determines the output of any pipeline stage no matter
how stages are scheduled or parallelized.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

import numpy as np


def _label_words(label: str) -> list[int]:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=16).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def substream(seed: int, *labels: str | int) -> np.random.Generator:
    """Return a named, reproducible random stream.

    Args:
        seed: Root seed of the run.
        labels: Stage / entity labels, e.g. ("fit", track_id, chain).

    Returns:
        Independent ``numpy.random.Generator`` keyed by seed and labels.
    """
    entropy: list[int] = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for lab in labels:
        if isinstance(lab, (int, np.integer)):
            entropy.append(int(lab) & 0xFFFFFFFFFFFFFFFF)
        else:
            entropy.extend(_label_words(str(lab)))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def canonical_json(obj: Any) -> str:
    """Serialize deterministically: sorted keys, no whitespace drift."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg: dict) -> str:
    """12-hex-digit digest identifying a run configuration."""
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()[:12]
