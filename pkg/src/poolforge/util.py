"""Seed derivation and fingerprint helpers shared across modules."""

from __future__ import annotations

import dataclasses
import hashlib
import json

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *path) -> int:
    """Fold a master seed and a tag path into an independent 64-bit seed.

    Streams derived from distinct paths are independent, so adding a new
    consumer (or a new cycle) never perturbs draws made elsewhere.
    """
    key = repr((int(seed) & _MASK64,) + tuple(path)).encode()
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:8], "little")


def seeded_rng(seed: int, *path) -> np.random.Generator:
    """PCG64 generator for the stream named by (seed, *path)."""
    return np.random.default_rng(derive_seed(seed, *path))


def config_fingerprint(config) -> str:
    """Stable hex digest of a (possibly nested) config dataclass."""
    if dataclasses.is_dataclass(config):
        config = dataclasses.asdict(config)
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def params_fingerprint(layers) -> str:
    """Hex digest over the exact bytes of a dense-layer stack."""
    h = hashlib.sha256()
    for layer in layers:
        h.update(np.ascontiguousarray(layer.weights, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(layer.bias, dtype=np.float64).tobytes())
    return h.hexdigest()
