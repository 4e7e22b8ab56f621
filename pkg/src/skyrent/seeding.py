"""Deterministic seed derivation.

Every random draw in the pipeline comes from a PCG64 generator whose seed is
derived from one top-level seed plus a path of labels (stage, ward, point,
camera ...). Derivation hashes the labels with SHA-256 so seeds never depend
on execution order or worker count.
"""

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(root: int, *labels) -> int:
    """Return a 64-bit seed for the item named by ``labels`` under ``root``."""
    text = ":".join([str(int(root) & MASK64)] + [str(x) for x in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def make_rng(root: int, *labels) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(root, *labels)))
