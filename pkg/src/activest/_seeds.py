"""Deterministic seed derivation for the experiment's independent RNG streams."""

from __future__ import annotations

import numpy as np

# Stream tags keep derived seeds disjoint across uses of the same base seed.
AUGMENT_STREAM = 1
INIT_STREAM = 2
TRAIN_STREAM = 3
SAMPLE_STREAM = 4
SCENE_STREAM = 5


def derive_seed(base: int, *keys: int) -> int:
    """Collapse (base, keys...) into a fresh 64-bit seed, stable across runs."""
    ss = np.random.SeedSequence([int(base) & (2**63 - 1), *(int(k) & (2**63 - 1) for k in keys)])
    return int(ss.generate_state(1, np.uint64)[0])
