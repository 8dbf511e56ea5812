"""Ensemble statistics over K augmented forward passes.

Per-point uncertainty is the population standard deviation, across versions,
of the probability of the class with the highest mean probability; confidence
is that mean probability itself. Both drive query selection and pseudo-labels.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace as dc_replace

import numpy as np

from ._seeds import AUGMENT_STREAM, derive_seed
from .classifier import Model, featurize, forward
from .cloud import AugmentParams, Cloud, augment

_ASTE_MAGIC = b"ASTE1"


@dataclass(frozen=True)
class EnsembleSummary:
    mean_probs: np.ndarray   # (N, C), rows sum to 1
    top_class: np.ndarray    # (N,), argmax of mean_probs (ties -> lowest id)
    uncertainty: np.ndarray  # (N,), >= 0
    confidence: np.ndarray   # (N,), mean prob at top_class
    k_versions: int
    seeds: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.mean_probs.shape[0]


def uncertainty_of(probs_per_version: np.ndarray):
    """Reduce a (K, N, C) stack to (mean_probs, top_class, uncertainty, confidence).

    Pure core of predict_ensemble, exposed for oracle testing. Invariant to
    permuting the K versions; exactly zero uncertainty when all versions agree
    bit-for-bit at the winning class.
    """
    probs = np.asarray(probs_per_version, dtype=np.float64)
    if probs.ndim != 3:
        raise ValueError(f"expected (K, N, C), got shape {probs.shape}")
    k = probs.shape[0]
    if k < 1:
        raise ValueError("need at least one version")
    row_sums = probs.sum(axis=2)
    if np.any(np.abs(row_sums - 1.0) > 1e-6):
        raise ValueError("version rows are not stochastic")
    mean_probs = probs.sum(axis=0) / k
    top_class = np.argmax(mean_probs, axis=1)
    rows = np.arange(mean_probs.shape[0])
    confidence = mean_probs[rows, top_class]
    at_top = probs[:, rows, top_class]  # (K, N)
    dev = at_top - confidence[None, :]
    uncertainty = np.sqrt(np.sum(dev * dev, axis=0) / k)
    # identical versions must report exactly zero, not rounding dust
    agree = at_top.max(axis=0) == at_top.min(axis=0)
    uncertainty[agree] = 0.0
    return mean_probs, top_class.astype(np.int64), uncertainty, confidence


def _forward_fast(weights32, biases32, feats: np.ndarray) -> np.ndarray:
    """float32 forward with float64 row renormalization (ensemble fast path)."""
    a = feats.astype(np.float32)
    last = len(weights32) - 1
    for i, (w, b) in enumerate(zip(weights32, biases32)):
        z = a @ w + b
        a = np.maximum(z, np.float32(0.0)) if i < last else z
    z = a - a.max(axis=1, keepdims=True)
    e = np.exp(z, dtype=np.float32)
    probs = e.astype(np.float64)
    probs /= probs.sum(axis=1, keepdims=True)
    return probs


def predict_ensemble(model: Model, cloud: Cloud, aug_params: AugmentParams,
                     k_versions: int, seed: int,
                     neighbors: np.ndarray | None = None,
                     feature_k: int = 16,
                     precision: str = "float64") -> EnsembleSummary:
    """Forward the model on K independently augmented versions of one cloud.

    Augmentation preserves point order, so row i of every version refers to
    the same original point. Version seeds derive from the master seed.
    precision="float32" trades ~1e-7 of probability accuracy for speed; rows
    stay stochastic to float64 precision either way.
    """
    if k_versions < 1:
        raise ValueError("k_versions must be >= 1")
    if precision not in ("float64", "float32"):
        raise ValueError(f"unknown precision {precision!r}")
    version_seeds = tuple(derive_seed(seed, AUGMENT_STREAM, i) for i in range(k_versions))
    if precision == "float32":
        weights32 = [w.astype(np.float32) for w in model.weights]
        biases32 = [b.astype(np.float32) for b in model.biases]
    stacks = []
    for vseed in version_seeds:
        version = augment(cloud, dc_replace(aug_params, seed=vseed))
        feats = featurize(version, k_neighbors=feature_k, neighbors=neighbors)
        if precision == "float32":
            stacks.append(_forward_fast(weights32, biases32, feats))
        else:
            stacks.append(forward(model, feats))
    mean_probs, top_class, uncertainty, confidence = uncertainty_of(np.stack(stacks))
    return EnsembleSummary(mean_probs, top_class, uncertainty, confidence,
                           k_versions, version_seeds)


def summary_to_bytes(summary: EnsembleSummary) -> bytes:
    """ASTE1 stream for the UI heatmap: mean probs, uncertainty, top class."""
    n, c = summary.mean_probs.shape
    return b"".join([
        _ASTE_MAGIC,
        struct.pack("<II", n, c),
        np.ascontiguousarray(summary.mean_probs, "<f4").tobytes(),
        np.ascontiguousarray(summary.uncertainty, "<f4").tobytes(),
        np.ascontiguousarray(summary.top_class, "<i4").tobytes(),
    ])


def summary_from_bytes(data: bytes):
    """Parse an ASTE1 stream back to (mean_probs, uncertainty, top_class)."""
    if data[:5] != _ASTE_MAGIC:
        raise ValueError("bad magic, expected ASTE1")
    n, c = struct.unpack_from("<II", data, 5)
    offset = 13
    mean_probs = np.frombuffer(data, "<f4", n * c, offset).reshape(n, c)
    offset += 4 * n * c
    uncertainty = np.frombuffer(data, "<f4", n, offset)
    offset += 4 * n
    top_class = np.frombuffer(data, "<i4", n, offset)
    offset += 4 * n
    if offset != len(data):
        raise ValueError(f"{len(data) - offset} trailing bytes in summary stream")
    return mean_probs.copy(), uncertainty.copy(), top_class.copy()
