"""Super-voxel over-segmentation: region growing plus partition import/export.

The partition is the unit of label propagation and voting; it must cover every
point exactly once, and each super-voxel must stay connected in the k-NN graph
it was grown on.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from . import _kernels
from .cloud import Cloud, knn_indices


class PartitionError(ValueError):
    """A stored or constructed partition is not a total partition."""


@dataclass(frozen=True)
class SegmentParams:
    k_neighbors: int = 16
    normal_angle_max: float = 15.0  # degrees
    color_dist_max: float = 0.2
    spatial_dist_max: float = 0.05  # meters
    min_sv_size: int = 10

    def __post_init__(self):
        if self.k_neighbors < 3:
            raise ValueError("k_neighbors must be >= 3")
        if min(self.normal_angle_max, self.color_dist_max, self.spatial_dist_max) <= 0:
            raise ValueError("all thresholds must be positive")
        if self.min_sv_size < 1:
            raise ValueError("min_sv_size must be >= 1")

    def digest(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


class Partition:
    """Total mapping point -> super-voxel with per-super-voxel member lists."""

    def __init__(self, assignment: np.ndarray, params_digest: str = ""):
        assignment = np.ascontiguousarray(assignment, dtype=np.int64)
        if assignment.ndim != 1 or assignment.size < 1:
            raise PartitionError("assignment must be a non-empty 1-d array")
        self.assignment = assignment
        self.params_digest = params_digest
        n_sv = int(assignment.max()) + 1 if assignment.size else 0
        if assignment.min() < 0:
            bad = int(np.argmax(assignment < 0))
            raise PartitionError(f"point {bad} has no super-voxel")
        counts = np.bincount(assignment, minlength=n_sv)
        if np.any(counts == 0):
            raise PartitionError(f"super-voxel {int(np.argmax(counts == 0))} is empty")
        order = np.argsort(assignment, kind="stable")
        self.members = np.split(order, np.cumsum(counts)[:-1])
        self.sizes = counts

    @property
    def n(self) -> int:
        return self.assignment.size

    @property
    def s(self) -> int:
        return len(self.members)


def _compact_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel region ids to 0..S-1 in order of first appearance."""
    _, first = np.unique(labels, return_index=True)
    order = labels[np.sort(first)]
    remap = np.empty(int(labels.max()) + 1, dtype=np.int64)
    remap[order] = np.arange(len(order))
    return remap[labels]


def _merge_small_regions(labels, neighbors, distances, normals, colors,
                         sizes_min, dist_max):
    """Fold regions below the size floor into their most similar adjacent region.

    Similarity combines mean-color distance with the angle between mean region
    normals, so fragments prefer neighbors of the same surface; ties go to the
    larger neighbor, then the lower id. Regions with no neighbor are kept.
    """
    labels = labels.copy()
    n_regions = int(labels.max()) + 1
    mean_normals = np.zeros((n_regions, 3))
    np.add.at(mean_normals, labels, normals)
    sum_colors = np.zeros((n_regions, 3))
    np.add.at(sum_colors, labels, colors)
    counts = np.bincount(labels, minlength=n_regions).astype(np.float64)

    small = [r for r in range(n_regions) if counts[r] < sizes_min]
    if not small:
        return labels
    n, k = neighbors.shape
    for rid in small:
        member_idx = np.flatnonzero(labels == rid)
        if len(member_idx) == 0 or len(member_idx) >= sizes_min:
            continue  # may have grown by absorbing another small region
        # adjacency: k-NN edges leaving the region, preferring gated edges
        cand: dict[int, bool] = {}
        for i in member_idx:
            for jj in range(k):
                j = neighbors[i, jj]
                if j < 0 or labels[j] == rid:
                    continue
                gated = distances[i, jj] <= dist_max
                other = int(labels[j])
                cand[other] = cand.get(other, False) or gated
        if not cand:
            continue
        gated_only = {r for r, g in cand.items() if g}
        pool = gated_only if gated_only else set(cand)
        me = mean_normals[rid] / max(np.linalg.norm(mean_normals[rid]), 1e-12)
        my_color = sum_colors[rid] / counts[rid]
        best = None
        for other in sorted(pool):
            on = mean_normals[other] / max(np.linalg.norm(mean_normals[other]), 1e-12)
            angle = np.arccos(np.clip(me @ on, -1.0, 1.0))
            color_d = np.linalg.norm(my_color - sum_colors[other] / counts[other])
            key = (color_d + 0.2 * angle, -counts[other], other)
            if best is None or key < best[0]:
                best = (key, other)
        target = best[1]
        labels[member_idx] = target
        mean_normals[target] += mean_normals[rid]
        sum_colors[target] += sum_colors[rid]
        counts[target] += counts[rid]
        counts[rid] = 0
    return labels


def segment(cloud: Cloud, params: SegmentParams) -> Partition:
    """Grow geometrically homogeneous regions over the k-NN graph.

    Deterministic: seeds are taken in ascending point order, growth is FIFO.
    """
    if cloud.normals is None:
        raise ValueError("cloud has no normals; run estimate_normals first")
    k = min(params.k_neighbors, cloud.n)
    neighbors, distances = knn_indices(cloud.positions, k)
    cos_min = float(np.cos(np.deg2rad(params.normal_angle_max)))
    labels = _kernels.region_grow(
        neighbors, distances,
        cloud.normals.astype(np.float64), cloud.colors.astype(np.float64),
        cos_min, float(params.color_dist_max) ** 2, float(params.spatial_dist_max),
    )
    if params.min_sv_size > 1:
        labels = _merge_small_regions(labels, neighbors, distances,
                                      cloud.normals.astype(np.float64),
                                      cloud.colors.astype(np.float64),
                                      params.min_sv_size, float(params.spatial_dist_max))
    return Partition(_compact_labels(labels), params_digest=params.digest())


def save_partition(partition: Partition, path: str | Path) -> None:
    payload = {
        "n": partition.n,
        "s": partition.s,
        "assignment": partition.assignment.tolist(),
        "params_digest": partition.params_digest,
    }
    Path(path).write_text(json.dumps(payload))


def load_partition(path: str | Path, expected_n: int | None = None) -> Partition:
    """Load and validate a partition; accepts assignment or member-list form."""
    data = json.loads(Path(path).read_text())
    n = int(data["n"])
    if expected_n is not None and n != expected_n:
        raise PartitionError(f"partition covers {n} points, expected {expected_n}")
    if "assignment" in data:
        assignment = np.asarray(data["assignment"], dtype=np.int64)
        if assignment.size != n:
            raise PartitionError(
                f"assignment length {assignment.size} does not match n={n}"
            )
    elif "members" in data:
        assignment = np.full(n, -1, dtype=np.int64)
        for sv, members in enumerate(data["members"]):
            for p in members:
                if not (0 <= p < n):
                    raise PartitionError(f"point {p} out of range [0, {n})")
                if assignment[p] >= 0:
                    raise PartitionError(f"point {p} assigned twice")
                assignment[p] = sv
        missing = np.flatnonzero(assignment < 0)
        if missing.size:
            raise PartitionError(f"point {int(missing[0])} has no super-voxel")
    else:
        raise PartitionError("file has neither 'assignment' nor 'members'")
    part = Partition(assignment, params_digest=data.get("params_digest", ""))
    if int(data.get("s", part.s)) != part.s:
        raise PartitionError(f"declared s={data['s']} but found {part.s} super-voxels")
    return part


def refine_by_instance(partition: Partition, gt_instance: np.ndarray) -> Partition:
    """Split every super-voxel along instance boundaries.

    Used in one-click-per-object mode so that one-annotation-per-super-voxel
    and one-annotation-per-instance can hold simultaneously.
    """
    pairs = partition.assignment * (int(gt_instance.max()) + 1) + gt_instance.astype(np.int64)
    return Partition(_compact_labels(pairs), params_digest=partition.params_digest + ":inst")
