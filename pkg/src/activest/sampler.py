"""Query selection under the annotation budget.

Strategies: uniform random over unannotated super-voxels, uncertainty-weighted
or top-m point selection, and the one-click-per-object regime. No super-voxel
is ever queried twice; in object mode no instance is queried twice.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import Cloud
from .ensemble import EnsembleSummary
from .supervoxel import Partition

STRATEGIES = ("uncertainty-weighted", "top-m", "random", "1t1c")


@dataclass(frozen=True)
class Budget:
    """Total clicks n split over k iterations; remainder goes to the earliest."""

    total_n: int
    iterations_k: int
    allocation: str = "per-scene"  # or "global"
    scenes_s: int = 1

    def __post_init__(self):
        if self.total_n < 0 or self.iterations_k < 1 or self.scenes_s < 1:
            raise ValueError("invalid budget")
        if self.allocation not in ("per-scene", "global"):
            raise ValueError(f"unknown allocation mode {self.allocation!r}")

    @property
    def per_iteration_m(self) -> int:
        return self.total_n // self.iterations_k

    def iteration_quota(self, iteration: int) -> int:
        if not (1 <= iteration <= self.iterations_k):
            raise ValueError(f"iteration {iteration} outside [1, {self.iterations_k}]")
        extra = 1 if iteration <= self.total_n % self.iterations_k else 0
        return self.per_iteration_m + extra


@dataclass(frozen=True)
class Allocation:
    iteration: int
    mode: str
    total: int
    per_scene: tuple[int, ...] | None  # None in global (pooled) mode


def allocate(budget: Budget, iteration: int) -> Allocation:
    """Per-scene quotas (remainder to the lowest scene ids) or one pooled quota."""
    quota = budget.iteration_quota(iteration)
    if budget.allocation == "global":
        return Allocation(iteration, "global", quota, None)
    s = budget.scenes_s
    base, rem = divmod(quota, s)
    per_scene = tuple(base + 1 if i < rem else base for i in range(s))
    return Allocation(iteration, "per-scene", quota, per_scene)


@dataclass(frozen=True)
class Query:
    scene_id: str
    point_index: int
    uncertainty: float = 0.0


@dataclass(frozen=True)
class QuerySet:
    queries: tuple[Query, ...]
    iteration: int
    strategy: str

    def __len__(self) -> int:
        return len(self.queries)

    def to_json(self) -> dict:
        return {"iteration": self.iteration, "strategy": self.strategy,
                "queries": [{"scene": q.scene_id, "point": q.point_index,
                             "u": q.uncertainty} for q in self.queries]}

    @classmethod
    def from_json(cls, data: dict) -> "QuerySet":
        return cls(tuple(Query(q["scene"], q["point"], q.get("u", 0.0))
                         for q in data["queries"]),
                   iteration=data["iteration"], strategy=data.get("strategy", "random"))


def _draw_index(weights: np.ndarray, r: float) -> int:
    """Inverse-CDF draw: the index whose cumulative weight first exceeds r*total."""
    cum = np.cumsum(weights)
    total = cum[-1]
    if total <= 0:
        raise ValueError("cannot draw from zero total weight")
    return int(min(np.searchsorted(cum, r * total, side="right"), len(weights) - 1))


def select_random(cloud: Cloud, partition: Partition, m: int, seed: int,
                  annotated_supervoxels: set[int] | None = None) -> QuerySet:
    """m points uniform over unannotated super-voxels, one point per chosen one."""
    used = annotated_supervoxels or set()
    remaining = [sv for sv in range(partition.s) if sv not in used]
    if m > len(remaining):
        raise ValueError(f"only {len(remaining)} unannotated super-voxels, need {m}")
    rng = np.random.default_rng(seed)
    queries = []
    for _ in range(m):
        pos = _draw_index(np.ones(len(remaining)), rng.random())
        sv = remaining.pop(pos)
        members = partition.members[sv]
        point = int(members[rng.integers(members.size)]) if members.size > 1 else int(members[0])
        queries.append(Query(cloud.scene_id, point))
    return QuerySet(tuple(queries), iteration=0, strategy="random")


def select_uncertain(summary: EnsembleSummary, partition: Partition,
                     history: set[int], m: int, strategy: str, seed: int,
                     scene_id: str = "") -> QuerySet:
    """Select m points by uncertainty, never touching an annotated super-voxel.

    ``uncertainty-weighted`` samples without replacement with probability
    proportional to u (uniform fallback when all eligible mass is zero);
    ``top-m`` takes the highest u, ties broken by lowest point index.
    """
    if strategy not in ("uncertainty-weighted", "top-m"):
        raise ValueError(f"unknown strategy {strategy!r}")
    u = summary.uncertainty
    eligible = ~np.isin(partition.assignment, sorted(history)) if history else \
        np.ones(partition.n, dtype=bool)
    n_eligible_svs = len(set(partition.assignment[eligible].tolist()))
    if m > n_eligible_svs:
        raise ValueError(f"only {n_eligible_svs} eligible super-voxels, need {m}")
    rng = np.random.default_rng(seed)
    queries = []
    mask = eligible.copy()
    if strategy == "top-m":
        order = np.lexsort((np.arange(u.size), -u))
        taken = 0
        for i in order:
            if taken == m:
                break
            if not mask[i]:
                continue
            queries.append(Query(scene_id, int(i), float(u[i])))
            mask[partition.assignment == partition.assignment[i]] = False
            taken += 1
    else:
        for _ in range(m):
            w = np.where(mask, u, 0.0)
            if w.sum() <= 0.0:
                w = mask.astype(np.float64)  # zero-mass distribution is undefined
            i = _draw_index(w, rng.random())
            queries.append(Query(scene_id, int(i), float(u[i])))
            mask[partition.assignment == partition.assignment[i]] = False
    return QuerySet(tuple(queries), iteration=0, strategy=strategy)


def select_uncertain_pooled(summaries: dict[str, EnsembleSummary],
                            partitions: dict[str, Partition],
                            history: dict[str, set[int]], m: int, strategy: str,
                            seed: int) -> QuerySet:
    """Global-allocation variant: one ranking over the pooled candidate list."""
    sids = sorted(summaries)
    u = np.concatenate([summaries[s].uncertainty for s in sids])
    scene_of = np.concatenate([np.full(summaries[s].n, i) for i, s in enumerate(sids)])
    local_idx = np.concatenate([np.arange(summaries[s].n) for s in sids])
    mask = np.ones(u.size, dtype=bool)
    for i, s in enumerate(sids):
        used = history.get(s, set())
        if used:
            sel = scene_of == i
            mask[sel] = ~np.isin(partitions[s].assignment, sorted(used))
    rng = np.random.default_rng(seed)
    queries = []

    def claim(row: int):
        s = sids[scene_of[row]]
        sv = partitions[s].assignment[local_idx[row]]
        same = (scene_of == scene_of[row]) & np.isin(
            local_idx, partitions[s].members[sv])
        mask[same] = False
        queries.append(Query(s, int(local_idx[row]), float(u[row])))

    if strategy == "top-m":
        order = np.lexsort((np.arange(u.size), -u))
        for row in order:
            if len(queries) == m:
                break
            if mask[row]:
                claim(row)
        if len(queries) < m:
            raise ValueError("fewer eligible super-voxels than the pooled quota")
    else:
        for _ in range(m):
            w = np.where(mask, u, 0.0)
            if w.sum() <= 0.0:
                if not mask.any():
                    raise ValueError("fewer eligible super-voxels than the pooled quota")
                w = mask.astype(np.float64)
            claim(_draw_index(w, rng.random()))
    return QuerySet(tuple(queries), iteration=0, strategy=strategy)


def select_1t1c(summary: EnsembleSummary, gt_instance: np.ndarray | None,
                history_instances: set[int], m: int,
                annotated_supervoxels: set[int] | None = None,
                partition: Partition | None = None,
                scene_id: str = "") -> QuerySet:
    """m highest-uncertainty points from m distinct never-sampled instances."""
    if gt_instance is None:
        raise ValueError("one-click-per-object selection needs instance labels")
    gt_instance = np.asarray(gt_instance)
    used = set(history_instances)
    available = set(np.unique(gt_instance).tolist()) - used
    if len(available) < m:
        raise ValueError(f"only {len(available)} unsampled instances, need {m}")
    mask = ~np.isin(gt_instance, sorted(used))
    if annotated_supervoxels and partition is not None:
        mask &= ~np.isin(partition.assignment, sorted(annotated_supervoxels))
    u = summary.uncertainty
    queries = []
    for _ in range(m):
        if not mask.any():
            raise ValueError("no eligible points left for instance selection")
        i = int(np.argmax(np.where(mask, u, -1.0)))
        queries.append(Query(scene_id, i, float(u[i])))
        mask &= gt_instance != gt_instance[i]
    return QuerySet(tuple(queries), iteration=0, strategy="1t1c")


def final_sweep_1t1c(summary: EnsembleSummary, gt_instance: np.ndarray | None,
                     history_instances: set[int], scene_id: str = "") -> QuerySet:
    """One max-uncertainty point for every instance still missing an annotation."""
    if gt_instance is None:
        raise ValueError("one-click-per-object selection needs instance labels")
    gt_instance = np.asarray(gt_instance)
    u = summary.uncertainty
    queries = []
    for inst in sorted(set(np.unique(gt_instance).tolist()) - set(history_instances)):
        members = np.flatnonzero(gt_instance == inst)
        i = int(members[np.argmax(u[members])])
        queries.append(Query(scene_id, i, float(u[i])))
    return QuerySet(tuple(queries), iteration=0, strategy="1t1c")
