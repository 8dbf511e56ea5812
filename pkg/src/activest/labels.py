"""Label bookkeeping: raw annotations, super-voxel propagation, pseudo-labels.

Three per-scene label sets are maintained: the raw human/oracle annotations,
the true labels obtained by propagating each annotation to its whole
super-voxel, and the pseudo-labels regenerated every round from the ensemble
confidences. True and pseudo sets never overlap.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, asdict, field
from pathlib import Path

import numpy as np

from .classifier import LabelSet
from .ensemble import EnsembleSummary
from .supervoxel import Partition

SOURCES = ("human", "oracle", "random-init")


@dataclass(frozen=True)
class Annotation:
    scene_id: str
    point_index: int
    class_id: int
    iteration: int
    source: str = "oracle"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown annotation source {self.source!r}")
        if self.point_index < 0 or self.class_id < 0:
            raise ValueError("point_index and class_id must be non-negative")


@dataclass
class LabelState:
    annotations: list[Annotation] = field(default_factory=list)
    true_labels: dict[str, LabelSet] = field(default_factory=dict)
    pseudo_labels: dict[str, LabelSet] = field(default_factory=dict)
    annotated_supervoxels: dict[str, set[int]] = field(default_factory=dict)
    annotated_instances: dict[str, set[int]] = field(default_factory=dict)

    @property
    def n_annotations(self) -> int:
        return len(self.annotations)

    @property
    def n_true(self) -> int:
        return sum(int(idx.size) for idx, _ in self.true_labels.values())

    @property
    def n_pseudo(self) -> int:
        return sum(int(idx.size) for idx, _ in self.pseudo_labels.values())

    def true_for(self, scene_id: str) -> LabelSet:
        return self.true_labels.get(
            scene_id, (np.empty(0, np.int64), np.empty(0, np.int64)))


def propagate(annotations: list[Annotation],
              partitions: dict[str, Partition]) -> dict[str, LabelSet]:
    """Spread each annotation to every point of its super-voxel.

    Rejects a second annotation landing in an already-annotated super-voxel.
    """
    sv_class: dict[str, dict[int, int]] = {}
    for ann in annotations:
        part = partitions[ann.scene_id]
        if ann.point_index >= part.n:
            raise ValueError(
                f"annotation at point {ann.point_index} outside scene {ann.scene_id}")
        sv = int(part.assignment[ann.point_index])
        seen = sv_class.setdefault(ann.scene_id, {})
        if sv in seen:
            raise ValueError(
                f"two annotations in super-voxel {sv} of scene {ann.scene_id}")
        seen[sv] = ann.class_id
    out: dict[str, LabelSet] = {}
    for sid, mapping in sv_class.items():
        part = partitions[sid]
        idx_parts, cls_parts = [], []
        for sv in sorted(mapping):
            members = part.members[sv]
            idx_parts.append(members)
            cls_parts.append(np.full(members.size, mapping[sv], np.int64))
        idx = np.concatenate(idx_parts)
        cls = np.concatenate(cls_parts)
        order = np.argsort(idx, kind="stable")
        out[sid] = (idx[order].astype(np.int64), cls[order])
    return out


def generate_pseudo(summary: EnsembleSummary, tau: float,
                    exclude: np.ndarray) -> LabelSet:
    """Points with confidence strictly above tau, minus already-true points."""
    keep = summary.confidence > tau
    if exclude is not None and len(exclude):
        keep[np.asarray(exclude, dtype=np.int64)] = False
    idx = np.flatnonzero(keep).astype(np.int64)
    return idx, summary.top_class[idx].astype(np.int64)


def tau_schedule(iteration: int, total_k: int) -> float:
    """0.99 early, 0.95 for the last two rounds (1-based iteration)."""
    if not (1 <= iteration <= total_k):
        raise ValueError(f"iteration {iteration} outside [1, {total_k}]")
    return 0.95 if iteration > total_k - 2 else 0.99


def merge_annotations(state: LabelState, new_annotations: list[Annotation],
                      partitions: dict[str, Partition],
                      n_classes: int | None = None,
                      instances_by_scene: dict[str, np.ndarray] | None = None) -> LabelState:
    """Extend the annotation set and re-propagate; pseudo-labels are untouched.

    New annotations may only touch super-voxels that have never been annotated.
    """
    if not new_annotations:
        return state
    for ann in new_annotations:
        if n_classes is not None and ann.class_id >= n_classes:
            raise ValueError(f"class id {ann.class_id} outside [0, {n_classes})")
        part = partitions[ann.scene_id]
        sv = int(part.assignment[ann.point_index])
        if sv in state.annotated_supervoxels.get(ann.scene_id, set()):
            raise ValueError(
                f"super-voxel {sv} of scene {ann.scene_id} is already annotated")
    annotations = state.annotations + list(new_annotations)
    true_labels = propagate(annotations, partitions)
    svs = {sid: set(s) for sid, s in state.annotated_supervoxels.items()}
    insts = {sid: set(s) for sid, s in state.annotated_instances.items()}
    for ann in new_annotations:
        sv = int(partitions[ann.scene_id].assignment[ann.point_index])
        svs.setdefault(ann.scene_id, set()).add(sv)
        if instances_by_scene is not None and ann.scene_id in instances_by_scene:
            inst = int(instances_by_scene[ann.scene_id][ann.point_index])
            insts.setdefault(ann.scene_id, set()).add(inst)
    return LabelState(annotations=annotations, true_labels=true_labels,
                      pseudo_labels=dict(state.pseudo_labels),
                      annotated_supervoxels=svs, annotated_instances=insts)


def with_pseudo(state: LabelState, pseudo: dict[str, LabelSet]) -> LabelState:
    """Replace the pseudo set wholesale (it is regenerated, never accumulated)."""
    return LabelState(annotations=list(state.annotations),
                      true_labels=dict(state.true_labels), pseudo_labels=dict(pseudo),
                      annotated_supervoxels={k: set(v) for k, v in
                                             state.annotated_supervoxels.items()},
                      annotated_instances={k: set(v) for k, v in
                                           state.annotated_instances.items()})


# ---------------------------------------------------------------------------
# Durability: append-only journal and JSON state snapshots
# ---------------------------------------------------------------------------


def append_journal(path: str | Path, annotations: list[Annotation]) -> None:
    """Append one JSON line per annotation and fsync before returning."""
    with open(path, "a", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(json.dumps(asdict(ann), sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_journal(path: str | Path) -> list[Annotation]:
    """Annotations in journal order, deduplicated by (iteration, scene, point)."""
    out: list[Annotation] = []
    seen = set()
    path = Path(path)
    if not path.exists():
        return out
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        rec = json.loads(line)
        key = (rec["iteration"], rec["scene_id"], rec["point_index"])
        if key in seen:
            continue
        seen.add(key)
        out.append(Annotation(**rec))
    return out


def replay_journal(path: str | Path, partitions: dict[str, Partition],
                   n_classes: int | None = None,
                   instances_by_scene: dict[str, np.ndarray] | None = None) -> LabelState:
    """Rebuild the label state from the journal, batch by iteration."""
    state = LabelState()
    annotations = read_journal(path)
    by_iteration: dict[int, list[Annotation]] = {}
    for ann in annotations:
        by_iteration.setdefault(ann.iteration, []).append(ann)
    for iteration in sorted(by_iteration):
        state = merge_annotations(state, by_iteration[iteration], partitions,
                                  n_classes=n_classes,
                                  instances_by_scene=instances_by_scene)
    return state


def _label_set_to_json(ls: LabelSet):
    idx, cls = ls
    return {"idx": np.asarray(idx).tolist(), "cls": np.asarray(cls).tolist()}


def _label_set_from_json(d) -> LabelSet:
    return (np.asarray(d["idx"], np.int64), np.asarray(d["cls"], np.int64))


def state_to_dict(state: LabelState) -> dict:
    return {
        "annotations": [asdict(a) for a in state.annotations],
        "true_labels": {k: _label_set_to_json(v) for k, v in state.true_labels.items()},
        "pseudo_labels": {k: _label_set_to_json(v) for k, v in state.pseudo_labels.items()},
        "annotated_supervoxels": {k: sorted(v) for k, v in
                                  state.annotated_supervoxels.items()},
        "annotated_instances": {k: sorted(v) for k, v in
                                state.annotated_instances.items()},
    }


def state_from_dict(data: dict) -> LabelState:
    return LabelState(
        annotations=[Annotation(**a) for a in data["annotations"]],
        true_labels={k: _label_set_from_json(v) for k, v in data["true_labels"].items()},
        pseudo_labels={k: _label_set_from_json(v) for k, v in data["pseudo_labels"].items()},
        annotated_supervoxels={k: set(v) for k, v in
                               data["annotated_supervoxels"].items()},
        annotated_instances={k: set(v) for k, v in
                             data["annotated_instances"].items()},
    )
