"""Experiment driver: the iterative annotate / propagate / pseudo-label /
reinitialize / retrain loop, voting inference, oracle annotator, checkpoints.

One round = receive the pending annotations, propagate them, regenerate
pseudo-labels from the previous round's ensemble, train a freshly initialized
model on both sets, then publish the next query set. All randomness is derived
from (seed, round) so any round can be resumed bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from ._seeds import (AUGMENT_STREAM, INIT_STREAM, SAMPLE_STREAM, SCENE_STREAM,
                     TRAIN_STREAM, derive_seed)
from .classifier import (N_FEATURES, Model, TrainSchedule, featurize, forward,
                         init_model, model_from_state, model_state, train)
from .cloud import AugmentParams, Cloud, estimate_normals, knn_indices, load_cloud, save_cloud
from .ensemble import EnsembleSummary, predict_ensemble
from .labels import (Annotation, LabelState, generate_pseudo, merge_annotations,
                     state_from_dict, state_to_dict, tau_schedule, with_pseudo)
from .metrics import ConfusionMatrix, add_confusion, confusion, miou
from .sampler import (Budget, Query, QuerySet, allocate, final_sweep_1t1c,
                      select_1t1c, select_random, select_uncertain,
                      select_uncertain_pooled, _draw_index)
from .supervoxel import Partition, SegmentParams, refine_by_instance, segment

class ChecksumError(ValueError):
    """A checkpoint file does not match its recorded content hash."""


@dataclass(frozen=True)
class Seeds:
    master: int = 1
    init: int = 2
    sampling: int = 3


@dataclass(frozen=True)
class ExperimentConfig:
    budget: Budget
    k_versions: int = 5
    loss_lambda: float = 0.5
    schedule: TrainSchedule = field(default_factory=TrainSchedule)
    selection: str = "uncertainty-weighted"
    use_pseudo: bool = True
    use_voting: bool = True
    mode: str = "data-efficient"
    seeds: Seeds = field(default_factory=Seeds)
    augment: AugmentParams = field(default_factory=AugmentParams)
    segment_params: SegmentParams = field(default_factory=SegmentParams)
    feature_k: int = 16
    hidden: tuple[int, ...] = (64, 64)
    eval_k: int = 1
    m_per_scene_1t1c: int = 6
    inner_rounds: int = 1
    ensemble_precision: str = "float32"
    dataset: str | None = None

    def __post_init__(self):
        if self.mode not in ("data-efficient", "1t1c"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "1t1c" and self.selection != "1t1c":
            object.__setattr__(self, "selection", "1t1c")
        if self.selection not in ("uncertainty-weighted", "top-m", "random", "1t1c"):
            raise ValueError(f"unknown selection strategy {self.selection!r}")
        if self.k_versions < 1 or self.eval_k < 1 or self.inner_rounds < 1:
            raise ValueError("k_versions, eval_k and inner_rounds must be >= 1")
        if not (0.0 <= self.loss_lambda <= 1.0):
            raise ValueError("loss_lambda must lie in [0, 1]")
        if self.ensemble_precision not in ("float32", "float64"):
            raise ValueError(f"unknown ensemble precision {self.ensemble_precision!r}")

    @property
    def k(self) -> int:
        return self.budget.iterations_k

    def to_json(self) -> dict:
        return {
            "budget": {"total_n": self.budget.total_n, "iterations_k": self.budget.iterations_k,
                       "allocation": self.budget.allocation, "scenes_s": self.budget.scenes_s},
            "k_versions": self.k_versions,
            "loss_lambda": self.loss_lambda,
            "schedule": {"steps": self.schedule.steps, "base_lr": self.schedule.base_lr,
                         "lr_power": self.schedule.lr_power,
                         "batch_points": self.schedule.batch_points},
            "selection": self.selection,
            "use_pseudo": self.use_pseudo,
            "use_voting": self.use_voting,
            "mode": self.mode,
            "seeds": {"master": self.seeds.master, "init": self.seeds.init,
                      "sampling": self.seeds.sampling},
            "augment": {"rotation": self.augment.rotation,
                        "scale_range": list(self.augment.scale_range),
                        "jitter_sigma": self.augment.jitter_sigma,
                        "jitter_clip": self.augment.jitter_clip,
                        "color_jitter": self.augment.color_jitter},
            "segment": {"k_neighbors": self.segment_params.k_neighbors,
                        "normal_angle_max": self.segment_params.normal_angle_max,
                        "color_dist_max": self.segment_params.color_dist_max,
                        "spatial_dist_max": self.segment_params.spatial_dist_max,
                        "min_sv_size": self.segment_params.min_sv_size},
            "feature_k": self.feature_k,
            "hidden": list(self.hidden),
            "eval_k": self.eval_k,
            "m_per_scene_1t1c": self.m_per_scene_1t1c,
            "inner_rounds": self.inner_rounds,
            "ensemble_precision": self.ensemble_precision,
            "dataset": self.dataset,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ExperimentConfig":
        b = data["budget"]
        kwargs = dict(
            budget=Budget(int(b["total_n"]), int(b["iterations_k"]),
                          b.get("allocation", "per-scene"), int(b.get("scenes_s", 1))),
            k_versions=int(data.get("k_versions", 5)),
            loss_lambda=float(data.get("loss_lambda", 0.5)),
            selection=data.get("selection", "uncertainty-weighted"),
            use_pseudo=bool(data.get("use_pseudo", True)),
            use_voting=bool(data.get("use_voting", True)),
            mode=data.get("mode", "data-efficient"),
            feature_k=int(data.get("feature_k", 16)),
            hidden=tuple(data.get("hidden", (64, 64))),
            eval_k=int(data.get("eval_k", 1)),
            m_per_scene_1t1c=int(data.get("m_per_scene_1t1c", 6)),
            inner_rounds=int(data.get("inner_rounds", 1)),
            ensemble_precision=data.get("ensemble_precision", "float32"),
            dataset=data.get("dataset"),
        )
        if "schedule" in data:
            s = data["schedule"]
            kwargs["schedule"] = TrainSchedule(
                steps=int(s.get("steps", 3000)), base_lr=float(s.get("base_lr", 0.1)),
                lr_power=float(s.get("lr_power", 0.9)),
                batch_points=int(s.get("batch_points", 512)))
        if "seeds" in data:
            s = data["seeds"]
            kwargs["seeds"] = Seeds(int(s.get("master", 1)), int(s.get("init", 2)),
                                    int(s.get("sampling", 3)))
        if "augment" in data:
            a = data["augment"]
            kwargs["augment"] = AugmentParams(
                rotation=a.get("rotation", "up-axis"),
                scale_range=tuple(a.get("scale_range", (0.9, 1.1))),
                jitter_sigma=float(a.get("jitter_sigma", 0.005)),
                jitter_clip=float(a.get("jitter_clip", 0.02)),
                color_jitter=float(a.get("color_jitter", 0.05)))
        if "segment" in data:
            g = data["segment"]
            kwargs["segment_params"] = SegmentParams(
                k_neighbors=int(g.get("k_neighbors", 16)),
                normal_angle_max=float(g.get("normal_angle_max", 15.0)),
                color_dist_max=float(g.get("color_dist_max", 0.2)),
                spatial_dist_max=float(g.get("spatial_dist_max", 0.05)),
                min_sv_size=int(g.get("min_sv_size", 10)))
        return cls(**kwargs)


@dataclass(frozen=True)
class SceneBundle:
    """Everything iteration-invariant about one scene, computed once."""

    scene_id: str
    cloud: Cloud
    partition: Partition
    features: np.ndarray
    neighbors: np.ndarray


@dataclass(frozen=True)
class MetricRow:
    iteration: int
    miou: float
    labeled_true: int
    labeled_pseudo: int
    mean_loss: float


@dataclass
class ExperimentState:
    k: int
    iteration: int = 0
    status: str = "awaiting-annotations"
    label_state: LabelState = field(default_factory=LabelState)
    model: Model | None = None
    pending: QuerySet | None = None
    metrics: list[MetricRow] = field(default_factory=list)
    summaries: dict[str, EnsembleSummary] | None = None  # transient, recomputable

    @property
    def budget_used(self) -> int:
        return self.label_state.n_annotations


# ---------------------------------------------------------------------------
# Dataset plumbing
# ---------------------------------------------------------------------------


def save_dataset(clouds: list[Cloud], out_dir: str | Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = []
    for cloud in clouds:
        name = f"{cloud.scene_id}.astc"
        save_cloud(cloud, out_dir / name, fmt="table-binary")
        names.append(name)
    manifest = {"format": "table-binary", "scenes": names,
                "class_names": list(clouds[0].class_names or [])}
    (out_dir / "dataset.json").write_text(json.dumps(manifest, indent=2))
    return out_dir / "dataset.json"


def load_dataset(manifest_path: str | Path) -> list[Cloud]:
    manifest_path = Path(manifest_path)
    manifest = json.loads(manifest_path.read_text())
    class_names = tuple(manifest.get("class_names") or ()) or None
    clouds = []
    for name in manifest["scenes"]:
        cloud = load_cloud(manifest_path.parent / name, fmt=manifest.get("format"))
        if class_names and cloud.class_names is None:
            cloud = replace(cloud, class_names=class_names)
        clouds.append(cloud)
    return clouds


def prepare_scene(cloud: Cloud, config: ExperimentConfig,
                  partition: Partition | None = None) -> SceneBundle:
    if cloud.normals is None:
        cloud = estimate_normals(cloud, k_neighbors=config.feature_k)
    if partition is None:
        partition = segment(cloud, config.segment_params)
    if config.mode == "1t1c":
        if cloud.gt_instance is None:
            raise ValueError("one-click-per-object mode needs instance labels")
        partition = refine_by_instance(partition, cloud.gt_instance)
    neighbors, _ = knn_indices(cloud.positions, min(config.feature_k, cloud.n))
    features = featurize(cloud, k_neighbors=config.feature_k, neighbors=neighbors)
    return SceneBundle(cloud.scene_id, cloud, partition, features, neighbors)


def prepare_dataset(clouds: list[Cloud], config: ExperimentConfig,
                    partitions: dict[str, Partition] | None = None) -> list[SceneBundle]:
    if len(clouds) != config.budget.scenes_s:
        raise ValueError(
            f"budget covers {config.budget.scenes_s} scenes, dataset has {len(clouds)}")
    names = {c.class_names for c in clouds}
    if len(names) != 1 or None in names:
        raise ValueError("all scenes must share one class_names list")
    return [prepare_scene(c, config, (partitions or {}).get(c.scene_id)) for c in clouds]


def _n_classes(bundles: list[SceneBundle]) -> int:
    return len(bundles[0].cloud.class_names)


def _widths(config: ExperimentConfig, bundles: list[SceneBundle]) -> tuple[int, ...]:
    return (N_FEATURES, *config.hidden, _n_classes(bundles))


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------


def vote_labels(mean_probs: np.ndarray, partition: Partition) -> np.ndarray:
    """Average probabilities inside each super-voxel; every member gets the argmax."""
    sums = _kernels.segment_sums(np.ascontiguousarray(mean_probs, np.float64),
                                 partition.assignment, partition.s)
    sv_class = np.argmax(sums / partition.sizes[:, None], axis=1)
    return sv_class[partition.assignment]


def infer_vote(model: Model, cloud: Cloud, partition: Partition,
               aug_params: AugmentParams, k_versions: int, seed: int,
               neighbors: np.ndarray | None = None, feature_k: int = 16) -> np.ndarray:
    """Ensemble-mean probabilities followed by super-voxel voting."""
    if partition.n != cloud.n:
        raise ValueError(f"partition covers {partition.n} points, cloud has {cloud.n}")
    summary = predict_ensemble(model, cloud, aug_params, k_versions, seed,
                               neighbors=neighbors, feature_k=feature_k)
    return vote_labels(summary.mean_probs, partition)


def _predict_scene(config: ExperimentConfig, bundle: SceneBundle, model: Model,
                   round_idx: int) -> np.ndarray:
    # eval_k == 1 is a plain single pass on the unaugmented scene
    if config.eval_k == 1:
        probs = forward(model, bundle.features)
    else:
        summary = predict_ensemble(
            model, bundle.cloud, AugmentParams.identity(), config.eval_k,
            derive_seed(config.seeds.master, SCENE_STREAM, 9999, round_idx),
            neighbors=bundle.neighbors, feature_k=config.feature_k)
        probs = summary.mean_probs
    if config.use_voting:
        return vote_labels(probs, bundle.partition)
    return np.argmax(probs, axis=1)


def evaluate_miou(config: ExperimentConfig, bundles: list[SceneBundle],
                  model: Model, round_idx: int) -> float:
    total: ConfusionMatrix | None = None
    c = _n_classes(bundles)
    for bundle in bundles:
        if bundle.cloud.gt_semantic is None:
            continue
        pred = _predict_scene(config, bundle, model, round_idx)
        cm = confusion(pred, bundle.cloud.gt_semantic, c)
        total = cm if total is None else add_confusion(total, cm)
    if total is None:
        return float("nan")
    return miou(total)[1]


def oracle_annotate(queries: QuerySet, clouds: dict[str, Cloud]) -> list[Annotation]:
    """Answer every query with the ground-truth class of its point."""
    out = []
    for q in queries.queries:
        cloud = clouds[q.scene_id]
        if cloud.gt_semantic is None:
            raise ValueError(f"scene {q.scene_id} has no ground truth to consult")
        out.append(Annotation(q.scene_id, q.point_index,
                              int(cloud.gt_semantic[q.point_index]),
                              iteration=queries.iteration, source="oracle"))
    return out


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------


def _compute_summaries(config: ExperimentConfig, bundles: list[SceneBundle],
                       model: Model, round_idx: int) -> dict[str, EnsembleSummary]:
    out = {}
    for i, bundle in enumerate(bundles):
        seed = derive_seed(config.seeds.master, SCENE_STREAM, round_idx, i)
        out[bundle.scene_id] = predict_ensemble(
            model, bundle.cloud, config.augment, config.k_versions, seed,
            neighbors=bundle.neighbors, feature_k=config.feature_k,
            precision=config.ensemble_precision)
    return out


def _select_random_pooled(bundles: list[SceneBundle], label_state: LabelState,
                          m: int, seed: int) -> list[Query]:
    pool = []
    for bundle in bundles:
        used = label_state.annotated_supervoxels.get(bundle.scene_id, set())
        pool.extend((bundle.scene_id, sv) for sv in range(bundle.partition.s)
                    if sv not in used)
    if m > len(pool):
        raise ValueError(f"only {len(pool)} unannotated super-voxels, need {m}")
    parts = {b.scene_id: b.partition for b in bundles}
    rng = np.random.default_rng(seed)
    queries = []
    for _ in range(m):
        pos = _draw_index(np.ones(len(pool)), rng.random())
        sid, sv = pool.pop(pos)
        members = parts[sid].members[sv]
        point = int(members[rng.integers(members.size)]) if members.size > 1 else int(members[0])
        queries.append(Query(sid, point))
    return queries


def _select_queries(config: ExperimentConfig, bundles: list[SceneBundle],
                    label_state: LabelState,
                    summaries: dict[str, EnsembleSummary] | None,
                    next_round: int, strategy: str | None = None) -> QuerySet:
    strategy = strategy or config.selection
    queries: list[Query] = []
    if config.mode == "1t1c":
        for i, bundle in enumerate(bundles):
            summary = summaries[bundle.scene_id]
            insts = label_state.annotated_instances.get(bundle.scene_id, set())
            svs = label_state.annotated_supervoxels.get(bundle.scene_id, set())
            if next_round < config.k:
                qs = select_1t1c(summary, bundle.cloud.gt_instance, insts,
                                 config.m_per_scene_1t1c, annotated_supervoxels=svs,
                                 partition=bundle.partition, scene_id=bundle.scene_id)
            else:
                qs = final_sweep_1t1c(summary, bundle.cloud.gt_instance, insts,
                                      scene_id=bundle.scene_id)
            queries.extend(qs.queries)
        return QuerySet(tuple(queries), iteration=next_round, strategy="1t1c")

    alloc = allocate(config.budget, next_round)
    if strategy == "random":
        if alloc.mode == "per-scene":
            for i, bundle in enumerate(bundles):
                m = alloc.per_scene[i]
                if m == 0:
                    continue
                used = label_state.annotated_supervoxels.get(bundle.scene_id, set())
                seed = derive_seed(config.seeds.sampling, SAMPLE_STREAM, next_round, i)
                qs = select_random(bundle.cloud, bundle.partition, m, seed,
                                   annotated_supervoxels=used)
                queries.extend(qs.queries)
        else:
            seed = derive_seed(config.seeds.sampling, SAMPLE_STREAM, next_round)
            queries = _select_random_pooled(bundles, label_state, alloc.total, seed)
        return QuerySet(tuple(queries), iteration=next_round, strategy="random")

    if alloc.mode == "per-scene":
        for i, bundle in enumerate(bundles):
            m = alloc.per_scene[i]
            if m == 0:
                continue
            used = label_state.annotated_supervoxels.get(bundle.scene_id, set())
            seed = derive_seed(config.seeds.sampling, SAMPLE_STREAM, next_round, i)
            qs = select_uncertain(summaries[bundle.scene_id], bundle.partition, used,
                                  m, strategy, seed, scene_id=bundle.scene_id)
            queries.extend(qs.queries)
    else:
        seed = derive_seed(config.seeds.sampling, SAMPLE_STREAM, next_round)
        qs = select_uncertain_pooled(
            summaries, {b.scene_id: b.partition for b in bundles},
            label_state.annotated_supervoxels, alloc.total, strategy, seed)
        queries = list(qs.queries)
    return QuerySet(tuple(queries), iteration=next_round, strategy=strategy)


def start_experiment(config: ExperimentConfig,
                     bundles: list[SceneBundle]) -> ExperimentState:
    """Publish the first query set (random in budget mode, object-aware in 1t1c)."""
    state = ExperimentState(k=config.k)
    if config.mode == "1t1c":
        model0 = init_model(derive_seed(config.seeds.init, INIT_STREAM, 0),
                            _widths(config, bundles))
        summaries = _compute_summaries(config, bundles, model0, 0)
        pending = _select_queries(config, bundles, state.label_state, summaries, 1)
        state.summaries = summaries
    else:
        # the very first batch is always a random sample: no model exists yet
        pending = _select_queries(config, bundles, state.label_state, None, 1,
                                  strategy="random")
    state.pending = pending
    return state


def submit_annotations(state: ExperimentState, config: ExperimentConfig,
                       bundles: list[SceneBundle],
                       annotations: list[Annotation]) -> ExperimentState:
    """Run one full round against the pending query set; returns the new state."""
    if state.status != "awaiting-annotations" or state.pending is None:
        raise ValueError(f"experiment is not awaiting annotations (status {state.status})")
    round_idx = state.iteration + 1
    expected = {(q.scene_id, q.point_index) for q in state.pending.queries}
    got = {(a.scene_id, a.point_index) for a in annotations}
    if got != expected:
        raise ValueError("annotations do not match the pending query set")
    partitions = {b.scene_id: b.partition for b in bundles}
    instances = {b.scene_id: b.cloud.gt_instance for b in bundles
                 if b.cloud.gt_instance is not None}
    c = _n_classes(bundles)
    label_state = merge_annotations(state.label_state, list(annotations), partitions,
                                    n_classes=c, instances_by_scene=instances)

    features = {b.scene_id: b.features for b in bundles}
    schedule = replace(config.schedule, loss_weight=config.loss_lambda)
    model: Model | None = None
    losses = np.empty(0)
    summaries = state.summaries
    for inner in range(config.inner_rounds):
        # the pseudo set is empty in the very first round: no prior ensemble
        have_prior = summaries is not None and (round_idx >= 2 or inner > 0)
        if config.use_pseudo and have_prior:
            tau = tau_schedule(round_idx, config.k)
            pseudo = {}
            for bundle in bundles:
                t_idx, _ = label_state.true_for(bundle.scene_id)
                pseudo[bundle.scene_id] = generate_pseudo(
                    summaries[bundle.scene_id], tau, t_idx)
            label_state = with_pseudo(label_state, pseudo)
        else:
            label_state = with_pseudo(label_state, {})
        # self-training hinges on retraining a *fresh* network each round
        model = init_model(derive_seed(config.seeds.init, INIT_STREAM, round_idx, inner),
                           _widths(config, bundles))
        model, losses = train(model, features, label_state.true_labels,
                              label_state.pseudo_labels, schedule,
                              derive_seed(config.seeds.master, TRAIN_STREAM,
                                          round_idx, inner))
        if inner + 1 < config.inner_rounds:
            summaries = _compute_summaries(config, bundles, model, round_idx)

    score = evaluate_miou(config, bundles, model, round_idx)
    row = MetricRow(iteration=round_idx, miou=score,
                    labeled_true=label_state.n_true,
                    labeled_pseudo=label_state.n_pseudo,
                    mean_loss=float(losses.mean()) if losses.size else 0.0)
    new_state = ExperimentState(k=state.k, iteration=round_idx,
                                label_state=label_state, model=model,
                                metrics=state.metrics + [row])
    if round_idx < config.k:
        summaries = _compute_summaries(config, bundles, model, round_idx)
        new_state.summaries = summaries
        new_state.pending = _select_queries(config, bundles, label_state,
                                            summaries, round_idx + 1)
        new_state.status = "awaiting-annotations"
    else:
        new_state.status = "done"
    return new_state


def ensure_summaries(state: ExperimentState, config: ExperimentConfig,
                     bundles: list[SceneBundle]) -> None:
    """Recompute the transient ensembles after a resume (deterministic redo)."""
    if state.summaries is None and state.model is not None and state.status != "done":
        state.summaries = _compute_summaries(config, bundles, state.model,
                                             state.iteration)


def run_experiment(config: ExperimentConfig, annotator,
                   bundles: list[SceneBundle],
                   out_dir: str | Path | None = None):
    """Drive the whole loop with a callback annotator; returns (model, metrics).

    The callback receives each pending QuerySet and must return matching
    annotations (see oracle_annotate).
    """
    state = start_experiment(config, bundles)
    if out_dir is not None:
        checkpoint(state, out_dir, config)
    while state.status != "done":
        annotations = annotator(state.pending)
        state = submit_annotations(state, config, bundles, annotations)
        if out_dir is not None:
            checkpoint(state, out_dir, config)
    if out_dir is not None:
        (Path(out_dir) / "metrics.csv").write_text(metrics_to_csv(state.metrics))
    return state.model, state.metrics


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def metrics_to_csv(rows: list[MetricRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "miou", "labeled_true", "labeled_pseudo", "mean_loss"])
    for r in rows:
        writer.writerow([r.iteration, repr(r.miou), r.labeled_true,
                         r.labeled_pseudo, repr(r.mean_loss)])
    return buf.getvalue()


def metrics_from_csv(text: str) -> list[MetricRow]:
    rows = []
    reader = csv.DictReader(io.StringIO(text))
    for rec in reader:
        rows.append(MetricRow(int(rec["iteration"]), float(rec["miou"]),
                              int(rec["labeled_true"]), int(rec["labeled_pseudo"]),
                              float(rec["mean_loss"])))
    return rows


def checkpoint(state: ExperimentState, out_dir: str | Path,
               config: ExperimentConfig) -> None:
    """Write a resumable snapshot; every file is covered by a content hash."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "k": state.k,
        "iteration": state.iteration,
        "status": state.status,
        "label_state": state_to_dict(state.label_state),
        "pending": None if state.pending is None else state.pending.to_json(),
        "metrics": [[r.iteration, r.miou, r.labeled_true, r.labeled_pseudo, r.mean_loss]
                    for r in state.metrics],
        "config": config.to_json(),
    }
    (out_dir / "state.json").write_text(json.dumps(payload))
    files = ["state.json"]
    if state.model is not None:
        with open(out_dir / "model.npz", "wb") as fh:
            np.savez(fh, **model_state(state.model))
        files.append("model.npz")
    manifest = {name: hashlib.sha256((out_dir / name).read_bytes()).hexdigest()
                for name in files}
    (out_dir / "manifest.json").write_text(json.dumps(manifest))


def resume(out_dir: str | Path):
    """Load a checkpoint; raises ChecksumError on any tampered file."""
    out_dir = Path(out_dir)
    manifest_path = out_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no checkpoint manifest in {out_dir}")
    manifest = json.loads(manifest_path.read_text())
    for name, digest in manifest.items():
        path = out_dir / name
        if not path.exists():
            raise FileNotFoundError(f"checkpoint file {name} is missing")
        if hashlib.sha256(path.read_bytes()).hexdigest() != digest:
            raise ChecksumError(f"checkpoint file {name} does not match its hash")
    payload = json.loads((out_dir / "state.json").read_text())
    config = ExperimentConfig.from_json(payload["config"])
    state = ExperimentState(
        k=int(payload["k"]), iteration=int(payload["iteration"]),
        status=payload["status"],
        label_state=state_from_dict(payload["label_state"]),
        pending=None if payload["pending"] is None
        else QuerySet.from_json(payload["pending"]),
        metrics=[MetricRow(int(a), float(b), int(c), int(d), float(e))
                 for a, b, c, d, e in payload["metrics"]],
    )
    if "model.npz" in manifest:
        with np.load(out_dir / "model.npz") as data:
            state.model = model_from_state(data)
    return config, state
