"""HTTP annotation service: connects a running experiment to the browser UI.

The service is the human-annotation path, so responses never carry ground
truth. Label submissions are journaled before they are acknowledged; all
mutations of one experiment are serialized behind a per-experiment lock.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import PlainTextResponse, Response

from .cloud import Cloud, cloud_to_bytes
from .ensemble import EnsembleSummary, summary_to_bytes
from .labels import Annotation, append_journal
from .pipeline import (ExperimentConfig, ExperimentState, SceneBundle,
                       ensure_summaries, load_dataset, metrics_to_csv,
                       prepare_dataset, start_experiment, submit_annotations)

HEATMAP_POINT_CAP = 200_000


@dataclass
class SessionRecord:
    experiment_id: str
    config: ExperimentConfig
    bundles: list[SceneBundle]
    state: ExperimentState
    journal_path: Path
    created: float = field(default_factory=time.time)
    updated: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)
    subsample: dict[str, np.ndarray] = field(default_factory=dict)
    phase: str | None = None  # externally visible "training" marker

    def bundle(self, scene_id: str) -> SceneBundle:
        for b in self.bundles:
            if b.scene_id == scene_id:
                return b
        raise KeyError(scene_id)


def _stratified_cap(partition, cap: int) -> np.ndarray | None:
    """Deterministic per-super-voxel subsample keeping at most cap points."""
    if partition.n <= cap:
        return None
    keep = []
    ratio = cap / partition.n
    for members in partition.members:
        take = max(1, int(round(members.size * ratio)))
        stride = max(1, members.size // take)
        keep.append(members[::stride][:take])
    return np.sort(np.concatenate(keep))


class ExperimentStore:
    """In-memory session registry; journals and checkpoints live under data_dir."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.records: dict[str, SessionRecord] = {}
        self._create_lock = threading.Lock()

    def create_from_config(self, config: ExperimentConfig) -> SessionRecord:
        if not config.dataset:
            raise ValueError("config has no dataset path")
        clouds = load_dataset(config.dataset)
        bundles = prepare_dataset(clouds, config)
        return self.create(config, bundles)

    def create(self, config: ExperimentConfig, bundles: list[SceneBundle]) -> SessionRecord:
        state = start_experiment(config, bundles)
        with self._create_lock:
            experiment_id = uuid.uuid4().hex[:12]
            journal = self.data_dir / experiment_id / "journal.jsonl"
            journal.parent.mkdir(parents=True, exist_ok=True)
            record = SessionRecord(experiment_id, config, bundles, state, journal)
            for b in bundles:
                cap = _stratified_cap(b.partition, HEATMAP_POINT_CAP)
                if cap is not None:
                    record.subsample[b.scene_id] = cap
            self.records[experiment_id] = record
        return record

    def get(self, experiment_id: str) -> SessionRecord:
        record = self.records.get(experiment_id)
        if record is None:
            raise HTTPException(status_code=404, detail="unknown experiment")
        return record


def _public_cloud(cloud: Cloud) -> Cloud:
    # ground truth never leaves the server in human mode
    return replace(cloud, gt_semantic=None, gt_instance=None)


def _uniform_summary(bundle: SceneBundle, n_classes: int) -> EnsembleSummary:
    n = bundle.cloud.n
    mean = np.full((n, n_classes), 1.0 / n_classes)
    zeros = np.zeros(n)
    return EnsembleSummary(mean, np.zeros(n, np.int64), zeros, mean[:, 0], 1, (0,))


def _status_payload(record: SessionRecord) -> dict:
    state = record.state
    return {
        "id": record.experiment_id,
        "iteration": state.iteration,
        "status": record.phase or state.status,
        "budget_used": state.budget_used,
        "total_iterations": state.k,
        "class_names": list(record.bundles[0].cloud.class_names or ()),
        "scenes": [b.scene_id for b in record.bundles],
    }


def create_app(store: ExperimentStore) -> FastAPI:
    app = FastAPI(title="activest annotation gateway")

    @app.get("/api/v1/experiments")
    def list_experiments():
        return [_status_payload(r) for r in store.records.values()]

    @app.post("/api/v1/experiments", status_code=201)
    async def create_experiment(request: Request):
        payload = await request.json()
        try:
            config = ExperimentConfig.from_json(payload)
            record = store.create_from_config(config)
        except (KeyError, ValueError, FileNotFoundError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from None
        return {"id": record.experiment_id}

    @app.get("/api/v1/experiments/{experiment_id}/status")
    def status(experiment_id: str):
        return _status_payload(store.get(experiment_id))

    @app.get("/api/v1/experiments/{experiment_id}/queries")
    def queries(experiment_id: str):
        record = store.get(experiment_id)
        state = record.state
        if state.pending is None:
            return {"iteration": state.iteration, "status": state.status, "queries": []}
        payload = state.pending.to_json()
        payload["status"] = state.status
        return payload

    @app.post("/api/v1/experiments/{experiment_id}/labels")
    def submit_labels(experiment_id: str, body: list[dict]):
        record = store.get(experiment_id)
        with record.lock:
            state = record.state
            if state.status == "done":
                raise HTTPException(status_code=409, detail="experiment is finished")
            if state.status != "awaiting-annotations" or state.pending is None:
                raise HTTPException(status_code=409, detail="no pending query set")
            pending = {(q.scene_id, q.point_index) for q in state.pending.queries}
            already = {(a.scene_id, a.point_index)
                       for a in state.label_state.annotations}
            submitted = set()
            n_classes = len(record.bundles[0].cloud.class_names or ())
            annotations = []
            for item in body:
                try:
                    key = (str(item["scene"]), int(item["point"]))
                    class_id = int(item["class_id"])
                except (KeyError, TypeError, ValueError):
                    raise HTTPException(status_code=422,
                                        detail="malformed label entry") from None
                if key in submitted:
                    raise HTTPException(status_code=422,
                                        detail=f"duplicate label for point {key[1]}")
                submitted.add(key)
                if not (0 <= class_id < n_classes):
                    raise HTTPException(status_code=422,
                                        detail=f"invalid class id {class_id}")
                if key not in pending:
                    if key in already:
                        raise HTTPException(status_code=409,
                                            detail="stale submission: point already labeled")
                    raise HTTPException(status_code=422,
                                        detail=f"point {key[1]} of scene {key[0]} is not pending")
                annotations.append(Annotation(key[0], key[1], class_id,
                                              iteration=state.pending.iteration,
                                              source="human"))
            if submitted != pending:
                missing = len(pending - submitted)
                raise HTTPException(status_code=422,
                                    detail=f"incomplete batch: {missing} queries unlabeled")
            # durability before acknowledgment
            append_journal(record.journal_path, annotations)
            record.phase = "training"
            try:
                ensure_summaries(record.state, record.config, record.bundles)
                record.state = submit_annotations(record.state, record.config,
                                                  record.bundles, annotations)
            finally:
                record.phase = None
            record.updated = time.time()
        return _status_payload(record)

    @app.get("/api/v1/experiments/{experiment_id}/scene/{scene_id}/cloud")
    def scene_cloud(experiment_id: str, scene_id: str):
        record = store.get(experiment_id)
        try:
            bundle = record.bundle(scene_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown scene") from None
        cloud = _public_cloud(bundle.cloud)
        keep = record.subsample.get(scene_id)
        if keep is not None:
            cloud = Cloud(cloud.positions[keep], cloud.colors[keep],
                          normals=None if cloud.normals is None else cloud.normals[keep],
                          class_names=cloud.class_names, scene_id=cloud.scene_id)
        return Response(content=cloud_to_bytes(cloud),
                        media_type="application/octet-stream")

    @app.get("/api/v1/experiments/{experiment_id}/scene/{scene_id}/heatmap")
    def scene_heatmap(experiment_id: str, scene_id: str):
        record = store.get(experiment_id)
        try:
            bundle = record.bundle(scene_id)
        except KeyError:
            raise HTTPException(status_code=404, detail="unknown scene") from None
        n_classes = len(bundle.cloud.class_names or ())
        with record.lock:
            ensure_summaries(record.state, record.config, record.bundles)
            summaries = record.state.summaries
        summary = (summaries or {}).get(scene_id)
        if summary is None:
            summary = _uniform_summary(bundle, max(n_classes, 1))
        keep = record.subsample.get(scene_id)
        if keep is not None:
            summary = EnsembleSummary(summary.mean_probs[keep], summary.top_class[keep],
                                      summary.uncertainty[keep], summary.confidence[keep],
                                      summary.k_versions, summary.seeds)
        return Response(content=summary_to_bytes(summary),
                        media_type="application/octet-stream")

    @app.get("/api/v1/experiments/{experiment_id}/metrics")
    def metrics(experiment_id: str):
        record = store.get(experiment_id)
        return PlainTextResponse(metrics_to_csv(record.state.metrics),
                                 media_type="text/csv")

    return app


def serve(config: ExperimentConfig, data_dir: str | Path, host: str = "127.0.0.1",
          port: int = 8787) -> None:
    """Start the annotation service with one experiment preloaded."""
    import uvicorn

    store = ExperimentStore(data_dir)
    record = store.create_from_config(config)
    print(f"experiment {record.experiment_id} awaiting annotations "
          f"({len(record.state.pending or [])} queries)")
    app = create_app(store)
    uvicorn.run(app, host=host, port=port, log_level="warning")
