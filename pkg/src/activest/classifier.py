"""Per-point classifier: geometric features, an MLP, and its training loop.

The loss is a two-term softmax cross-entropy: a mean over human-propagated
labels plus lambda times a mean over pseudo-labels. Gradients are analytic and
checked against finite differences in the test suite.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .cloud import Cloud, knn_indices

PROB_FLOOR = 1e-12
N_FEATURES = 13

# (point indices, class ids) for one scene; both 1-d int arrays of equal length
LabelSet = tuple[np.ndarray, np.ndarray]

EMPTY_SET: LabelSet = (np.empty(0, np.int64), np.empty(0, np.int64))


@dataclass(frozen=True)
class TrainSchedule:
    steps: int = 3000
    base_lr: float = 0.1
    lr_power: float = 0.9
    batch_points: int = 512
    loss_weight: float = 0.5  # lambda of the pseudo-label term

    def __post_init__(self):
        if self.steps < 0 or self.base_lr <= 0 or self.batch_points < 1:
            raise ValueError("invalid schedule")
        if not (0.0 <= self.loss_weight <= 1.0):
            raise ValueError("loss_weight must lie in [0, 1]")

    def lr_at(self, step: int) -> float:
        return self.base_lr * (1.0 - step / self.steps) ** self.lr_power


@dataclass
class Model:
    """Feed-forward net: ReLU hidden layers, softmax output, float64 params."""

    widths: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    init_seed: int

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    @property
    def n_classes(self) -> int:
        return self.widths[-1]

    def copy(self) -> "Model":
        return Model(self.widths, [w.copy() for w in self.weights],
                     [b.copy() for b in self.biases], self.init_seed)


def init_model(seed: int, widths: tuple[int, ...]) -> Model:
    """He-uniform weights, zero biases; bit-identical for equal seeds."""
    widths = tuple(int(w) for w in widths)
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"invalid layer widths {widths}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Model(widths, weights, biases, int(seed))


def featurize(cloud: Cloud, k_neighbors: int = 16,
              neighbors: np.ndarray | None = None) -> np.ndarray:
    """13-d per-point features.

    Normalized position (3), color (3), normal (3), height above the lowest
    point (1), and the k-NN covariance shape descriptors linearity/planarity/
    scattering (3). Pass precomputed ``neighbors`` to reuse one k-NN graph
    across augmented versions of the same cloud.
    """
    if cloud.normals is None:
        raise ValueError("cloud has no normals; run estimate_normals first")
    pos = cloud.positions.astype(np.float64)
    if neighbors is None:
        neighbors, _ = knn_indices(pos, min(k_neighbors, cloud.n))
    desc = _kernels.shape_descriptors(pos, neighbors)
    centroid = pos.mean(axis=0)
    extent = max(float(np.ptp(pos, axis=0).max()), 1e-12)
    npos = (pos - centroid) / extent
    height = pos[:, 2] - pos[:, 2].min()
    feats = np.concatenate([
        npos,
        cloud.colors.astype(np.float64),
        cloud.normals.astype(np.float64),
        height[:, None],
        desc,
    ], axis=1)
    return feats


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _forward_parts(model: Model, x: np.ndarray):
    if x.shape[1] != model.widths[0]:
        raise ValueError(f"features have {x.shape[1]} columns, model expects {model.widths[0]}")
    acts = [x]
    zs = []
    a = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w + b
        if i < last:
            zs.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        else:
            logits = z
    return _softmax(logits), acts, zs


def forward(model: Model, features: np.ndarray) -> np.ndarray:
    """Row-stochastic class probabilities, one row per point."""
    probs, _, _ = _forward_parts(model, np.asarray(features, dtype=np.float64))
    return probs


def _as_set(label_set: LabelSet | None) -> LabelSet:
    if label_set is None:
        return EMPTY_SET
    idx, cls = label_set
    return np.asarray(idx, dtype=np.int64).ravel(), np.asarray(cls, dtype=np.int64).ravel()


def _check_sets(n: int, c: int, true_set: LabelSet, pseudo_set: LabelSet):
    t_idx, t_cls = true_set
    p_idx, p_cls = pseudo_set
    if t_idx.size == 0:
        raise ValueError("true label set is empty")
    for idx, cls, name in ((t_idx, t_cls, "true"), (p_idx, p_cls, "pseudo")):
        if idx.size != cls.size:
            raise ValueError(f"{name} set indices and classes differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise ValueError(f"{name} set has a point index outside [0, {n})")
        if cls.size and (cls.min() < 0 or cls.max() >= c):
            raise ValueError(f"{name} set has a class id outside [0, {c})")
    if p_idx.size and np.intersect1d(t_idx, p_idx).size:
        raise ValueError("true and pseudo sets overlap")


def loss(probs: np.ndarray, true_set: LabelSet, pseudo_set: LabelSet | None,
         lam: float) -> float:
    """Two-term cross-entropy; the pseudo term vanishes when the set is empty."""
    probs = np.asarray(probs)
    true_set = _as_set(true_set)
    pseudo_set = _as_set(pseudo_set)
    _check_sets(probs.shape[0], probs.shape[1], true_set, pseudo_set)
    t_idx, t_cls = true_set
    p_idx, p_cls = pseudo_set
    value = float(np.mean(-np.log(np.maximum(probs[t_idx, t_cls], PROB_FLOOR))))
    if p_idx.size:
        value += lam * float(np.mean(-np.log(np.maximum(probs[p_idx, p_cls], PROB_FLOOR))))
    return value


def _set_grad_rows(probs, rows_cls, weight_each):
    """d(loss)/d(logits) rows for one label set, respecting the prob floor."""
    picked = probs[np.arange(probs.shape[0]), rows_cls]
    w_eff = np.where(picked > PROB_FLOOR, weight_each, 0.0)
    g = probs * w_eff[:, None]
    g[np.arange(probs.shape[0]), rows_cls] -= w_eff
    return g


def _loss_and_grads(model, features, true_set, pseudo_set, lam):
    t_idx, t_cls = true_set
    p_idx, p_cls = pseudo_set
    rows = np.concatenate([t_idx, p_idx])
    cls = np.concatenate([t_cls, p_cls])
    x = features[rows]
    probs, acts, zs = _forward_parts(model, x)

    picked = np.maximum(probs[np.arange(rows.size), cls], PROB_FLOOR)
    n_t, n_p = t_idx.size, p_idx.size
    loss_val = float(np.mean(-np.log(picked[:n_t]))) if n_t else 0.0
    weight = np.empty(rows.size)
    weight[:n_t] = 1.0 / n_t if n_t else 0.0
    if n_p:
        loss_val += lam * float(np.mean(-np.log(picked[n_t:])))
        weight[n_t:] = lam / n_p
    dlogits = _set_grad_rows(probs, cls, weight)

    n_layers = len(model.weights)
    d_w = [None] * n_layers
    d_b = [None] * n_layers
    d = dlogits
    for i in reversed(range(n_layers)):
        d_w[i] = acts[i].T @ d
        d_b[i] = d.sum(axis=0)
        if i > 0:
            d = (d @ model.weights[i].T) * (zs[i - 1] > 0)
    return loss_val, d_w, d_b


def grad(model: Model, features: np.ndarray, true_set: LabelSet,
         pseudo_set: LabelSet | None, lam: float):
    """Analytic gradient of ``loss`` in model shape: (d_weights, d_biases)."""
    features = np.asarray(features, dtype=np.float64)
    true_set = _as_set(true_set)
    pseudo_set = _as_set(pseudo_set)
    _check_sets(features.shape[0], model.n_classes, true_set, pseudo_set)
    _, d_w, d_b = _loss_and_grads(model, features, true_set, pseudo_set, lam)
    return d_w, d_b


def train(model: Model, features_by_scene: dict[str, np.ndarray],
          true_by_scene: dict[str, LabelSet], pseudo_by_scene: dict[str, LabelSet],
          schedule: TrainSchedule, seed: int):
    """SGD over mini-batches drawn uniformly from the labeled points.

    Batches mix true and pseudo points; the lambda weighting lives in the loss.
    Returns (trained model, per-step loss curve). Deterministic given the seed.
    """
    blocks_x, blocks_y, blocks_t = [], [], []
    for sid in sorted(features_by_scene):
        feats = np.asarray(features_by_scene[sid], dtype=np.float64)
        t_idx, t_cls = _as_set(true_by_scene.get(sid))
        p_idx, p_cls = _as_set(pseudo_by_scene.get(sid))
        if t_idx.size:
            blocks_x.append(feats[t_idx])
            blocks_y.append(t_cls)
            blocks_t.append(np.ones(t_idx.size, bool))
        if p_idx.size:
            blocks_x.append(feats[p_idx])
            blocks_y.append(p_cls)
            blocks_t.append(np.zeros(p_idx.size, bool))
    if not blocks_x or not any(b.any() for b in blocks_t):
        raise ValueError("no true labels anywhere in the dataset")
    x_all = np.vstack(blocks_x)
    y_all = np.concatenate(blocks_y)
    is_true = np.concatenate(blocks_t)

    out = model.copy()
    if schedule.steps == 0:
        return out, np.empty(0)
    rng = np.random.default_rng(seed)
    m = x_all.shape[0]
    batch = min(schedule.batch_points, m)
    losses = np.empty(schedule.steps)
    order = np.arange(batch)
    for step in range(schedule.steps):
        pick = rng.integers(0, m, size=batch)
        bt = is_true[pick]
        t_rows = order[bt]
        p_rows = order[~bt]
        loss_val, d_w, d_b = _loss_and_grads(
            out, x_all[pick],
            (t_rows, y_all[pick][bt]),
            (p_rows, y_all[pick][~bt]),
            schedule.loss_weight,
        )
        lr = schedule.lr_at(step)
        for i in range(len(out.weights)):
            out.weights[i] -= lr * d_w[i]
            out.biases[i] -= lr * d_b[i]
        losses[step] = loss_val
    return out, losses


# ---------------------------------------------------------------------------
# Checkpoint formats
# ---------------------------------------------------------------------------

_ASTM_MAGIC = b"ASTM1"


def model_to_bytes(model: Model) -> bytes:
    """ASTM1 container (float32 parameters; use npz state for exact resume)."""
    blob = [_ASTM_MAGIC, struct.pack("<I", len(model.widths))]
    blob.append(np.asarray(model.widths, dtype="<u4").tobytes())
    blob.append(struct.pack("<Q", model.init_seed & (2**64 - 1)))
    for w, b in zip(model.weights, model.biases):
        blob.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        blob.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(blob)


def model_from_bytes(data: bytes) -> Model:
    if data[:5] != _ASTM_MAGIC:
        raise ValueError("bad magic, expected ASTM1")
    (n_widths,) = struct.unpack_from("<I", data, 5)
    offset = 9
    widths = tuple(int(v) for v in np.frombuffer(data, "<u4", n_widths, offset))
    offset += 4 * n_widths
    (init_seed,) = struct.unpack_from("<Q", data, offset)
    offset += 8
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = np.frombuffer(data, "<f4", fan_in * fan_out, offset).astype(np.float64)
        offset += 4 * fan_in * fan_out
        b = np.frombuffer(data, "<f4", fan_out, offset).astype(np.float64)
        offset += 4 * fan_out
        weights.append(w.reshape(fan_in, fan_out))
        biases.append(b)
    if offset != len(data):
        raise ValueError(f"{len(data) - offset} trailing bytes in model file")
    return Model(widths, weights, biases, int(init_seed))


def save_model(model: Model, path: str | Path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_model(path: str | Path) -> Model:
    return model_from_bytes(Path(path).read_bytes())


def model_state(model: Model) -> dict[str, np.ndarray]:
    """Full-precision state for experiment checkpoints (exact round trip)."""
    state = {"widths": np.asarray(model.widths, np.int64),
             "init_seed": np.asarray([model.init_seed], np.uint64)}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        state[f"w{i}"] = w
        state[f"b{i}"] = b
    return state


def model_from_state(state) -> Model:
    widths = tuple(int(v) for v in state["widths"])
    n_layers = len(widths) - 1
    return Model(widths,
                 [np.asarray(state[f"w{i}"], np.float64) for i in range(n_layers)],
                 [np.asarray(state[f"b{i}"], np.float64) for i in range(n_layers)],
                 int(state["init_seed"][0]))
