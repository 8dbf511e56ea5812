"""Point-cloud data model, file I/O, normal estimation, and augmentation.

Two on-disk formats are supported: a fixed-dialect ASCII PLY and the compact
``ASTC1`` binary table (bit-exact round trips, used for streaming to the UI).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels

_ASTC_MAGIC = b"ASTC1"
_FLAG_NORMALS = 1
_FLAG_SEMANTIC = 2
_FLAG_INSTANCE = 4

UP_AXIS = np.array([0.0, 0.0, 1.0])


class FormatError(ValueError):
    """A cloud file violated its declared format."""


@dataclass(frozen=True)
class Cloud:
    """Immutable point set with colors and optional normals / ground truth.

    All per-point arrays share length N; positions are meters, colors lie in
    [0, 1]^3, normals are unit length. Arrays are float32/int32 so the binary
    format round-trips bit-exactly.
    """

    positions: np.ndarray
    colors: np.ndarray
    normals: np.ndarray | None = None
    gt_semantic: np.ndarray | None = None
    gt_instance: np.ndarray | None = None
    class_names: tuple[str, ...] | None = None
    scene_id: str = ""

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float32)
        col = np.ascontiguousarray(self.colors, dtype=np.float32)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (N, 3), got {pos.shape}")
        n = pos.shape[0]
        if n < 1:
            raise ValueError("a cloud needs at least one point")
        if col.shape != (n, 3):
            raise ValueError(f"colors must be ({n}, 3), got {col.shape}")
        if np.any(col < 0.0) or np.any(col > 1.0):
            bad = int(np.argmax(np.any((col < 0.0) | (col > 1.0), axis=1)))
            raise ValueError(f"color out of [0, 1] at point {bad}")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "colors", col)
        if self.normals is not None:
            nrm = np.ascontiguousarray(self.normals, dtype=np.float32)
            if nrm.shape != (n, 3):
                raise ValueError(f"normals must be ({n}, 3), got {nrm.shape}")
            norms = np.linalg.norm(nrm.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-6):
                bad = int(np.argmax(np.abs(norms - 1.0)))
                raise ValueError(f"normal at point {bad} is not unit length")
            object.__setattr__(self, "normals", nrm)
        for name in ("gt_semantic", "gt_instance"):
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.ascontiguousarray(arr, dtype=np.int32)
            if arr.shape != (n,):
                raise ValueError(f"{name} must be ({n},), got {arr.shape}")
            object.__setattr__(self, name, arr)
        if self.class_names is not None:
            object.__setattr__(self, "class_names", tuple(self.class_names))
            if self.gt_semantic is not None:
                c = len(self.class_names)
                if np.any(self.gt_semantic < 0) or np.any(self.gt_semantic >= c):
                    bad = int(np.argmax((self.gt_semantic < 0) | (self.gt_semantic >= c)))
                    raise ValueError(f"semantic id out of range [0, {c}) at point {bad}")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def n_classes(self) -> int | None:
        return None if self.class_names is None else len(self.class_names)


@dataclass(frozen=True)
class AugmentParams:
    """Index-preserving augmentation recipe: rotate -> scale -> jitter.

    Point count and order never change, so per-point predictions stay aligned
    across augmented versions of the same cloud.
    """

    rotation: str = "up-axis"  # "none" or "up-axis" (uniform angle about +z)
    scale_range: tuple[float, float] = (0.9, 1.1)
    jitter_sigma: float = 0.005
    jitter_clip: float = 0.02
    color_jitter: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.rotation not in ("none", "up-axis"):
            raise ValueError(f"unknown rotation mode {self.rotation!r}")
        lo, hi = self.scale_range
        if not (0.0 < lo <= hi):
            raise ValueError(f"scale_range must satisfy 0 < lo <= hi, got {self.scale_range}")
        if self.jitter_sigma < 0 or self.jitter_clip < 0 or self.color_jitter < 0:
            raise ValueError("jitter magnitudes must be non-negative")

    @classmethod
    def identity(cls, seed: int = 0) -> "AugmentParams":
        return cls(rotation="none", scale_range=(1.0, 1.0), jitter_sigma=0.0,
                   jitter_clip=0.0, color_jitter=0.0, seed=seed)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

_PLY_REQUIRED = ("x", "y", "z", "red", "green", "blue")
_PLY_OPTIONAL = ("nx", "ny", "nz", "semantic", "instance")


def load_cloud(path: str | Path, fmt: str | None = None) -> Cloud:
    """Load a cloud from ``ply-ascii`` or ``table-binary``; sniffs when fmt is None."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    if fmt is None:
        with open(path, "rb") as fh:
            head = fh.read(5)
        fmt = "table-binary" if head == _ASTC_MAGIC else "ply-ascii"
    if fmt == "ply-ascii":
        return _load_ply(path)
    if fmt == "table-binary":
        return _load_table(path)
    raise ValueError(f"unknown format {fmt!r}")


def save_cloud(cloud: Cloud, path: str | Path, fmt: str = "table-binary") -> None:
    if str(path) == "":
        raise ValueError("empty output path")
    path = Path(path)
    if fmt == "ply-ascii":
        _save_ply(cloud, path)
    elif fmt == "table-binary":
        _save_table(cloud, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _load_ply(path: Path) -> Cloud:
    with open(path, "r", encoding="ascii", errors="replace") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError("line 1: not a PLY file (missing 'ply' magic)")
    n_vertices = None
    properties: list[str] = []
    body_start = None
    for ln, raw in enumerate(lines[1:], start=2):
        tokens = raw.split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            if tokens[1:] != ["ascii", "1.0"]:
                raise FormatError(f"line {ln}: unsupported format {' '.join(tokens[1:])!r}")
        elif tokens[0] == "element":
            if tokens[1] != "vertex":
                raise FormatError(f"line {ln}: unsupported element {tokens[1]!r}")
            n_vertices = int(tokens[2])
        elif tokens[0] == "property":
            if len(tokens) != 3:
                raise FormatError(f"line {ln}: malformed property line")
            properties.append(tokens[2])
        elif tokens[0] == "end_header":
            body_start = ln
            break
        else:
            raise FormatError(f"line {ln}: unexpected header token {tokens[0]!r}")
    if body_start is None:
        raise FormatError("missing end_header")
    if n_vertices is None:
        raise FormatError("missing 'element vertex' declaration")
    for name in _PLY_REQUIRED:
        if name not in properties:
            raise FormatError(f"missing property {name!r}")
    for name in properties:
        if name not in _PLY_REQUIRED + _PLY_OPTIONAL:
            raise FormatError(f"unsupported property {name!r}")
    col_of = {name: i for i, name in enumerate(properties)}

    body = lines[body_start:]
    if len(body) < n_vertices:
        raise FormatError(
            f"truncated payload: expected {n_vertices} vertices, found {len(body)}"
        )
    rows = np.empty((n_vertices, len(properties)), dtype=np.float64)
    for i in range(n_vertices):
        parts = body[i].split()
        if len(parts) != len(properties):
            raise FormatError(
                f"line {body_start + i + 1}: expected {len(properties)} values, got {len(parts)}"
            )
        try:
            rows[i] = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"line {body_start + i + 1}: non-numeric value") from None

    positions = rows[:, [col_of["x"], col_of["y"], col_of["z"]]].astype(np.float32)
    raw_rgb = rows[:, [col_of["red"], col_of["green"], col_of["blue"]]]
    if np.any(raw_rgb < 0) or np.any(raw_rgb > 255):
        bad = int(np.argmax(np.any((raw_rgb < 0) | (raw_rgb > 255), axis=1)))
        raise FormatError(f"line {body_start + bad + 1}: color out of [0, 255]")
    colors = (raw_rgb / 255.0).astype(np.float32)
    normals = None
    if all(k in col_of for k in ("nx", "ny", "nz")):
        normals = rows[:, [col_of["nx"], col_of["ny"], col_of["nz"]]].astype(np.float32)
    semantic = rows[:, col_of["semantic"]].astype(np.int32) if "semantic" in col_of else None
    instance = rows[:, col_of["instance"]].astype(np.int32) if "instance" in col_of else None
    try:
        return Cloud(positions, colors, normals=normals, gt_semantic=semantic,
                     gt_instance=instance, scene_id=path.stem)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def _save_ply(cloud: Cloud, path: Path) -> None:
    props = ["property float x", "property float y", "property float z",
             "property uchar red", "property uchar green", "property uchar blue"]
    cols = [cloud.positions.astype(np.float64)]
    if cloud.normals is not None:
        props += ["property float nx", "property float ny", "property float nz"]
    if cloud.gt_semantic is not None:
        props.append("property int semantic")
    if cloud.gt_instance is not None:
        props.append("property int instance")
    header = "\n".join(
        ["ply", "format ascii 1.0", f"element vertex {cloud.n}", *props, "end_header"]
    )
    rgb = np.rint(cloud.colors.astype(np.float64) * 255.0).astype(np.int64)
    with open(path, "w", encoding="ascii") as fh:
        fh.write(header + "\n")
        for i in range(cloud.n):
            parts = [f"{v:.6f}" for v in cloud.positions[i]]
            parts += [str(int(v)) for v in rgb[i]]
            if cloud.normals is not None:
                parts += [f"{v:.6f}" for v in cloud.normals[i]]
            if cloud.gt_semantic is not None:
                parts.append(str(int(cloud.gt_semantic[i])))
            if cloud.gt_instance is not None:
                parts.append(str(int(cloud.gt_instance[i])))
            fh.write(" ".join(parts) + "\n")


def cloud_to_bytes(cloud: Cloud) -> bytes:
    """Serialize to the ASTC1 table: header, then contiguous per-field arrays."""
    flags = 0
    if cloud.normals is not None:
        flags |= _FLAG_NORMALS
    if cloud.gt_semantic is not None:
        flags |= _FLAG_SEMANTIC
    if cloud.gt_instance is not None:
        flags |= _FLAG_INSTANCE
    c = len(cloud.class_names) if cloud.class_names is not None else 0
    blob = [_ASTC_MAGIC, struct.pack("<IIB", cloud.n, c, flags)]
    blob.append(np.ascontiguousarray(cloud.positions, dtype="<f4").tobytes())
    blob.append(np.ascontiguousarray(cloud.colors, dtype="<f4").tobytes())
    if cloud.normals is not None:
        blob.append(np.ascontiguousarray(cloud.normals, dtype="<f4").tobytes())
    if cloud.gt_semantic is not None:
        blob.append(np.ascontiguousarray(cloud.gt_semantic, dtype="<i4").tobytes())
    if cloud.gt_instance is not None:
        blob.append(np.ascontiguousarray(cloud.gt_instance, dtype="<i4").tobytes())
    return b"".join(blob)


def cloud_from_bytes(data: bytes, scene_id: str = "") -> Cloud:
    if data[:5] != _ASTC_MAGIC:
        raise FormatError("byte 0: bad magic, expected ASTC1")
    if len(data) < 5 + 9:
        raise FormatError(f"byte {len(data)}: truncated header")
    n, c, flags = struct.unpack_from("<IIB", data, 5)
    offset = 5 + 9

    def take(count: int, dtype: str, field: str) -> np.ndarray:
        nonlocal offset
        nbytes = count * 4
        if offset + nbytes > len(data):
            raise FormatError(f"byte {offset}: truncated {field} payload")
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
        offset += nbytes
        return arr

    positions = take(n * 3, "<f4", "positions").reshape(n, 3)
    colors = take(n * 3, "<f4", "colors").reshape(n, 3)
    normals = take(n * 3, "<f4", "normals").reshape(n, 3) if flags & _FLAG_NORMALS else None
    semantic = take(n, "<i4", "semantic") if flags & _FLAG_SEMANTIC else None
    instance = take(n, "<i4", "instance") if flags & _FLAG_INSTANCE else None
    if offset != len(data):
        raise FormatError(f"byte {offset}: {len(data) - offset} trailing bytes")
    if semantic is not None and c > 0 and (np.any(semantic < 0) or np.any(semantic >= c)):
        bad = int(np.argmax((semantic < 0) | (semantic >= c)))
        raise FormatError(f"semantic id out of range [0, {c}) at point {bad}")
    try:
        return Cloud(positions.copy(), colors.copy(),
                     normals=None if normals is None else normals.copy(),
                     gt_semantic=None if semantic is None else semantic.copy(),
                     gt_instance=None if instance is None else instance.copy(),
                     scene_id=scene_id)
    except ValueError as exc:
        raise FormatError(str(exc)) from None


def _save_table(cloud: Cloud, path: Path) -> None:
    path.write_bytes(cloud_to_bytes(cloud))


def _load_table(path: Path) -> Cloud:
    return cloud_from_bytes(path.read_bytes(), scene_id=path.stem)


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


def knn_indices(positions: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k nearest neighbors (self included) as (indices, distances), -1 padded."""
    pos = np.ascontiguousarray(positions, dtype=np.float64)
    n = pos.shape[0]
    k_eff = min(k, n)
    tree = cKDTree(pos)
    dist, idx = tree.query(pos, k=k_eff)
    if k_eff == 1:
        dist = dist[:, None]
        idx = idx[:, None]
    if k_eff < k:
        pad_i = np.full((n, k - k_eff), -1, dtype=np.int64)
        pad_d = np.full((n, k - k_eff), np.inf)
        idx = np.hstack([idx.astype(np.int64), pad_i])
        dist = np.hstack([dist, pad_d])
    return np.ascontiguousarray(idx, dtype=np.int64), np.ascontiguousarray(dist)


def estimate_normals(cloud: Cloud, k_neighbors: int = 16) -> Cloud:
    """Per-point normals: smallest-eigenvalue direction of the k-NN covariance.

    Sign is fixed to the +z half-space; an exact tie (or a fully degenerate
    neighborhood) falls back to +z itself.
    """
    if not (3 <= k_neighbors <= cloud.n):
        raise ValueError(f"need 3 <= k_neighbors <= N, got k={k_neighbors}, N={cloud.n}")
    idx, _ = knn_indices(cloud.positions, k_neighbors)
    cov = _kernels.local_covariances(cloud.positions.astype(np.float64), idx)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]  # eigvalsh ascending -> column 0 is the smallest
    degenerate = np.einsum("nii->n", cov) <= 1e-18
    dz = normals[:, 2]
    normals = np.where((dz < 0.0)[:, None], -normals, normals)
    tie = (dz == 0.0) | degenerate
    normals[tie] = UP_AXIS
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return replace(cloud, normals=normals.astype(np.float32))


def augment(cloud: Cloud, params: AugmentParams) -> Cloud:
    """Randomized but seed-deterministic transform preserving point order."""
    rng = np.random.default_rng(params.seed)
    pos = cloud.positions.astype(np.float64)
    normals = cloud.normals
    if params.rotation == "up-axis":
        angle = rng.uniform(0.0, 2.0 * np.pi)
        c, s = np.cos(angle), np.sin(angle)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        pos = pos @ rot.T
        if normals is not None:
            rotated = normals.astype(np.float64) @ rot.T
            rotated /= np.linalg.norm(rotated, axis=1, keepdims=True)
            normals = rotated.astype(np.float32)
    scale = rng.uniform(params.scale_range[0], params.scale_range[1])
    pos = pos * scale
    if params.jitter_sigma > 0:
        jitter = rng.normal(0.0, params.jitter_sigma, size=pos.shape)
        if params.jitter_clip > 0:
            np.clip(jitter, -params.jitter_clip, params.jitter_clip, out=jitter)
        pos = pos + jitter
    colors = cloud.colors
    if params.color_jitter > 0:
        deltas = rng.uniform(-params.color_jitter, params.color_jitter, size=colors.shape)
        colors = np.clip(colors.astype(np.float64) + deltas, 0.0, 1.0).astype(np.float32)
    return Cloud(pos.astype(np.float32), colors, normals=normals,
                 gt_semantic=cloud.gt_semantic, gt_instance=cloud.gt_instance,
                 class_names=cloud.class_names, scene_id=cloud.scene_id)
