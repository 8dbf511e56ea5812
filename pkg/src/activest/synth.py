"""Procedural desk-scale room scenes with per-point semantic/instance labels."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cloud import Cloud

DEFAULT_CLASSES = ("floor", "wall", "table", "chair", "cabinet", "lamp")

# Base color and box/cylinder size ranges per default class. wall/cabinet and
# table/chair are deliberately close in color so geometry has to disambiguate.
_STYLES = {
    "floor": {"color": (0.45, 0.40, 0.34)},
    "wall": {"color": (0.72, 0.71, 0.68)},
    "table": {"color": (0.52, 0.36, 0.22), "shape": "box",
              "size": ((0.8, 1.2), (0.6, 0.9), (0.62, 0.78))},
    "chair": {"color": (0.42, 0.31, 0.24), "shape": "box",
              "size": ((0.38, 0.52), (0.38, 0.52), (0.78, 0.95))},
    "cabinet": {"color": (0.66, 0.655, 0.60), "shape": "box",
                "size": ((0.5, 0.9), (0.3, 0.45), (1.5, 2.1))},
    "lamp": {"color": (0.85, 0.76, 0.38), "shape": "cylinder",
             "size": ((0.10, 0.16), (1.2, 1.6))},
}

_FALLBACK_SHAPES = ("box", "cylinder")

# clearance so distinct surfaces never sit inside one another's spatial
# neighborhood: keeps the over-segmentation from bridging objects
_WALL_MARGIN = 0.35
_OBJECT_GAP = 0.30
_PLACEMENT_TRIES = 500
_CONTACT_GAP = 0.15  # vertical surfaces start above the floor plane (creases occlude)


@dataclass(frozen=True)
class SceneSpec:
    """Room recipe: extent in meters, entity counts per class, sampling budget."""

    extent: tuple[float, float, float] = (7.0, 7.0, 2.7)
    class_names: tuple[str, ...] = DEFAULT_CLASSES
    object_counts: tuple[int, ...] = (1, 4, 2, 4, 2, 2)
    points_per_object: int = 180
    floor_points: int = 2600
    wall_points: int = 700
    noise: float = 0.008
    color_shade: float = 0.06
    color_noise: float = 0.03
    # floor tiles / wall panels: alternating shades bound the size of the
    # homogeneous regions the over-segmentation can grow
    tile_size: float = 1.1
    tile_contrast: float = 0.18

    def __post_init__(self):
        if len(self.class_names) < 2:
            raise ValueError("need at least 2 classes")
        if len(self.object_counts) != len(self.class_names):
            raise ValueError("object_counts must align with class_names")
        if sum(self.object_counts) < 1:
            raise ValueError("need at least one object")
        if self.object_counts[0] > 1 or self.object_counts[1] > 4:
            raise ValueError("at most 1 floor and 4 walls")


def _style_for(class_index: int, name: str) -> dict:
    if name in _STYLES:
        return _STYLES[name]
    # deterministic style for extra classes: hue wheel + alternating shapes
    hue = (class_index * 0.381966) % 1.0
    color = (0.35 + 0.5 * hue, 0.35 + 0.5 * ((hue + 0.33) % 1.0), 0.35 + 0.5 * ((hue + 0.66) % 1.0))
    shape = _FALLBACK_SHAPES[class_index % 2]
    size = ((0.4, 0.9), (0.4, 0.9), (0.5, 1.4)) if shape == "box" else ((0.1, 0.25), (0.8, 1.6))
    return {"color": color, "shape": shape, "size": size}


def _sample_rect(rng, n, origin, u_vec, v_vec):
    uu = rng.random(n)[:, None]
    vv = rng.random(n)[:, None]
    return np.asarray(origin) + uu * np.asarray(u_vec) + vv * np.asarray(v_vec)


def _sample_box(rng, n, center, size):
    """Points on the five visible faces (top + 4 sides), area weighted."""
    w, d, h = size
    cx, cy, _ = center
    faces = [
        (w * d, "top"), (w * h, "front"), (w * h, "back"), (d * h, "left"), (d * h, "right"),
    ]
    areas = np.array([a for a, _ in faces])
    counts = rng.multinomial(n, areas / areas.sum())
    chunks = []
    for (_, which), m in zip(faces, counts):
        if m == 0:
            continue
        u = rng.random(m)
        v = rng.random(m)
        zs = _CONTACT_GAP + v * (h - _CONTACT_GAP)
        if which == "top":
            pts = np.column_stack([cx - w / 2 + u * w, cy - d / 2 + v * d, np.full(m, h)])
        elif which == "front":
            pts = np.column_stack([cx - w / 2 + u * w, np.full(m, cy - d / 2), zs])
        elif which == "back":
            pts = np.column_stack([cx - w / 2 + u * w, np.full(m, cy + d / 2), zs])
        elif which == "left":
            pts = np.column_stack([np.full(m, cx - w / 2), cy - d / 2 + u * d, zs])
        else:
            pts = np.column_stack([np.full(m, cx + w / 2), cy - d / 2 + u * d, zs])
        chunks.append(pts)
    return np.vstack(chunks)


def _sample_cylinder(rng, n, center, radius, height):
    cx, cy, _ = center
    side_area = 2 * np.pi * radius * height
    cap_area = np.pi * radius * radius
    n_cap = int(round(n * cap_area / (side_area + cap_area)))
    n_side = n - n_cap
    theta = rng.uniform(0, 2 * np.pi, n_side)
    z = rng.uniform(_CONTACT_GAP, height, n_side)
    side = np.column_stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta), z])
    if n_cap > 0:
        r = radius * np.sqrt(rng.random(n_cap))
        phi = rng.uniform(0, 2 * np.pi, n_cap)
        cap = np.column_stack([cx + r * np.cos(phi), cy + r * np.sin(phi), np.full(n_cap, height)])
        return np.vstack([side, cap])
    return side


def generate_synthetic_scene(spec: SceneSpec, seed: int, scene_id: str = "scene") -> Cloud:
    """Deterministic room: floor/wall planes plus boxes and cylinders.

    Every entity gets its own instance id (surfaces included); semantics follow
    spec.class_names order.
    """
    rng = np.random.default_rng(seed)
    ex, ey, ez = spec.extent
    chunks, semantics, instances, shades = [], [], [], []
    instance_id = 0

    def add(points, class_id):
        nonlocal instance_id
        chunks.append(points)
        semantics.append(np.full(len(points), class_id, np.int32))
        instances.append(np.full(len(points), instance_id, np.int32))
        shades.append(rng.uniform(-spec.color_shade, spec.color_shade))
        instance_id += 1

    if spec.object_counts[0] > 0:
        add(_sample_rect(rng, spec.floor_points, (0, 0, 0), (ex, 0, 0), (0, ey, 0)), 0)
    wall_defs = [
        ((0, 0, _CONTACT_GAP), (ex, 0, 0), (0, 0, ez - _CONTACT_GAP)),
        ((0, ey, _CONTACT_GAP), (ex, 0, 0), (0, 0, ez - _CONTACT_GAP)),
        ((0, 0, _CONTACT_GAP), (0, ey, 0), (0, 0, ez - _CONTACT_GAP)),
        ((ex, 0, _CONTACT_GAP), (0, ey, 0), (0, 0, ez - _CONTACT_GAP)),
    ]
    for w in range(spec.object_counts[1]):
        origin, u, v = wall_defs[w]
        add(_sample_rect(rng, spec.wall_points, origin, u, v), 1)

    placed: list[tuple[float, float, float]] = []  # (cx, cy, footprint radius)

    def place(footprint: float, class_name: str) -> tuple[float, float]:
        lo_x = footprint + _WALL_MARGIN
        hi_x = ex - footprint - _WALL_MARGIN
        lo_y = footprint + _WALL_MARGIN
        hi_y = ey - footprint - _WALL_MARGIN
        if lo_x >= hi_x or lo_y >= hi_y:
            raise ValueError(f"object of class {class_name!r} does not fit the room")
        for _ in range(_PLACEMENT_TRIES):
            cx = rng.uniform(lo_x, hi_x)
            cy = rng.uniform(lo_y, hi_y)
            if all(np.hypot(cx - px, cy - py) >= footprint + pr + _OBJECT_GAP
                   for px, py, pr in placed):
                placed.append((cx, cy, footprint))
                return cx, cy
        raise ValueError(f"could not place an object of class {class_name!r}: room too full")

    for class_id in range(2, len(spec.class_names)):
        style = _style_for(class_id, spec.class_names[class_id])
        name = spec.class_names[class_id]
        for _ in range(spec.object_counts[class_id]):
            if style["shape"] == "box":
                (w_lo, w_hi), (d_lo, d_hi), (h_lo, h_hi) = style["size"]
                size = (rng.uniform(w_lo, w_hi), rng.uniform(d_lo, d_hi), rng.uniform(h_lo, h_hi))
                if size[2] >= ez:
                    raise ValueError(f"object of class {name!r} does not fit the room")
                cx, cy = place(float(np.hypot(size[0], size[1]) / 2), name)
                pts = _sample_box(rng, spec.points_per_object, (cx, cy, 0), size)
            else:
                (r_lo, r_hi), (h_lo, h_hi) = style["size"]
                radius, height = rng.uniform(r_lo, r_hi), rng.uniform(h_lo, h_hi)
                if height >= ez:
                    raise ValueError(f"object of class {name!r} does not fit the room")
                cx, cy = place(radius, name)
                pts = _sample_cylinder(rng, spec.points_per_object, (cx, cy, 0), radius, height)
            add(pts, class_id)

    positions = np.vstack(chunks)
    semantic = np.concatenate(semantics)
    instance = np.concatenate(instances)

    palette = np.array([_style_for(i, name)["color"] for i, name in enumerate(spec.class_names)])
    colors = palette[semantic]
    colors = colors + np.asarray(shades)[instance][:, None]
    if spec.tile_contrast > 0 and spec.tile_size > 0:
        # checkerboard shading on floor and walls (before positional noise, so
        # tile borders are crisp)
        surface = semantic <= 1
        grid_u = np.where(semantic == 0, positions[:, 0], positions[:, 0] + positions[:, 1])
        grid_v = np.where(semantic == 0, positions[:, 1], positions[:, 2])
        parity = (np.floor(grid_u / spec.tile_size) + np.floor(grid_v / spec.tile_size)) % 2
        colors = colors + np.where(surface, (parity - 0.5) * spec.tile_contrast, 0.0)[:, None]
    if spec.noise > 0:
        positions = positions + rng.normal(0.0, spec.noise, positions.shape)
    if spec.color_noise > 0:
        colors = colors + rng.normal(0.0, spec.color_noise, colors.shape)
    colors = np.clip(colors, 0.0, 1.0)

    return Cloud(positions.astype(np.float32), colors.astype(np.float32),
                 gt_semantic=semantic, gt_instance=instance,
                 class_names=spec.class_names, scene_id=scene_id)


def make_synthetic_dataset(n_scenes: int, seed: int, spec: SceneSpec | None = None,
                           vary_counts: bool = True) -> list[Cloud]:
    """A list of scenes; object counts are re-drawn per scene when vary_counts."""
    base = spec or SceneSpec()
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(n_scenes):
        counts = list(base.object_counts)
        if vary_counts:
            for ci in range(2, len(counts)):
                lo = max(1, counts[ci] - 1)
                counts[ci] = int(rng.integers(lo, counts[ci] + 2))
        spec_i = replace(base, object_counts=tuple(counts))
        scenes.append(generate_synthetic_scene(spec_i, seed=int(rng.integers(2**62)),
                                               scene_id=f"scene{i:03d}"))
    return scenes
