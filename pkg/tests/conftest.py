import numpy as np
import pytest

from activest.cloud import Cloud, estimate_normals
from activest.synth import SceneSpec, generate_synthetic_scene


def random_cloud(rng: np.random.Generator, n: int, with_normals: bool = False,
                 n_classes: int = 0) -> Cloud:
    """A legal random cloud for property tests (positions in a 2 m box)."""
    cloud = Cloud(
        positions=rng.uniform(-1.0, 1.0, (n, 3)).astype(np.float32),
        colors=rng.random((n, 3)).astype(np.float32),
        gt_semantic=rng.integers(0, n_classes, n).astype(np.int32) if n_classes else None,
        class_names=tuple(f"c{i}" for i in range(n_classes)) if n_classes else None,
        scene_id="random",
    )
    if with_normals:
        cloud = estimate_normals(cloud, k_neighbors=min(8, n))
    return cloud


@pytest.fixture(scope="session")
def small_scene() -> Cloud:
    spec = SceneSpec(extent=(5.0, 5.0, 2.7), object_counts=(1, 2, 1, 2, 1, 1),
                     points_per_object=120, floor_points=900, wall_points=350)
    cloud = generate_synthetic_scene(spec, seed=42, scene_id="small")
    return estimate_normals(cloud, k_neighbors=10)
