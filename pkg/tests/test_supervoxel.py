import numpy as np
import pytest

from activest.cloud import Cloud, estimate_normals, knn_indices
from activest.supervoxel import (Partition, PartitionError, SegmentParams,
                                 load_partition, refine_by_instance,
                                 save_partition, segment)

from conftest import random_cloud


def two_plane_cloud(n_per_plane=200, gap=1.0, seed=0):
    rng = np.random.default_rng(seed)
    a = np.column_stack([rng.uniform(0, 1, n_per_plane),
                         rng.uniform(0, 1, n_per_plane), np.zeros(n_per_plane)])
    b = a.copy()
    b[:, 2] = gap
    pos = np.vstack([a, b])
    cloud = Cloud(pos, np.full((2 * n_per_plane, 3), 0.5))
    return estimate_normals(cloud, k_neighbors=8)


def assert_total_partition(partition: Partition, n: int):
    assert partition.n == n
    assert partition.assignment.min() >= 0
    assert len(partition.members) == partition.s
    seen = np.concatenate(partition.members)
    assert len(seen) == n and len(np.unique(seen)) == n
    assert all(m.size > 0 for m in partition.members)


def assert_connected(partition: Partition, positions, k):
    neighbors, _ = knn_indices(positions, k)
    n = positions.shape[0]
    adj = [set() for _ in range(n)]
    for i in range(n):
        for j in neighbors[i]:
            if j >= 0 and j != i:
                adj[i].add(int(j))
                adj[int(j)].add(i)
    for members in partition.members:
        member_set = set(members.tolist())
        stack = [members[0]]
        seen = {int(members[0])}
        while stack:
            i = stack.pop()
            for j in adj[int(i)]:
                if j in member_set and j not in seen:
                    seen.add(j)
                    stack.append(j)
        assert seen == member_set


class TestSegment:
    def test_two_planes_two_supervoxels(self):
        cloud = two_plane_cloud()
        params = SegmentParams(k_neighbors=8, normal_angle_max=15,
                               color_dist_max=0.2, spatial_dist_max=0.1,
                               min_sv_size=10)
        part = segment(cloud, params)
        assert part.s == 2
        assert_total_partition(part, cloud.n)
        # each super-voxel is exactly one plane
        z = cloud.positions[:, 2]
        for members in part.members:
            assert len(np.unique(np.round(z[members]))) == 1

    def test_single_point(self):
        cloud = Cloud(np.zeros((1, 3)), np.full((1, 3), 0.5),
                      normals=np.array([[0, 0, 1.0]]))
        part = segment(cloud, SegmentParams(min_sv_size=1))
        assert part.s == 1 and part.members[0].tolist() == [0]

    def test_vacuous_thresholds_single_region(self):
        # a chain of points: connected under the k-NN graph by construction
        pos = np.column_stack([np.linspace(0, 5, 120), np.zeros(120), np.zeros(120)])
        rng = np.random.default_rng(1)
        cloud = Cloud(pos, rng.random((120, 3)).astype(np.float32))
        cloud = estimate_normals(cloud, k_neighbors=4)
        params = SegmentParams(k_neighbors=4, normal_angle_max=180.0,
                               color_dist_max=1e9, spatial_dist_max=1e9,
                               min_sv_size=1)
        part = segment(cloud, params)
        assert part.s == 1

    def test_missing_normals_rejected(self):
        rng = np.random.default_rng(2)
        with pytest.raises(ValueError, match="normals"):
            segment(random_cloud(rng, 20), SegmentParams())

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        cloud = random_cloud(rng, 200, with_normals=True)
        params = SegmentParams(k_neighbors=8, normal_angle_max=25,
                               color_dist_max=0.3, spatial_dist_max=0.2,
                               min_sv_size=5)
        a = segment(cloud, params)
        b = segment(cloud, params)
        np.testing.assert_array_equal(a.assignment, b.assignment)
        assert a.params_digest == b.params_digest

    @pytest.mark.parametrize("seed", range(5))
    def test_random_clouds_total_and_connected(self, seed):
        rng = np.random.default_rng(seed)
        cloud = random_cloud(rng, 120, with_normals=True)
        params = SegmentParams(k_neighbors=8, normal_angle_max=30,
                               color_dist_max=0.3, spatial_dist_max=0.4,
                               min_sv_size=4)
        part = segment(cloud, params)
        assert_total_partition(part, cloud.n)
        assert_connected(part, cloud.positions.astype(np.float64), 8)

    @pytest.mark.parametrize("seed", range(5))
    def test_halving_thresholds_never_decreases_s(self, seed):
        rng = np.random.default_rng(100 + seed)
        cloud = random_cloud(rng, 150, with_normals=True)
        loose = SegmentParams(k_neighbors=8, normal_angle_max=40,
                              color_dist_max=0.4, spatial_dist_max=0.4,
                              min_sv_size=1)
        tight = SegmentParams(k_neighbors=8, normal_angle_max=20,
                              color_dist_max=0.2, spatial_dist_max=0.2,
                              min_sv_size=1)
        assert segment(cloud, tight).s >= segment(cloud, loose).s


class TestPartitionIO:
    def test_roundtrip(self, tmp_path):
        part = Partition(np.array([0, 0, 1, 2, 1]), params_digest="abc")
        path = tmp_path / "p.json"
        save_partition(part, path)
        back = load_partition(path, expected_n=5)
        np.testing.assert_array_equal(back.assignment, part.assignment)
        assert back.params_digest == "abc"
        assert back.s == 3

    def test_double_assignment_names_point(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"n": 6, "s": 2, "members": [[0, 1, 5], [2, 3, 4, 5]]}')
        with pytest.raises(PartitionError, match="point 5 assigned twice"):
            load_partition(path)

    def test_gap_names_point(self, tmp_path):
        path = tmp_path / "gap.json"
        path.write_text('{"n": 4, "s": 2, "members": [[0, 1], [3]]}')
        with pytest.raises(PartitionError, match="point 2"):
            load_partition(path)

    def test_single_supervoxel_file_is_valid(self, tmp_path):
        path = tmp_path / "one.json"
        path.write_text('{"n": 3, "s": 1, "assignment": [0, 0, 0]}')
        part = load_partition(path, expected_n=3)
        assert part.s == 1

    def test_declared_s_mismatch(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text('{"n": 3, "s": 5, "assignment": [0, 0, 1]}')
        with pytest.raises(PartitionError, match="declared"):
            load_partition(path)

    def test_empty_supervoxel_rejected(self):
        with pytest.raises(PartitionError, match="empty"):
            Partition(np.array([0, 2, 2]))


def test_refine_by_instance_splits_mixed_supervoxels():
    part = Partition(np.array([0, 0, 0, 1, 1]))
    inst = np.array([7, 7, 8, 8, 8])
    refined = refine_by_instance(part, inst)
    assert refined.s == 3
    # points sharing a refined supervoxel share both original sv and instance
    for members in refined.members:
        assert len(set(part.assignment[members].tolist())) == 1
        assert len(set(inst[members].tolist())) == 1
