import numpy as np
import pytest

from activest.cloud import (AugmentParams, Cloud, FormatError, augment,
                            cloud_from_bytes, cloud_to_bytes, estimate_normals,
                            load_cloud, save_cloud)

from conftest import random_cloud


PLY_3PT = """ply
format ascii 1.0
element vertex 3
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
end_header
0.0 0.0 0.0 255 0 0
1.0 0.5 0.25 0 255 0
-1.0 2.0 3.0 0 0 255
"""


class TestCloudModel:
    def test_rejects_color_out_of_range(self):
        with pytest.raises(ValueError, match="point 1"):
            Cloud(np.zeros((2, 3)), np.array([[0.5, 0.5, 0.5], [1.5, 0.0, 0.0]]))

    def test_rejects_non_unit_normals(self):
        with pytest.raises(ValueError, match="unit length"):
            Cloud(np.zeros((1, 3)), np.zeros((1, 3)), normals=np.array([[0.0, 0.0, 2.0]]))

    def test_rejects_semantic_above_class_count(self):
        with pytest.raises(ValueError, match="out of range"):
            Cloud(np.zeros((2, 3)), np.zeros((2, 3)),
                  gt_semantic=np.array([0, 3]), class_names=("a", "b"))

    def test_rejects_empty_cloud(self):
        with pytest.raises(ValueError):
            Cloud(np.zeros((0, 3)), np.zeros((0, 3)))


class TestPlyFormat:
    def test_load_three_point_ply(self, tmp_path):
        path = tmp_path / "tri.ply"
        path.write_text(PLY_3PT)
        cloud = load_cloud(path, fmt="ply-ascii")
        assert cloud.n == 3
        np.testing.assert_allclose(cloud.colors[0], [1.0, 0.0, 0.0])
        np.testing.assert_allclose(cloud.colors[1], [0.0, 1.0, 0.0])
        np.testing.assert_allclose(cloud.positions[2], [-1.0, 2.0, 3.0], atol=1e-6)

    def test_missing_required_property_is_named(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text(PLY_3PT.replace("property float x\n", ""))
        with pytest.raises(FormatError, match="missing property 'x'"):
            load_cloud(path, fmt="ply-ascii")

    def test_truncated_payload_reports_counts(self, tmp_path):
        path = tmp_path / "short.ply"
        path.write_text("\n".join(PLY_3PT.splitlines()[:-1]) + "\n")
        with pytest.raises(FormatError, match="truncated"):
            load_cloud(path, fmt="ply-ascii")

    def test_color_out_of_range_reports_line(self, tmp_path):
        path = tmp_path / "badcolor.ply"
        path.write_text(PLY_3PT.replace("1.0 0.5 0.25 0 255 0", "1.0 0.5 0.25 0 999 0"))
        with pytest.raises(FormatError, match="line 12"):
            load_cloud(path, fmt="ply-ascii")

    def test_ply_roundtrip_with_normals_and_labels(self, tmp_path):
        rng = np.random.default_rng(0)
        cloud = random_cloud(rng, 50, with_normals=True, n_classes=4)
        path = tmp_path / "c.ply"
        save_cloud(cloud, path, fmt="ply-ascii")
        text = path.read_text()
        for prop in ("nx", "ny", "nz", "semantic"):
            assert f"property" in text and prop in text
        back = load_cloud(path, fmt="ply-ascii")
        np.testing.assert_allclose(back.positions, cloud.positions, atol=1e-6)
        np.testing.assert_array_equal(back.gt_semantic, cloud.gt_semantic)

    def test_empty_path_rejected(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError, match="empty"):
            save_cloud(random_cloud(rng, 3), "", fmt="ply-ascii")


class TestTableBinary:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_roundtrip_bit_exact(self, tmp_path, seed):
        rng = np.random.default_rng(seed)
        cloud = random_cloud(rng, 64, with_normals=(seed % 2 == 0), n_classes=5)
        path = tmp_path / "c.astc"
        save_cloud(cloud, path, fmt="table-binary")
        back = load_cloud(path, fmt="table-binary")
        np.testing.assert_array_equal(back.positions, cloud.positions)
        np.testing.assert_array_equal(back.colors, cloud.colors)
        if cloud.normals is not None:
            np.testing.assert_array_equal(back.normals, cloud.normals)
        np.testing.assert_array_equal(back.gt_semantic, cloud.gt_semantic)

    def test_format_sniffing(self, tmp_path):
        rng = np.random.default_rng(3)
        cloud = random_cloud(rng, 16)
        binary = tmp_path / "c.astc"
        save_cloud(cloud, binary, fmt="table-binary")
        assert load_cloud(binary).n == 16  # no fmt given
        ply = tmp_path / "c.ply"
        save_cloud(cloud, ply, fmt="ply-ascii")
        assert load_cloud(ply).n == 16

    def test_truncation_reports_byte_offset(self):
        rng = np.random.default_rng(4)
        blob = cloud_to_bytes(random_cloud(rng, 8))
        with pytest.raises(FormatError, match="byte"):
            cloud_from_bytes(blob[:-7])

    def test_trailing_bytes_rejected(self):
        rng = np.random.default_rng(5)
        blob = cloud_to_bytes(random_cloud(rng, 8))
        with pytest.raises(FormatError, match="trailing"):
            cloud_from_bytes(blob + b"xx")

    def test_bad_magic(self):
        with pytest.raises(FormatError, match="magic"):
            cloud_from_bytes(b"NOPE!" + b"\x00" * 16)


class TestEstimateNormals:
    def test_plane_points_get_up_normals(self):
        rng = np.random.default_rng(0)
        pos = np.column_stack([rng.uniform(0, 1, 100), rng.uniform(0, 1, 100),
                               np.zeros(100)])
        cloud = Cloud(pos, np.full((100, 3), 0.5))
        out = estimate_normals(cloud, k_neighbors=8)
        np.testing.assert_allclose(out.normals, np.tile([0, 0, 1.0], (100, 1)),
                                   atol=1e-6)

    def test_sphere_normals_are_radial(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=(2000, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        cloud = Cloud(v, np.full((2000, 3), 0.5))
        out = estimate_normals(cloud, k_neighbors=8)
        align = np.abs(np.einsum("ij,ij->i", out.normals.astype(np.float64), v))
        assert (align > 0.95).mean() >= 0.99

    def test_collinear_points_get_orthogonal_normal(self):
        pos = np.array([[0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        cloud = Cloud(pos, np.full((3, 3), 0.5))
        out = estimate_normals(cloud, k_neighbors=3)
        for n in out.normals.astype(np.float64):
            assert abs(n @ [1.0, 0, 0]) < 1e-6
            assert abs(np.linalg.norm(n) - 1) < 1e-6
            assert n[2] >= 0  # sign rule

    def test_coincident_points_fall_back_to_up(self):
        cloud = Cloud(np.zeros((5, 3)), np.full((5, 3), 0.5))
        out = estimate_normals(cloud, k_neighbors=3)
        np.testing.assert_array_equal(out.normals, np.tile([0, 0, 1.0], (5, 1)))

    def test_requires_enough_neighbors(self):
        cloud = Cloud(np.zeros((2, 3)), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            estimate_normals(cloud, k_neighbors=3)


class TestAugment:
    def test_identity_params_is_identity(self):
        rng = np.random.default_rng(0)
        cloud = random_cloud(rng, 40, with_normals=True, n_classes=3)
        out = augment(cloud, AugmentParams.identity(seed=9))
        np.testing.assert_array_equal(out.positions, cloud.positions)
        np.testing.assert_array_equal(out.colors, cloud.colors)
        np.testing.assert_array_equal(out.normals, cloud.normals)
        np.testing.assert_array_equal(out.gt_semantic, cloud.gt_semantic)

    def test_same_seed_bit_identical(self):
        rng = np.random.default_rng(1)
        cloud = random_cloud(rng, 40, with_normals=True)
        params = AugmentParams(seed=123)
        a = augment(cloud, params)
        b = augment(cloud, params)
        np.testing.assert_array_equal(a.positions, b.positions)
        np.testing.assert_array_equal(a.colors, b.colors)

    def test_pure_scaling_doubles_distances(self):
        rng = np.random.default_rng(2)
        cloud = random_cloud(rng, 30)
        params = AugmentParams(rotation="none", scale_range=(2.0, 2.0),
                               jitter_sigma=0.0, jitter_clip=0.0, color_jitter=0.0,
                               seed=0)
        out = augment(cloud, params)
        base = np.linalg.norm(cloud.positions[:, None] - cloud.positions[None], axis=2)
        scaled = np.linalg.norm(out.positions[:, None] - out.positions[None], axis=2)
        np.testing.assert_allclose(scaled, 2.0 * base, rtol=1e-6)

    def test_index_preserving(self):
        # tag each point by a unique color; order must survive any transform
        n = 25
        tags = (np.arange(n, dtype=np.float64) / n).reshape(-1, 1)
        cloud = Cloud(np.random.default_rng(3).uniform(0, 1, (n, 3)),
                      np.repeat(tags, 3, axis=1))
        out = augment(cloud, AugmentParams(color_jitter=0.0, seed=5))
        np.testing.assert_array_equal(out.colors, cloud.colors)
        assert out.n == cloud.n

    def test_rotation_rotates_normals_consistently(self):
        rng = np.random.default_rng(4)
        cloud = random_cloud(rng, 60, with_normals=True)
        params = AugmentParams(rotation="up-axis", scale_range=(1.0, 1.0),
                               jitter_sigma=0.0, jitter_clip=0.0,
                               color_jitter=0.0, seed=11)
        out = augment(cloud, params)
        # angles between pairs of normals are rotation-invariant
        a = cloud.normals.astype(np.float64)
        b = out.normals.astype(np.float64)
        np.testing.assert_allclose(a[:10] @ a[:10].T, b[:10] @ b[:10].T, atol=1e-5)
        # z components unchanged by an up-axis rotation
        np.testing.assert_allclose(a[:, 2], b[:, 2], atol=1e-6)

    def test_color_jitter_stays_in_bounds(self):
        rng = np.random.default_rng(5)
        cloud = random_cloud(rng, 100)
        out = augment(cloud, AugmentParams(color_jitter=0.5, seed=7))
        assert out.colors.min() >= 0.0 and out.colors.max() <= 1.0

    def test_invalid_params_rejected(self):
        with pytest.raises(ValueError):
            AugmentParams(scale_range=(0.0, 1.0))
        with pytest.raises(ValueError):
            AugmentParams(rotation="tumble")
