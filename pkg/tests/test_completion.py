import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import tilted_plane_spec
from planedepth import (DepthMap, DistanceMap, InsufficientDataError, NormalMap, ParameterError,
                        SparseSamples, SpnConfig, complete_depth, depth_from_normal_distance,
                        generate_planar_scene, planar_fill, sample_sparse,
                        sparse_nd_from_sparse_depth)
from planedepth.completion import nearest_fill, sample_distance_uncertainty, sample_locations
from planedepth.plane_seg import SegmentLabelMap
from planedepth.rng import Xoshiro256
from planedepth.synth import default_intrinsics, random_scene_spec


def _samples_at(scene, points):
    mask = np.zeros(scene.depth.shape, bool)
    for v, u in points:
        mask[v, u] = True
    return SparseSamples(DepthMap(scene.depth.values, mask),
                         NormalMap(scene.normal.vectors, mask),
                         DistanceMap(scene.distance.values, mask))


class TestSampling:
    def test_count_and_subset(self, K):
        scene = generate_planar_scene(random_scene_spec(1, 3, K, min_side=6))
        s = sample_sparse(scene.depth, scene.normal, scene.distance, 40, seed=5)
        assert s.sample_count == 40
        assert np.array_equal(s.depth.valid, s.normal.valid)
        assert np.all(s.depth.values[s.depth.valid] == scene.depth.values[s.depth.valid])

    def test_zero_samples(self, K):
        scene = generate_planar_scene(tilted_plane_spec(K))
        assert sample_sparse(scene.depth, scene.normal, scene.distance, 0).sample_count == 0

    def test_too_many(self, K):
        scene = generate_planar_scene(tilted_plane_spec(K))
        with pytest.raises(ParameterError):
            sample_sparse(scene.depth, scene.normal, scene.distance, K.width * K.height + 1)

    def test_500_samples_on_304x288(self):
        K = default_intrinsics(304, 288, 250.0)
        scene = generate_planar_scene(tilted_plane_spec(K))
        assert sample_sparse(scene.depth, scene.normal, scene.distance, 500, seed=3).sample_count == 500

    def test_determinism_and_fixed_stream(self):
        valid = np.ones((10, 10), bool)
        valid[0] = False
        a = sample_locations(valid, 7, 42)
        b = sample_locations(valid, 7, 42)
        np.testing.assert_array_equal(a, b)
        # reference: Fisher-Yates over the valid pool driven by xoshiro256**
        g = Xoshiro256(42)
        pool = list(range(10, 100))
        for i in range(7):
            j = i + g.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        assert a.tolist() == pool[:7]
        assert not np.array_equal(a, sample_locations(valid, 7, 43))

    def test_sparse_validity_subset_enforced(self):
        with pytest.raises(ParameterError):
            SparseSamples(DepthMap([[1.0]], [[False]]), NormalMap([[[0, 0, 1.0]]], [[True]]),
                          DistanceMap([[1.0]], [[False]]))


class TestSparseNormals:
    def test_fronto_parallel(self, K):
        scene = generate_planar_scene(tilted_plane_spec(K, (0, 0, 1), 3.0))
        s = sample_sparse(scene.depth, scene.normal, scene.distance, 60, seed=1)
        N, dist = sparse_nd_from_sparse_depth(s.depth, K)
        assert np.array_equal(N.valid, s.depth.valid)
        np.testing.assert_allclose(N.vectors[N.valid], np.tile([0, 0, 1.0], (60, 1)), atol=1e-12)
        np.testing.assert_allclose(dist.values[dist.valid], 3.0, rtol=1e-12)

    @pytest.mark.parametrize("n", [8, 60])
    def test_tilted_plane(self, K, n):
        spec = tilted_plane_spec(K)
        scene = generate_planar_scene(spec)
        s = sample_sparse(scene.depth, scene.normal, scene.distance, n, seed=2)
        N, dist = sparse_nd_from_sparse_depth(s.depth, K)
        truth = np.asarray(spec.planes[0].normal)
        ang = np.arccos(np.clip(N.vectors[N.valid] @ truth, -1, 1))
        assert N.count == n and ang.max() <= 1e-3
        np.testing.assert_allclose(dist.values[dist.valid], 2.5, rtol=1e-9)

    def test_too_few(self, K):
        d = np.zeros(K.shape)
        d[0, 0] = d[3, 3] = 1.0
        with pytest.raises(InsufficientDataError):
            sparse_nd_from_sparse_depth(DepthMap.from_values(d), K)

    def test_even_window(self, K):
        scene = generate_planar_scene(tilted_plane_spec(K))
        with pytest.raises(ParameterError):
            sparse_nd_from_sparse_depth(scene.depth, K, 4)


class TestPlanarFill:
    def test_mean_of_two_samples(self):
        shape = (1, 4)
        mask = np.array([[True, False, True, False]])
        samples = SparseSamples(DepthMap(np.ones(shape), mask),
                                NormalMap.constant((0, 0, 1), shape).__class__(np.tile([0, 0, 1.0], (1, 4, 1)), mask),
                                DistanceMap([[1.0, 0, 3.0, 0]], mask))
        N, dist = planar_fill(samples, SegmentLabelMap.from_labels(np.zeros(shape, int)))
        assert dist.values.tolist() == [[2.0] * 4]
        assert N.valid.all()

    def test_normals_averaged_and_renormalized(self):
        vec = np.zeros((1, 2, 3))
        vec[0, 0] = (0.6, 0, 0.8)
        vec[0, 1] = (-0.6, 0, 0.8)
        mask = np.ones((1, 2), bool)
        samples = SparseSamples(DepthMap(np.ones((1, 2)), mask), NormalMap(vec, mask),
                                DistanceMap(np.ones((1, 2)), mask))
        N, _ = planar_fill(samples, SegmentLabelMap.from_labels(np.zeros((1, 2), int)))
        np.testing.assert_allclose(N.vectors[0, 0], [0, 0, 1], atol=1e-15)

    def test_empty_segment_takes_nearest_sample(self):
        labels = np.array([[0, 0, 1, 1, 2, 2]])
        mask = np.array([[True, False, False, False, False, True]])
        samples = SparseSamples(DepthMap(np.ones((1, 6)), mask),
                                NormalMap(np.tile([0, 0, 1.0], (1, 6, 1)), mask),
                                DistanceMap([[1.0, 0, 0, 0, 0, 7.0]], mask))
        _, dist = planar_fill(samples, SegmentLabelMap.from_labels(labels))
        # segment 1 is equidistant from both samples: row-major first wins
        assert dist.values.tolist() == [[1.0, 1.0, 1.0, 1.0, 7.0, 7.0]]

    def test_no_samples(self, K):
        scene = generate_planar_scene(tilted_plane_spec(K))
        s = sample_sparse(scene.depth, scene.normal, scene.distance, 0)
        with pytest.raises(InsufficientDataError):
            planar_fill(s, scene.labels)

    @given(st.integers(0, 10_000), st.integers(1, 40))
    @settings(max_examples=20, deadline=None)
    def test_piecewise_constant(self, seed, n):
        K = default_intrinsics(32, 24, 30.0)
        spec = random_scene_spec(seed % 50, 3, K, min_side=6, noise_sigma=0.0)
        scene = generate_planar_scene(spec)
        s = sample_sparse(scene.depth, scene.normal, scene.distance, n, seed)
        N, dist = planar_fill(s, scene.labels)
        for p in range(scene.labels.num_segments):
            m = scene.labels.labels == p
            assert np.ptp(dist.values[m]) == 0
            assert np.all(np.ptp(N.vectors[m], axis=0) == 0)


class TestCompleteDepth:
    def test_two_plane_ten_samples(self, K):
        spec = random_scene_spec(11, 2, K, min_side=6)
        scene = generate_planar_scene(spec)
        for seed in range(100):
            s = sample_sparse(scene.depth, scene.normal, scene.distance, 10, seed)
            if len(np.unique(scene.labels.labels[s.depth.valid])) == 2:
                break
        D = complete_depth(s, scene.labels, K)
        rel = np.abs(D.values - scene.depth.values) / scene.depth.values
        assert rel.max() < 1e-6

    def test_dense_input_per_pixel_labels(self, K, rng):
        scene = generate_planar_scene(random_scene_spec(2, 3, K, min_side=6))
        # perturb distances so each pixel carries its own plane
        dist = DistanceMap(scene.distance.values * rng.uniform(0.9, 1.1, K.shape), scene.distance.valid)
        samples = SparseSamples(scene.depth, scene.normal, dist)
        labels = SegmentLabelMap.from_labels(np.arange(K.width * K.height).reshape(K.shape))
        D = complete_depth(samples, labels, K)
        direct = depth_from_normal_distance(scene.normal, dist, K)
        np.testing.assert_array_equal(D.values, direct.values)

    def test_zero_samples(self, K):
        scene = generate_planar_scene(tilted_plane_spec(K))
        s = sample_sparse(scene.depth, scene.normal, scene.distance, 0)
        with pytest.raises(InsufficientDataError):
            complete_depth(s, scene.labels, K)

    def test_spn_keeps_exact_planes_exact_within_segments(self, K):
        spec = tilted_plane_spec(K, (0, 0, 1), 2.0)
        scene = generate_planar_scene(spec)
        s = sample_sparse(scene.depth, scene.normal, scene.distance, 5, 0)
        D = complete_depth(s, scene.labels, K, SpnConfig())
        np.testing.assert_array_equal(D.values, 2.0)

    def test_spn_config_validation(self):
        for kw in (dict(alpha=1.0), dict(sigma=0), dict(iterations=-1)):
            with pytest.raises(ParameterError):
                SpnConfig(**kw)


def test_distance_uncertainty():
    mask = np.zeros((1, 4), bool)
    mask[0, 0] = True
    U = sample_distance_uncertainty(mask, 2.0)
    np.testing.assert_allclose(U.values[0], 1 - np.exp(-np.arange(4) / 2.0), atol=1e-15)
    with pytest.raises(InsufficientDataError):
        sample_distance_uncertainty(np.zeros((2, 2), bool), 1.0)


def test_nearest_fill(K):
    scene = generate_planar_scene(tilted_plane_spec(K))
    s = sample_sparse(scene.depth, scene.normal, scene.distance, 1, 0)
    N, dist = nearest_fill(s)
    assert dist.valid.all() and np.ptp(dist.values) == 0
