import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from conftest import random_depth, random_normals
from planedepth import (DepthMap, DistanceMap, DomainError, EmptyValidSetError, LossWeights,
                        NormalMap, ParameterError, ShapeError, UncertaintyMap,
                        distance_l1_loss, l1l2_depth_loss, normal_cosine_loss, overall_loss,
                        plane_consistency_loss, silog_depth_loss, uncertainty_loss,
                        uncertainty_target)
from planedepth.losses import silog_head
from planedepth.plane_seg import SegmentLabelMap

W = LossWeights()


def _full(a):
    a = np.asarray(a, float)
    return np.ones(a.shape, bool)


def test_default_weights():
    assert (W.depth, W.normal, W.distance, W.uncertainty, W.plane_consistency) == (1, 5, 0.25, 1, 0.01)
    assert (W.gamma, W.max_iters, W.kappa, W.eta, W.b) == (0.85, 3, 10, 0.85, 0.2)


@pytest.mark.parametrize("kw", [dict(gamma=0), dict(gamma=1.1), dict(max_iters=0), dict(kappa=0),
                                dict(eta=-0.1), dict(eta=1.5), dict(b=0), dict(normal=math.inf)])
def test_weight_validation(kw):
    with pytest.raises(ParameterError):
        LossWeights(**kw)


class TestPlaneConsistency:
    def test_row_example(self):
        N = NormalMap.constant((0, 0, 1), (1, 3))
        dist = DistanceMap([[1.0, 2.0, 2.0]], np.ones((1, 3), bool))
        assert plane_consistency_loss(N, dist, np.ones((1, 3), bool)) == 1.0

    def test_constant_maps_and_empty_mask(self, K):
        N = NormalMap.constant((0.6, 0, 0.8), K.shape)
        dist = DistanceMap(np.full(K.shape, 3.0), np.ones(K.shape, bool))
        assert plane_consistency_loss(N, dist, np.ones(K.shape, bool)) == 0
        r = np.random.default_rng(0)
        dist2 = DistanceMap(r.uniform(1, 2, K.shape), np.ones(K.shape, bool))
        assert plane_consistency_loss(N, dist2, np.zeros(K.shape, bool)) == 0

    def test_segment_boundary_not_crossed(self):
        N = NormalMap.constant((0, 0, 1), (1, 3))
        dist = DistanceMap([[1.0, 1.0, 5.0]], np.ones((1, 3), bool))
        seg = SegmentLabelMap.from_labels([[0, 0, 1]], min_area=1)
        assert plane_consistency_loss(N, dist, seg) == 0.0
        assert plane_consistency_loss(N, dist, np.ones((1, 3), bool)) == 4.0

    def test_shape_mismatch(self):
        N = NormalMap.constant((0, 0, 1), (2, 2))
        with pytest.raises(ShapeError):
            plane_consistency_loss(N, DistanceMap(np.ones((2, 2)), _full(np.ones((2, 2)))), np.ones((3, 2), bool))

    @pytest.mark.parametrize("seed", range(10))
    def test_oracle(self, seed):
        r = np.random.default_rng(seed)
        shape = (9, 11)
        N = random_normals(r, shape)
        dist = DistanceMap(r.uniform(0, 4, shape), r.random(shape) > 0.2)
        mask = r.random(shape) > 0.3
        labels = r.integers(0, 3, shape)
        assert abs(plane_consistency_loss(N, dist, mask, labels)
                   - oracles.plane_consistency(N, dist, mask, labels)) <= 1e-12 * max(1, oracles.plane_consistency(N, dist, mask, labels))


class TestSilog:
    def test_identity(self, K, rng):
        gt = random_depth(rng, K.shape)
        assert silog_depth_loss([(gt, gt)] * 3, gt) == 0

    def test_hand_example(self):
        gt = DepthMap([[1.0, 1.0]], _full([[1, 1]]))
        pred = DepthMap([[1.0, 2.0]], _full([[1, 1]]))
        l2 = math.log(2) ** 2
        expected = 0.85 ** 2 * 10 * math.sqrt(0.5 * l2 - 0.85 * 0.25 * l2)
        assert abs(silog_depth_loss([(pred, None)], gt) - expected) <= 1e-12

    @pytest.mark.parametrize("s", [0.5, 2.0, 10.0])
    def test_scale_invariant_at_eta_one(self, K, rng, s):
        gt = random_depth(rng, K.shape)
        pred = DepthMap(gt.values * s, gt.valid)
        assert silog_depth_loss([(pred, pred)], gt, LossWeights(eta=1.0)) <= 1e-12
        assert silog_depth_loss([(pred, pred)], gt) > 0

    def test_decay_schedule(self, K, rng):
        gt = random_depth(rng, K.shape)
        pred = random_depth(rng, K.shape)
        h = silog_head(pred, gt, 10, 0.85)
        seq = [(pred, pred)] * 3
        assert silog_depth_loss(seq, gt) == pytest.approx(2 * h * (0.85 ** 2 + 0.85 + 1), rel=1e-14)
        with_init = silog_depth_loss([(pred, None)] * 4, gt, include_initial=True)
        assert with_init == pytest.approx(h * (0.85 ** 3 + 0.85 ** 2 + 0.85 + 1), rel=1e-14)

    def test_errors(self, K, rng):
        gt = random_depth(rng, K.shape)
        with pytest.raises(ParameterError):
            silog_depth_loss([(gt, gt)] * 4, gt)
        with pytest.raises(EmptyValidSetError):
            silog_depth_loss([], gt)
        none = DepthMap(np.ones(K.shape), np.zeros(K.shape, bool))
        with pytest.raises(EmptyValidSetError):
            silog_depth_loss([(none, None)], gt)
        tiny = DepthMap(np.full(K.shape, 1e-9), np.ones(K.shape, bool))
        with pytest.raises(DomainError):
            silog_depth_loss([(tiny, None)], gt)


class TestPointwise:
    def test_l1l2_examples(self):
        one = _full([[0]])
        assert l1l2_depth_loss(DepthMap([[1.5]], one), DepthMap([[1.0]], one)) == 0.75
        two = _full([[0, 0]])
        assert l1l2_depth_loss(DepthMap([[2.0, 1.0]], two), DepthMap([[1.0, 2.0]], two)) == 2.0

    def test_cosine_examples(self, K):
        a = NormalMap.constant((0, 0, 1), K.shape)
        assert normal_cosine_loss(a, a) == 0
        assert normal_cosine_loss(a, NormalMap.constant((0, 0, -1), K.shape)) == 2
        assert normal_cosine_loss(a, NormalMap.constant((1, 0, 0), K.shape)) == 1

    def test_distance_examples(self):
        two = _full([[0, 0]])
        assert distance_l1_loss(DistanceMap([[1.2, 2.4]], two), DistanceMap([[1.0, 2.0]], two)) == pytest.approx(0.3, abs=1e-15)
        half = DistanceMap([[1.2, 9.0]], [[True, False]])
        assert distance_l1_loss(half, DistanceMap([[1.0, 2.0]], two)) == pytest.approx(0.2, abs=1e-15)

    def test_empty_raises(self):
        none = DepthMap([[1.0]], [[False]])
        for fn, arg in ((l1l2_depth_loss, none),
                        (distance_l1_loss, DistanceMap([[1.0]], [[False]])),
                        (normal_cosine_loss, NormalMap([[[0, 0, 1.0]]], [[False]]))):
            with pytest.raises(EmptyValidSetError):
                fn(arg, arg)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l1l2_depth_loss(DepthMap([[1.0]], [[True]]), DepthMap([[1.0, 1.0]], [[True, True]]))


class TestUncertainty:
    def test_target_values(self):
        gt = DepthMap([[1.0, 1.0, 1.0]], _full([[0, 0, 0]]))
        pred = DepthMap([[1.0, 1.2, 3.0]], _full([[0, 0, 0]]))
        U = uncertainty_target(pred, gt)
        assert U.values[0, 0] == 0
        assert U.values[0, 1] == pytest.approx(1 - math.exp(-1), abs=1e-15)
        assert U.values[0, 2] == pytest.approx(1 - math.exp(-10), abs=1e-15)

    def test_target_bad_b(self):
        m = DepthMap([[1.0]], [[True]])
        with pytest.raises(ParameterError):
            uncertainty_target(m, m, 0)

    # below 7 m the float64 result is still distinguishable from 1
    @given(st.lists(st.floats(0, 7), min_size=2, max_size=20, unique=True))
    @settings(max_examples=50, deadline=None)
    def test_target_monotone_bounded(self, errs):
        errs = sorted(errs)
        gt = DepthMap(np.ones((1, len(errs))), np.ones((1, len(errs)), bool))
        pred = DepthMap(1 + np.array([errs]), gt.valid)
        u = uncertainty_target(pred, gt).values[0]
        assert np.all(u >= 0) and np.all(u < 1)
        assert np.all(np.diff(u) >= 0)

    def test_target_saturates_at_one(self):
        gt = DepthMap([[1.0]], [[True]])
        assert uncertainty_target(DepthMap([[60.0]], [[True]]), gt).values[0, 0] == 1.0

    def test_loss_example(self):
        one = _full([[0]])
        U1, U2 = UncertaintyMap([[0.5]], one), UncertaintyMap([[0.2]], one)
        G1, G2 = UncertaintyMap([[0.4]], one), UncertaintyMap([[0.5]], one)
        assert uncertainty_loss(U1, U2, G1, G2) == pytest.approx(0.4, abs=1e-15)

    def test_loss_empty_is_zero(self):
        z = UncertaintyMap([[0.5]], [[False]])
        assert uncertainty_loss(z, z, z, z) == 0


class TestOverall:
    def test_examples(self):
        assert overall_loss(0, 0, 0, 0, 0).total == 0
        assert overall_loss(1, 1, 1, 1, 1).total == pytest.approx(7.26, abs=1e-12)
        zero = LossWeights(depth=0, normal=0, distance=0, uncertainty=0, plane_consistency=0)
        assert overall_loss(3, 4, 5, 6, 7, zero).total == 0

    def test_errors(self):
        with pytest.raises(DomainError):
            overall_loss(math.nan, 0, 0, 0, 0)
        with pytest.raises(DomainError):
            overall_loss(-1, 0, 0, 0, 0)

    def test_json(self):
        rep = overall_loss(1, 2, 3, 4, 5, valid_count=9)
        d = json.loads(rep.to_json())
        assert d["valid_count"] == 9 and d["total"] == rep.total


def test_losses_ignore_invalid_values(rng):
    shape = (8, 8)
    gt = random_depth(rng, shape)
    pred = random_depth(rng, shape)
    base = [l1l2_depth_loss(pred, gt), silog_head(pred, gt, 10, 0.85)]
    # rebuild with garbage under the invalid mask
    junk = np.where(pred.valid, pred.values, 1e6)
    pred2 = DepthMap(junk, pred.valid)
    assert [l1l2_depth_loss(pred2, gt), silog_head(pred2, gt, 10, 0.85)] == base
