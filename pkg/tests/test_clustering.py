import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dftrack.clustering import (
    CandidateSet,
    Cluster,
    estimate_entities,
    hierarchical_cluster,
    merge_window,
)
from dftrack.types import EnvironmentMap, make_grid


def _candidates(points):
    return CandidateSet(tuple(points))


class TestMergeWindow:
    def test_all_maps_empty(self):
        grid = make_grid(3, 3, 6.0, 6.0)
        maps = [EnvironmentMap(float(t), (False,) * 9) for t in range(13)]
        assert len(merge_window(maps, grid)) == 0

    def test_persistent_location_gets_full_weight(self):
        grid = make_grid(3, 3, 6.0, 6.0)
        active = tuple(i == 4 for i in range(9))
        maps = [EnvironmentMap(float(t), active) for t in range(13)]
        cs = merge_window(maps, grid)
        assert cs.points == ((grid[4].x, grid[4].y, 13),)

    def test_weights_count_map_appearances(self):
        grid = make_grid(2, 1, 2.0, 1.0)
        maps = [
            EnvironmentMap(0.0, (True, False)),
            EnvironmentMap(1.0, (True, True)),
            EnvironmentMap(2.0, (False, True)),
        ]
        cs = merge_window(maps, grid)
        weights = {((x, y)): w for x, y, w in cs.points}
        assert weights[(grid[0].x, grid[0].y)] == 2
        assert weights[(grid[1].x, grid[1].y)] == 2

    def test_default_window_length(self):
        from dftrack.types import ModelParams

        assert ModelParams().w == 13

    def test_length_mismatch_rejected(self):
        grid = make_grid(2, 1, 2.0, 1.0)
        with pytest.raises(ValueError):
            merge_window([EnvironmentMap(0.0, (True,))], grid)

    def test_zero_weight_candidates_excluded(self):
        with pytest.raises(ValueError):
            CandidateSet(((0.0, 0.0, 0),))


class TestHierarchicalCluster:
    def test_empty_candidates(self):
        assert hierarchical_cluster(_candidates([]), 0.25) == []

    def test_single_candidate_singleton_cluster(self):
        clusters = hierarchical_cluster(_candidates([(1.0, 2.0, 3)]), 0.25)
        assert len(clusters) == 1
        assert clusters[0].members == ((1.0, 2.0, 3),)

    def test_far_pair_plus_close_point_splits_in_two(self):
        # two points 10 m apart, a third 0.5 m from the first: the root merge
        # is inconsistent ({9.75, 0.5}: coefficient 1/sqrt(2) > 0.25) and the
        # leaf pair is not (std 0), leaving exactly two clusters.
        pts = [(0.0, 0.0, 1), (0.5, 0.0, 1), (10.0, 0.0, 1)]
        clusters = hierarchical_cluster(_candidates(pts), 0.25)
        member_sets = sorted(tuple(sorted(c.members)) for c in clusters)
        assert member_sets == [
            ((0.0, 0.0, 1), (0.5, 0.0, 1)),
            ((10.0, 0.0, 1),),
        ]

    def test_cluster_count_monotone_nonincreasing_in_r(self):
        # small r splits heavily, large r keeps one cluster
        rng = np.random.default_rng(8)
        pts = [(float(x), float(y), 1) for x, y in rng.uniform(0, 10, size=(12, 2))]
        cs = _candidates(pts)
        counts = [len(hierarchical_cluster(cs, r)) for r in (0.05, 0.25, 0.5, 0.8, 1.2, 5.0)]
        assert counts == sorted(counts, reverse=True)
        assert counts[0] > counts[-1]
        assert counts[-1] == 1

    def test_partition_property(self):
        rng = np.random.default_rng(1)
        pts = [(float(x), float(y), int(w)) for x, y, w in
               np.column_stack([rng.uniform(0, 10, (15, 2)), rng.integers(1, 13, 15)])]
        cs = _candidates(pts)
        clusters = hierarchical_cluster(cs, 0.25)
        flat = sorted(m for c in clusters for m in c.members)
        assert flat == sorted(cs.points)

    def test_centroid_within_member_bounding_box(self):
        rng = np.random.default_rng(2)
        pts = [(float(x), float(y), int(w)) for x, y, w in
               np.column_stack([rng.uniform(0, 10, (10, 2)), rng.integers(1, 13, 10)])]
        for cluster in hierarchical_cluster(_candidates(pts), 0.3):
            cx, cy = cluster.centroid
            xs = [x for x, _, _ in cluster.members]
            ys = [y for _, y, _ in cluster.members]
            assert min(xs) - 1e-12 <= cx <= max(xs) + 1e-12
            assert min(ys) - 1e-12 <= cy <= max(ys) + 1e-12

    def test_translation_equivariance(self):
        rng = np.random.default_rng(3)
        pts = [(float(x), float(y), int(w)) for x, y, w in
               np.column_stack([rng.uniform(0, 10, (9, 2)), rng.integers(1, 5, 9)])]
        dx, dy = 12.5, -3.75
        moved = [(x + dx, y + dy, w) for x, y, w in pts]
        base = hierarchical_cluster(_candidates(pts), 0.25)
        shifted = hierarchical_cluster(_candidates(moved), 0.25)
        assert len(base) == len(shifted)
        for a, b in zip(base, shifted):
            assert len(a.members) == len(b.members)
            assert b.centroid[0] == pytest.approx(a.centroid[0] + dx, abs=1e-9)
            assert b.centroid[1] == pytest.approx(a.centroid[1] + dy, abs=1e-9)

    def test_identical_points_form_one_cluster(self):
        pts = [(2.0, 2.0, 1)] * 5
        clusters = hierarchical_cluster(_candidates(pts), 0.25)
        assert len(clusters) == 1

    def test_invalid_threshold(self):
        with pytest.raises(ValueError):
            hierarchical_cluster(_candidates([(0.0, 0.0, 1)]), 0.0)

    def test_planted_pairs_recovered_exactly(self):
        # three tight pairs, far apart: recovered with centroids on the
        # planted centers
        centers = [(1.0, 1.0), (8.0, 2.0), (4.0, 9.0)]
        pts = []
        for cx, cy in centers:
            pts.append((cx - 0.15, cy, 1))
            pts.append((cx + 0.15, cy, 1))
        clusters = hierarchical_cluster(_candidates(pts), 0.25)
        assert len(clusters) == 3
        got = sorted(c.centroid for c in clusters)
        for (gx, gy), (cx, cy) in zip(got, sorted(centers)):
            assert math.hypot(gx - cx, gy - cy) < 0.2


class TestEstimateEntities:
    def test_no_clusters_is_no_detection(self):
        est = estimate_entities([], 5.0)
        assert est.m_hat == 0 and not est.detected

    def test_equal_weight_centroid(self):
        cluster = Cluster(((0.0, 0.0, 1), (2.0, 0.0, 1)))
        est = estimate_entities([cluster], 1.0)
        assert est.entities == ((1.0, 0.0),)

    def test_weighted_centroid(self):
        cluster = Cluster(((0.0, 0.0, 3), (4.0, 0.0, 1)))
        est = estimate_entities([cluster], 1.0)
        assert est.entities == ((1.0, 0.0),)

    def test_m_hat_equals_cluster_count(self):
        clusters = [Cluster(((0.0, 0.0, 1),)), Cluster(((5.0, 5.0, 2),))]
        assert estimate_entities(clusters, 0.0).m_hat == 2


@settings(max_examples=40, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(0, 20, allow_nan=False),
            st.floats(0, 20, allow_nan=False),
            st.integers(1, 13),
        ),
        min_size=1,
        max_size=12,
    ),
    st.floats(0.05, 2.0),
)
def test_partition_property_random(points, r):
    cs = _candidates(points)
    clusters = hierarchical_cluster(cs, r)
    flat = sorted(m for c in clusters for m in c.members)
    assert flat == sorted(cs.points)
