import math

import pytest
from hypothesis import given, settings, strategies as st

from sdcps.errors import (DuplicateEdge, InvalidCount, NoCenters, NoSuchEdge,
                          TooManyPartitions, UnknownNode)
from sdcps.topology import (apply_link_event, assign_clusters, build_hierarchy,
                            neighbors, partition_nodes)


class TestBuildHierarchy:
    def test_paper_scale_topology(self):
        h, g = build_hierarchy(8, 2, 8)
        assert len(g.vertices()) == 1 + 8 + 16 + 128 == 153

    def test_minimal_tree(self):
        h, g = build_hierarchy(1, 1, 1)
        assert len(g.vertices()) == 4
        assert len(h.parent) == 3

    def test_fixed_host_product(self):
        _, g16 = build_hierarchy(16, 2, 4)
        _, g8 = build_hierarchy(8, 2, 8)
        hosts16 = [v for v in g16.vertices() if g16.roles[v] == "HOST"]
        hosts8 = [v for v in g8.vertices() if g8.roles[v] == "HOST"]
        assert len(hosts16) == len(hosts8) == 128

    def test_zero_count_rejected(self):
        with pytest.raises(InvalidCount):
            build_hierarchy(0, 2, 8)

    def test_tree_validity(self):
        for args in [(1, 1, 1), (3, 2, 2), (8, 2, 8), (5, 3, 4)]:
            h, g = build_hierarchy(*args)
            assert len(h.parent) == len(g.vertices()) - 1
            roots = set(g.vertices()) - set(h.parent)
            assert roots == {0}

    def test_host_and_switch_parents(self):
        h, g = build_hierarchy(4, 2, 3)
        for v in g.vertices():
            if g.roles[v] == "HOST":
                assert g.roles[h.parent[v]] == "SWITCH"
            elif g.roles[v] == "SWITCH":
                assert g.roles[h.parent[v]] == "LOCAL"

    def test_sibling_switch_edges_exist(self):
        h, g = build_hierarchy(2, 2, 1)
        switches = [v for v in g.vertices() if g.roles[v] == "SWITCH"]
        sibs = [s for s in switches if h.parent[s] == h.parent[switches[0]]]
        assert g.has_edge(sibs[0], sibs[1])


class TestNeighbors:
    def _triangle(self):
        _, g = build_hierarchy(1, 1, 1)
        g.add_vertex(10, "HOST")
        g.add_vertex(11, "HOST")
        g.add_vertex(12, "HOST")
        g.add_edge(10, 11)
        g.add_edge(11, 12)
        g.add_edge(10, 12)
        return g

    def test_triangle(self):
        g = self._triangle()
        assert neighbors(g, 10) == {11, 12}

    def test_isolated_node(self):
        g = self._triangle()
        g.add_vertex(99, "HOST")
        assert neighbors(g, 99) == set()

    def test_unknown_node(self):
        with pytest.raises(UnknownNode):
            neighbors(self._triangle(), 1234)

    def test_after_removal(self):
        g = self._triangle()
        apply_link_event(g, {"op": "remove", "edge": (10, 11)})
        assert neighbors(g, 10) == {12}


class TestPartitions:
    def test_single_partition(self):
        parts = partition_nodes(list(range(1, 9)), 1)
        assert len(parts) == 1 and len(parts[0].members) == 8

    def test_even_split(self):
        parts = partition_nodes(list(range(1, 9)), 4)
        assert [len(p.members) for p in parts] == [2, 2, 2, 2]

    def test_uneven_split(self):
        parts = partition_nodes(list(range(7)), 3)
        assert [len(p.members) for p in parts] == [3, 2, 2]

    def test_too_many(self):
        with pytest.raises(TooManyPartitions):
            partition_nodes([1, 2], 3)

    def test_disjoint_and_covering_exhaustive(self):
        # sweep every (n, p) with n <= 64
        for n in range(1, 65):
            nodes = list(range(n))
            for p in range(1, n + 1):
                parts = partition_nodes(nodes, p)
                seen = [m for part in parts for m in part.members]
                assert sorted(seen) == nodes
                assert len(seen) == len(set(seen))
                sizes = [len(part.members) for part in parts]
                assert max(sizes) - min(sizes) <= 1
                for part in parts:
                    assert part.area_coordinator in part.members


class TestLinkEvents:
    def test_remove_bumps_epoch(self):
        _, g = build_hierarchy(2, 1, 1)
        e0 = g.epoch
        apply_link_event(g, {"op": "remove", "edge": (0, 1)})
        assert g.epoch == e0 + 1
        assert not g.has_edge(0, 1)

    def test_self_loop_rejected(self):
        _, g = build_hierarchy(2, 1, 1)
        with pytest.raises(DuplicateEdge):
            apply_link_event(g, {"op": "add", "edge": (1, 1)})

    def test_remove_missing_edge(self):
        _, g = build_hierarchy(2, 1, 1)
        with pytest.raises(NoSuchEdge):
            apply_link_event(g, {"op": "remove", "edge": (1, 2)})

    def test_listeners_notified(self):
        _, g = build_hierarchy(2, 1, 1)
        seen = []
        g.listeners.append(seen.append)
        apply_link_event(g, {"op": "reweight", "edge": (0, 1), "weight": 5.0})
        assert seen and seen[0]["op"] == "reweight"
        assert g.adj[0][1] == 5.0

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.sampled_from(["add", "remove", "reweight"]),
                              st.integers(0, 7), st.integers(0, 7),
                              st.floats(0.5, 10)),
                    max_size=30))
    def test_undirectedness_preserved(self, changes):
        _, g = build_hierarchy(2, 2, 1)
        for op, i, j, w in changes:
            change = {"op": op, "edge": (i, j), "weight": w}
            try:
                apply_link_event(g, change)
            except (NoSuchEdge, DuplicateEdge, UnknownNode):
                pass
            for a in g.adj:
                for b, wt in g.adj[a].items():
                    assert g.adj[b][a] == wt
                    assert a != b


class TestClusters:
    def test_single_center(self):
        pos = {i: (float(i), 0.0) for i in range(5)}
        clusters = assign_clusters(pos, [(0.0, 0.0)])
        assert clusters[0].members == list(range(5))

    def test_tie_goes_to_lowest_id(self):
        clusters = assign_clusters({1: (0.5, 0.0)}, [(0.0, 0.0), (1.0, 0.0)])
        assert clusters[0].members == [1]
        assert clusters[1].members == []

    def test_no_centers(self):
        with pytest.raises(NoCenters):
            assign_clusters({1: (0, 0)}, [])

    def test_matches_brute_force_scan(self):
        import numpy as np
        rng = np.random.default_rng(5)
        pos = {i: tuple(rng.uniform(0, 10, 2)) for i in range(10)}
        centers = [tuple(rng.uniform(0, 10, 2)) for _ in range(3)]
        clusters = assign_clusters(pos, centers)
        for node, (x, y) in pos.items():
            dists = [math.dist((x, y), c) for c in centers]
            best = min(range(3), key=lambda k: (dists[k], k))
            assert node in clusters[best].members

    def test_membership_total_and_single(self):
        pos = {i: (i * 0.7, i * 0.3) for i in range(20)}
        clusters = assign_clusters(pos, [(0, 0), (5, 5), (10, 0)])
        all_members = [m for c in clusters for m in c.members]
        assert sorted(all_members) == list(range(20))
