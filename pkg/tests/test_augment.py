from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ransomgraph.augment import PerturbSpec, edge_perturb, node_drop, round_half_up

from conftest import random_graph


def edge_set(g):
    return set(map(tuple, np.asarray(g.edge_array).tolist()))


class TestEdgePerturb:
    def test_identity(self):
        g = random_graph(np.random.default_rng(0), 8, 20)
        out = edge_perturb(g, PerturbSpec(0.0, 0.0), seed=1)
        assert np.array_equal(out.edge_array, g.edge_array) and np.array_equal(out.features, g.features)

    def test_ten_edges_remove_two(self):
        g = random_graph(np.random.default_rng(1), 8, 10)
        out = edge_perturb(g, PerturbSpec(0.2, 0.0), seed=3)
        assert out.num_edges == 8 and edge_set(out) <= edge_set(g)

    def test_round_half_up(self):
        assert [round_half_up(x) for x in (0.5, 1.5, 2.5, 2.49)] == [1, 2, 3, 2]

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(2, 12), m=st.integers(0, 40), pr=st.floats(0, 0.9), pa=st.floats(0, 0.9),
           seed=st.integers(0, 2**31))
    def test_counts_and_validity(self, n, m, pr, pa, seed):
        g = random_graph(np.random.default_rng(seed), n, m)
        m = g.num_edges
        out = edge_perturb(g, PerturbSpec(pr, pa), seed=seed)
        orig = edge_set(g)
        kept = [e for e in edge_set(out) if e in orig]
        added = [e for e in edge_set(out) if e not in orig]
        assert len(kept) == m - round_half_up(pr * m)
        assert len(added) == min(round_half_up(pa * m), n * (n - 1) - m)
        # exhaustive post-check: no self-loops, no duplicates, endpoints in range
        arr = np.asarray(out.edge_array)
        assert len(edge_set(out)) == len(arr)
        assert all(u != v and 0 <= u < n and 0 <= v < n for u, v in arr.tolist())
        assert np.array_equal(out.features, g.features)

    def test_deterministic(self):
        g = random_graph(np.random.default_rng(2), 10, 30)
        a = edge_perturb(g, PerturbSpec(), seed=9)
        b = edge_perturb(g, PerturbSpec(), seed=9)
        assert np.array_equal(a.edge_array, b.edge_array)

    def test_seed_pairs_differ(self):
        g = random_graph(np.random.default_rng(4), 20, 50)
        differing = sum(
            not np.array_equal(edge_perturb(g, PerturbSpec(), seed=2 * i).edge_array,
                               edge_perturb(g, PerturbSpec(), seed=2 * i + 1).edge_array)
            for i in range(100))
        assert differing >= 95

    def test_large_sparse_graph_uses_rejection_path(self):
        g = random_graph(np.random.default_rng(5), 200, 300)
        out = edge_perturb(g, PerturbSpec(0.25, 0.5), seed=0)
        added = edge_set(out) - edge_set(g)
        assert len(added) == 150 and all(u != v for u, v in added)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            PerturbSpec(1.0, 0.1)
        with pytest.raises(ValueError):
            PerturbSpec(0.2, -0.1)


class TestNodeDrop:
    def test_identity(self):
        g = random_graph(np.random.default_rng(0), 6, 10)
        out = node_drop(g, 0.0, seed=0)
        assert np.array_equal(out.edge_array, g.edge_array) and np.array_equal(out.features, g.features)

    def test_ten_nodes(self):
        g = random_graph(np.random.default_rng(0), 10, 20)
        assert node_drop(g, 0.3, seed=1).num_nodes == 7

    def test_empty_graph_error(self):
        g = random_graph(np.random.default_rng(0), 1, 0)
        with pytest.raises(ValueError):
            node_drop(g, 0.6, seed=0)

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(2, 15), m=st.integers(0, 40), f=st.floats(0, 0.45), seed=st.integers(0, 2**31))
    def test_order_and_edges(self, n, m, f, seed):
        g = random_graph(np.random.default_rng(seed), n, m)
        out = node_drop(g, f, seed=seed)
        ids = out.node_ids.tolist()
        assert ids == sorted(ids) and len(ids) == n - round_half_up(f * n)
        assert np.array_equal(out.features, g.features[ids])
        # order-check oracle: survivors' edges are exactly the original edges among survivors, relabelled
        pos = {old: new for new, old in enumerate(ids)}
        expect = [(pos[u], pos[v]) for u, v in g.edge_array.tolist() if u in pos and v in pos]
        assert out.edge_array.tolist() == [list(e) for e in expect]
