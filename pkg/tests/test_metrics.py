from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ransomgraph.metrics import precision_recall, roc_auc


def pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


class TestAuc:
    def test_perfect_and_inverted(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_all_tied(self):
        assert roc_auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_one_class_error(self):
        with pytest.raises(ValueError):
            roc_auc([0.1, 0.2], [1, 1])

    @pytest.mark.parametrize("seed", range(1000))
    def test_pairwise_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, size=n).astype(bool)
        labels[0], labels[1] = True, False
        # coarse grid produces many ties
        scores = np.round(rng.random(n), int(rng.integers(1, 4)))
        assert abs(roc_auc(scores, labels) - pairwise_auc(scores.tolist(), labels.tolist())) <= 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=2, max_size=60))
    def test_complement_symmetry(self, pairs):
        s = np.array([p[0] for p in pairs])
        y = np.array([p[1] for p in pairs])
        if y.all() or not y.any():
            return
        assert abs(roc_auc(s, y) + roc_auc(s, ~y) - 1.0) < 1e-12


class TestConfusion:
    def test_counts(self):
        c = precision_recall([0.9, 0.6, 0.4, 0.5, 0.1], [1, 0, 1, 1, 0])
        assert (c.tp, c.fp, c.tn, c.fn) == (2, 1, 1, 1)
        assert c.precision == 2 / 3 and c.recall == 2 / 3 and not c.precision_undefined

    def test_threshold_inclusive(self):
        assert precision_recall([0.5], [1], 0.5).tp == 1

    def test_no_positive_predictions(self):
        c = precision_recall([0.1, 0.2], [1, 0])
        assert c.precision == 0.0 and c.precision_undefined and c.recall == 0.0

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=60), st.floats(0, 1))
    def test_tally_oracle(self, pairs, thr):
        c = precision_recall([p[0] for p in pairs], [p[1] for p in pairs], thr)
        tally = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
        for s, y in pairs:
            tally[("t" if (s >= thr) == y else "f") + ("p" if s >= thr else "n")] += 1
        assert (c.tp, c.fp, c.tn, c.fn) == (tally["tp"], tally["fp"], tally["tn"], tally["fn"])
