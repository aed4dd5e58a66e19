import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sclgeom.geometry import (LabelSet, center_columns, class_means, embeddings_from_csv,
                              embeddings_to_csv, gram, imbalanced_counts, is_feasible, make_etf,
                              make_of, project_columns, project_feasible, read_labels_csv,
                              write_labels_csv)
from sclgeom.metrics import delta_gm

from oracles import per_class_average, sphere_orthant_search


class TestLabelSet:
    def test_counts(self):
        y = LabelSet([0, 2, 1, 2, 2])
        assert y.k == 3
        assert y.counts.tolist() == [1, 1, 3]
        assert y.counts.sum() == y.n

    def test_missing_class(self):
        with pytest.raises(ValueError, match="no members"):
            LabelSet([0, 2, 2])

    def test_explicit_k_too_small(self):
        with pytest.raises(ValueError):
            LabelSet([0, 1, 2], k=2)

    def test_from_counts(self):
        assert LabelSet.from_counts([2, 1]).labels.tolist() == [0, 0, 1]

    def test_rejects_negative_and_fractional(self):
        with pytest.raises(ValueError):
            LabelSet([0, -1])
        with pytest.raises(ValueError):
            LabelSet([0.5, 1])


class TestClassMeans:
    def test_exact_collapse(self):
        e = np.eye(2)
        M = class_means(e[:, [0, 0, 1, 1]], LabelSet([0, 0, 1, 1]))
        np.testing.assert_array_equal(M, e)

    def test_two_point_mean(self):
        e = np.eye(2)
        M = class_means(e, LabelSet([0, 0]))
        np.testing.assert_allclose(M[:, 0], [0.5, 0.5])

    def test_matches_averaging_oracle(self, rng):
        H = rng.standard_normal((4, 6))
        labels = [0, 1, 2, 0, 1, 2]
        M = class_means(H, LabelSet(labels))
        np.testing.assert_allclose(M, per_class_average(H, labels, 3), rtol=0, atol=1e-15)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            class_means(np.eye(3), LabelSet([0, 1]))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_permutation_equivariance(self, seed):
        r = np.random.default_rng(seed)
        labels = np.concatenate([np.arange(3), r.integers(0, 3, 7)])
        H = r.standard_normal((4, labels.size))
        perm = r.permutation(labels.size)
        M1 = class_means(H, LabelSet(labels))
        M2 = class_means(H[:, perm], LabelSet(labels[perm]))
        np.testing.assert_allclose(M1, M2, atol=1e-14)


class TestFrames:
    def test_of_identity(self):
        np.testing.assert_array_equal(make_of(2, 2), np.eye(2))

    def test_of_embedded(self):
        M = make_of(3, 5)
        assert M.shape == (5, 3) and M.min() >= 0
        np.testing.assert_array_equal(gram(M), np.eye(3))

    def test_of_delta_gm_zero(self):
        assert delta_gm(make_of(4, 4)) == 0.0

    def test_of_needs_room(self):
        with pytest.raises(ValueError):
            make_of(4, 3)

    def test_etf_k2_antipodal(self):
        M = make_etf(2, 2)
        assert M[:, 0] @ M[:, 1] == pytest.approx(-1.0, abs=1e-15)

    def test_etf_k3_cosines(self):
        M = make_etf(3, 3)
        G = gram(M)
        assert np.allclose(np.diag(G), 1.0, atol=1e-15)
        off = G[~np.eye(3, dtype=bool)]
        np.testing.assert_allclose(off, -0.5, atol=1e-12)

    def test_etf_gram_formula(self):
        k = 5
        target = (k / (k - 1)) * (np.eye(k) - np.ones((k, k)) / k)
        np.testing.assert_allclose(gram(make_etf(k, 8)), target, atol=1e-12)

    def test_etf_impossible_dim(self):
        with pytest.raises(ValueError):
            make_etf(5, 3)

    def test_center_of_gives_projector(self):
        k = 4
        G = gram(center_columns(make_of(k, 6)))
        np.testing.assert_allclose(G, np.eye(k) - np.ones((k, k)) / k, atol=1e-15)

    def test_center_idempotent(self, rng):
        V = center_columns(rng.standard_normal((3, 5)))
        np.testing.assert_allclose(center_columns(V), V, atol=1e-15)
        np.testing.assert_allclose(V.sum(axis=1), 0, atol=1e-12)

    def test_center_equal_columns(self):
        V = np.tile([[1.0], [2.0]], (1, 4))
        np.testing.assert_array_equal(center_columns(V), 0)

    @pytest.mark.parametrize("k", range(2, 17))
    def test_centered_of_is_etf(self, k):
        for d in range(k, k + 5):
            U = center_columns(make_of(k, d))
            U /= np.linalg.norm(U, axis=0)
            G = gram(U)
            off = G[~np.eye(k, dtype=bool)]
            np.testing.assert_allclose(off, -1.0 / (k - 1), atol=1e-12)


class TestProjection:
    def test_single_survivor(self):
        x, deg = project_feasible([0.3, -0.4, 0.0], True)
        np.testing.assert_array_equal(x, [1, 0, 0])
        assert not deg

    def test_identity_on_feasible(self):
        v = np.array([0.6, 0.0, 0.8])
        x, deg = project_feasible(v, True)
        np.testing.assert_allclose(x, v, atol=1e-16)

    def test_fallback(self):
        x, deg = project_feasible([-1.0, -2.0], True)
        assert deg
        np.testing.assert_allclose(x, [2**-0.5, 2**-0.5])

    def test_unconstrained(self):
        x, deg = project_feasible([3.0, -4.0], False)
        np.testing.assert_allclose(x, [0.6, -0.8])
        assert project_feasible([0.0, 0.0], False)[1]

    def test_columns_report_fallbacks(self):
        H = np.array([[1.0, -1.0], [1.0, -1.0]])
        X, bad = project_columns(H, True)
        assert bad == 1
        assert is_feasible(X, True)

    @given(arrays(np.float64, st.integers(1, 3), elements=st.floats(-3, 3)))
    @settings(max_examples=40, deadline=None)
    def test_projection_is_nearest(self, v):
        if np.max(v) <= 1e-6:
            return
        x, deg = project_feasible(v, True)
        assert not deg
        _, best = sphere_orthant_search(v, samples=20000)
        assert np.linalg.norm(x - v) <= best + 1e-12


class TestCSV:
    def test_embeddings_round_trip(self, rng):
        H = rng.standard_normal((3, 7))
        text = embeddings_to_csv(H)
        assert text.splitlines()[0] == "3,7"
        np.testing.assert_array_equal(embeddings_from_csv(text), H)

    def test_header_mismatch(self):
        with pytest.raises(ValueError):
            embeddings_from_csv("2,2\n1,2\n")

    def test_labels_round_trip(self):
        y = LabelSet([0, 1, 1, 2])
        buf = io.StringIO()
        write_labels_csv(y, buf)
        assert buf.getvalue() == "0,1,1,2\n"
        assert read_labels_csv(io.StringIO(buf.getvalue())) == y


class TestImbalance:
    def test_step(self):
        assert imbalanced_counts(5, "step", 10, 2) == [20, 20, 20, 2, 2]

    def test_longtail(self):
        assert imbalanced_counts(3, "longtail", 10, 2) == [20, 6, 2]

    def test_balanced(self):
        assert imbalanced_counts(4, "balanced", 1, 3) == [3, 3, 3, 3]

    def test_bad_dist(self):
        with pytest.raises(ValueError):
            imbalanced_counts(3, "zipf", 10, 2)
