import io
import math

import numpy as np
import pytest

from sclgeom.analysis import (NoCounterexample, build_non_of_optimizer, counterexample_embeddings,
                              counterexample_grid, counterexample_losses,
                              equality_conditions_hold, verify_counterexample_formulas,
                              write_counterexample_csv)
from sclgeom.batching import BatchSet, batch_binding, make_partition
from sclgeom.geometry import LabelSet, embed_nc, make_of
from sclgeom.loss import LossConfig, batch_lower_bound, scl_batch_loss

from oracles import naive_scl_full

# frozen from naive_scl_full on the explicit constructions (tau = 1)
ETF_2_10 = 66.91269034023159
TILDE_2_10 = 66.4172132535334
ETF_2_1 = 3.827457676754591
TILDE_2_1 = 5.605285926326488


class TestCounterexample:
    @pytest.mark.parametrize("m,R,etf,tilde", [(2, 10, ETF_2_10, TILDE_2_10),
                                               (2, 1, ETF_2_1, TILDE_2_1)])
    def test_frozen_values(self, m, R, etf, tilde):
        res = counterexample_losses(m, R)
        assert res.loss_etf == pytest.approx(etf, rel=1e-12)
        assert res.loss_tilde == pytest.approx(tilde, rel=1e-12)
        assert res.tilde_wins == (R >= 10)

    @pytest.mark.parametrize("m,R", [(2, 10), (2, 1), (3, 12)])
    def test_closed_forms_match_loop_oracle(self, m, R):
        res = counterexample_losses(m, R)
        y, H_etf, H_tilde = counterexample_embeddings(m, R)
        lab = y.labels.tolist()
        assert naive_scl_full(H_etf, lab, 1.0) == pytest.approx(res.loss_etf, rel=1e-9)
        assert naive_scl_full(H_tilde, lab, 1.0) == pytest.approx(res.loss_tilde, rel=1e-9)
        assert verify_counterexample_formulas(m, R) < 1e-9

    def test_tilde_has_negative_entries(self):
        _, _, H = counterexample_embeddings(2, 10)
        assert H.min() < 0

    def test_invalid(self):
        with pytest.raises(ValueError):
            counterexample_losses(3, 1.5)
        with pytest.raises(ValueError):
            counterexample_losses(1, 10)
        with pytest.raises(ValueError):
            counterexample_losses(2, 0.5)

    def test_grid_csv(self):
        rows = counterexample_grid([2, 3], [1, 10])
        buf = io.StringIO()
        write_counterexample_csv(rows, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "n_min,R,loss_etf,loss_tilde,tilde_wins,discrepancy"
        assert len(lines) == 5
        assert [r.tilde_wins for r in rows] == [False, True, False, True]
        assert all(math.isfinite(r.loss_etf) and math.isfinite(r.loss_tilde) for r in rows)


class TestNonOF:
    def test_split_case(self):
        y = LabelSet([0, 0, 0, 1, 1, 2, 2])
        bs = BatchSet(((0, 1, 3, 4), (2, 5, 6)), 7)
        out = build_non_of_optimizer(y, bs, 4)
        assert out.case == "split"
        assert out.loss - out.lower_bound <= 1e-9 * abs(out.lower_bound)
        assert out.delta_gm > 0.1 or out.beta_nc > 0.1
        assert equality_conditions_hold(out.H, y, bs)[0]

    def test_merge_case(self):
        y = LabelSet([0, 0, 1, 1, 2, 2])
        bs = BatchSet(((0, 1, 2, 3), (0, 1, 4, 5)), 6)
        out = build_non_of_optimizer(y, bs, 3)
        assert out.case == "merge"
        assert out.loss == pytest.approx(out.lower_bound, rel=1e-9)
        assert out.delta_gm > 0.1
        assert equality_conditions_hold(out.H, y, bs)[0]

    def test_split_without_room_falls_back_to_merge(self):
        y = LabelSet([0, 0, 0, 1, 1, 2, 2])
        bs = BatchSet(((0, 1, 3, 4), (2, 5, 6)), 7)
        assert build_non_of_optimizer(y, bs, 3).case == "merge"

    def test_no_room_at_all(self):
        y = LabelSet([0, 0, 1, 1])
        bs = BatchSet(((0, 2, 3), (1,)), 4)
        with pytest.raises(ValueError, match="d >= k"):
            build_non_of_optimizer(y, bs, 2)

    def test_conditions_hold(self):
        y = LabelSet([0, 0, 1, 1])
        bs = batch_binding(make_partition(4, 2, seed=1), y)
        with pytest.raises(NoCounterexample):
            build_non_of_optimizer(y, bs, 4)


class TestEqualityConditions:
    def test_of_any_batches(self):
        y = LabelSet([0, 1, 0, 1, 2])
        H = embed_nc(make_of(3, 3), y)
        assert equality_conditions_hold(H, y)[0]
        assert equality_conditions_hold(H, y, make_partition(5, 2))[0]

    def test_cross_pair_violation(self):
        y = LabelSet([0, 0, 1, 1])
        H = embed_nc(make_of(2, 3), y)
        H[:, 3] = [0.3, 0.0, math.sqrt(1 - 0.09)]
        H[:, 2] = H[:, 3]
        ok, bad = equality_conditions_hold(H, y)
        assert not ok
        assert {(v.i, v.j) for v in bad} == {(0, 2), (0, 3), (1, 2), (1, 3)}
        assert all(not v.same_class and v.inner == pytest.approx(0.3) for v in bad)

    def test_unbatched_pair_ignored(self):
        y = LabelSet([0, 0, 1, 1])
        H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 1.0], [0.0, 1.0, 0.0, 0.0]])
        # examples 0 and 1 share a class but point in different directions
        assert equality_conditions_hold(H, y, BatchSet(((0, 2, 3), (1, 2)), 4))[0]
        ok, bad = equality_conditions_hold(H, y, BatchSet(((0, 1, 2), (2, 3)), 4))
        assert not ok and [(v.i, v.j, v.same_class) for v in bad] == [(0, 1, True)]

    @pytest.mark.parametrize("seed", range(10))
    def test_equivalence_with_bound(self, seed):
        r = np.random.default_rng(seed)
        y = LabelSet([0, 0, 1, 1, 2, 2, 0])
        bs = make_partition(7, 4, seed=seed)
        cfg = LossConfig(tau=0.5)
        if seed % 2:
            H = embed_nc(make_of(3, 4), y)
        else:
            H = np.abs(r.standard_normal((4, 7)))
            H /= np.linalg.norm(H, axis=0)
        at_bound = scl_batch_loss(H, y, bs, cfg) - batch_lower_bound(bs, y, cfg) <= 1e-9
        assert at_bound == equality_conditions_hold(H, y, bs)[0]


def test_pair_of_in_batch_singletons_is_free():
    y = LabelSet([0, 0, 1, 1])
    H = np.array([[1.0, 1.0, 0.6, 0.0], [0.0, 0.0, 0.8, 1.0]])
    bs = BatchSet(((0, 2), (1, 3)), 4)
    # both batches hold one example per class: the loss is 0 whatever the angles
    assert scl_batch_loss(H, y, bs) == 0.0 == batch_lower_bound(bs, y)
    assert equality_conditions_hold(H, y, bs)[0]


def test_single_class_batch_needs_equal_angles_only():
    y = LabelSet([0, 0, 0, 1])
    c = 0.5
    # three unit vectors with pairwise inner product 1/2, none aligned
    H = np.array([[1.0, c, c, 0.0],
                  [0.0, math.sqrt(1 - c * c), c * (1 - c) / math.sqrt(1 - c * c), 0.0],
                  [0.0, 0.0, 0.0, 0.0],
                  [0.0, 0.0, 0.0, 1.0]])
    H[2, 2] = math.sqrt(1 - H[0, 2] ** 2 - H[1, 2] ** 2)
    bs = BatchSet(((0, 1, 2), (3,)), 4)
    assert scl_batch_loss(H, y, bs) == pytest.approx(batch_lower_bound(bs, y), abs=1e-12)
    assert equality_conditions_hold(H, y, bs)[0]
    H2 = H.copy()
    H2[:, 2] = [1.0, 0.0, 0.0, 0.0]
    assert scl_batch_loss(H2, y, bs) > batch_lower_bound(bs, y) + 1e-6
    assert not equality_conditions_hold(H2, y, bs)[0]
