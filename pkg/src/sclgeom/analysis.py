"""Counterexamples and optimality certificates.

* Without the non-negativity constraint, the simplex ETF stops being optimal
  under strong imbalance: for three classes of sizes ``[R m, m, m]`` the
  configuration that puts the majority at ``+u`` and both minorities at
  ``-u`` beats the ETF once ``R >= 10``.
* When a batch set fails the interaction-graph conditions, embeddings that
  reach the mini-batch bound without forming an orthogonal frame can be
  written down explicitly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .batching import BatchSet, check_batches
from .geometry import LabelSet, class_means, embed_nc, is_feasible, make_etf, make_of
from .loss import LossConfig, batch_lower_bound, scl_batch_loss, scl_full_loss
from .metrics import beta_nc, delta_gm

CERTIFY_RTOL = 1e-9
NON_OF_MARGIN = 0.1


@dataclass
class CounterexampleResult:
    n_min: int
    R: float
    loss_etf: float
    loss_tilde: float
    tilde_wins: bool
    discrepancy: float | None = None

    def row(self):
        return [self.n_min, self.R, repr(self.loss_etf), repr(self.loss_tilde),
                str(self.tilde_wins).lower(),
                "" if self.discrepancy is None else repr(self.discrepancy)]


def _majority_size(n_min, R) -> int:
    if n_min < 2:
        raise ValueError("n_min must be >= 2")
    if R < 1:
        raise ValueError("R must be >= 1")
    big = R * n_min
    if abs(big - round(big)) > 1e-9:
        raise ValueError(f"R * n_min = {big} is not an integer")
    return int(round(big))


def counterexample_losses(n_min: int, R: float) -> CounterexampleResult:
    """Closed-form full-batch losses (tau = 1) of the ETF and the two-point
    configuration for class sizes ``[R n_min, n_min, n_min]``."""
    _majority_size(n_min, R)
    m = n_min
    loss_etf = m * (R * math.log(R * m - 1 + 2 * m * math.exp(-1.5))
                    + 2 * math.log(m - 1 + m * (R + 1) * math.exp(-1.5)))
    loss_tilde = m * (R * math.log(R * m - 1 + 2 * m * math.exp(-2.0))
                      + 2 * math.log(2 * m - 1 + R * m * math.exp(-2.0)))
    return CounterexampleResult(n_min, R, loss_etf, loss_tilde, loss_tilde < loss_etf)


def counterexample_embeddings(n_min: int, R: float, d: int = 3):
    """Labels plus explicit ``H_etf`` and ``H_tilde`` for the three-class example.

    ``H_tilde`` has negative entries, so it is feasible for the plain sphere
    constraint only.
    """
    big = _majority_size(n_min, R)
    y = LabelSet.from_counts([big, n_min, n_min])
    H_etf = embed_nc(make_etf(3, d), y)
    u = np.zeros(d)
    u[0] = 1.0
    M_tilde = np.stack([u, -u, -u], axis=1)
    return y, H_etf, embed_nc(M_tilde, y)


def verify_counterexample_formulas(n_min: int, R: float) -> float:
    """Largest relative gap between the closed forms and direct loss evaluation."""
    res = counterexample_losses(n_min, R)
    y, H_etf, H_tilde = counterexample_embeddings(n_min, R)
    assert is_feasible(H_etf, nonneg=False) and is_feasible(H_tilde, nonneg=False)
    cfg = LossConfig(tau=1.0)
    err = 0.0
    for closed, H in ((res.loss_etf, H_etf), (res.loss_tilde, H_tilde)):
        err = max(err, abs(closed - scl_full_loss(H, y, cfg)) / abs(closed))
    return err


def counterexample_grid(n_mins, ratios, verify: bool = True) -> list[CounterexampleResult]:
    out = []
    for m in n_mins:
        for R in ratios:
            res = counterexample_losses(m, R)
            if verify:
                res.discrepancy = verify_counterexample_formulas(m, R)
            out.append(res)
    return out


def write_counterexample_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n_min", "R", "loss_etf", "loss_tilde", "tilde_wins", "discrepancy"])
    for r in rows:
        w.writerow(r.row())


class NoCounterexample(ValueError):
    """The batch set satisfies the uniqueness conditions."""


@dataclass
class NonOFOptimizer:
    H: np.ndarray
    case: str
    detail: str
    loss: float
    lower_bound: float
    delta_gm: float
    beta_nc: float


def build_non_of_optimizer(y: LabelSet, batches: BatchSet, d: int,
                           cfg: LossConfig = LossConfig()) -> NonOFOptimizer:
    """Construct a global minimizer of the mini-batch loss that is not an OF.

    Split case: a class whose interaction subgraph is disconnected gets its
    components mapped to two orthogonal directions (needs ``d >= k + 1``).
    Merge case: two classes that never share a batch get the same direction
    (needs ``d >= k - 1``).  The result is certified: loss equals the bound
    and the geometry is measurably far from an OF.
    """
    report = check_batches(batches, y)
    if report.satisfied:
        raise NoCounterexample("conditions satisfied: every minimizer is an orthogonal frame")
    k = y.k
    split = [c for c in range(k) if not report.per_class_connected[c]]
    if split and d >= k + 1:
        c = split[0]
        comps = report.components[c]
        H = embed_nc(make_of(k, d), y)
        extra = np.zeros(d)
        extra[k] = 1.0
        for comp in comps[1:]:
            H[:, comp] = extra[:, None]
        case = "split"
        detail = f"class {c} components {comps[0]} and {[i for p in comps[1:] for i in p]}"
    elif report.missing_cross_pairs and d >= max(k - 1, 1):
        c1, c2 = report.missing_cross_pairs[0]
        others = [c for c in range(k) if c != c2]
        M = np.zeros((d, k))
        for j, c in enumerate(others):
            M[j, c] = 1.0
        M[:, c2] = M[:, c1]
        H = embed_nc(M, y)
        case = "merge"
        detail = f"classes {c1} and {c2} share a direction"
    elif split:
        raise ValueError(f"the split construction needs d >= k + 1 = {k + 1}, got {d}")
    else:
        raise ValueError(f"the merge construction needs d >= k - 1 = {k - 1}, got {d}")

    loss = scl_batch_loss(H, y, batches, cfg)
    bound = batch_lower_bound(batches, y, cfg)
    dgm = delta_gm(class_means(H, y))
    try:
        bnc = beta_nc(H, y)
    except ValueError:
        bnc = math.inf
    if loss - bound > CERTIFY_RTOL * max(1.0, abs(bound)):
        raise RuntimeError(f"{case} construction misses the bound by {loss - bound:.3e}")
    if not (dgm > NON_OF_MARGIN or bnc > NON_OF_MARGIN):
        raise RuntimeError(f"{case} construction is too close to an OF "
                           f"(delta_gm={dgm:.3g}, beta_nc={bnc:.3g})")
    return NonOFOptimizer(H, case, detail, loss, bound, dgm, bnc)


@dataclass
class Violation:
    i: int
    j: int
    same_class: bool
    inner: float


def equality_conditions_hold(H, y: LabelSet, batches: BatchSet | None = None,
                             tol: float = 1e-5) -> tuple[bool, list[Violation]]:
    """Check that co-batched pairs are aligned (same class) or orthogonal.

    Same-class pairs must satisfy ``|1 - h_i.h_j| <= tol``; cross-class pairs
    ``|h_i.h_j| <= tol``.  ``batches=None`` means the full batch.

    Two degenerate batch shapes are handled separately because the bound is
    tight there under weaker conditions:

    * a pair in which both examples are alone in their class within the
      batch never enters the loss, so it is not checked;
    * a batch holding a single class has no negatives, and its bound term
      ``m log(m - 1)`` is reached whenever all in-batch inner products are
      equal, so that is what gets checked (against their mean).
    """
    H = np.asarray(H, dtype=np.float64)
    G = H.T @ H
    lab = y.labels
    groups = [range(y.n)] if batches is None else batches.batches
    seen = set()
    bad = []
    for b in groups:
        idx = np.asarray(b)
        sub = G[np.ix_(idx, idx)]
        same = lab[idx][:, None] == lab[idx][None, :]
        if same.all():
            if idx.size < 3:
                continue
            off = sub[np.triu_indices(idx.size, 1)]
            dev = np.abs(sub - off.mean())
            live = np.ones_like(same)
        else:
            anchor = same.sum(axis=1) > 1
            dev = np.where(same, np.abs(1.0 - sub), np.abs(sub))
            live = anchor[:, None] | anchor[None, :]
        for a, c in zip(*np.nonzero(np.triu((dev > tol) & live, 1))):
            i, j = int(idx[a]), int(idx[c])
            key = (min(i, j), max(i, j))
            if key not in seen:
                seen.add(key)
                bad.append(Violation(key[0], key[1], bool(same[a, c]), float(G[i, j])))
    return not bad, bad
