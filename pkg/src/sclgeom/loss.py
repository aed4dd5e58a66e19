"""Full-batch and mini-batch supervised contrastive loss, gradients and bounds.

Inner products are divided by ``tau`` while columns stay unit-norm.  For
sample ``i`` with positives ``P(i)`` inside a batch the term is

    log sum_{l != i} exp(s_il) - mean_{j in P(i)} s_ij,    s = H^T H / tau

which equals the average over positives of
``log sum_{l != i} exp(s_il - s_ij)``.  A class with fewer than two members
(globally, or inside a given batch) has no positive pairs and contributes 0
to both the loss and the bound.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .batching import BatchSet
from .geometry import LabelSet, as_embeddings, check_dims

DEFAULT_TAU = 0.1
DEFAULT_BASE_TAU = 0.07


class SingletonClassWarning(UserWarning):
    """A class with one member was dropped from the loss and the bound."""


class DegenerateLossError(ValueError):
    """Every class has at most one member, so the loss is identically zero."""


@dataclass(frozen=True)
class LossConfig:
    tau: float = DEFAULT_TAU
    base_tau: float | None = None
    per_sample: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.base_tau is not None and not self.base_tau > 0:
            raise ValueError(f"base_tau must be positive, got {self.base_tau}")

    def scale(self, n: int) -> float:
        s = self.tau / self.base_tau if self.base_tau is not None else 1.0
        return s / n if self.per_sample else s


@dataclass
class LossReport:
    value: float
    lower_bound: float
    gap: float
    achieved: bool
    tau: float = DEFAULT_TAU
    per_sample: bool = False

    @classmethod
    def build(cls, value, lower_bound, cfg: LossConfig, rtol: float = 1e-9):
        gap = value - lower_bound
        return cls(float(value), float(lower_bound), float(gap),
                   bool(gap <= rtol * max(1.0, abs(lower_bound))), cfg.tau, cfg.per_sample)

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _warn_singletons(counts, where):
    single = [c for c, m in enumerate(counts) if m == 1]
    if single:
        warnings.warn(f"{where}: classes {single} have a single member and contribute 0",
                      SingletonClassWarning, stacklevel=3)


def _packed(batches: BatchSet, n: int):
    if batches.n != n:
        raise ValueError(f"batch universe has {batches.n} examples but H has {n} columns")
    cached = getattr(batches, "_packed", None)
    if cached is None:
        cached = kernels.pack_batches(batches.batches)
        object.__setattr__(batches, "_packed", cached)
    return cached


def _full_packed(n: int):
    return np.arange(n, dtype=np.int64), np.array([0, n], dtype=np.int64)


def _prepare_full(H, y: LabelSet):
    H = as_embeddings(H)
    check_dims(H, y)
    if np.all(y.counts <= 1):
        raise DegenerateLossError("every class has at most one member; the loss is identically 0")
    _warn_singletons(y.counts, "full-batch loss")
    return H


def loss_and_gradient(H, y: LabelSet, batches: BatchSet | None = None,
                      cfg: LossConfig = LossConfig(), want_grad: bool = True, backend=None):
    """Loss value and Euclidean gradient (``None`` unless ``want_grad``).

    ``batches=None`` means the full batch.  No validation beyond shapes, so
    callers in a loop pay only for the kernel.
    """
    n = H.shape[1]
    flat, offsets = _full_packed(n) if batches is None else _packed(batches, n)
    value, grad = kernels.batch_terms(H, y.labels, flat, offsets, y.k, cfg.tau,
                                      want_grad, backend)
    s = cfg.scale(n)
    return value * s, (grad * s if grad is not None else None)


def scl_full_loss(H, y: LabelSet, cfg: LossConfig = LossConfig()) -> float:
    H = _prepare_full(H, y)
    return loss_and_gradient(H, y, None, cfg, want_grad=False)[0]


def scl_full_gradient(H, y: LabelSet, cfg: LossConfig = LossConfig()) -> np.ndarray:
    H = _prepare_full(H, y)
    return loss_and_gradient(H, y, None, cfg)[1]


def scl_batch_loss(H, y: LabelSet, batches: BatchSet, cfg: LossConfig = LossConfig()) -> float:
    H = as_embeddings(H)
    check_dims(H, y)
    return loss_and_gradient(H, y, batches, cfg, want_grad=False)[0]


def scl_batch_gradient(H, y: LabelSet, batches: BatchSet,
                       cfg: LossConfig = LossConfig()) -> np.ndarray:
    H = as_embeddings(H)
    check_dims(H, y)
    return loss_and_gradient(H, y, batches, cfg)[1]


def _bound_terms(counts, tau) -> float:
    n = sum(counts)
    q = math.exp(-1.0 / tau)
    return sum(c * math.log(c - 1 + (n - c) * q) for c in counts if c >= 2)


def full_lower_bound(counts, cfg: LossConfig = LossConfig()) -> float:
    """``sum_c n_c log(n_c - 1 + (n - n_c) exp(-1/tau))`` over classes with ``n_c >= 2``."""
    counts = [int(c) for c in counts]
    if not counts:
        raise ValueError("counts must be non-empty")
    if any(c < 1 for c in counts):
        raise ValueError(f"counts must be positive, got {counts}")
    _warn_singletons(counts, "full-batch bound")
    return _bound_terms(counts, cfg.tau) * cfg.scale(sum(counts))


def batch_lower_bound(batches: BatchSet, y: LabelSet, cfg: LossConfig = LossConfig()) -> float:
    if batches.n != y.n:
        raise ValueError("labels and batches disagree on n")
    total = 0.0
    for b in batches:
        counts = np.bincount(y.labels[list(b)], minlength=y.k)
        total += _bound_terms([int(c) for c in counts if c > 0], cfg.tau)
    return total * cfg.scale(y.n)


def lower_bound(y: LabelSet, batches: BatchSet | None, cfg: LossConfig) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SingletonClassWarning)
        if batches is None:
            return full_lower_bound(y.counts, cfg)
        return batch_lower_bound(batches, y, cfg)


def loss_report(H, y: LabelSet, batches: BatchSet | None = None,
                cfg: LossConfig = LossConfig(), rtol: float = 1e-9) -> LossReport:
    if batches is None:
        value = scl_full_loss(H, y, cfg)
    else:
        value = scl_batch_loss(H, y, batches, cfg)
    return LossReport.build(value, lower_bound(y, batches, cfg), cfg, rtol)
