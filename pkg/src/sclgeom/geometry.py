"""Embedding/label containers, frame constructors and the feasible-set projection.

Embeddings are stored as plain ``(d, n)`` float arrays whose columns are the
per-example features.  Class-mean matrices are ``(d, k)`` arrays.  All
geometry assertions downstream compare Gram matrices, so the particular
orientation chosen by :func:`make_of` is irrelevant.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

FEASIBILITY_TOL = 1e-8


@dataclass(frozen=True)
class LabelSet:
    """Class labels ``y_i in {0..k-1}``; every class must be present."""

    labels: np.ndarray
    k: int = field(default=-1)

    def __post_init__(self):
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.size == 0:
            raise ValueError("labels must be a non-empty 1-d sequence")
        if not np.issubdtype(y.dtype, np.integer):
            if not np.all(np.equal(np.mod(y, 1), 0)):
                raise ValueError("labels must be integers")
        y = y.astype(np.int64)
        if y.min() < 0:
            raise ValueError("labels must be non-negative")
        k = int(y.max()) + 1 if self.k < 0 else int(self.k)
        if y.max() >= k:
            raise ValueError(f"label {int(y.max())} out of range for k={k}")
        counts = np.bincount(y, minlength=k)
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise ValueError(f"classes {missing.tolist()} have no members")
        y.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "_counts", counts)

    @classmethod
    def from_counts(cls, counts) -> "LabelSet":
        counts = [int(c) for c in counts]
        return cls(np.repeat(np.arange(len(counts)), counts), k=len(counts))

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def counts(self) -> np.ndarray:
        return self._counts

    @property
    def n_min(self) -> int:
        return int(self.counts.min())

    @property
    def imbalance_ratio(self) -> float:
        return float(self.counts.max() / self.counts.min())

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def __len__(self):
        return self.n

    def __eq__(self, other):
        if not isinstance(other, LabelSet):
            return NotImplemented
        return self.k == other.k and np.array_equal(self.labels, other.labels)

    def __hash__(self):
        return hash((self.k, self.labels.tobytes()))


def as_embeddings(H) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.ndim != 2 or H.shape[0] < 1 or H.shape[1] < 1:
        raise ValueError(f"embedding matrix must be (d, n) with d, n >= 1, got {H.shape}")
    if not np.all(np.isfinite(H)):
        raise ValueError("embedding matrix has non-finite entries")
    return H


def check_dims(H: np.ndarray, y: LabelSet) -> None:
    if H.shape[1] != y.n:
        raise ValueError(f"H has {H.shape[1]} columns but there are {y.n} labels")


def is_feasible(H, nonneg: bool = True, tol: float = FEASIBILITY_TOL) -> bool:
    """Unit-norm columns (and entrywise non-negative when ``nonneg``)."""
    H = as_embeddings(H)
    norms = np.linalg.norm(H, axis=0)
    if np.max(np.abs(norms - 1.0)) > tol:
        return False
    return not (nonneg and H.min() < -tol)


def class_means(H, y: LabelSet) -> np.ndarray:
    """Return the ``(d, k)`` matrix whose column ``c`` is the mean of class ``c``."""
    H = as_embeddings(H)
    check_dims(H, y)
    M = np.zeros((H.shape[0], y.k))
    np.add.at(M.T, y.labels, H.T)
    return M / y.counts


def global_mean(M) -> np.ndarray:
    return np.asarray(M, dtype=np.float64).mean(axis=1)


def gram(V) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    G = V.T @ V
    return 0.5 * (G + G.T)


def make_of(k: int, d: int) -> np.ndarray:
    """First ``k`` standard basis vectors of ``R^d``: a non-negative unit k-OF."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if d < k:
        raise ValueError(f"a {k}-OF needs d >= k, got d={d}")
    return np.eye(d, k)


def center_columns(V) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    return V - V.mean(axis=1, keepdims=True)


def make_etf(k: int, d: int) -> np.ndarray:
    """Unit-norm simplex ETF: a centered k-OF rescaled to unit columns.

    The centering step needs ``d >= k`` even though the result spans only
    ``k - 1`` dimensions.
    """
    if k < 2:
        raise ValueError("a simplex ETF needs k >= 2")
    if d < k - 1:
        raise ValueError(f"a {k}-ETF spans {k - 1} dimensions, got d={d}")
    if d < k:
        raise ValueError(f"ETF construction centers a {k}-OF and needs d >= k, got d={d}")
    return center_columns(make_of(k, d)) * np.sqrt(k / (k - 1))


def project_feasible(v, nonneg: bool = True) -> tuple[np.ndarray, bool]:
    """Euclidean projection onto the unit sphere (intersected with the orthant).

    Returns ``(x, degenerate)``.  When nothing survives clipping (or ``v`` is
    zero) the uniform direction ``1/sqrt(d)`` is returned and ``degenerate``
    is True.
    """
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    x = np.maximum(v, 0.0) if nonneg else v
    norm = np.linalg.norm(x)
    if norm == 0.0:
        return np.full(v.shape, 1.0 / np.sqrt(v.size)), True
    return x / norm, False


def project_columns(H, nonneg: bool = True) -> tuple[np.ndarray, int]:
    """Column-wise :func:`project_feasible`; returns the projected matrix and
    the number of columns that hit the degenerate fallback."""
    H = np.asarray(H, dtype=np.float64)
    X = np.maximum(H, 0.0) if nonneg else H.copy()
    norms = np.linalg.norm(X, axis=0)
    bad = norms == 0.0
    norms[bad] = 1.0
    X /= norms
    if bad.any():
        X[:, bad] = 1.0 / np.sqrt(H.shape[0])
    return X, int(bad.sum())


def embed_nc(M, y: LabelSet) -> np.ndarray:
    """Place every example exactly on its class column (neural collapse)."""
    M = np.asarray(M, dtype=np.float64)
    if M.shape[1] != y.k:
        raise ValueError(f"need {y.k} class columns, got {M.shape[1]}")
    return M[:, y.labels].copy()


# -- CSV formats -------------------------------------------------------------


def write_embeddings_csv(H, fh) -> None:
    H = as_embeddings(H)
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(H.shape)
    for row in H:
        w.writerow([repr(float(x)) for x in row])


def read_embeddings_csv(fh) -> np.ndarray:
    rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise ValueError("empty embeddings file")
    try:
        d, n = (int(x) for x in rows[0])
        H = np.array([[float(x) for x in r] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"malformed embeddings CSV: {exc}") from None
    if H.shape != (d, n):
        raise ValueError(f"header says ({d}, {n}) but found {H.shape}")
    return as_embeddings(H)


def write_labels_csv(y: LabelSet, fh) -> None:
    csv.writer(fh, lineterminator="\n").writerow(y.labels.tolist())


def read_labels_csv(fh) -> LabelSet:
    rows = [r for r in csv.reader(fh) if r]
    if len(rows) != 1:
        raise ValueError("labels CSV must hold exactly one row")
    try:
        return LabelSet(np.array([int(x) for x in rows[0]]))
    except ValueError as exc:
        raise ValueError(f"malformed labels CSV: {exc}") from None


def embeddings_to_csv(H) -> str:
    buf = io.StringIO()
    write_embeddings_csv(H, buf)
    return buf.getvalue()


def embeddings_from_csv(text: str) -> np.ndarray:
    return read_embeddings_csv(io.StringIO(text))


def imbalanced_counts(k: int, dist: str = "balanced", ratio: float = 1.0, n_min: int = 2) -> list[int]:
    """Class sizes for the balanced, STEP and long-tail profiles.

    STEP gives the first ``ceil(k/2)`` classes ``ratio * n_min`` examples and
    the rest ``n_min``.  Long-tail interpolates geometrically,
    ``n_c = round(n_max * ratio**(-c/(k-1)))`` with ``n_max = ratio * n_min``.
    """
    if k < 1 or n_min < 1:
        raise ValueError("k and n_min must be >= 1")
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    n_max = int(np.floor(ratio * n_min + 0.5))
    if dist == "balanced":
        return [n_min] * k
    if dist == "step":
        big = (k + 1) // 2
        return [n_max] * big + [n_min] * (k - big)
    if dist == "longtail":
        if k == 1:
            return [n_max]
        return [max(1, int(np.floor(n_max * ratio ** (-c / (k - 1)) + 0.5))) for c in range(k)]
    raise ValueError(f"unknown distribution {dist!r}")
