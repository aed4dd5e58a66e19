"""Geometry diagnostics for class means and embeddings."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import LabelSet, as_embeddings, center_columns, class_means, gram

PINV_RCOND = 1e-10


def _unit_fro(G: np.ndarray, what: str) -> np.ndarray:
    nrm = np.linalg.norm(G)
    if nrm == 0.0:
        raise ValueError(f"{what} Gram matrix is zero")
    return G / nrm


def delta_gm(M) -> float:
    """Frobenius distance between the normalized class-mean Gram and ``I/||I||``."""
    G = _unit_fro(gram(M), "class-mean")
    k = G.shape[0]
    return float(np.linalg.norm(G - np.eye(k) / math.sqrt(k)))


def delta_etf(M) -> float:
    """Same as :func:`delta_gm` but on centered means, against ``I - 11^T/k``."""
    M = np.asarray(M, dtype=np.float64)
    k = M.shape[1]
    if k < 2:
        raise ValueError("delta_etf needs k >= 2")
    G = _unit_fro(gram(center_columns(M)), "centered class-mean")
    T = np.eye(k) - np.full((k, k), 1.0 / k)
    return float(np.linalg.norm(G - T / np.linalg.norm(T)))


def pinv_psd(A, rcond: float = PINV_RCOND) -> np.ndarray:
    """Moore-Penrose pseudoinverse of a symmetric PSD matrix via ``eigh``.

    Eigenvalues at or below ``rcond * lambda_max`` are treated as zero.
    """
    A = np.asarray(A, dtype=np.float64)
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    lam_max = w.max(initial=0.0)
    if lam_max <= 0.0:
        return np.zeros_like(A)
    keep = w > rcond * lam_max
    return (V[:, keep] / w[keep]) @ V[:, keep].T


def scatter_matrices(H, y: LabelSet):
    H = as_embeddings(H)
    M = class_means(H, y)
    Mc = M - M.mean(axis=1, keepdims=True)
    sigma_b = Mc @ Mc.T
    R = H - M[:, y.labels]
    sigma_w = R @ R.T
    return sigma_w, sigma_b


def beta_nc(H, y: LabelSet) -> float:
    """``tr(Sigma_W Sigma_B^+) / k``; zero exactly under within-class collapse."""
    if y.k < 2:
        raise ValueError("beta_nc needs k >= 2")
    sigma_w, sigma_b = scatter_matrices(H, y)
    if np.linalg.norm(sigma_b) <= 1e-14 * max(1.0, np.linalg.norm(sigma_w)):
        raise ValueError("between-class scatter is zero; beta_nc is undefined")
    return float(np.trace(sigma_w @ pinv_psd(sigma_b)) / y.k)


def cosine_table(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    norms = np.linalg.norm(M, axis=0)
    if np.any(norms == 0.0):
        raise ValueError(f"zero class mean for classes {np.flatnonzero(norms == 0).tolist()}")
    U = M / norms
    return np.clip(U.T @ U, -1.0, 1.0)


def mean_pairwise_cosine(M) -> float:
    C = cosine_table(M)
    k = C.shape[0]
    if k < 2:
        raise ValueError("need at least two class means")
    iu = np.triu_indices(k, 1)
    return float(C[iu].mean())


def heatmap_payload(G) -> np.ndarray:
    G = np.asarray(G, dtype=np.float64)
    peak = np.abs(G).max()
    if peak == 0.0:
        raise ValueError("cannot normalize a zero matrix")
    return G / peak


@dataclass
class GeometryReport:
    delta_gm: float
    delta_etf: float
    beta_nc: float
    mean_cos: float
    mean_abs_cos: float
    cosines: list = field(repr=False)
    heatmap: list = field(repr=False)
    loss: float | None = None
    lower_bound: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(_finite_or_none(self.to_dict()), **kw)

    def write_heatmap_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        for row in self.heatmap:
            w.writerow([repr(float(x)) for x in row])


def _finite_or_none(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _finite_or_none(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite_or_none(v) for v in obj]
    return obj


def _or_nan(fn, *args):
    try:
        return fn(*args)
    except ValueError:
        return float("nan")


def geometry_report(H, y: LabelSet, loss=None, lower_bound=None) -> GeometryReport:
    """Every diagnostic at once; undefined entries come back as NaN."""
    M = class_means(H, y)
    G = gram(M)
    C = _or_nan(cosine_table, M)
    if isinstance(C, np.ndarray) and y.k >= 2:
        iu = np.triu_indices(y.k, 1)
        mean_cos, mean_abs = float(C[iu].mean()), float(np.abs(C[iu]).mean())
        cos_list = C.tolist()
    else:
        mean_cos = mean_abs = float("nan")
        cos_list = []
    heat = _or_nan(heatmap_payload, G)
    return GeometryReport(
        delta_gm=_or_nan(delta_gm, M),
        delta_etf=_or_nan(delta_etf, M),
        beta_nc=_or_nan(beta_nc, H, y),
        mean_cos=mean_cos,
        mean_abs_cos=mean_abs,
        cosines=cos_list,
        heatmap=heat.tolist() if isinstance(heat, np.ndarray) else [],
        loss=None if loss is None else float(loss),
        lower_bound=None if lower_bound is None else float(lower_bound),
    )
