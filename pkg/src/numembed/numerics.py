"""Dense linear algebra for the probes: SVD, min-norm least squares, PCA."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoConvergence, ZeroVariance, ZeroVarianceTarget

DEFAULT_RCOND = 1e-12


def _as_matrix(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim == 1:
        M = M[:, None]
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {M.shape}")
    if not np.isfinite(M).all():
        raise ValueError("matrix contains NaN or Inf")
    return M


def center_columns(M) -> tuple[np.ndarray, np.ndarray]:
    M = _as_matrix(M)
    means = M.mean(axis=0)
    return M - means, means


def thin_svd(M) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD ``M = U @ diag(S) @ V.T`` with a deterministic sign convention.

    Returns ``V`` (d x r), not ``V.T``. Each right singular vector is flipped
    so that its largest-magnitude entry is positive.
    """
    M = _as_matrix(M)
    try:
        U, S, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"SVD did not converge on {M.shape} input") from exc
    pivot = np.argmax(np.abs(Vt), axis=1)
    signs = np.sign(Vt[np.arange(Vt.shape[0]), pivot])
    signs[signs == 0] = 1.0
    return U * signs, S, (Vt * signs[:, None]).T


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float


def _require_variance(y: np.ndarray, exc=ZeroVarianceTarget) -> None:
    if y.size < 2 or np.ptp(y) == 0.0:
        raise exc("target has zero variance")


def min_norm_fit(A, y, rcond: float = DEFAULT_RCOND, ridge: float = 0.0, svd=None) -> LinearModel:
    """Least-squares fit ``y ~ A @ w + c`` returning the minimum-norm ``w``.

    Columns and target are centered first so the intercept is not penalised;
    singular values below ``rcond * s_max`` are dropped. ``ridge > 0`` swaps
    the pseudoinverse for Tikhonov filter factors. ``svd`` may carry a
    precomputed ``(U, S, V, column_means)`` of the centered ``A``.
    """
    A = _as_matrix(A)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != A.shape[0]:
        raise DimensionMismatch(f"A has {A.shape[0]} rows but y has {y.shape[0]}")
    if A.shape[0] < 2:
        raise ValueError("need at least two samples")
    _require_variance(y)
    if svd is None:
        Ac, a_mean = center_columns(A)
        U, S, V = thin_svd(Ac)
    else:
        U, S, V, a_mean = svd
    y_mean = y.mean()
    yc = y - y_mean
    if ridge > 0:
        inv = S / (S * S + ridge)
    else:
        cutoff = rcond * (S[0] if S.size else 0.0)
        inv = np.zeros_like(S)
        keep = S > cutoff
        inv[keep] = 1.0 / S[keep]
    w = V @ (inv * (U.T @ yc))
    return LinearModel(w, float(y_mean - a_mean @ w))


def predict(model: LinearModel, A) -> np.ndarray:
    A = _as_matrix(A)
    if A.shape[1] != model.weights.shape[0]:
        raise DimensionMismatch(f"model expects {model.weights.shape[0]} columns, got {A.shape[1]}")
    return A @ model.weights + model.intercept


def pearson(u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape or u.size < 2:
        raise DimensionMismatch("pearson needs two equal-length vectors of length >= 2")
    uc, vc = u - u.mean(), v - v.mean()
    nu, nv = np.sqrt(uc @ uc), np.sqrt(vc @ vc)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVariance("pearson is undefined for a constant vector")
    return float(np.clip((uc @ vc) / (nu * nv), -1.0, 1.0))


def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination; negative when worse than the mean."""
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise DimensionMismatch("y_true and y_pred differ in length")
    _require_variance(y_true, ZeroVariance)
    resid = y_true - y_pred
    dev = y_true - y_true.mean()
    return float(1.0 - (resid @ resid) / (dev @ dev))


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    eigenvalues: np.ndarray
    variance_ratios: np.ndarray
    total_variance: float

    @property
    def k(self) -> int:
        return self.components.shape[0]


def pca_from_svd(S: np.ndarray, V: np.ndarray, mean: np.ndarray, n: int, k: int) -> PcaModel:
    eig_all = S * S / (n - 1)
    total = float(eig_all.sum())
    eig = eig_all[:k].copy()
    ratios = eig / total if total > 0 else np.zeros_like(eig)
    return PcaModel(mean, V[:, :k].T.copy(), eig, ratios, total)


def pca_fit(M, k: int = 1) -> PcaModel:
    """PCA by SVD of the centered data; eigenvalues use the n-1 normalisation."""
    M = _as_matrix(M)
    n, d = M.shape
    if n < 2:
        raise ValueError("PCA needs at least two rows")
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} outside [1, {min(n - 1, d)}] for a {n}x{d} matrix")
    Mc, mean = center_columns(M)
    _, S, V = thin_svd(Mc)
    return pca_from_svd(S, V, mean, n, k)


def pca_transform(model: PcaModel, M) -> np.ndarray:
    M = _as_matrix(M)
    if M.shape[1] != model.mean.shape[0]:
        raise DimensionMismatch(f"PCA fitted on {model.mean.shape[0]} columns, got {M.shape[1]}")
    return (M - model.mean) @ model.components.T


def random_orthogonal(d: int, seed: int) -> np.ndarray:
    """Seeded Haar-ish orthogonal matrix from the QR of a Gaussian matrix."""
    G = np.random.default_rng(seed).standard_normal((d, d))
    Q, R = np.linalg.qr(G)
    return Q * np.sign(np.where(np.diag(R) == 0, 1.0, np.diag(R)))
