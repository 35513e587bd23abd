"""Independent reference computations used to freeze expected values.

Nothing here touches numpy.linalg's SVD/eigen routines, so the package's
SVD path is checked against genuinely different arithmetic.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def jacobi_eigenvalues(C, tol: float = 1e-15, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending."""
    A = np.array(C, dtype=np.float64, copy=True)
    d = A.shape[0]
    for _ in range(max_sweeps):
        off = math.sqrt(sum(A[i, j] ** 2 for i in range(d) for j in range(d) if i != j))
        if off <= tol * max(1.0, float(np.abs(np.diag(A)).max())):
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for k in range(d):
                    akp, akq = A[k, p], A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(d):
                    apk, aqk = A[p, k], A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
    else:
        raise RuntimeError("Jacobi did not converge")
    return np.sort(np.diag(A))[::-1]


def covariance(M) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    n = M.shape[0]
    mean = M.sum(axis=0) / n
    Mc = M - mean
    return (Mc.T @ Mc) / (n - 1)


def pca_oracle(M) -> tuple[np.ndarray, np.ndarray]:
    """(eigenvalues, variance ratios) of the sample covariance via Jacobi."""
    eig = jacobi_eigenvalues(covariance(M))
    eig = np.clip(eig, 0.0, None)
    return eig, eig / eig.sum()


def helmert_basis(n: int) -> np.ndarray:
    """n x (n-1) orthonormal basis of the complement of the all-ones vector."""
    H = np.zeros((n, n - 1))
    for j in range(1, n):
        H[:j, j - 1] = 1.0
        H[j, j - 1] = -j
        H[:, j - 1] /= math.sqrt(j * (j + 1))
    return H


def min_norm_oracle(A, y) -> tuple[np.ndarray, float]:
    """Intercept + minimum-norm weights from Gram-matrix normal equations.

    Overdetermined full-column-rank: (Ac^T Ac) w = Ac^T y. Underdetermined
    full-row-rank (after removing the mean direction): w = B^T (B B^T)^-1 H^T y
    with B = H^T A. Dense LU solves only.
    """
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = A.shape
    if n - 1 >= d:
        Ac = A - A.sum(axis=0) / n
        yc = y - y.sum() / n
        w = np.linalg.solve(Ac.T @ Ac, Ac.T @ yc)
    else:
        H = helmert_basis(n)
        B = H.T @ A
        w = B.T @ np.linalg.solve(B @ B.T, H.T @ y)
    intercept = y.sum() / n - (A.sum(axis=0) / n) @ w
    return w, float(intercept)


def exact_value(text: str) -> Fraction:
    return Fraction(text)


def nearest_double_ok(text: str, value: float) -> bool:
    """True iff ``value`` is a double nearest to the decimal ``text``."""
    exact = Fraction(text)
    err = abs(Fraction(value) - exact)
    for neighbour in (math.nextafter(value, math.inf), math.nextafter(value, -math.inf)):
        if abs(Fraction(neighbour) - exact) < err:
            return False
    return True
