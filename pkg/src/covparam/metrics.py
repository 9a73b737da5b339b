"""Similarity measures on SPD matrices and on their Euclidean representations."""
from __future__ import annotations

import math

import numpy as np
from scipy import linalg

from .parameterization import EuclidRep

__all__ = ["MetricError", "airm", "lerm", "logdet_div", "euclid_dist", "spd_log",
           "pairwise", "METRICS"]

SYM_RTOL = 1e-12
# eigenvalues below EIG_FLOOR * lambda_max are treated as non-PD
EIG_FLOOR = 1e-12


class MetricError(ValueError):
    pass


def _as_spd(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise MetricError(f"{name} must be a square matrix")
    if not np.all(np.isfinite(X)):
        raise MetricError(f"{name} has non-finite entries")
    if np.linalg.norm(X - X.T) > SYM_RTOL * max(np.linalg.norm(X), 1e-300):
        raise MetricError(f"{name} is not symmetric")
    return X


def _pair(X, Y):
    X = _as_spd(X, "X")
    Y = _as_spd(Y, "Y")
    if X.shape != Y.shape:
        raise MetricError(f"dimension mismatch {X.shape} vs {Y.shape}")
    return X, Y


def _cholesky(X, name):
    try:
        return linalg.cholesky(X, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise MetricError(f"{name} is not positive definite") from exc


def _check_spectrum(w, name):
    if w[-1] <= 0 or w[0] < EIG_FLOOR * w[-1]:
        raise MetricError(f"{name} is not positive definite (eigenvalue {w[0]:.3g})")


def spd_log(X) -> np.ndarray:
    """Principal matrix logarithm of an SPD matrix."""
    X = _as_spd(X)
    w, V = linalg.eigh(X, check_finite=False)
    _check_spectrum(w, "X")
    return (V * np.log(w)) @ V.T


def airm(X, Y) -> float:
    """Affine-invariant Riemannian distance ``||log(X^-1/2 Y X^-1/2)||_F``.

    The eigenvalues of ``X^-1/2 Y X^-1/2`` are those of the generalized
    problem ``Y v = lambda X v``, so a single generalized symmetric
    eigensolve replaces the two matrix square roots.
    """
    X, Y = _pair(X, Y)
    _cholesky(X, "X")
    try:
        w = linalg.eigh(Y, X, eigvals_only=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise MetricError("generalized eigenproblem failed; inputs not PD") from exc
    _check_spectrum(w, "Y")
    return float(np.sqrt(np.sum(np.log(w) ** 2)))


def lerm(X, Y) -> float:
    """Log-Euclidean distance ``||log X - log Y||_F``."""
    X, Y = _pair(X, Y)
    return float(np.linalg.norm(spd_log(X) - spd_log(Y)))


def logdet_div(X, Y) -> float:
    """LogDet divergence ``tr(X Y^-1) - log det(X Y^-1) - d``.

    Asymmetric in its arguments. Both the trace and the determinant are
    read from Cholesky factors; no eigenvalues are computed.
    """
    X, Y = _pair(X, Y)
    d = X.shape[0]
    Lx = _cholesky(X, "X")
    Ly = _cholesky(Y, "Y")
    ly_diag = np.diag(Ly)
    if ly_diag.min() < np.sqrt(EIG_FLOOR) * ly_diag.max():
        raise MetricError("Y is numerically singular")
    # tr(X Y^-1) = ||Ly^-1 Lx||_F^2
    M = linalg.solve_triangular(Ly, Lx, lower=True, check_finite=False)
    trace = np.sum(M * M)
    logdet = 2.0 * (np.sum(np.log(np.diag(Lx))) - np.sum(np.log(ly_diag)))
    return float(trace - logdet - d)


def euclid_dist(a: EuclidRep, b: EuclidRep) -> float:
    """Frobenius distance between two representations of the same layout."""
    if (a.kind is not b.kind or a.d != b.d or a.mean_fused != b.mean_fused
            or (a.mean_fused and a.lam != b.lam)):
        raise MetricError(f"representation mismatch: {a.signature} vs {b.signature}")
    diff = a.vec - b.vec
    return math.sqrt(diff @ diff)


METRICS = {
    "airm": airm,
    "lerm": lerm,
    "logdet": logdet_div,
    "euclid": euclid_dist,
}


def pairwise(items_a, items_b, metric) -> np.ndarray:
    """Distance matrix ``out[i, j] = metric(items_a[i], items_b[j])``."""
    fn = METRICS[metric] if isinstance(metric, str) else metric
    if metric == "lerm":
        # log-matrices computed once per item
        la = [spd_log(x) for x in items_a]
        lb = la if items_b is items_a else [spd_log(y) for y in items_b]
        return np.array([[np.linalg.norm(x - y) for y in lb] for x in la])
    return np.array([[fn(x, y) for y in items_b] for x in items_a])
