"""
Sparse coding and label-consistent dictionary learning.

Dictionary learning minimises

    ||S - D X||^2 + alpha ||Q - A X||^2 + beta ||H - W X||^2,
    s.t. ||x_i||_0 <= T

by running K-SVD on the stacked data ``[S; sqrt(alpha) Q; sqrt(beta) H]``
against the stacked dictionary ``[D; sqrt(alpha) A; sqrt(beta) W]``.
"""
from __future__ import annotations

import dataclasses
import enum
import logging
import warnings

import numpy as np

__all__ = [
    "SparseError",
    "CodeMode",
    "SparseCode",
    "Dictionary",
    "omp",
    "omp_batch",
    "elastic_net_encode",
    "build_supervision",
    "assign_atoms",
    "lcksvd_train",
    "lcksvd_objective",
    "classify",
    "classify_batch",
]

log = logging.getLogger(__name__)

OMP_TOL = 1e-12
EN_TOL = 1e-8
EN_MAX_ITER = 10_000


class SparseError(ValueError):
    pass


class CodeMode(enum.Enum):
    HARD = "hard"
    SOFT = "soft"


@dataclasses.dataclass
class SparseCode:
    coeffs: np.ndarray
    mode: CodeMode
    T: int | None = None
    t1: float | None = None
    t2: float | None = None
    support: tuple = ()
    residual_norms: tuple = ()
    iterations: int = 0
    kkt: float = 0.0

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.coeffs))


@dataclasses.dataclass
class Dictionary:
    """Trained LC-KSVD model.

    ``D`` has unit-norm atoms as columns; ``A`` maps codes to the
    label-consistent targets and ``W`` is the linear classifier.
    """

    D: np.ndarray
    A: np.ndarray
    W: np.ndarray
    atom_class: np.ndarray
    alpha: float
    beta: float
    T: int
    iterations: int
    seed: int
    class_names: tuple = ()
    objective_trace: np.ndarray = dataclasses.field(default_factory=lambda: np.empty(0))
    replaced_iterations: tuple = ()

    @property
    def K(self) -> int:
        return self.D.shape[1]

    @property
    def d_rep(self) -> int:
        return self.D.shape[0]

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]


def _atoms(D) -> np.ndarray:
    return D.D if isinstance(D, Dictionary) else np.asarray(D, dtype=np.float64)


def omp(D, s, T: int, tol: float = OMP_TOL) -> SparseCode:
    """Orthogonal matching pursuit with at most ``T`` atoms.

    Atoms are picked by largest absolute correlation with the residual
    (lowest index on ties) and the coefficients are refit by least squares
    on the whole support after each pick. Stops early once the residual or
    every correlation falls below ``tol * ||s||``.
    """
    D = _atoms(D)
    K = D.shape[1]
    if T < 1 or T > K:
        raise SparseError(f"sparsity T={T} must lie in [1, {K}]")
    s = np.asarray(s, dtype=np.float64)
    x = np.zeros(K)
    norm_s = float(np.linalg.norm(s))
    if norm_s == 0.0:
        return SparseCode(x, CodeMode.HARD, T=T, residual_norms=(0.0,))

    support: list[int] = []
    residual = s
    norms = [norm_s]
    coef = np.empty(0)
    for _ in range(T):
        corr = np.abs(D.T @ residual)
        corr[support] = -1.0
        k = int(np.argmax(corr))
        if corr[k] <= tol * norm_s:
            break
        support.append(k)
        Ds = D[:, support]
        coef = np.linalg.lstsq(Ds, s, rcond=None)[0]
        residual = s - Ds @ coef
        norms.append(float(np.linalg.norm(residual)))
        if norms[-1] <= tol * norm_s:
            break
    x[support] = coef
    return SparseCode(x, CodeMode.HARD, T=T, support=tuple(support), residual_norms=tuple(norms))


def omp_batch(D, S, T: int) -> np.ndarray:
    """Codes for every column of ``S``, stacked as columns."""
    D = _atoms(D)
    S = np.asarray(S, dtype=np.float64)
    X = np.zeros((D.shape[1], S.shape[1]))
    for i in range(S.shape[1]):
        X[:, i] = omp(D, S[:, i], T).coeffs
    return X


def _soft(z, t):
    return np.sign(z) * max(abs(z) - t, 0.0)


def _en_kkt(G, b, x, t1, t2) -> float:
    # gradient of the smooth part: -2 D^T (s - D x) + t2 x
    g = -2.0 * (b - G @ x) + t2 * x
    nz = x != 0
    viol = np.zeros_like(x)
    viol[nz] = np.abs(g[nz] + t1 * np.sign(x[nz]))
    viol[~nz] = np.maximum(np.abs(g[~nz]) - t1, 0.0)
    return float(viol.max()) if viol.size else 0.0


def elastic_net_encode(D, s, t1: float = 0.1, t2: float = 0.01, tol: float = EN_TOL,
                       max_iter: int = EN_MAX_ITER) -> SparseCode:
    """Minimise ``||s - D x||^2 + t1 ||x||_1 + (t2 / 2) ||x||^2``.

    Cyclic coordinate descent, stopped when the largest violation of the
    subgradient optimality conditions drops below ``tol``. Raises
    SparseError if that does not happen within ``max_iter`` sweeps.
    """
    if t1 < 0 or t2 < 0 or (t1 == 0 and t2 == 0):
        raise SparseError("need t1 >= 0, t2 >= 0, not both zero")
    D = _atoms(D)
    s = np.asarray(s, dtype=np.float64)
    G = D.T @ D
    b = D.T @ s
    K = D.shape[1]
    x = np.zeros(K)
    c = b.copy()  # D^T residual, kept in sync with x
    denom = 2.0 * np.diag(G) + t2
    kkt = _en_kkt(G, b, x, t1, t2)
    it = 0
    while kkt >= tol:
        if it >= max_iter:
            raise SparseError(f"elastic net did not converge in {max_iter} sweeps (kkt={kkt:.3g})")
        for k in range(K):
            if denom[k] == 0.0:
                continue
            rho = c[k] + G[k, k] * x[k]
            new = _soft(2.0 * rho, t1) / denom[k]
            delta = new - x[k]
            if delta != 0.0:
                c -= G[:, k] * delta
                x[k] = new
        it += 1
        c = b - G @ x
        kkt = _en_kkt(G, b, x, t1, t2)
    return SparseCode(x, CodeMode.SOFT, t1=t1, t2=t2, iterations=it, kkt=kkt,
                      support=tuple(np.flatnonzero(x)))


def assign_atoms(K: int, m: int) -> np.ndarray:
    """Class of each atom: ``K // m`` per class, the first ``K % m`` get one more."""
    if K < m:
        raise SparseError(f"K={K} atoms cannot cover {m} classes")
    counts = np.full(m, K // m)
    counts[: K % m] += 1
    return np.repeat(np.arange(m), counts)


def build_supervision(labels, atom_class, n_classes: int | None = None):
    """Label-consistency targets ``Q`` (K x N) and one-hot labels ``H`` (m x N)."""
    labels = np.asarray(labels, dtype=np.int64)
    atom_class = np.asarray(atom_class, dtype=np.int64)
    m = int(n_classes if n_classes is not None else max(labels.max(), atom_class.max()) + 1)
    if labels.size and (labels.min() < 0 or labels.max() >= m):
        raise SparseError(f"labels must lie in [0, {m})")
    Q = (atom_class[:, None] == labels[None, :]).astype(np.float64)
    H = (np.arange(m)[:, None] == labels[None, :]).astype(np.float64)
    return Q, H


def _ridge(targets, X):
    K = X.shape[0]
    return np.linalg.solve(X @ X.T + np.eye(K), X @ targets.T).T


def lcksvd_objective(S, Q, H, D, A, W, X, alpha, beta) -> float:
    return float(np.sum((S - D @ X) ** 2) + alpha * np.sum((Q - A @ X) ** 2)
                 + beta * np.sum((H - W @ X) ** 2))


def _init_atoms(S, labels, atom_class, rng):
    d, _ = S.shape
    D = np.empty((d, atom_class.size))
    for c in np.unique(atom_class):
        slots = np.flatnonzero(atom_class == c)
        pool = rng.permutation(np.flatnonzero(labels == c))
        for j, k in enumerate(slots):
            v = S[:, pool[j % pool.size]].copy()
            scale = np.linalg.norm(v)
            if scale == 0.0:
                v = rng.standard_normal(d)
            elif j >= pool.size:
                # repeated sample: perturb so the atoms are not identical
                v += 0.01 * scale / np.sqrt(d) * rng.standard_normal(d)
            D[:, k] = v / np.linalg.norm(v)
    return D


def lcksvd_train(S, labels, K: int, alpha: float, beta: float, T: int,
                 iterations: int = 50, seed: int = 0, n_classes: int | None = None,
                 class_names=()) -> Dictionary:
    """Learn ``D``, ``A`` and ``W`` from the columns of ``S``.

    Parameters
    ----------
    S : ndarray, shape (d_rep, N)
        Training representations as columns.
    labels : array_like of int, shape (N,)
    K : int
        Number of atoms, at least ``d_rep`` and at least the number of classes.
    alpha, beta : float
        Weights of the label-consistency and classification terms (the
        squares of the stacking factors).
    T : int
        Sparsity of every code.

    The objective is recorded after every coding + update round in
    ``objective_trace``; rounds that replaced an unused atom are listed in
    ``replaced_iterations``.
    """
    S = np.asarray(S, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    d, N = S.shape
    if labels.shape != (N,):
        raise SparseError("one label per training column required")
    if alpha < 0 or beta < 0:
        raise SparseError("alpha and beta must be non-negative")
    m = int(n_classes if n_classes is not None else labels.max() + 1)
    missing = sorted(set(range(m)) - set(labels.tolist()))
    if missing:
        raise SparseError(f"classes {missing} have no training samples")
    if K < d:
        raise SparseError(f"K={K} must be at least the representation length {d}")
    if N < K:
        warnings.warn(f"only {N} training samples for {K} atoms", stacklevel=2)
    if not 1 <= T <= K:
        raise SparseError(f"sparsity T={T} must lie in [1, {K}]")

    rng = np.random.default_rng(seed)
    atom_class = assign_atoms(K, m)
    Q, H = build_supervision(labels, atom_class, m)

    D0 = _init_atoms(S, labels, atom_class, rng)
    X0 = omp_batch(D0, S, T)
    A0 = _ridge(Q, X0)
    W0 = _ridge(H, X0)

    ra, rb = np.sqrt(alpha), np.sqrt(beta)
    Y = np.vstack((S, ra * Q, rb * H))
    Ds = np.vstack((D0, ra * A0, rb * W0))
    Ds /= np.linalg.norm(Ds, axis=0)

    X = omp_batch(Ds, Y, T)
    trace = []
    replaced = []
    for it in range(iterations):
        Xn = omp_batch(Ds, Y, T)
        # keep a sample's previous code when greedy pursuit does worse
        err_old = np.sum((Y - Ds @ X) ** 2, axis=0)
        err_new = np.sum((Y - Ds @ Xn) ** 2, axis=0)
        better = err_new <= err_old
        X[:, better] = Xn[:, better]

        unused = []
        for k in range(K):
            idx = np.flatnonzero(X[k])
            if idx.size == 0:
                unused.append(k)
                continue
            E = Y[:, idx] - Ds @ X[:, idx] + np.outer(Ds[:, k], X[k, idx])
            U, sv, Vt = np.linalg.svd(E, full_matrices=False)
            Ds[:, k] = U[:, 0]
            X[k, idx] = sv[0] * Vt[0]

        if unused:
            resid = np.sum((Y - Ds @ X) ** 2, axis=0)
            worst = [j for j in np.argsort(-resid, kind="stable") if np.any(Y[:, j])]
            for k, j in zip(unused, worst):
                Ds[:, k] = Y[:, j] / np.linalg.norm(Y[:, j])
            replaced.append(it)
            log.debug("iteration %d: replaced unused atoms %s", it, unused)

        trace.append(float(np.sum((Y - Ds @ X) ** 2)))

    norms = np.linalg.norm(Ds[:d], axis=0)
    norms[norms == 0.0] = 1.0
    D = Ds[:d] / norms
    Xs = X * norms[:, None]
    A = Ds[d:d + K] / (ra * norms) if alpha > 0 else _ridge(Q, Xs)
    W = Ds[d + K:] / (rb * norms) if beta > 0 else _ridge(H, Xs)
    return Dictionary(D, A, W, atom_class, float(alpha), float(beta), int(T), int(iterations),
                      int(seed), tuple(class_names), np.array(trace), tuple(replaced))


def classify(model: Dictionary, s, T: int | None = None):
    """Return ``(label, scores)`` with ``scores = W x`` for the OMP code ``x``."""
    x = omp(model.D, s, T or model.T).coeffs
    scores = model.W @ x
    return int(np.argmax(scores)), scores


def classify_batch(model: Dictionary, S, T: int | None = None) -> np.ndarray:
    X = omp_batch(model.D, S, T or model.T)
    return np.argmax(model.W @ X, axis=0)
