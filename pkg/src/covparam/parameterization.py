"""
Euclidean parameterizations of SPD covariance matrices.

Two coordinate systems are provided for a covariance ``C = L L^T``:

* ``CHOL``: the lower triangle of the Cholesky factor ``L``, row-major.
* ``SPHERE``: each row of ``L`` written in hyperspherical coordinates, a
  radius (the row norm, i.e. the feature's standard deviation) followed by
  the row's angles in ``(0, pi)``.

Both occupy ``d (d + 1) / 2`` coordinates. Fusing the region mean prepends
``lambda * mu`` and adds ``d`` more.
"""
from __future__ import annotations

import dataclasses
import enum

import numpy as np

from .descriptor import CovarianceDescriptor

__all__ = [
    "Kind",
    "LowerTriangular",
    "SphericalRep",
    "EuclidRep",
    "ParameterizationError",
    "cholesky_param",
    "spherical_param",
    "spherical_inverse",
    "fuse_mean",
    "parameterize",
    "unparameterize",
    "rep_length",
    "DEFAULT_LAMBDA",
]

DEFAULT_LAMBDA = 1.0
# sine products below this leave the remaining angles unidentifiable
SINE_UNDERFLOW = 1e-300


class ParameterizationError(ValueError):
    pass


class Kind(enum.Enum):
    CHOL = "chol"
    SPHERE = "sphere"


def rep_length(d: int, fused: bool = False) -> int:
    return d * (d + 1) // 2 + (d if fused else 0)


def _tril_indices(d):
    return np.tril_indices(d)


@dataclasses.dataclass(frozen=True)
class LowerTriangular:
    d: int
    entries: np.ndarray

    @classmethod
    def from_matrix(cls, L) -> "LowerTriangular":
        L = np.asarray(L, dtype=np.float64)
        return cls(L.shape[0], L[_tril_indices(L.shape[0])].copy())

    def to_matrix(self) -> np.ndarray:
        L = np.zeros((self.d, self.d))
        L[_tril_indices(self.d)] = self.entries
        return L


@dataclasses.dataclass(frozen=True)
class SphericalRep:
    """Radii ``d`` and angles ``d (d - 1) / 2`` (row ``i`` owns ``i`` angles)."""

    d: int
    radii: np.ndarray
    angles: np.ndarray

    def to_vector(self) -> np.ndarray:
        # row-major lower-triangle layout: row i -> [radius_i, angles of row i]
        out = np.empty(rep_length(self.d))
        pos = 0
        a = 0
        for i in range(self.d):
            out[pos] = self.radii[i]
            out[pos + 1:pos + 1 + i] = self.angles[a:a + i]
            pos += i + 1
            a += i
        return out

    @classmethod
    def from_vector(cls, d: int, vec) -> "SphericalRep":
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (rep_length(d),):
            raise ParameterizationError(f"expected {rep_length(d)} coordinates")
        radii = np.empty(d)
        angles = np.empty(d * (d - 1) // 2)
        pos = 0
        a = 0
        for i in range(d):
            radii[i] = vec[pos]
            angles[a:a + i] = vec[pos + 1:pos + 1 + i]
            pos += i + 1
            a += i
        return cls(d, radii, angles)


@dataclasses.dataclass(frozen=True)
class EuclidRep:
    kind: Kind
    d: int
    vec: np.ndarray
    mean_fused: bool = False
    lam: float = 0.0

    def __post_init__(self):
        if self.vec.shape != (rep_length(self.d, self.mean_fused),):
            raise ParameterizationError(
                f"{self.kind.value} rep of d={self.d} needs "
                f"{rep_length(self.d, self.mean_fused)} entries, got {self.vec.shape}")

    @property
    def signature(self):
        return (self.kind, self.d, self.mean_fused, self.lam if self.mean_fused else None)

    @property
    def mean_block(self) -> np.ndarray:
        return self.vec[:self.d] if self.mean_fused else np.empty(0)

    @property
    def cov_block(self) -> np.ndarray:
        return self.vec[self.d:] if self.mean_fused else self.vec


def cholesky_param(desc) -> LowerTriangular:
    """Cholesky factor of a strictly positive definite covariance.

    Raises ParameterizationError when ``C`` is not PD; regularise first.
    """
    C = desc.C if isinstance(desc, CovarianceDescriptor) else np.asarray(desc, dtype=np.float64)
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise ParameterizationError("covariance is not positive definite; regularize it") from exc
    # pivots at rounding level mean the matrix is singular to working precision
    if np.any(np.diag(L) ** 2 <= C.shape[0] * np.finfo(float).eps * np.diag(C)):
        raise ParameterizationError("covariance is numerically singular; regularize it")
    return LowerTriangular.from_matrix(L)


def spherical_param(L: LowerTriangular) -> SphericalRep:
    """Hyperspherical coordinates of each row of a Cholesky factor.

    Row ``i`` with entries ``l_0 .. l_i`` has radius ``r = ||l||`` and
    angles ``theta_1 .. theta_i`` such that

        l_0 = r cos(theta_1)
        l_j = r cos(theta_{j+1}) prod_{k<=j} sin(theta_k)
        l_i = r prod_{k<=i} sin(theta_k)

    Each angle is recovered as ``atan2(||l_{j+1:}||, l_j)``, the same value
    as ``arccos(l_j / (r prod sin))`` without the loss of accuracy near
    ``+-1``.
    """
    M = L.to_matrix() if isinstance(L, LowerTriangular) else np.asarray(L, dtype=np.float64)
    d = M.shape[0]
    if np.any(np.diag(M) <= 0):
        raise ParameterizationError("Cholesky factor needs a positive diagonal")
    radii = np.empty(d)
    angles = np.empty(d * (d - 1) // 2)
    a = 0
    for i in range(d):
        row = M[i, :i + 1]
        r = np.linalg.norm(row)
        if r == 0.0:
            raise ParameterizationError(f"row {i} of the factor has zero norm")
        radii[i] = r
        # tails[j] = ||row[j:]||, accumulated from the right
        tails = np.sqrt(np.cumsum(row[::-1] ** 2)[::-1])
        sine_prod = 1.0
        for j in range(i):
            if sine_prod < SINE_UNDERFLOW or (tails[j + 1] == 0.0 and row[j] == 0.0):
                angles[a + j] = np.pi / 2
                continue
            theta = np.arctan2(tails[j + 1], row[j])
            angles[a + j] = theta
            sine_prod *= np.sin(theta)
        a += i
    return SphericalRep(d, radii, angles)


def spherical_inverse(rep: SphericalRep) -> LowerTriangular:
    """Rebuild the Cholesky factor from radii and angles."""
    d = rep.d
    radii = np.asarray(rep.radii, dtype=np.float64)
    angles = np.asarray(rep.angles, dtype=np.float64)
    if radii.shape != (d,) or angles.shape != (d * (d - 1) // 2,):
        raise ParameterizationError("radii/angles size does not match d")
    if np.any(radii <= 0):
        raise ParameterizationError("radii must be strictly positive")
    if np.any((angles <= 0) | (angles >= np.pi)):
        raise ParameterizationError("angles must lie in the open interval (0, pi)")
    L = np.zeros((d, d))
    a = 0
    for i in range(d):
        th = angles[a:a + i]
        sines = np.concatenate(([1.0], np.cumprod(np.sin(th))))
        L[i, :i] = radii[i] * np.cos(th) * sines[:i]
        L[i, i] = radii[i] * sines[i]
        a += i
    return LowerTriangular.from_matrix(L)


def fuse_mean(vec, mu, lam: float = DEFAULT_LAMBDA, kind=Kind.SPHERE, d: int | None = None) -> EuclidRep:
    """Prepend ``lam * mu`` to a covariance representation."""
    if lam < 0:
        raise ParameterizationError("lambda must be non-negative")
    vec = np.asarray(vec, dtype=np.float64)
    mu = np.asarray(mu, dtype=np.float64)
    if d is None:
        d = mu.shape[0]
    if mu.shape != (d,) or vec.shape != (rep_length(d),):
        raise ParameterizationError(
            f"mean of length {mu.shape[0]} does not match a d={d} representation "
            f"of {vec.shape[0]} entries")
    return EuclidRep(Kind(kind), d, np.concatenate((lam * mu, vec)), True, float(lam))


def parameterize(desc: CovarianceDescriptor, kind=Kind.SPHERE, lam: float = DEFAULT_LAMBDA,
                 fuse: bool = True) -> EuclidRep:
    """Covariance descriptor -> flat Euclidean representation."""
    kind = Kind(kind)
    L = cholesky_param(desc)
    if kind is Kind.CHOL:
        vec = L.entries
    else:
        vec = spherical_param(L).to_vector()
    if fuse:
        return fuse_mean(vec, desc.mu, lam, kind, desc.d)
    return EuclidRep(kind, desc.d, vec.copy())


def unparameterize(rep: EuclidRep) -> np.ndarray:
    """Recover the covariance matrix ``L L^T`` encoded by a representation."""
    block = rep.cov_block
    if rep.kind is Kind.CHOL:
        L = LowerTriangular(rep.d, block).to_matrix()
    else:
        L = spherical_inverse(SphericalRep.from_vector(rep.d, block)).to_matrix()
    return L @ L.T
