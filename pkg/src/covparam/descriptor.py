"""
Region covariance descriptors
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
Per-pixel feature maps for grayscale images and the covariance / mean
summary of those features over rectangular regions.

Arrays follow the numpy image convention: ``data[y, x, k]`` holds feature
``k`` at column ``x`` and row ``y``. A region is therefore addressed by
inclusive pixel bounds ``(x0, y0, x1, y1)``.
"""
from __future__ import annotations

import dataclasses
import enum
import warnings
from typing import Sequence

import numpy as np
from scipy import ndimage

__all__ = [
    "FeatureSet",
    "FeatureTensor",
    "Rect",
    "CovarianceDescriptor",
    "IntegralTensors",
    "DescriptorError",
    "compute_feature_tensor",
    "build_integral_tensors",
    "region_covariance",
    "regularize_spd",
    "EPS_SCALE",
    "EPS_FLOOR",
]

EPS_SCALE = 1e-6
EPS_FLOOR = 1e-10

# first and second derivative kernels, applied with replicate padding
DERIV1 = np.array([-0.5, 0.0, 0.5])
DERIV2 = np.array([1.0, -2.0, 1.0])

GRAD5_NAMES = ("I", "|Ix|", "|Iy|", "|Ixx|", "|Iyy|")


class DescriptorError(ValueError):
    """Invalid image, region or covariance input."""


class FeatureSet(enum.Enum):
    GRAD5 = "grad5"
    CUSTOM = "custom"


@dataclasses.dataclass(frozen=True)
class FeatureTensor:
    data: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        if self.data.ndim != 3:
            raise DescriptorError("feature data must be H x W x d")
        if len(self.feature_names) != self.data.shape[2]:
            raise DescriptorError("one name per feature channel required")
        if not np.all(np.isfinite(self.data)):
            raise DescriptorError("feature tensor contains non-finite values")
        if self.d < 2:
            warnings.warn("single-feature tensor: covariance reduces to a variance",
                          stacklevel=2)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def d(self) -> int:
        return self.data.shape[2]


@dataclasses.dataclass(frozen=True)
class Rect:
    """Inclusive pixel rectangle ``[x0, x1] x [y0, y1]``."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def area(self) -> int:
        return (self.x1 - self.x0 + 1) * (self.y1 - self.y0 + 1)

    def validate(self, width: int, height: int) -> None:
        if not (0 <= self.x0 <= self.x1 < width and 0 <= self.y0 <= self.y1 < height):
            raise DescriptorError(f"{self} outside {width}x{height} image")
        if self.area < 2:
            raise DescriptorError(f"{self} holds fewer than 2 pixels")


@dataclasses.dataclass(frozen=True)
class CovarianceDescriptor:
    C: np.ndarray
    mu: np.ndarray
    N: int
    regularized: bool = False
    epsilon: float = 0.0

    @property
    def d(self) -> int:
        return self.C.shape[0]


@dataclasses.dataclass(frozen=True)
class IntegralTensors:
    """Running sums of features (``P``) and feature outer products (``Q``).

    ``P[y, x]`` is the sum over all pixels strictly above and left of
    ``(x, y)``, so the first row and column are zero. Sums are taken of
    ``z - offset``; ``offset`` is zero unless centring was requested.
    """

    P: np.ndarray
    Q: np.ndarray
    offset: np.ndarray

    @property
    def height(self) -> int:
        return self.P.shape[0] - 1

    @property
    def width(self) -> int:
        return self.P.shape[1] - 1

    @property
    def d(self) -> int:
        return self.P.shape[2]

    def region_sums(self, r: Rect):
        """Return ``(sum z, sum z z^T)`` of the centred features over ``r``."""
        ya, yb, xa, xb = r.y0, r.y1 + 1, r.x0, r.x1 + 1
        p = self.P[yb, xb] - self.P[ya, xb] - self.P[yb, xa] + self.P[ya, xa]
        q = self.Q[yb, xb] - self.Q[ya, xb] - self.Q[yb, xa] + self.Q[ya, xa]
        return p, q


def _validate_image(image) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size == 0:
        raise DescriptorError("expected a non-empty 2-D grayscale image")
    if not np.all(np.isfinite(image)):
        raise DescriptorError("image intensities must be finite")
    return image


def compute_feature_tensor(image, feature_set=FeatureSet.GRAD5,
                           kernels: Sequence[np.ndarray] | None = None,
                           absolute: bool = True) -> FeatureTensor:
    """Extract a per-pixel feature tensor from a grayscale image.

    Parameters
    ----------
    image : array_like, shape (H, W)
        Intensities, normally already scaled to [0, 1] by the loader.
    feature_set : FeatureSet or str
        ``GRAD5`` gives ``{I, |Ix|, |Iy|, |Ixx|, |Iyy|}`` from centred
        differences ``[-1, 0, 1] / 2`` and ``[1, -2, 1]``. ``CUSTOM`` gives
        the intensity followed by one channel per 2-D kernel in ``kernels``.
    absolute : bool
        Take the magnitude of custom filter responses.

    Borders are handled by replicate padding.
    """
    image = _validate_image(image)
    feature_set = FeatureSet(feature_set)
    h, w = image.shape

    if feature_set is FeatureSet.GRAD5:
        if w < 3 or h < 3:
            raise DescriptorError("derivative kernel larger than image")
        channels = [
            image,
            np.abs(ndimage.correlate1d(image, DERIV1, axis=1, mode="nearest")),
            np.abs(ndimage.correlate1d(image, DERIV1, axis=0, mode="nearest")),
            np.abs(ndimage.correlate1d(image, DERIV2, axis=1, mode="nearest")),
            np.abs(ndimage.correlate1d(image, DERIV2, axis=0, mode="nearest")),
        ]
        names = GRAD5_NAMES
    else:
        if not kernels:
            raise DescriptorError("CUSTOM feature set needs at least one kernel")
        channels = [image]
        names = ["I"]
        for i, k in enumerate(kernels):
            k = np.atleast_2d(np.asarray(k, dtype=np.float64))
            if k.shape[0] > h or k.shape[1] > w:
                raise DescriptorError(f"kernel {i} of shape {k.shape} larger than image")
            resp = ndimage.correlate(image, k, mode="nearest")
            channels.append(np.abs(resp) if absolute else resp)
            names.append(f"|K{i}|" if absolute else f"K{i}")
    return FeatureTensor(np.stack(channels, axis=-1), tuple(names))


def build_integral_tensors(F: FeatureTensor, center: bool = False) -> IntegralTensors:
    """Integral images of the features and of their pairwise products.

    Accumulation runs in extended precision. With ``center=True`` the image
    mean feature is subtracted first, which limits cancellation in
    ``Q - p p^T / N`` on large images with large feature offsets.
    """
    z = F.data
    offset = z.mean(axis=(0, 1)) if center else np.zeros(F.d)
    zc = z - offset
    h, w, d = zc.shape
    outer = zc[..., :, None] * zc[..., None, :]

    acc = np.longdouble
    P = np.zeros((h + 1, w + 1, d))
    Q = np.zeros((h + 1, w + 1, d, d))
    P[1:, 1:] = zc.astype(acc).cumsum(axis=0).cumsum(axis=1)
    Q[1:, 1:] = outer.astype(acc).cumsum(axis=0).cumsum(axis=1)
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Q))):
        raise DescriptorError("integral tensor accumulation overflowed")
    return IntegralTensors(P, Q, offset)


def region_covariance(src, r: Rect) -> CovarianceDescriptor:
    """Covariance and mean of the feature vectors inside ``r``.

    ``src`` is either a :class:`FeatureTensor` (direct evaluation) or
    :class:`IntegralTensors` (constant-time evaluation). The covariance uses
    the unbiased ``1 / (N - 1)`` normalisation.
    """
    if isinstance(src, IntegralTensors):
        r.validate(src.width, src.height)
        n = r.area
        p, q = src.region_sums(r)
        mean_c = p / n
        C = (q - np.outer(p, mean_c)) / (n - 1)
        mu = mean_c + src.offset
    elif isinstance(src, FeatureTensor):
        r.validate(src.width, src.height)
        n = r.area
        z = src.data[r.y0:r.y1 + 1, r.x0:r.x1 + 1].reshape(n, src.d)
        mu = z.mean(axis=0)
        zc = z - mu
        C = zc.T @ zc / (n - 1)
    else:
        raise TypeError(f"unsupported source {type(src).__name__}")
    C = 0.5 * (C + C.T)
    return CovarianceDescriptor(C, mu, n)


def regularize_spd(desc: CovarianceDescriptor, eps_scale: float = EPS_SCALE,
                   eps_floor: float = EPS_FLOOR) -> CovarianceDescriptor:
    """Shift the spectrum by ``eps * I`` so the covariance is strictly PD.

    ``eps = max(eps_scale * trace(C) / d, eps_floor)``.
    """
    C = np.asarray(desc.C, dtype=np.float64)
    if not np.all(np.isfinite(C)):
        raise DescriptorError("covariance has non-finite entries")
    d = C.shape[0]
    eps = max(eps_scale * np.trace(C) / d, eps_floor)
    Cr = C + eps * np.eye(d)
    try:
        np.linalg.cholesky(Cr)
    except np.linalg.LinAlgError as exc:
        raise DescriptorError("covariance not PD after regularisation") from exc
    return dataclasses.replace(desc, C=Cr, regularized=True, epsilon=float(eps))
