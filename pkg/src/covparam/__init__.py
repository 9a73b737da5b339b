"""Euclidean parameterizations of region covariance descriptors with LC-KSVD sparse coding."""
from .descriptor import (CovarianceDescriptor, FeatureSet, FeatureTensor, IntegralTensors, Rect,
                         build_integral_tensors, compute_feature_tensor, region_covariance,
                         regularize_spd)
from .metrics import airm, euclid_dist, lerm, logdet_div
from .parameterization import (EuclidRep, Kind, LowerTriangular, SphericalRep, cholesky_param,
                               fuse_mean, parameterize, spherical_inverse, spherical_param,
                               unparameterize)
from .sparse import (Dictionary, SparseCode, build_supervision, classify, elastic_net_encode,
                     lcksvd_train, omp)

__version__ = "0.1.0"
