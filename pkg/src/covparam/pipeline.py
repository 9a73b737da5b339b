"""
Experiment orchestration: tiling, splitting, extraction and evaluation.

A dataset directory holds one sub-directory per class; every PGM/PNG inside
it is an image of that class. Each image is cut into blocks, every block
becomes one sample.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
import warnings

import numpy as np

from .descriptor import (EPS_SCALE, FeatureSet, Rect, build_integral_tensors,
                         compute_feature_tensor, region_covariance, regularize_spd)
from .io import load_image
from .parameterization import DEFAULT_LAMBDA, Kind, parameterize, rep_length
from .sparse import classify_batch, lcksvd_train

__all__ = [
    "PipelineError",
    "ExperimentConfig",
    "EvaluationReport",
    "Dataset",
    "tile_image",
    "split_train_test",
    "extract_descriptors",
    "extract_representations",
    "load_dataset",
    "synthetic_gratings",
    "run_experiment",
]

log = logging.getLogger(__name__)

IMAGE_EXTS = (".pgm", ".png")


class PipelineError(ValueError):
    pass


@dataclasses.dataclass
class ExperimentConfig:
    """Experiment settings; JSON keys match the field names except ``lambda``."""

    feature_set: str = "grad5"
    block_size: int = 32
    block_stride: int | None = None
    param_kind: str = "sphere"
    lam: float = DEFAULT_LAMBDA
    fuse_mean: bool = True
    eps_scale: float = EPS_SCALE
    K: int | None = None
    alpha: float = 25.0
    beta: float = 25.0
    T: int = 1
    iterations: int = 50
    train_per_class: int | None = 5
    train_fraction: float | None = None
    repeats: int = 10
    seed: int = 0
    resize: int | None = None
    paths: dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.block_stride is None:
            self.block_stride = self.block_size
        if self.repeats < 1:
            raise PipelineError("repeats must be at least 1")
        if (self.train_per_class is None) == (self.train_fraction is None):
            raise PipelineError("set exactly one of train_per_class / train_fraction")
        FeatureSet(self.feature_set)
        Kind(self.param_kind)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "lambda" in doc:
            doc["lam"] = doc.pop("lambda")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise PipelineError(f"unknown config keys: {sorted(unknown)}")
        if "train_fraction" in doc and "train_per_class" not in doc:
            doc["train_per_class"] = None
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["lambda"] = doc.pop("lam")
        return doc


@dataclasses.dataclass
class EvaluationReport:
    accuracies: list
    confusion: list
    class_names: list
    rep_length: int
    n_samples: int
    config: dict
    timings: dict = dataclasses.field(default_factory=dict)

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies))

    @property
    def max(self) -> float:
        return float(np.max(self.accuracies))

    def to_dict(self, timings: bool = False) -> dict:
        doc = {
            "accuracies": [float(a) for a in self.accuracies],
            "mean": self.mean,
            "std": self.std,
            "max": self.max,
            "confusion": self.confusion,
            "class_names": list(self.class_names),
            "rep_length": self.rep_length,
            "n_samples": self.n_samples,
            "config": self.config,
        }
        if timings:
            doc["timings"] = self.timings
        return doc

    def to_json(self, timings: bool = False) -> str:
        # wall-times differ between runs, so they stay out of the default output
        return json.dumps(self.to_dict(timings), indent=2, sort_keys=True) + "\n"


@dataclasses.dataclass
class Dataset:
    images: list
    labels: np.ndarray
    class_names: tuple
    paths: tuple = ()


def tile_image(shape, block_size: int, stride: int | None = None) -> list[Rect]:
    """Row-major block grid over an image of ``shape`` ``(H, W)`` (or an image)."""
    if hasattr(shape, "shape"):
        shape = shape.shape
    h, w = shape[:2]
    stride = stride or block_size
    if block_size < 1 or stride < 1:
        raise PipelineError("block size and stride must be positive")
    if block_size > h or block_size > w:
        raise PipelineError(f"block {block_size} larger than {w}x{h} image")
    return [Rect(x, y, x + block_size - 1, y + block_size - 1)
            for y in range(0, h - block_size + 1, stride)
            for x in range(0, w - block_size + 1, stride)]


def split_train_test(labels, per_class: int | None = None, seed: int = 0,
                     fraction: float | None = None):
    """Seeded class-stratified split into sorted train / test index arrays."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train = []
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        n = per_class if per_class is not None else int(round(fraction * idx.size))
        if n > idx.size:
            raise PipelineError(f"class {c} has {idx.size} samples, {n} requested for training")
        if n == idx.size:
            warnings.warn(f"class {c}: no samples left for testing", stacklevel=2)
        train.append(rng.permutation(idx)[:n])
    train = np.sort(np.concatenate(train)) if train else np.empty(0, dtype=np.int64)
    test = np.setdiff1d(np.arange(labels.size), train)
    return train, test


def load_dataset(root, resize: int | None = None) -> Dataset:
    if not os.path.isdir(root):
        raise FileNotFoundError(f"dataset directory not found: {root}")
    classes = sorted(e for e in os.listdir(root) if os.path.isdir(os.path.join(root, e)))
    if not classes:
        raise PipelineError(f"{root}: no class directories")
    images, labels, paths = [], [], []
    for c, name in enumerate(classes):
        files = sorted(f for f in os.listdir(os.path.join(root, name))
                       if f.lower().endswith(IMAGE_EXTS))
        if not files:
            raise PipelineError(f"{root}/{name}: no images")
        for f in files:
            p = os.path.join(root, name, f)
            images.append(load_image(p, resize))
            labels.append(c)
            paths.append(p)
    return Dataset(images, np.array(labels), tuple(classes), tuple(paths))


def synthetic_gratings(n_per_class: int = 1, size: int = 256, orientations=(0.0, 45.0, 90.0),
                       period: float = 8.0, contrast: float = 0.4, noise: float = 0.05,
                       seed: int = 0) -> Dataset:
    """Noisy oriented sinusoid gratings, one class per orientation (degrees)."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    images, labels = [], []
    for c, theta in enumerate(orientations):
        t = np.deg2rad(theta)
        u = xx * np.cos(t) + yy * np.sin(t)
        for _ in range(n_per_class):
            phase = rng.uniform(0, 2 * np.pi)
            img = 0.5 + contrast * np.sin(2 * np.pi * u / period + phase)
            img += noise * rng.standard_normal(img.shape)
            images.append(np.clip(img, 0.0, 1.0))
            labels.append(c)
    names = tuple(f"grating{int(o)}" for o in orientations)
    return Dataset(images, np.array(labels), names)


def extract_descriptors(image, block_size: int, stride: int | None = None,
                        feature_set="grad5", eps_scale: float = EPS_SCALE):
    """Regularised covariance descriptors of every block of one image."""
    F = compute_feature_tensor(image, feature_set)
    integ = build_integral_tensors(F)
    return [regularize_spd(region_covariance(integ, r), eps_scale)
            for r in tile_image(image, block_size, stride)]


def extract_representations(image, config: ExperimentConfig) -> np.ndarray:
    descs = extract_descriptors(image, config.block_size, config.block_stride,
                                config.feature_set, config.eps_scale)
    return np.array([parameterize(d, config.param_kind, config.lam, config.fuse_mean).vec
                     for d in descs])


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> EvaluationReport:
    """Extract, parameterize, train and evaluate over ``config.repeats`` splits.

    Repeat ``r`` splits with seed ``config.seed + r`` and trains with the same
    seed. ``dataset`` defaults to ``config.paths["dataset"]``.
    """
    timings = {"load": 0.0, "extract": 0.0, "train": [], "classify": []}
    t0 = time.perf_counter()
    if dataset is None:
        root = config.paths.get("dataset")
        if not root:
            raise PipelineError("config.paths.dataset is not set")
        dataset = load_dataset(root, config.resize)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    reps, labels = [], []
    for img, lab in zip(dataset.images, dataset.labels):
        R = extract_representations(img, config)
        reps.append(R)
        labels.append(np.full(R.shape[0], lab))
    R = np.vstack(reps)
    y = np.concatenate(labels)
    timings["extract"] = time.perf_counter() - t0

    d = compute_feature_tensor(np.zeros((3, 3)), config.feature_set).d
    expected = rep_length(d, config.fuse_mean)
    if R.shape[1] != expected:
        raise PipelineError(f"representation length {R.shape[1]} != {expected}")
    log.info("%d samples, representation length %d", R.shape[0], R.shape[1])

    m = len(dataset.class_names)
    K = config.K or R.shape[1]
    accuracies, confusion = [], []
    for rep in range(config.repeats):
        seed = config.seed + rep
        train, test = split_train_test(y, config.train_per_class, seed, config.train_fraction)
        if np.intersect1d(train, test).size:
            raise PipelineError("train/test overlap")
        if len(np.unique(y[train])) != m:
            raise PipelineError("a class has no training samples after the split")

        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            model = lcksvd_train(R[train].T, y[train], K, config.alpha, config.beta, config.T,
                                 config.iterations, seed, n_classes=m,
                                 class_names=dataset.class_names)
        timings["train"].append(time.perf_counter() - t0)

        t0 = time.perf_counter()
        pred = classify_batch(model, R[test].T)
        timings["classify"].append(time.perf_counter() - t0)

        cm = np.zeros((m, m), dtype=np.int64)
        np.add.at(cm, (y[test], pred), 1)
        accuracies.append(float(np.mean(pred == y[test])) if test.size else float("nan"))
        confusion.append(cm.tolist())
        log.info("repeat %d: accuracy %.4f", rep, accuracies[-1])

    return EvaluationReport(accuracies, confusion, list(dataset.class_names), int(R.shape[1]),
                            int(R.shape[0]), config.to_dict(), timings)
