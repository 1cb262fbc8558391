"""Synthetic teacher-student data with tunable density near the boundary.

The first input coordinate follows rho(x1) = |x1|^chi exp(-x1^2/2) / Z with
Z = 2^((1+chi)/2) Gamma((1+chi)/2); the remaining coordinates are standard
normal and the label is the sign of x1.  chi = 0 is the plain Gaussian case;
larger chi depletes the data near the true boundary x1 = 0.

An optional IDX-format image loader (parity-labelled digits) is included for
exploratory runs; the synthetic sampler is the primary data source.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class ChiDistribution:
    """Input distribution in dimension d with boundary-depletion parameter chi."""

    chi: float
    d: int

    def __post_init__(self):
        if self.chi < 0:
            raise ValueError(f"chi must be >= 0, got {self.chi}")
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")

    @property
    def normalization(self) -> float:
        """Z(chi) = 2^((1+chi)/2) Gamma((1+chi)/2)."""
        return 2.0 ** ((1.0 + self.chi) / 2.0) * math.gamma((1.0 + self.chi) / 2.0)


@dataclass
class Dataset:
    """P labelled points in R^d, optionally with the known true-boundary normal.

    For synthetic data every label equals the sign of the projection of the
    point on ``true_normal`` and no point lies exactly on the boundary.
    Image datasets carry ``true_normal=None`` (alignment probes disabled).
    """

    points: np.ndarray
    labels: np.ndarray
    true_normal: np.ndarray | None = None
    chi: float | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64)
        if self.points.ndim != 2:
            raise ValueError("points must be a (P, d) matrix")
        if self.labels.shape != (self.points.shape[0],):
            raise ValueError("labels must be a P-vector")
        if not np.all(np.abs(self.labels) == 1.0):
            raise ValueError("labels must be +-1")
        if self.true_normal is not None:
            self.true_normal = np.asarray(self.true_normal, dtype=np.float64)
            if self.true_normal.shape != (self.points.shape[1],):
                raise ValueError("true_normal must be a d-vector")
            if not math.isclose(float(np.linalg.norm(self.true_normal)), 1.0, rel_tol=1e-9):
                raise ValueError("true_normal must be a unit vector")
            proj = self.points @ self.true_normal
            if np.any(proj == 0.0):
                raise ValueError("a point lies exactly on the true boundary")
            if np.any(np.sign(proj) != self.labels):
                raise ValueError("labels must equal sign of the projection on true_normal")

    @property
    def P(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


def sample_chi_dataset(dist: ChiDistribution, P: int, seed: int) -> Dataset:
    """Draw P i.i.d. points from ``dist``, labelled by the sign of x1.

    |x1| is sampled by the exact Gamma transform: G ~ Gamma((chi+1)/2),
    |x1| = sqrt(2 G), with a uniform random sign.  Draws are bit-reproducible
    given (chi, d, P, seed); the zero-probability event x1 == 0.0 is resampled
    to preserve the no-boundary-point invariant.
    """
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    rng = np.random.default_rng(seed)
    shape = (dist.chi + 1.0) / 2.0
    x1 = np.sqrt(2.0 * rng.gamma(shape, 1.0, size=P))
    signs = 2.0 * rng.integers(0, 2, size=P) - 1.0
    x1 *= signs
    while np.any(x1 == 0.0):
        zero = x1 == 0.0
        n = int(zero.sum())
        redraw = np.sqrt(2.0 * rng.gamma(shape, 1.0, size=n))
        x1[zero] = redraw * (2.0 * rng.integers(0, 2, size=n) - 1.0)
    points = np.empty((P, dist.d))
    points[:, 0] = x1
    points[:, 1:] = rng.standard_normal((P, dist.d - 1))
    normal = np.zeros(dist.d)
    normal[0] = 1.0
    return Dataset(points=points, labels=np.sign(x1), true_normal=normal, chi=dist.chi)


def chi_pdf(dist: ChiDistribution, x1):
    """Density |x1|^chi exp(-x1^2/2) / Z(chi) of the first coordinate."""
    x1 = np.asarray(x1, dtype=np.float64)
    out = np.abs(x1) ** dist.chi * np.exp(-(x1**2) / 2.0) / dist.normalization
    return float(out) if out.ndim == 0 else out


def true_label(x: np.ndarray, true_normal: np.ndarray) -> int:
    """Teacher label: sign of the projection of x on the true-boundary normal."""
    proj = float(np.dot(np.asarray(x, dtype=np.float64), true_normal))
    if proj == 0.0:
        raise ValueError("point lies exactly on the true boundary")
    return 1 if proj > 0 else -1


def _read_be32(f, path) -> int:
    raw = f.read(4)
    if len(raw) != 4:
        raise ValueError(f"truncated IDX header in {path}")
    return struct.unpack(">I", raw)[0]


def load_idx_dataset(images_path, labels_path, subset_size: int, seed: int) -> Dataset:
    """Load an IDX image/label pair, binarized by digit parity.

    Pixels are scaled to [0, 1] and flattened; the label is +1 for even
    digits and -1 for odd ones.  ``subset_size`` points are drawn without
    replacement.  The returned dataset has no true_normal.
    """
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise ValueError(f"bad image magic 0x{magic:08x} in {images_path}")
        count = _read_be32(f, images_path)
        rows = _read_be32(f, images_path)
        cols = _read_be32(f, images_path)
        payload = f.read(count * rows * cols)
        if len(payload) != count * rows * cols:
            raise ValueError(f"truncated image payload in {images_path}")
        images = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)
    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise ValueError(f"bad label magic 0x{magic:08x} in {labels_path}")
        label_count = _read_be32(f, labels_path)
        payload = f.read(label_count)
        if len(payload) != label_count:
            raise ValueError(f"truncated label payload in {labels_path}")
        digits = np.frombuffer(payload, dtype=np.uint8)
    if label_count != count:
        raise ValueError(f"count mismatch: {count} images vs {label_count} labels")
    if subset_size > count:
        raise ValueError(f"subset_size {subset_size} exceeds file count {count}")
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(count, size=subset_size, replace=False))
    labels = np.where(digits[keep] % 2 == 0, 1.0, -1.0)
    return Dataset(points=images[keep].astype(np.float64) / 255.0, labels=labels)


def split_train_test(ds: Dataset, P_train: int, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint train/test split, deterministic given seed."""
    if P_train >= ds.P:
        raise ValueError(f"P_train {P_train} must be < dataset size {ds.P}")
    if P_train < 1:
        raise ValueError("P_train must be >= 1")
    perm = np.random.default_rng(seed).permutation(ds.P)
    tr, te = perm[:P_train], perm[P_train:]
    make = lambda idx: Dataset(
        points=ds.points[idx].copy(),
        labels=ds.labels[idx].copy(),
        true_normal=None if ds.true_normal is None else ds.true_normal.copy(),
        chi=ds.chi,
    )
    return make(tr), make(te)


def dataset_to_csv(ds: Dataset, path) -> None:
    """Write one row per point: columns x_1..x_d, label."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"x_{j + 1}" for j in range(ds.d)] + ["label"])
        for i in range(ds.P):
            writer.writerow([repr(float(v)) for v in ds.points[i]] + [int(ds.labels[i])])
