"""FID, segmentation scores and parameter counts."""

import warnings
from dataclasses import dataclass

import numpy as np
import torch

PSD_TOL = 1e-8


@dataclass
class GaussianStats:
    mean: np.ndarray
    covariance: np.ndarray
    sample_count: int

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.covariance = np.atleast_2d(np.asarray(self.covariance, dtype=np.float64))
        d = self.mean.shape[0]
        if self.covariance.shape != (d, d):
            raise ValueError(f"covariance shape {self.covariance.shape} does not match mean length {d}")
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-10, rtol=0):
            raise ValueError("covariance must be symmetric")

    @property
    def dim(self):
        return self.mean.shape[0]

    @classmethod
    def from_features(cls, features):
        acc = FeatureAccumulator()
        acc.update(features)
        return acc.stats()


class FeatureAccumulator:
    """Running mean and centred scatter matrix.

    Batches are combined with the pairwise update of Chan et al., so
    ``merge`` of partial accumulators equals serial accumulation and large
    feature offsets do not cancel catastrophically.
    """

    def __init__(self):
        self.count = 0
        self.mean = None
        self.scatter = None

    @staticmethod
    def _combine(n_a, mean_a, m_a, n_b, mean_b, m_b):
        n = n_a + n_b
        delta = mean_b - mean_a
        mean = mean_a + delta * (n_b / n)
        scatter = m_a + m_b + np.outer(delta, delta) * (n_a * n_b / n)
        return n, mean, scatter

    def update(self, features):
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError("features must be (samples, dim)")
        if x.shape[0] == 0:
            return self
        mean_b = x.mean(axis=0)
        centred = x - mean_b
        m_b = centred.T @ centred
        if self.mean is None:
            self.count, self.mean, self.scatter = x.shape[0], mean_b, m_b
        else:
            if x.shape[1] != self.mean.shape[0]:
                raise ValueError(f"feature dim {x.shape[1]} != {self.mean.shape[0]}")
            self.count, self.mean, self.scatter = self._combine(
                self.count, self.mean, self.scatter, x.shape[0], mean_b, m_b)
        return self

    def merge(self, other):
        out = FeatureAccumulator()
        if self.mean is None or other.mean is None:
            src = other if self.mean is None else self
            out.count, out.mean, out.scatter = src.count, src.mean, src.scatter
            return out
        out.count, out.mean, out.scatter = self._combine(
            self.count, self.mean, self.scatter, other.count, other.mean, other.scatter)
        return out

    def stats(self):
        if self.count < 2:
            raise ValueError("need at least two samples for a covariance")
        cov = self.scatter / (self.count - 1)
        cov = (cov + cov.T) / 2
        return GaussianStats(self.mean.copy(), cov, self.count)


def _psd_sqrt(matrix, what):
    vals, vecs = np.linalg.eigh((matrix + matrix.T) / 2)
    if vals.min() < -PSD_TOL:
        raise ValueError(f"{what} is not positive semi-definite: smallest eigenvalue {vals.min():.3e}")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


def fid(stats_real, stats_fake):
    """Frechet distance between two Gaussians.

    ``Tr((C1 C2)^(1/2))`` is evaluated as the sum of square roots of the
    eigenvalues of the symmetric matrix ``C1^(1/2) C2 C1^(1/2)``, which has
    the same spectrum as ``C1 C2``.
    """
    if stats_real.dim != stats_fake.dim:
        raise ValueError(f"dimension mismatch: {stats_real.dim} vs {stats_fake.dim}")
    for s in (stats_real, stats_fake):
        if s.sample_count < s.dim:
            warnings.warn(
                f"FID from {s.sample_count} samples in {s.dim} dimensions: covariance is rank deficient",
                stacklevel=2,
            )
    c1, c2 = stats_real.covariance, stats_fake.covariance
    root1 = _psd_sqrt(c1, "real covariance")
    _psd_sqrt(c2, "fake covariance")
    middle = root1 @ c2 @ root1
    eig = np.linalg.eigvalsh((middle + middle.T) / 2)
    if eig.min() < -PSD_TOL:
        raise ValueError(f"covariance product is not PSD: smallest eigenvalue {eig.min():.3e}")
    tr_sqrt = np.sqrt(np.clip(eig, 0.0, None)).sum()
    diff = stats_real.mean - stats_fake.mean
    return float(diff @ diff + np.trace(c1) + np.trace(c2) - 2.0 * tr_sqrt)


@dataclass
class ConfusionMatrix:
    """Rows are ground truth classes, columns predictions."""

    counts: np.ndarray

    @classmethod
    def empty(cls, num_classes):
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @classmethod
    def from_maps(cls, ground_truth, prediction, num_classes):
        gt = np.asarray(ground_truth).reshape(-1).astype(np.int64)
        pred = np.asarray(prediction).reshape(-1).astype(np.int64)
        if gt.shape != pred.shape:
            raise ValueError("ground truth and prediction must have the same size")
        for name, arr in (("ground truth", gt), ("prediction", pred)):
            if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
                raise ValueError(f"{name} index outside [0, {num_classes})")
        counts = np.bincount(gt * num_classes + pred, minlength=num_classes ** 2)
        return cls(counts.reshape(num_classes, num_classes))

    def __add__(self, other):
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def total(self):
        return int(self.counts.sum())


def miou_acc(confusion):
    """(mean IoU over classes present in ground truth or prediction, pixel accuracy)."""
    c = np.asarray(confusion.counts, dtype=np.float64)
    if c.sum() == 0:
        raise ValueError("empty confusion matrix")
    tp = np.diag(c)
    union = c.sum(axis=0) + c.sum(axis=1) - tp
    present = union > 0
    miou = float((tp[present] / union[present]).mean())
    acc = float(tp.sum() / c.sum())
    return miou, acc


def _count(module):
    if module is None:
        return 0
    return sum(p.numel() for p in module.parameters())


def count_parameters(generator, discriminator=None):
    """Parameter totals per generator component plus G and D totals."""
    report = {f"G.{name}": _count(m) for name, m in generator.components().items()}
    report["G"] = _count(generator)
    if discriminator is not None:
        report["D"] = _count(discriminator)
    return report


def embed_images(extractor, images, batch_size=32):
    """Extractor embeddings of an image tensor (B, 3, H, W) as a float64 array."""
    chunks = []
    with torch.no_grad():
        for start in range(0, images.shape[0], batch_size):
            chunk = images[start:start + batch_size].to(torch.float32)
            chunks.append(extractor.embed(chunk).double().numpy())
    return np.concatenate(chunks, axis=0)


def image_fid(extractor, real_images, fake_images):
    real = GaussianStats.from_features(embed_images(extractor, real_images))
    fake = GaussianStats.from_features(embed_images(extractor, fake_images))
    return fid(real, fake)
