"""Synthetic 2-d benchmark datasets, stream ordering and batching.

The suite mirrors the familiar clustering-comparison figures: concentric
circles, interleaved half-moons, three flavors of Gaussian blobs, and
structureless uniform noise. Parametric mixtures with K components are
generated separately with enforced center separation so the ground-truth K is
identifiable at benchmark scale.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .rng import substream
from .stream import Batch

SUITE_NAMES = ("circles", "moons", "blobs", "varied", "aniso", "noise")

GMM_COMPONENT_CHOICES = (2, 5, 7)


@dataclass(frozen=True)
class LabeledDataset:
    points: np.ndarray  # (N, 2)
    labels: np.ndarray  # (N,) ints, contiguous from 0
    name: str = ""

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        labels = np.asarray(self.labels, dtype=int)
        if points.shape[0] != labels.shape[0]:
            raise ValueError("points and labels must have equal length")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class StreamOrder:
    mode: str  # "A" (random) or "B" (coordinate-sorted)
    sort_axis: str = "x"

    def __post_init__(self):
        if self.mode not in ("A", "B"):
            raise ValueError("mode must be 'A' or 'B'")
        if self.sort_axis not in ("x", "y"):
            raise ValueError("sort_axis must be 'x' or 'y'")


def _split_counts(n: int, groups: int) -> list[int]:
    base = n // groups
    return [base + (1 if i < n % groups else 0) for i in range(groups)]


def _separated_centers(rng, k, low=-10.0, high=10.0, min_dist=4.0) -> np.ndarray:
    centers = []
    while len(centers) < k:
        cand = rng.uniform(low, high, size=2)
        if all(np.linalg.norm(cand - c) >= min_dist for c in centers):
            centers.append(cand)
    return np.array(centers)


def _blob_points(rng, centers, stds, counts):
    pts, labels = [], []
    for j, (c, s, m) in enumerate(zip(centers, stds, counts)):
        pts.append(c + s * rng.standard_normal((m, 2)))
        labels.append(np.full(m, j))
    return np.concatenate(pts), np.concatenate(labels)


def make_suite(name: str, n: int, seed: int = 0) -> LabeledDataset:
    """One of the six comparison-suite datasets, deterministic given the seed.

    circles: two concentric rings (radius 1 and 0.5, noise 0.05).
    moons: two interleaved half-moons (noise 0.05).
    blobs: three isotropic Gaussian blobs (std 1, centers >= 5 apart).
    varied: three blobs with stds (1.0, 2.5, 0.5).
    aniso: three blobs sheared by a fixed linear map.
    noise: uniform points in [-10, 10]^2, all labeled 0.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = substream(seed, "suite", name)

    if name == "circles":
        n_out = n - n // 2
        n_in = n // 2
        t_out = np.linspace(0, 2 * np.pi, n_out, endpoint=False)
        t_in = np.linspace(0, 2 * np.pi, n_in, endpoint=False)
        pts = np.concatenate(
            [
                np.column_stack([np.cos(t_out), np.sin(t_out)]),
                0.5 * np.column_stack([np.cos(t_in), np.sin(t_in)]),
            ]
        )
        pts += 0.05 * rng.standard_normal(pts.shape)
        labels = np.concatenate([np.zeros(n_out, int), np.ones(n_in, int)])
    elif name == "moons":
        n_out = n - n // 2
        n_in = n // 2
        t_out = np.linspace(0, np.pi, n_out)
        t_in = np.linspace(0, np.pi, n_in)
        outer = np.column_stack([np.cos(t_out), np.sin(t_out)])
        inner = np.column_stack([1 - np.cos(t_in), 0.5 - np.sin(t_in)])
        pts = np.concatenate([outer, inner]) + 0.05 * rng.standard_normal((n, 2))
        labels = np.concatenate([np.zeros(n_out, int), np.ones(n_in, int)])
    elif name in ("blobs", "varied", "aniso"):
        counts = _split_counts(n, 3)
        if name == "varied":
            centers = _separated_centers(rng, 3, min_dist=6.0)
            stds = (1.0, 2.5, 0.5)
        else:
            centers = _separated_centers(rng, 3, min_dist=5.0)
            stds = (1.0, 1.0, 1.0)
        pts, labels = _blob_points(rng, centers, stds, counts)
        if name == "aniso":
            pts = pts @ np.array([[0.6, -0.6], [-0.4, 0.8]])
    elif name == "noise":
        pts = rng.uniform(-10.0, 10.0, size=(n, 2))
        labels = np.zeros(n, int)
    else:
        raise ValueError(f"unknown dataset name {name!r}; choose from {SUITE_NAMES}")

    return LabeledDataset(pts, labels, name=name)


def gmm_params(k: int, seed: int = 0):
    """Ground-truth means and covariances used by make_gmm for this (k, seed)."""
    rng = substream(seed, "gmm", k, "params")
    means = _separated_centers(rng, k, min_dist=4.0)
    covs = []
    for _ in range(k):
        theta = rng.uniform(0, 2 * np.pi)
        rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
        scales = rng.uniform(0.7, 1.3, size=2)
        covs.append(rot @ np.diag(scales**2) @ rot.T)
    return means, np.array(covs)


def make_gmm(k: int, n: int, seed: int = 0) -> LabeledDataset:
    """Stratified sample from a k-component 2-d Gaussian mixture.

    Means are drawn in [-10, 10]^2 with pairwise separation >= 4; covariances
    are rotated unit-order ellipses. Samples are split as evenly as possible
    across components.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    means, covs = gmm_params(k, seed)
    rng = substream(seed, "gmm", k, "points")
    counts = _split_counts(n, k)
    pts, labels = [], []
    for j in range(k):
        chol = np.linalg.cholesky(covs[j])
        z = rng.standard_normal((counts[j], 2))
        pts.append(means[j] + z @ chol.T)
        labels.append(np.full(counts[j], j))
    return LabeledDataset(np.concatenate(pts), np.concatenate(labels), name=f"gmm{k}")


def order_and_batch(
    dataset: LabeledDataset, order: StreamOrder, batch_size: int, seed: int = 0
) -> list[Batch]:
    """Arrange the dataset into a stream of batches.

    Mode A shuffles uniformly (seeded); mode B stable-sorts by the chosen
    coordinate so each batch sees only a slice of the data. The final partial
    batch is retained.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if order.mode == "A":
        perm = substream(seed, "shuffle").permutation(dataset.n)
    else:
        axis = 0 if order.sort_axis == "x" else 1
        perm = np.argsort(dataset.points[:, axis], kind="stable")
    pts = dataset.points[perm]
    return [
        Batch(index=i, points=pts[start : start + batch_size])
        for i, start in enumerate(range(0, dataset.n, batch_size))
    ]


def save_csv(dataset: LabeledDataset) -> str:
    d = dataset.points.shape[1]
    buf = io.StringIO()
    buf.write("label," + ",".join(f"x{i + 1}" for i in range(d)) + "\n")
    for lbl, row in zip(dataset.labels, dataset.points):
        buf.write(f"{int(lbl)}," + ",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def load_csv(text: str, name: str = "") -> LabeledDataset:
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = lines[0].split(",")
    has_label = header[0] == "label"
    pts, labels = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        if has_label:
            labels.append(int(float(parts[0])))
            pts.append([float(v) for v in parts[1:]])
        else:
            labels.append(0)
            pts.append([float(v) for v in parts])
    return LabeledDataset(np.array(pts), np.array(labels), name=name)
