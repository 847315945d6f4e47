"""Two-phase streaming pipeline: summarize batches into weighted prototypes,
then cluster the accumulated prototypes once the stream ends.

The online phase fits each incoming batch on its own (unit weights unless the
batch carries prior weights) and keeps only the surviving component centroids
together with their mixing coefficients; the raw batch is then discardable.
The offline phase clusters all saved prototypes as a weighted dataset.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .em import FitResult, MixtureModel, PwgConfig, WeightedDataset, e_step, fit
from .selection import select_lambda

logger = logging.getLogger(__name__)

WEIGHT_RULES = ("pi", "pi_times_n")


@dataclass(frozen=True)
class Batch:
    index: int
    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError("batch points must be a non-empty (n, d) array")
        object.__setattr__(self, "points", points)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class Prototype:
    centroid: np.ndarray
    weight: float
    source_batch: int


class PrototypeSet:
    """Weighted centroids accumulated across batches."""

    def __init__(self, entries: list[Prototype] | None = None):
        self.entries: list[Prototype] = list(entries) if entries else []

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, centroid: np.ndarray, weight: float, source_batch: int):
        if weight <= 0:
            raise ValueError("prototype weight must be positive")
        self.entries.append(Prototype(np.array(centroid, dtype=float), float(weight), source_batch))

    def as_dataset(self) -> WeightedDataset:
        if not self.entries:
            raise ValueError("empty prototype set")
        points = np.array([e.centroid for e in self.entries])
        weights = np.array([e.weight for e in self.entries])
        return WeightedDataset(points, weights)

    def to_csv(self) -> str:
        if not self.entries:
            return "batch_index,weight\n"
        d = self.entries[0].centroid.shape[0]
        buf = io.StringIO()
        buf.write("batch_index,weight," + ",".join(f"c{i + 1}" for i in range(d)) + "\n")
        for e in self.entries:
            coords = ",".join(repr(float(v)) for v in e.centroid)
            buf.write(f"{e.source_batch},{e.weight!r},{coords}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PrototypeSet":
        lines = [ln for ln in text.strip().splitlines() if ln]
        entries = []
        for ln in lines[1:]:
            parts = ln.split(",")
            entries.append(
                Prototype(
                    centroid=np.array([float(v) for v in parts[2:]]),
                    weight=float(parts[1]),
                    source_batch=int(parts[0]),
                )
            )
        return cls(entries)

    def to_json(self) -> str:
        doc = {
            "type": "prototype-set",
            "dim": self.entries[0].centroid.shape[0] if self.entries else 0,
            "entries": [
                {
                    "batch_index": e.source_batch,
                    "weight": e.weight,
                    "centroid": [float(v) for v in e.centroid],
                }
                for e in self.entries
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "PrototypeSet":
        doc = json.loads(text)
        if doc.get("type") != "prototype-set":
            raise ValueError("not a prototype-set document")
        return cls(
            [
                Prototype(np.array(e["centroid"], dtype=float), float(e["weight"]), int(e["batch_index"]))
                for e in doc["entries"]
            ]
        )


@dataclass(frozen=True)
class OpwgConfig:
    """Online and offline fit settings plus the prototype weighting rule.

    prototype_weight_rule "pi_times_n" scales each saved mixing coefficient by
    the batch size, so unequal batches contribute proportionally; "pi" keeps
    the raw coefficients (each batch contributes total weight 1).
    """

    online: PwgConfig
    offline: PwgConfig
    offline_lambda_grid: tuple[float, ...] | None = None
    prototype_weight_rule: str = "pi_times_n"

    def __post_init__(self):
        if self.prototype_weight_rule not in WEIGHT_RULES:
            raise ValueError(f"unknown prototype weight rule {self.prototype_weight_rule!r}")


class StreamState:
    """Serial accumulator for one stream; holds prototypes, never raw samples."""

    def __init__(self, config: OpwgConfig):
        self.config = config
        self.prototypes = PrototypeSet()
        self.batches_processed = 0
        self.batches_skipped = 0
        self.dim: int | None = None


def process_batch(state: StreamState, batch: Batch) -> StreamState:
    """Fit one batch and append the surviving components as prototypes.

    A failed batch fit is logged and skipped; the stream keeps going. After
    this returns the batch data is no longer referenced by the state.
    """
    if state.dim is None:
        state.dim = batch.points.shape[1]
    elif batch.points.shape[1] != state.dim:
        raise ValueError(
            f"batch {batch.index} has dimension {batch.points.shape[1]}, stream has {state.dim}"
        )
    data = WeightedDataset.from_points(batch.points, batch.weights)
    try:
        result = fit(data, state.config.online)
    except Exception as err:  # noqa: BLE001 - stream robustness over completeness
        logger.warning("skipping batch %d: %s", batch.index, err)
        state.batches_skipped += 1
        return state

    model = result.model
    for k in range(model.active_k):
        weight = float(model.mixing[k])
        if state.config.prototype_weight_rule == "pi_times_n":
            weight *= batch.n
        state.prototypes.append(model.means[k].copy(), weight, batch.index)
    state.batches_processed += 1
    return state


def finalize(state: StreamState, offline: PwgConfig | None = None):
    """Cluster all saved prototypes; returns (FitResult, labeling function)."""
    if len(state.prototypes) == 0:
        raise ValueError("empty prototype set: no batch produced prototypes")
    offline = offline if offline is not None else state.config.offline
    data = state.prototypes.as_dataset()
    if state.config.offline_lambda_grid is not None:
        enforce = offline.lambda_bound_policy == "error"
        choice = select_lambda(data, offline, state.config.offline_lambda_grid, enforce_bound=enforce)
        result = choice.result
    else:
        result = fit(data, offline)

    def label(points: np.ndarray) -> np.ndarray:
        return predict(result.model, points)

    return result, label


def predict(model: MixtureModel, points: np.ndarray) -> np.ndarray:
    """Most probable component per point (unit weight); ties go to the lower index."""
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    if single:
        points = points[None, :]
    if points.shape[1] != model.dim:
        raise ValueError("dimension mismatch between points and model")
    resp = e_step(model, WeightedDataset.from_points(points))
    labels = np.argmax(resp, axis=1)
    return int(labels[0]) if single else labels
