"""Corpus generation, function-level splitting, point subsampling, assembly.

The pipeline turns random source functions into supervised operator-learning
data: each corpus entry pairs a source spec with its sensor discretization and
its simulated flux field.  Splits are always by function (a source either
trains or tests, never both), point subsets are drawn independently per
function, and all draws are substreams of a single seed so the whole pipeline
is reproducible byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from .container import read_container, write_container
from .errors import ConfigurationError, DatasetError, MazefluxError
from .geometry import MazeGeometry
from .rng import child_seed, substream
from .source import SensorGrid, SensorVector, SourceRanges, SourceSpec, discretize_source, sample_source_spec
from .transport import FluxField, RunPlan, TallyGrid, simulate_flux

SUBSET_FRACTIONS = (0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class CorpusEntry:
    spec: SourceSpec
    sensors: SensorVector
    flux: FluxField

    @property
    def spec_id(self) -> str:
        return self.sensors.spec_id


@dataclass
class Corpus:
    """Full ensemble of (spec, sensor vector, flux field) on shared grids."""

    entries: list
    sensor_grid: SensorGrid
    tally_grid: TallyGrid
    seed: int = 0
    config_hash: str = ""

    def __len__(self):
        return len(self.entries)

    def spec_ids(self):
        return [e.spec_id for e in self.entries]


@dataclass
class CorpusView:
    """Read-only index view onto a corpus (a split partition)."""

    corpus: Corpus
    indices: tuple

    def __len__(self):
        return len(self.indices)

    def __iter__(self) -> Iterator[CorpusEntry]:
        for i in self.indices:
            yield self.corpus.entries[i]

    def entry(self, k: int) -> CorpusEntry:
        return self.corpus.entries[self.indices[k]]

    def spec_ids(self):
        return [self.corpus.entries[i].spec_id for i in self.indices]

    @property
    def sensor_grid(self) -> SensorGrid:
        return self.corpus.sensor_grid

    @property
    def tally_grid(self) -> TallyGrid:
        return self.corpus.tally_grid


@dataclass
class SplitCorpus:
    train: CorpusView
    test: CorpusView


@dataclass
class PointSubset:
    """Per-function tally-cell index lists drawn without replacement."""

    fraction: float
    index_lists: list   # one int array per view entry, flat cell indices


@dataclass
class OperatorSample:
    """One training triple: raw sensor vector, query point (cm), normalized target."""

    branch_input: np.ndarray
    trunk_point: np.ndarray
    target: float
    spec_id: str


# ----------------------------------------------------------------------
# Normalization metadata
# ----------------------------------------------------------------------

@dataclass
class NormalizationMeta:
    """Train-set statistics fixing the model-facing coordinate systems.

    Targets are standardized per tally cell: t_c = (flux_c - mean_c) / std_c
    with the statistics taken over the training functions, so every cell's
    targets are O(1) regardless of how peaked the raw field is, and the
    transform stays affine (models preserve the field's linear structure).
    Branch inputs are standardized per sensor; trunk points are cell centers
    min-max mapped to [-1, 1] per axis.
    """

    target_mean: np.ndarray   # (n_cells,) flat row-major
    target_std: np.ndarray    # (n_cells,)
    branch_mean: np.ndarray
    branch_std: np.ndarray
    trunk_lo: np.ndarray
    trunk_hi: np.ndarray

    def __post_init__(self):
        self.target_mean = np.asarray(self.target_mean, dtype=np.float64)
        self.target_std = np.asarray(self.target_std, dtype=np.float64)
        self.branch_mean = np.asarray(self.branch_mean, dtype=np.float64)
        self.branch_std = np.asarray(self.branch_std, dtype=np.float64)
        self.trunk_lo = np.asarray(self.trunk_lo, dtype=np.float64)
        self.trunk_hi = np.asarray(self.trunk_hi, dtype=np.float64)

    def transform_target(self, raw, cells=None):
        """Normalize raw flux values; `cells` selects which flat cell each
        value belongs to (default: the values cover all cells in order)."""
        raw = np.asarray(raw, dtype=np.float64)
        mean = self.target_mean if cells is None else self.target_mean[cells]
        std = self.target_std if cells is None else self.target_std[cells]
        return (raw - mean) / std

    def inverse_target(self, normed, cells=None):
        normed = np.asarray(normed, dtype=np.float64)
        mean = self.target_mean if cells is None else self.target_mean[cells]
        std = self.target_std if cells is None else self.target_std[cells]
        return normed * std + mean

    def transform_branch(self, values):
        return (np.asarray(values, dtype=np.float64) - self.branch_mean) / self.branch_std

    def transform_trunk(self, points):
        pts = np.asarray(points, dtype=np.float64)
        span = self.trunk_hi - self.trunk_lo
        return 2.0 * (pts - self.trunk_lo) / span - 1.0

    def to_dict(self) -> dict:
        return {
            "target_mean": self.target_mean.tolist(),
            "target_std": self.target_std.tolist(),
            "branch_mean": self.branch_mean.tolist(),
            "branch_std": self.branch_std.tolist(),
            "trunk_lo": self.trunk_lo.tolist(),
            "trunk_hi": self.trunk_hi.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationMeta":
        return cls(
            target_mean=np.array(d["target_mean"], dtype=np.float64),
            target_std=np.array(d["target_std"], dtype=np.float64),
            branch_mean=np.array(d["branch_mean"], dtype=np.float64),
            branch_std=np.array(d["branch_std"], dtype=np.float64),
            trunk_lo=np.array(d["trunk_lo"], dtype=np.float64),
            trunk_hi=np.array(d["trunk_hi"], dtype=np.float64),
        )


def cell_center_points(grid: TallyGrid) -> np.ndarray:
    """All tally cell centers as an (nx*ny, 2) array in flat row-major order."""
    cx, cy = grid.cell_centers()
    X, Y = np.meshgrid(cx, cy, indexing="ij")
    return np.column_stack((X.ravel(), Y.ravel()))


def fit_normalization(view: CorpusView) -> NormalizationMeta:
    """Compute normalization statistics from a training view.

    Near-constant sensors or cells get unit scale instead of a vanishing
    divisor.
    """
    if len(view) == 0:
        raise ConfigurationError("cannot fit normalization on an empty view")
    sensors = np.stack([e.sensors.values for e in view])
    fields = np.stack([e.flux.values.ravel() for e in view])
    t_mean = fields.mean(axis=0)
    t_std = fields.std(axis=0)
    t_std = np.where(t_std < 1e-12, 1.0, t_std)
    b_mean = sensors.mean(axis=0)
    b_std = sensors.std(axis=0)
    b_std = np.where(b_std < 1e-12, 1.0, b_std)
    centers = cell_center_points(view.tally_grid)
    lo = centers.min(axis=0)
    hi = centers.max(axis=0)
    span_ok = hi > lo
    hi = np.where(span_ok, hi, lo + 1.0)
    return NormalizationMeta(target_mean=t_mean, target_std=t_std,
                             branch_mean=b_mean, branch_std=b_std,
                             trunk_lo=lo, trunk_hi=hi)


# ----------------------------------------------------------------------
# Pipeline operations
# ----------------------------------------------------------------------

def generate_corpus(n: int, seed: int, geometry: MazeGeometry, materials: dict,
                    sensor_grid: SensorGrid, tally_grid: TallyGrid, plan: RunPlan,
                    ranges: SourceRanges | None = None, config_hash: str = "") -> Corpus:
    """Sample, discretize, and simulate n independent source functions.

    Entry i draws its spec and its simulation seed from substreams of
    (seed, i), so corpora are reproducible and entries could be generated
    concurrently in any order.
    """
    if n < 2:
        raise ConfigurationError(f"corpus needs at least 2 entries, got {n}")
    entries = []
    for i in range(n):
        spec = sample_source_spec(substream(seed, "spec", i), ranges)
        spec_id = f"f{i:05d}"
        sensors = discretize_source(spec, sensor_grid, spec_id=spec_id)
        entry_plan = replace(plan, seed=child_seed(seed, "sim", i))
        try:
            flux = simulate_flux(geometry, materials, spec, tally_grid, entry_plan,
                                 spec_id=spec_id)
        except MazefluxError as exc:
            raise DatasetError(f"simulation failed for corpus entry {i}: {exc}") from exc
        entries.append(CorpusEntry(spec=spec, sensors=sensors, flux=flux))
    return Corpus(entries=entries, sensor_grid=sensor_grid, tally_grid=tally_grid,
                  seed=seed, config_hash=config_hash)


def split_functions(corpus: Corpus, seed: int) -> SplitCorpus:
    """Randomly partition functions 8:2 into train/test views.

    The split is by function: every tally point of a function follows its
    function's partition.
    """
    n = len(corpus)
    if n < 5:
        raise ConfigurationError(f"corpus too small to split 8:2, got {n} entries")
    perm = substream(seed, "split").permutation(n)
    cut = (8 * n) // 10
    return SplitCorpus(
        train=CorpusView(corpus, tuple(int(i) for i in perm[:cut])),
        test=CorpusView(corpus, tuple(int(i) for i in perm[cut:])),
    )


def subsample_points(view: CorpusView, fraction: float, seed: int) -> PointSubset:
    """Draw floor(fraction * n_cells) tally cells per function, no replacement.

    Draws are independent across functions and across fractions; entry i's
    draw depends only on (seed, fraction, its corpus index).
    """
    if not any(abs(fraction - f) < 1e-9 for f in SUBSET_FRACTIONS):
        raise ConfigurationError(
            f"fraction {fraction} not in the supported menu {SUBSET_FRACTIONS}")
    grid = view.tally_grid
    ncells = grid.nx * grid.ny
    k = int(np.floor(fraction * ncells))
    tag = int(round(fraction * 100))
    lists = []
    for corpus_index in view.indices:
        rng = substream(seed, "subset", tag, corpus_index)
        lists.append(rng.choice(ncells, size=k, replace=False).astype(np.int64))
    return PointSubset(fraction=fraction, index_lists=lists)


def assemble_operator_samples(view: CorpusView, norm: NormalizationMeta,
                              subset: PointSubset | None = None) -> Iterator[OperatorSample]:
    """Yield one sample per (function, selected cell).

    Branch inputs stay in raw sensor units and trunk points in cm (models
    apply their own normalization); targets are in transformed space.
    """
    grid = view.tally_grid
    centers = cell_center_points(grid)
    for k, entry in enumerate(view):
        if subset is not None:
            cells = subset.index_lists[k]
        else:
            cells = np.arange(grid.nx * grid.ny)
        flat = entry.flux.values.ravel()
        targets = norm.transform_target(flat[cells], cells)
        for cell, target in zip(cells, targets):
            yield OperatorSample(
                branch_input=entry.sensors.values,
                trunk_point=centers[cell],
                target=float(target),
                spec_id=entry.spec_id,
            )


def assemble_arrays(view: CorpusView, norm: NormalizationMeta,
                    subset: PointSubset | None = None) -> dict:
    """Array-form assembly used by the training loops.

    Returns raw branch inputs (F, m), normalized full-grid targets
    (F, n_cells), normalized trunk coordinates for every cell (n_cells, 2),
    per-function selected-cell index lists, and spec ids.
    """
    grid = view.tally_grid
    ncells = grid.nx * grid.ny
    branch = np.stack([e.sensors.values for e in view]) if len(view) else np.zeros((0, view.sensor_grid.count))
    targets = np.stack([norm.transform_target(e.flux.values.ravel()) for e in view]) \
        if len(view) else np.zeros((0, ncells))
    if subset is not None:
        cells = [np.asarray(ix, dtype=np.int64) for ix in subset.index_lists]
    else:
        cells = [np.arange(ncells, dtype=np.int64) for _ in range(len(view))]
    trunk = norm.transform_trunk(cell_center_points(grid))
    return {
        "branch_raw": branch,
        "targets_norm": targets,
        "trunk_norm": trunk,
        "cells": cells,
        "spec_ids": view.spec_ids(),
    }


# ----------------------------------------------------------------------
# Dataset file IO
# ----------------------------------------------------------------------

DATASET_KIND = "dataset"


@dataclass
class Dataset:
    """A corpus plus optional split membership and normalization metadata."""

    corpus: Corpus
    train_ids: tuple = None
    test_ids: tuple = None
    norm: NormalizationMeta = None

    def view(self, which: str) -> CorpusView:
        ids = {"train": self.train_ids, "test": self.test_ids}[which]
        if ids is None:
            raise DatasetError(f"dataset has no {which} split recorded")
        index_of = {e.spec_id: i for i, e in enumerate(self.corpus.entries)}
        return CorpusView(self.corpus, tuple(index_of[s] for s in ids))


def split_to_dataset(corpus: Corpus, split: SplitCorpus, norm: NormalizationMeta) -> Dataset:
    return Dataset(corpus=corpus, train_ids=tuple(split.train.spec_ids()),
                   test_ids=tuple(split.test.spec_ids()), norm=norm)


def write_dataset(dataset: Dataset, path) -> None:
    """Serialize a Dataset to the versioned container format (atomic)."""
    corpus = dataset.corpus
    n = len(corpus)
    m = corpus.sensor_grid.count
    g = corpus.tally_grid
    spec_params = np.zeros((n, 7), dtype=np.float64)
    sensors = np.zeros((n, m), dtype=np.float64)
    flux_values = np.zeros((n, g.nx, g.ny), dtype=np.float64)
    flux_rel = np.zeros((n, g.nx, g.ny), dtype=np.float64)
    capped = np.zeros(n, dtype=np.int64)
    for i, e in enumerate(corpus.entries):
        spec_params[i, 0] = e.spec.energy_mev
        spec_params[i, 1:4] = e.spec.mu
        spec_params[i, 4:7] = e.spec.sigma
        sensors[i] = e.sensors.values
        flux_values[i] = e.flux.values
        flux_rel[i] = e.flux.rel_error
        capped[i] = e.flux.capped_histories

    meta = {
        "spec_ids": corpus.spec_ids(),
        "sensor_grid": {"axis": corpus.sensor_grid.axis, "count": corpus.sensor_grid.count,
                        "lo": corpus.sensor_grid.lo, "hi": corpus.sensor_grid.hi},
        "tally_grid": {"nx": g.nx, "ny": g.ny, "x_lo": g.x_lo, "x_hi": g.x_hi,
                       "y_lo": g.y_lo, "y_hi": g.y_hi, "normalization": g.normalization},
        "seed": corpus.seed,
        "config_hash": corpus.config_hash,
        "train_ids": list(dataset.train_ids) if dataset.train_ids is not None else None,
        "test_ids": list(dataset.test_ids) if dataset.test_ids is not None else None,
        "norm": dataset.norm.to_dict() if dataset.norm is not None else None,
    }
    arrays = {
        "spec_params": spec_params,
        "sensors": sensors,
        "flux_values": flux_values,
        "flux_rel_error": flux_rel,
        "capped_histories": capped,
    }
    write_container(path, DATASET_KIND, meta, arrays)


def read_dataset(path) -> Dataset:
    """Load a Dataset written by write_dataset."""
    _, meta, arrays = read_container(path, expected_kind=DATASET_KIND)
    sg = meta["sensor_grid"]
    tg = meta["tally_grid"]
    sensor_grid = SensorGrid(axis=sg["axis"], count=sg["count"], lo=sg["lo"], hi=sg["hi"])
    tally_grid = TallyGrid(nx=tg["nx"], ny=tg["ny"], x_lo=tg["x_lo"], x_hi=tg["x_hi"],
                           y_lo=tg["y_lo"], y_hi=tg["y_hi"],
                           normalization=tg["normalization"])
    entries = []
    for i, spec_id in enumerate(meta["spec_ids"]):
        p = arrays["spec_params"][i]
        spec = SourceSpec(energy_mev=p[0], mu=tuple(p[1:4]), sigma=tuple(p[4:7]))
        sensors = SensorVector(values=arrays["sensors"][i], spec_id=spec_id)
        flux = FluxField(values=arrays["flux_values"][i],
                         rel_error=arrays["flux_rel_error"][i],
                         spec_id=spec_id,
                         capped_histories=int(arrays["capped_histories"][i]))
        entries.append(CorpusEntry(spec=spec, sensors=sensors, flux=flux))
    corpus = Corpus(entries=entries, sensor_grid=sensor_grid, tally_grid=tally_grid,
                    seed=meta["seed"], config_hash=meta["config_hash"])
    norm = NormalizationMeta.from_dict(meta["norm"]) if meta["norm"] is not None else None
    train_ids = tuple(meta["train_ids"]) if meta["train_ids"] is not None else None
    test_ids = tuple(meta["test_ids"]) if meta["test_ids"] is not None else None
    return Dataset(corpus=corpus, train_ids=train_ids, test_ids=test_ids, norm=norm)
