"""One-group 2D Monte Carlo transport with a track-length flux tally.

Histories are born from a Gaussian source, fly exponentially distributed free
paths within each material region (truncated at region boundaries), scatter
isotropically or get absorbed at collisions, and die on leaving the domain.
Every flight segment deposits weight x chord-length into each tally cell it
crosses, computed by exact grid traversal; a batch's tally divided by particle
count and cell area is the batch-mean flux estimate.

The engine advances whole particle batches in lockstep with numpy, which keeps
desk-scale runs (millions of histories) in the seconds-to-minutes range.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import MazeGeometry, MaterialXS
from .rng import substream
from .source import SourceSpec

MAX_SEGMENTS_PER_HISTORY = 10_000
# Boundary-crossing nudge (cm): large enough to defeat roundoff at coordinate
# magnitudes ~1e2, small enough to be invisible to the tally.
_NUDGE = 1e-9 * 100


@dataclass(frozen=True)
class TallyGrid:
    """Uniform rectangular tally mesh with a global normalization factor."""

    nx: int = 80
    ny: int = 80
    x_lo: float = -12.0
    x_hi: float = 52.0
    y_lo: float = -12.0
    y_hi: float = 52.0
    normalization: float = 1000.0

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigurationError(f"grid must have positive divisions, got {self.nx}x{self.ny}")
        if not (self.x_hi > self.x_lo and self.y_hi > self.y_lo):
            raise ConfigurationError("grid extents are empty or inverted")
        if self.normalization <= 0:
            raise ConfigurationError(f"normalization must be > 0, got {self.normalization}")

    @property
    def hx(self) -> float:
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def hy(self) -> float:
        return (self.y_hi - self.y_lo) / self.ny

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def cell_centers(self):
        """Cell-center coordinate arrays (cx of length nx, cy of length ny)."""
        cx = self.x_lo + self.hx * (np.arange(self.nx) + 0.5)
        cy = self.y_lo + self.hy * (np.arange(self.ny) + 0.5)
        return cx, cy


@dataclass(frozen=True)
class RunPlan:
    """Monte Carlo run size: histories per batch, batch count, root seed."""

    particles_per_batch: int = 100_000
    batches: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.particles_per_batch < 1:
            raise ConfigurationError(
                f"particles_per_batch must be >= 1, got {self.particles_per_batch}")
        if self.batches < 1:
            raise ConfigurationError(f"batches must be >= 1, got {self.batches}")


@dataclass
class FluxField:
    """Tallied flux per cell with per-cell relative statistical error.

    rel_error is the standard error of the batch means divided by the mean;
    cells with zero mean (or single-batch runs) carry the sentinel value 1.0.
    """

    values: np.ndarray
    rel_error: np.ndarray
    spec_id: str
    capped_histories: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.rel_error = np.asarray(self.rel_error, dtype=np.float64)


@dataclass
class TallyAccumulator:
    """Mutable per-batch tally: weighted track lengths plus bookkeeping."""

    grid: TallyGrid
    track: np.ndarray = None
    path_total: float = 0.0      # sum of weight x segment length, before clipping
    capped_histories: int = 0

    def __post_init__(self):
        if self.track is None:
            self.track = np.zeros((self.grid.nx, self.grid.ny), dtype=np.float64)

    def merge(self, other: "TallyAccumulator") -> None:
        self.track += other.track
        self.path_total += other.path_total
        self.capped_histories += other.capped_histories


# ----------------------------------------------------------------------
# Track-length deposition: exact chord lengths through a uniform grid
# ----------------------------------------------------------------------

def _clip_to_grid(p0, p1, grid: TallyGrid):
    """Liang-Barsky clip of segments to the grid box.

    Returns (t0, t1) clip parameters in [0, 1] per segment; t0 >= t1 marks a
    segment with no overlap.
    """
    t0 = np.zeros(len(p0))
    t1 = np.ones(len(p0))
    for ax, lo, hi in ((0, grid.x_lo, grid.x_hi), (1, grid.y_lo, grid.y_hi)):
        x = p0[:, ax]
        d = p1[:, ax] - x
        moving = d != 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo - x) / d
            tb = (hi - x) / d
        tmin = np.minimum(ta, tb)
        tmax = np.maximum(ta, tb)
        inside = (x >= lo) & (x <= hi)
        tmin = np.where(moving, tmin, np.where(inside, -np.inf, np.inf))
        tmax = np.where(moving, tmax, np.where(inside, np.inf, -np.inf))
        t0 = np.maximum(t0, tmin)
        t1 = np.minimum(t1, tmax)
    return t0, t1


def _ragged_arithmetic(first, step, counts):
    """Flatten per-row arithmetic progressions first + step*j, j < counts."""
    total = int(counts.sum())
    rows = np.repeat(np.arange(len(counts)), counts)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    j = np.arange(total) - np.repeat(starts, counts)
    return rows, first[rows] + step[rows] * j


def deposit_track_lengths(acc_track: np.ndarray, grid: TallyGrid, p0, p1, weights) -> None:
    """Add weight x chord length to every tally cell crossed by each segment.

    Segments are clipped to the grid extents; the portion outside deposits
    nothing.  Within the grid the subdivision is exact: the per-cell chords of
    a segment sum to its clipped length to floating-point accuracy.
    """
    p0 = np.atleast_2d(np.asarray(p0, dtype=np.float64))
    p1 = np.atleast_2d(np.asarray(p1, dtype=np.float64))
    weights = np.atleast_1d(np.asarray(weights, dtype=np.float64))
    if len(p0) == 0:
        return

    t0, t1 = _clip_to_grid(p0, p1, grid)
    full_len = np.hypot(p1[:, 0] - p0[:, 0], p1[:, 1] - p0[:, 1])
    keep = (t1 > t0) & (full_len > 0.0)
    if not keep.any():
        return
    p0, p1 = p0[keep], p1[keep]
    w = weights[keep]
    t0, t1 = t0[keep], t1[keep]
    d = p1 - p0
    a = p0 + d * t0[:, None]
    b = p0 + d * t1[:, None]
    seg_len = full_len[keep] * (t1 - t0)
    m = len(a)

    # Interior grid-line crossings per axis, as parameters tau in (0, 1) of the
    # clipped segment.  Lines at fractional index k are crossed for integer k
    # strictly between the endpoint fractional coordinates.
    cross_rows = []
    cross_taus = []
    for ax, lo, h in ((0, grid.x_lo, grid.hx), (1, grid.y_lo, grid.hy)):
        fa = (a[:, ax] - lo) / h
        fb = (b[:, ax] - lo) / h
        kmin = np.floor(np.minimum(fa, fb))
        kmax = np.floor(np.maximum(fa, fb))
        counts = np.maximum((kmax - kmin).astype(np.int64), 0)
        delta = fb - fa
        safe = np.where(delta == 0.0, 1.0, delta)
        first = (kmin + 1.0 - fa) / safe
        step = 1.0 / safe
        rows, taus = _ragged_arithmetic(first, step, counts)
        cross_rows.append(rows)
        cross_taus.append(taus)

    seg_ids = np.concatenate([np.arange(m), np.arange(m)] + cross_rows)
    taus = np.concatenate([np.zeros(m), np.ones(m)] + cross_taus)
    taus = np.clip(taus, 0.0, 1.0)

    order = np.lexsort((taus, seg_ids))
    seg_sorted = seg_ids[order]
    tau_sorted = taus[order]

    same = seg_sorted[1:] == seg_sorted[:-1]
    dtau = tau_sorted[1:] - tau_sorted[:-1]
    piece = same & (dtau > 0.0)
    sid = seg_sorted[1:][piece]
    dtv = dtau[piece]
    tmid = 0.5 * (tau_sorted[1:] + tau_sorted[:-1])[piece]

    px = a[sid, 0] + (b[sid, 0] - a[sid, 0]) * tmid
    py = a[sid, 1] + (b[sid, 1] - a[sid, 1]) * tmid
    ci = np.clip(np.floor((px - grid.x_lo) / grid.hx).astype(np.int64), 0, grid.nx - 1)
    cj = np.clip(np.floor((py - grid.y_lo) / grid.hy).astype(np.int64), 0, grid.ny - 1)

    flat = ci * grid.ny + cj
    contributions = w[sid] * seg_len[sid] * dtv
    acc_track.ravel()[:] += np.bincount(flat, weights=contributions,
                                        minlength=grid.nx * grid.ny)


# ----------------------------------------------------------------------
# Transport engine
# ----------------------------------------------------------------------

def cross_section_maps(geometry: MazeGeometry, materials: dict):
    """Per-supercell sigma_total and scatter_prob arrays for the engine."""
    nxc = len(geometry.x_cuts) - 1
    nyc = len(geometry.y_cuts) - 1
    sig = np.empty((nxc, nyc), dtype=np.float64)
    scat = np.empty((nxc, nyc), dtype=np.float64)
    for k, name in enumerate(geometry.material_names):
        if name not in materials:
            raise ConfigurationError(f"no cross sections given for material {name!r}")
        xs: MaterialXS = materials[name]
        mask = geometry.material == k
        sig[mask] = xs.sigma_total
        scat[mask] = xs.scatter_prob
    return sig, scat


def sample_birth(spec: SourceSpec, rng: np.random.Generator):
    """Draw one birth site in the xy-plane and the history's statistical weight.

    Position is Gaussian about the spec's (mu_x, mu_y) with the spec's
    (sigma_x, sigma_y); degenerate axes are exact.  Weight is the source
    energy, so tallies estimate the energy-density-weighted flux: the field
    scales with the source amplitude exactly as the input function does.
    """
    z = rng.standard_normal(2)
    position = np.array(spec.mu[:2], dtype=np.float64) + z * np.array(spec.sigma[:2])
    return position, spec.energy_mev


def _transport_batch(geometry, sig_map, scat_map, pos, dirs, weights, rng,
                     acc: TallyAccumulator, max_segments=MAX_SEGMENTS_PER_HISTORY):
    """Advance a batch of particles to completion, depositing track lengths.

    All particles march in lockstep: each engine step moves every live
    particle one flight segment (to a collision or a region boundary).
    """
    x_cuts = geometry.x_cuts
    y_cuts = geometry.y_cuts
    x_lo, x_hi = x_cuts[0], x_cuts[-1]
    y_lo, y_hi = y_cuts[0], y_cuts[-1]
    nxc = len(x_cuts) - 1
    nyc = len(y_cuts) - 1

    n = len(pos)
    alive = ((pos[:, 0] > x_lo) & (pos[:, 0] < x_hi)
             & (pos[:, 1] > y_lo) & (pos[:, 1] < y_hi))
    segments = np.zeros(n, dtype=np.int64)

    idx = np.nonzero(alive)[0]
    while idx.size:
        x = pos[idx, 0]
        y = pos[idx, 1]
        ux = dirs[idx, 0]
        uy = dirs[idx, 1]

        ix = np.clip(np.searchsorted(x_cuts, x, side="right") - 1, 0, nxc - 1)
        iy = np.clip(np.searchsorted(y_cuts, y, side="right") - 1, 0, nyc - 1)
        sig = sig_map[ix, iy]
        scat = scat_map[ix, iy]

        # Distance to the current supercell's boundary along the flight
        target_x = np.where(ux > 0, x_cuts[ix + 1], x_cuts[ix])
        target_y = np.where(uy > 0, y_cuts[iy + 1], y_cuts[iy])
        with np.errstate(divide="ignore", invalid="ignore"):
            tx = np.where(ux != 0.0, (target_x - x) / ux, np.inf)
            ty = np.where(uy != 0.0, (target_y - y) / uy, np.inf)
        t_bound = np.maximum(np.minimum(tx, ty), 0.0)

        u = rng.random(idx.size)
        flight = np.full(idx.size, np.inf)
        interacting = sig > 0.0
        flight[interacting] = -np.log1p(-u[interacting]) / sig[interacting]

        seg = np.minimum(flight, t_bound)
        endpoint = pos[idx] + dirs[idx] * seg[:, None]
        deposit_track_lengths(acc.track, acc.grid, pos[idx], endpoint, weights[idx])
        acc.path_total += float(np.dot(weights[idx], seg))
        pos[idx] = endpoint
        segments[idx] += 1

        collided = flight < t_bound
        cidx = idx[collided]
        if cidx.size:
            scatters = rng.random(cidx.size) < scat[collided]
            alive[cidx[~scatters]] = False
            sidx = cidx[scatters]
            if sidx.size:
                theta = rng.uniform(0.0, 2.0 * np.pi, sidx.size)
                dirs[sidx, 0] = np.cos(theta)
                dirs[sidx, 1] = np.sin(theta)

        bidx = idx[~collided]
        if bidx.size:
            pos[bidx] += dirs[bidx] * _NUDGE
            out = ((pos[bidx, 0] <= x_lo) | (pos[bidx, 0] >= x_hi)
                   | (pos[bidx, 1] <= y_lo) | (pos[bidx, 1] >= y_hi))
            alive[bidx[out]] = False

        over = alive & (segments >= max_segments)
        n_over = int(over.sum())
        if n_over:
            acc.capped_histories += n_over
            alive[over] = False

        idx = np.nonzero(alive)[0]


def transport_history(geometry: MazeGeometry, materials: dict, birth, rng,
                      acc: TallyAccumulator) -> None:
    """Transport a single history (position, weight) to completion.

    Runs the batch engine with a one-particle batch, so the physics is
    identical to full-scale runs.  The history's segments are capped at
    MAX_SEGMENTS_PER_HISTORY and counted on the accumulator if hit.
    """
    position, weight = birth
    sig_map, scat_map = cross_section_maps(geometry, materials)
    pos = np.array([position], dtype=np.float64)
    theta = rng.uniform(0.0, 2.0 * np.pi)
    dirs = np.array([[np.cos(theta), np.sin(theta)]])
    w = np.array([weight], dtype=np.float64)
    _transport_batch(geometry, sig_map, scat_map, pos, dirs, w, rng, acc)


def simulate_flux(geometry: MazeGeometry, materials: dict, spec: SourceSpec,
                  grid: TallyGrid, plan: RunPlan, spec_id: str | None = None) -> FluxField:
    """Run the full batched simulation for one source and tally the flux field.

    Per-batch mean flux per cell is
        normalization * sum(weight x track length) / (particles_per_batch * cell area);
    values are the mean over batches and rel_error the standard error of the
    batch means relative to that mean.  Each batch draws from its own
    substream of plan.seed, so results are reproducible and independent of
    any batch execution order.
    """
    sig_map, scat_map = cross_section_maps(geometry, materials)
    n = plan.particles_per_batch
    scale = grid.normalization / (n * grid.cell_area)
    mu_xy = np.array(spec.mu[:2], dtype=np.float64)
    sigma_xy = np.array(spec.sigma[:2], dtype=np.float64)

    batch_means = np.empty((plan.batches, grid.nx, grid.ny), dtype=np.float64)
    capped = 0
    for b in range(plan.batches):
        rng = substream(plan.seed, b)
        acc = TallyAccumulator(grid)
        pos = mu_xy + rng.standard_normal((n, 2)) * sigma_xy
        theta = rng.uniform(0.0, 2.0 * np.pi, n)
        dirs = np.column_stack((np.cos(theta), np.sin(theta)))
        w = np.full(n, spec.energy_mev, dtype=np.float64)
        _transport_batch(geometry, sig_map, scat_map, pos, dirs, w, rng, acc)
        batch_means[b] = acc.track * scale
        capped += acc.capped_histories

    values = batch_means.mean(axis=0)
    if plan.batches >= 2:
        spread = batch_means.std(axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = spread / (values * np.sqrt(plan.batches))
        rel = np.where(values > 0.0, rel, 1.0)
    else:
        rel = np.ones_like(values)
    return FluxField(values=values, rel_error=rel,
                     spec_id=spec_id or spec.content_id(),
                     capped_histories=capped)


def timing_probe(plan: RunPlan, geometry: MazeGeometry, materials: dict,
                 spec: SourceSpec, grid: TallyGrid) -> float:
    """Wall-clock seconds for one simulate_flux call with the given plan."""
    start = time.perf_counter()
    simulate_flux(geometry, materials, spec, grid, plan)
    return time.perf_counter() - start


def save_flux_csv(field: FluxField, grid: TallyGrid, path, seed: int | None = None) -> None:
    """Flat text dump of one field: header lines, then nx*ny rows of
    x,y,value,rel_error in row-major cell order."""
    from .container import atomic_write_bytes

    lines = [
        f"# spec_id={field.spec_id}",
        f"# nx={grid.nx} ny={grid.ny}",
        f"# x_lo={grid.x_lo!r} x_hi={grid.x_hi!r} y_lo={grid.y_lo!r} y_hi={grid.y_hi!r}",
        f"# normalization={grid.normalization!r}",
        f"# seed={seed if seed is not None else ''}",
        "x,y,value,rel_error",
    ]
    cx, cy = grid.cell_centers()
    vals = field.values
    rel = field.rel_error
    for i in range(grid.nx):
        for j in range(grid.ny):
            lines.append(f"{float(cx[i])!r},{float(cy[j])!r},"
                         f"{float(vals[i, j])!r},{float(rel[i, j])!r}")
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


def load_flux_csv(path):
    """Read a save_flux_csv dump; returns (FluxField, TallyGrid)."""
    header = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for token in line[1:].split():
                    if "=" in token:
                        k, v = token.split("=", 1)
                        header[k] = v
            elif line[0].isdigit() or line[0] == "-":
                rows.append([float(tok) for tok in line.split(",")])
    nx, ny = int(header["nx"]), int(header["ny"])
    grid = TallyGrid(nx=nx, ny=ny,
                     x_lo=float(header["x_lo"]), x_hi=float(header["x_hi"]),
                     y_lo=float(header["y_lo"]), y_hi=float(header["y_hi"]),
                     normalization=float(header["normalization"]))
    data = np.array(rows, dtype=np.float64)
    if data.shape != (nx * ny, 4):
        raise ConfigurationError(f"{path}: expected {nx * ny} field rows, got {data.shape[0]}")
    values = data[:, 2].reshape(nx, ny)
    rel = data[:, 3].reshape(nx, ny)
    return FluxField(values=values, rel_error=rel, spec_id=header.get("spec_id", "")), grid
