"""Maze geometry: axis-aligned material regions on a rectilinear mesh.

A geometry is described by a rectangular domain, a background material, and a
list of painted material rectangles (walls).  The union of all rectangle edges
induces a coarse rectilinear mesh of "supercells", each with a single material,
so the map is watertight by construction: supercells tile the domain exactly
and point location reduces to two searchsorted calls.  Everything outside the
domain is the pseudo-material "void-exterior".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GeometryError

MATERIAL_CONCRETE = "concrete"
MATERIAL_AIR = "air"
MATERIAL_VOID = "void-exterior"


@dataclass(frozen=True)
class MaterialXS:
    """One-group cross sections: total interaction rate and scatter fraction."""

    sigma_total: float      # 1/cm
    scatter_prob: float     # in [0, 1]; absorption takes the remainder

    def __post_init__(self):
        if self.sigma_total < 0:
            raise ConfigurationError(f"sigma_total must be >= 0, got {self.sigma_total}")
        if not 0.0 <= self.scatter_prob <= 1.0:
            raise ConfigurationError(f"scatter_prob must lie in [0, 1], got {self.scatter_prob}")


# Representative one-group values: concrete mean free path ~2.5 cm and mostly
# scattering; air effectively transparent at maze scale.
DEFAULT_MATERIALS = {
    MATERIAL_CONCRETE: MaterialXS(sigma_total=0.4, scatter_prob=0.9),
    MATERIAL_AIR: MaterialXS(sigma_total=1e-4, scatter_prob=0.99),
}


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle [x_lo, x_hi] x [y_lo, y_hi]."""

    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (self.x_hi > self.x_lo and self.y_hi > self.y_lo):
            raise GeometryError(f"degenerate rectangle: {self}")

    def overlaps(self, other: "Rect") -> bool:
        return (self.x_lo < other.x_hi and other.x_lo < self.x_hi
                and self.y_lo < other.y_hi and other.y_lo < self.y_hi)


@dataclass(frozen=True)
class MazeConfig:
    """Declarative maze description: domain box, background fill, wall rectangles."""

    domain: Rect
    background: str = MATERIAL_AIR
    regions: tuple = ()   # of (material_name, Rect)


@dataclass
class MazeGeometry:
    """Watertight material map over a rectilinear supercell mesh.

    x_cuts/y_cuts are the sorted distinct region-edge coordinates including the
    domain bounds; material[i, j] names the material of the supercell between
    cuts i..i+1 and j..j+1 (half-open cells, upper domain edge closed).
    """

    x_cuts: np.ndarray
    y_cuts: np.ndarray
    material: np.ndarray          # (nxc, nyc) int indices into material_names
    material_names: tuple

    @property
    def domain(self) -> Rect:
        return Rect(self.x_cuts[0], self.x_cuts[-1], self.y_cuts[0], self.y_cuts[-1])

    def cell_index(self, x: float, y: float):
        ix = int(np.searchsorted(self.x_cuts, x, side="right")) - 1
        iy = int(np.searchsorted(self.y_cuts, y, side="right")) - 1
        return ix, iy

    def material_at(self, x: float, y: float) -> str:
        """Material name at a point; 'void-exterior' outside the domain."""
        if not (self.x_cuts[0] <= x <= self.x_cuts[-1] and self.y_cuts[0] <= y <= self.y_cuts[-1]):
            return MATERIAL_VOID
        ix, iy = self.cell_index(x, y)
        ix = min(max(ix, 0), self.material.shape[0] - 1)
        iy = min(max(iy, 0), self.material.shape[1] - 1)
        return self.material_names[self.material[ix, iy]]

    def region_areas(self) -> dict:
        """Total area per material over the domain."""
        wx = np.diff(self.x_cuts)
        wy = np.diff(self.y_cuts)
        areas = np.outer(wx, wy)
        out = {}
        for k, name in enumerate(self.material_names):
            out[name] = float(areas[self.material == k].sum())
        return out


def build_maze(config: MazeConfig) -> MazeGeometry:
    """Compile a MazeConfig into a watertight supercell material map.

    Rectangles of identical material may overlap freely; rectangles of
    different materials must not (that would make the map order-dependent).
    """
    dom = config.domain
    names = [config.background]
    regions = []
    for mat, rect in config.regions:
        if not (dom.x_lo <= rect.x_lo and rect.x_hi <= dom.x_hi
                and dom.y_lo <= rect.y_lo and rect.y_hi <= dom.y_hi):
            raise GeometryError(f"region {rect} extends outside the domain {dom}")
        if mat not in names:
            names.append(mat)
        regions.append((mat, rect))

    for i, (mat_a, ra) in enumerate(regions):
        for mat_b, rb in regions[i + 1:]:
            if mat_a != mat_b and ra.overlaps(rb):
                raise GeometryError(
                    f"contradictory overlap: {mat_a} region {ra} intersects {mat_b} region {rb}"
                )

    x_cuts = {dom.x_lo, dom.x_hi}
    y_cuts = {dom.y_lo, dom.y_hi}
    for _, rect in regions:
        x_cuts.update((rect.x_lo, rect.x_hi))
        y_cuts.update((rect.y_lo, rect.y_hi))
    x_cuts = np.array(sorted(x_cuts), dtype=np.float64)
    y_cuts = np.array(sorted(y_cuts), dtype=np.float64)

    name_index = {n: k for k, n in enumerate(names)}
    material = np.zeros((len(x_cuts) - 1, len(y_cuts) - 1), dtype=np.int64)
    cx = 0.5 * (x_cuts[:-1] + x_cuts[1:])
    cy = 0.5 * (y_cuts[:-1] + y_cuts[1:])
    for mat, rect in regions:
        ix = (cx > rect.x_lo) & (cx < rect.x_hi)
        iy = (cy > rect.y_lo) & (cy < rect.y_hi)
        material[np.ix_(ix, iy)] = name_index[mat]

    return MazeGeometry(x_cuts=x_cuts, y_cuts=y_cuts, material=material,
                        material_names=tuple(names))


# ----------------------------------------------------------------------
# Default maze layout
# ----------------------------------------------------------------------
#
# Domain 64 cm x 64 cm with a 3 cm concrete perimeter and two 3 cm baffles
# forming a serpentine corridor: the source sits near the bottom edge, the
# first baffle juts from the left wall, the second from the right wall, so
# flux must wind right, up, and back left to reach the top region.

DOMAIN_LO = -12.0
DOMAIN_HI = 52.0
WALL_THICKNESS = 3.0

_INNER_LO = DOMAIN_LO + WALL_THICKNESS   # -9
_INNER_HI = DOMAIN_HI - WALL_THICKNESS   # 49


def default_maze_config() -> MazeConfig:
    dom = Rect(DOMAIN_LO, DOMAIN_HI, DOMAIN_LO, DOMAIN_HI)
    walls = (
        Rect(DOMAIN_LO, _INNER_LO, DOMAIN_LO, DOMAIN_HI),    # left band
        Rect(_INNER_HI, DOMAIN_HI, DOMAIN_LO, DOMAIN_HI),    # right band
        Rect(DOMAIN_LO, DOMAIN_HI, DOMAIN_LO, _INNER_LO),    # bottom band
        Rect(DOMAIN_LO, DOMAIN_HI, _INNER_HI, DOMAIN_HI),    # top band
        Rect(_INNER_LO, 29.0, 13.0, 16.0),                   # baffle from left wall
        Rect(11.0, _INNER_HI, 31.0, 34.0),                   # baffle from right wall
    )
    regions = tuple((MATERIAL_CONCRETE, r) for r in walls)
    return MazeConfig(domain=dom, background=MATERIAL_AIR, regions=regions)


def default_maze() -> MazeGeometry:
    """The built-in serpentine maze used by all default configurations."""
    return build_maze(default_maze_config())
