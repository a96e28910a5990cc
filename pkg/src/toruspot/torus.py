"""Geometry of the flat torus T^d = [-1/2, 1/2)^d.

Points, uniform cell grids, and exact set morphology (expansion,
regularization) on the N^d lattice of cell centers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# relative slack for the strict "< r" comparison
DIST_RTOL = 1e-12


def wrap(x):
    """Reduce coordinates to the fundamental domain [-1/2, 1/2)."""
    x = np.asarray(x, dtype=float)
    y = x - np.floor(x + 0.5)
    # floor can land exactly on +1/2 after rounding
    return np.where(y >= 0.5, y - 1.0, y)


def torus_diff(x, y):
    """Minimal-image displacement x - y, componentwise in [-1/2, 1/2)."""
    return wrap(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))


def torus_dist(x, y):
    """Torus distance between points (or broadcastable arrays of points).

    The last axis holds the coordinates. Scalars are treated as 1D points.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    diff = x - y
    diff = diff - np.rint(diff)
    out = np.sqrt(np.sum(diff * diff, axis=-1))
    return float(out) if out.ndim == 0 else out


def pairwise_torus_dist(xs, ys):
    """Matrix of torus distances between point sets of shape (n, d) and (m, d)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if ys.ndim == 1:
        ys = ys[:, None]
    if xs.shape[1] != ys.shape[1]:
        raise ValueError(f"dimension mismatch: {xs.shape[1]} vs {ys.shape[1]}")
    diff = xs[:, None, :] - ys[None, :, :]
    diff -= np.rint(diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


@dataclass(frozen=True)
class TorusPoint:
    coords: tuple

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if c.ndim != 1 or c.size < 1:
            raise ValueError("a torus point needs at least one coordinate")
        object.__setattr__(self, "coords", tuple(float(v) for v in wrap(c)))

    @property
    def d(self) -> int:
        return len(self.coords)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coords, dtype=dtype)

    def dist(self, other: "TorusPoint") -> float:
        return torus_dist(self.coords, other.coords)


@dataclass(frozen=True)
class Grid:
    """Uniform grid of N^d cells on T^d.

    Cell ``j`` (a multi-index) covers ``[j/N, (j+1)/N)`` in [0, 1) coordinates;
    its center ``(j + 1/2)/N`` is reported wrapped to [-1/2, 1/2).
    """

    d: int
    N: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.N < 2:
            raise ValueError("N must be >= 2")

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N ** self.d

    @property
    def cell_width(self) -> float:
        return 1.0 / self.N

    def axis_centers(self) -> np.ndarray:
        return wrap((np.arange(self.N) + 0.5) / self.N)

    def centers(self) -> np.ndarray:
        """Cell centers, shape ``shape + (d,)``."""
        ax = self.axis_centers()
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def cell_of(self, x) -> np.ndarray:
        """Multi-index of the half-open cell containing each point (last axis = d)."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.d:
            x = x.reshape(-1, self.d)
        u = np.mod(x, 1.0)
        idx = np.floor(u * self.N).astype(np.int64)
        return np.clip(idx, 0, self.N - 1)

    def center_norms(self) -> np.ndarray:
        """Euclidean norm of every (wrapped) cell center."""
        c = self.centers()
        return np.sqrt(np.sum(c * c, axis=-1))


@dataclass(frozen=True, eq=False)
class GridSet:
    grid: Grid
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != self.grid.shape:
            if m.size != self.grid.size:
                raise ValueError(f"mask has {m.size} cells, grid has {self.grid.size}")
            m = m.reshape(self.grid.shape)
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @classmethod
    def empty(cls, grid: Grid) -> "GridSet":
        return cls(grid, np.zeros(grid.shape, dtype=bool))

    @classmethod
    def full(cls, grid: Grid) -> "GridSet":
        return cls(grid, np.ones(grid.shape, dtype=bool))

    @classmethod
    def ball(cls, grid: Grid, radius: float, center=None) -> "GridSet":
        """Cells whose centers lie at torus distance < radius from ``center``."""
        c = np.zeros(grid.d) if center is None else np.asarray(center, dtype=float)
        dist = torus_dist(grid.centers(), c)
        return cls(grid, dist < radius)

    def __eq__(self, other):
        if not isinstance(other, GridSet):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash((self.grid, self.mask.tobytes()))

    def __len__(self):
        return int(self.mask.sum())

    def complement(self) -> "GridSet":
        return GridSet(self.grid, ~self.mask)

    def __or__(self, other: "GridSet") -> "GridSet":
        return GridSet(self.grid, self.mask | other.mask)

    def __and__(self, other: "GridSet") -> "GridSet":
        return GridSet(self.grid, self.mask & other.mask)

    def __sub__(self, other: "GridSet") -> "GridSet":
        return GridSet(self.grid, self.mask & ~other.mask)

    def issubset(self, other: "GridSet") -> bool:
        return not np.any(self.mask & ~other.mask)

    def is_empty(self) -> bool:
        return not self.mask.any()

    def is_full(self) -> bool:
        return bool(self.mask.all())

    def to_json(self) -> dict:
        """Run-length encoding over the C-order flattened mask.

        ``runs`` alternates lengths starting with a run of ``False`` cells
        (possibly of length 0).
        """
        flat = self.mask.ravel()
        change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
        bounds = np.concatenate(([0], change, [flat.size]))
        runs = np.diff(bounds).tolist()
        if flat.size and flat[0]:
            runs = [0] + runs
        return {"d": self.grid.d, "N": self.grid.N, "runs": runs}

    @classmethod
    def from_json(cls, obj: dict) -> "GridSet":
        grid = Grid(int(obj["d"]), int(obj["N"]))
        runs = [int(r) for r in obj["runs"]]
        if sum(runs) != grid.size:
            raise ValueError("run lengths do not cover the grid")
        values = np.arange(len(runs)) % 2 == 1
        flat = np.repeat(values, runs)
        return cls(grid, flat.reshape(grid.shape))


def _radius_cells(r: float, N: int) -> float:
    return r * N * (1.0 - DIST_RTOL)


def stencil(grid: Grid, r: float) -> np.ndarray:
    """Integer offsets ``v`` (reduced mod N, deduplicated) with |v|/N < r."""
    if r <= 0:
        return np.zeros((1, grid.d), dtype=np.int64)
    rc = _radius_cells(r, grid.N)
    m = int(np.ceil(rc))
    rng = np.arange(-m, m + 1)
    offs = np.array(list(itertools.product(rng, repeat=grid.d)), dtype=np.int64)
    keep = np.sqrt(np.sum(offs * offs, axis=1)) < rc
    offs = np.mod(offs[keep], grid.N)
    return np.unique(offs, axis=0)


def _expand_shift(mask: np.ndarray, offs: np.ndarray) -> np.ndarray:
    out = np.zeros_like(mask)
    axes = tuple(range(mask.ndim))
    for v in offs:
        out |= np.roll(mask, tuple(int(t) for t in v), axis=axes)
    return out


def distance_to_set(S: GridSet, reach: float | None = None) -> np.ndarray:
    """Torus distance from every cell center to the nearest center in S.

    Exact for all cells within ``reach`` of S; cells farther away get a value
    ``>= reach`` (``inf`` when nothing of S is visible). ``reach=None`` means
    the whole torus.
    """
    grid = S.grid
    if S.is_empty():
        return np.full(grid.shape, np.inf)
    N = grid.N
    if reach is None:
        pad = N
    else:
        pad = min(N, int(np.ceil(reach * N)) + 1)
    tiled = np.pad(~S.mask, pad, mode="wrap")
    edt = ndimage.distance_transform_edt(tiled)
    core = tuple(slice(pad, pad + N) for _ in range(grid.d))
    return edt[core] / N


def expand(S: GridSet, r: float) -> GridSet:
    """Open r-expansion: cells whose center is at distance < r from a center of S.

    ``r = 0`` returns S unchanged.
    """
    if r < 0:
        raise ValueError("r must be >= 0")
    if r == 0 or S.is_empty() or S.is_full():
        return S
    grid = S.grid
    if r * (1.0 - DIST_RTOL) > np.sqrt(grid.d) / 2:
        return GridSet.full(grid)
    offs = stencil(grid, r)
    # shift-OR costs |stencil| passes; the distance transform costs a few
    if len(offs) <= 64 or len(offs) * grid.size <= 5e6:
        return GridSet(grid, _expand_shift(S.mask, offs))
    rc = _radius_cells(r, grid.N)
    dist_cells = distance_to_set(S, reach=r) * grid.N
    return GridSet(grid, dist_cells < rc)


def regularize(S: GridSet, r: float) -> GridSet:
    """r-regularization: complement of the r-expansion of the complement of S_r."""
    if r <= 0:
        raise ValueError("r must be > 0")
    if S.is_empty() or S.is_full():
        return S
    return expand(expand(S, r).complement(), r).complement()


def set_measure(S: GridSet) -> float:
    return int(np.count_nonzero(S.mask)) / S.grid.size


def is_regular(S: GridSet, r: float) -> bool:
    return regularize(S, r) == S


@dataclass
class LayerDiagnostic:
    inner: float
    outer: float
    ratio: float
    degenerate: bool = False


def layer_diagnostic(S: GridSet, r: float) -> LayerDiagnostic:
    """Measures of |S_r \\ S| and |S_2r \\ S_r| and their ratio outer/inner."""
    if r <= 0:
        raise ValueError("r must be > 0")
    Sr = expand(S, r)
    S2r = expand(S, 2 * r)
    if S.is_empty() or S2r.is_full():
        return LayerDiagnostic(np.nan, np.nan, np.nan, degenerate=True)
    inner = set_measure(Sr - S)
    outer = set_measure(S2r - Sr)
    ratio = outer / inner if inner > 0 else np.nan
    return LayerDiagnostic(inner, outer, ratio, degenerate=inner == 0)


@dataclass
class IsoperimetricDiagnostic:
    layer: float
    scale: float
    ratio: float
    degenerate: bool = False


def isoperimetric_diagnostic(S: GridSet, r: float) -> IsoperimetricDiagnostic:
    """|S_r \\ S| against r * min(|S|, |S^c|)^((d-1)/d), without the constant."""
    if r <= 0:
        raise ValueError("r must be > 0")
    Sr = expand(S, r)
    if S.is_empty() or Sr.is_full():
        return IsoperimetricDiagnostic(np.nan, np.nan, np.nan, degenerate=True)
    d = S.grid.d
    m = set_measure(S)
    layer = set_measure(Sr - S)
    scale = r * min(m, 1.0 - m) ** ((d - 1) / d)
    return IsoperimetricDiagnostic(layer, scale, layer / scale if scale > 0 else np.nan)
