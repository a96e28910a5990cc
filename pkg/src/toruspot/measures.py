"""Probability measures on T^d: atomic and grid forms, test families, Fourier coefficients."""

from __future__ import annotations

import csv
import functools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .torus import Grid, wrap

log = logging.getLogger(__name__)

MASS_TOL = 1e-12
CLIP_TOL = 1e-8


# ---------------------------------------------------------------------------
# mollifier psi(x) = exp(-1/(1-|x|^2)) on the unit ball, unit integral on R^d


def _bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = np.exp(-1.0 / (1.0 - ri * ri))
    return out


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.gamma(d / 2)


def ball_volume(d: int, radius: float = 1.0) -> float:
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1) * radius ** d


@functools.lru_cache(maxsize=None)
def mollifier_norm(d: int) -> float:
    """Integral of the unnormalized bump over R^d."""
    val, _ = integrate.quad(
        lambda r: math.exp(-1.0 / (1.0 - r * r)) * r ** (d - 1), 0.0, 1.0,
        epsabs=0.0, epsrel=1e-13, limit=200,
    )
    return sphere_area(d) * val


def mollifier(x, d: int | None = None):
    """Normalized mollifier evaluated at points ``x`` (last axis = d).

    With ``d`` given, ``x`` is interpreted as radii instead.
    """
    if d is None:
        x = np.asarray(x, dtype=float)
        d = x.shape[-1]
        r = np.sqrt(np.sum(x * x, axis=-1))
    else:
        r = np.abs(np.asarray(x, dtype=float))
    return _bump(r) / mollifier_norm(d)


def mollifier_max(d: int) -> float:
    return math.exp(-1.0) / mollifier_norm(d)


_GL_CACHE: dict = {}


def _gauss_legendre(n: int):
    if n not in _GL_CACHE:
        t, w = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = (0.5 * (t + 1.0), 0.5 * w)
    return _GL_CACHE[n]


def _hankel_direct(rho: np.ndarray, d: int, n_nodes: int) -> np.ndarray:
    r, w = _gauss_legendre(n_nodes)
    prof = _bump(r) / mollifier_norm(d)
    out = np.empty_like(rho)
    for lo in range(0, rho.size, 2048):
        rr = rho[lo:lo + 2048, None]
        z = 2.0 * np.pi * rr * r[None, :]
        if d == 1:
            kern = 2.0 * np.cos(z)
        elif d == 3:
            kern = 4.0 * np.pi * r * r * np.sinc(2.0 * rr * r[None, :])
        elif d == 2:
            kern = 2.0 * np.pi * r * special.j0(z)
        else:
            nu = d / 2 - 1
            with np.errstate(divide="ignore", invalid="ignore"):
                kern = 2.0 * np.pi * r ** (d / 2) * special.jv(nu, z) * rr ** (1 - d / 2)
            # small-argument limit of the Bessel kernel
            small = z < 1e-8
            if np.any(small):
                lim = sphere_area(d) * r ** (d - 1)
                kern = np.where(small, np.broadcast_to(lim, kern.shape), kern)
        out[lo:lo + 2048] = kern @ (w * prof)
    return out


_HAT_STEP = 1.0 / 64
_HAT_MAX = 64.0


@functools.lru_cache(maxsize=None)
def _hat_table(d: int):
    from scipy.interpolate import CubicSpline

    grid = np.arange(0.0, _HAT_MAX + _HAT_STEP, _HAT_STEP)
    vals = _hankel_direct(grid, d, 1024)
    return CubicSpline(grid, vals)


@functools.lru_cache(maxsize=None)
def hat_tail_bound(d: int) -> float:
    """Bound on |psi-hat| beyond the tabulated range, from the last table unit.

    The transform decays like exp(-c sqrt|xi|), so ten times the largest value
    on the final unit interval is a safe cap.
    """
    tail = np.linspace(_HAT_MAX - 1.0, _HAT_MAX, 257)
    return 10.0 * float(np.max(np.abs(_hankel_direct(tail, d, 4096))))


def mollifier_hat(xi, d: int | None = None, exact: bool = False):
    """Fourier transform of the normalized mollifier on R^d.

    ``xi`` is either an array of frequency vectors (last axis = d) or, with
    ``d`` given, of radial frequencies. Real and radial, equal to 1 at 0.
    Tabulated by Gauss-Legendre quadrature of the radial Hankel integral and
    spline-interpolated up to |xi| = 64, beyond which it is set to zero (see
    :func:`hat_tail_bound`); ``exact=True`` evaluates the quadrature directly.
    """
    if d is None:
        xi = np.asarray(xi, dtype=float)
        d = xi.shape[-1]
        rho = np.sqrt(np.sum(xi * xi, axis=-1))
    else:
        rho = np.abs(np.asarray(xi, dtype=float))
    shape = rho.shape
    flat = rho.ravel()
    if exact:
        n = int(max(256, 24 * flat.max(initial=0.0)))
        return _hankel_direct(flat, d, n).reshape(shape)
    out = np.zeros_like(flat)
    inside = flat <= _HAT_MAX
    out[inside] = _hat_table(d)(flat[inside])
    # beyond the table the transform is below hat_tail_bound(d) and is dropped
    return out.reshape(shape)


# ---------------------------------------------------------------------------
# measure types


@dataclass(frozen=True, eq=False)
class WeightedAtoms:
    """Atomic probability measure sum_i a_i delta(x - x_i)."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] != w.size:
            raise ValueError("points and weights differ in length")
        if w.size < 1:
            raise ValueError("need at least one atom")
        if np.any(~(w > 0)):
            raise ValueError("atom weights must be strictly positive")
        if abs(math.fsum(w) - 1.0) > MASS_TOL:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, not 1")
        object.__setattr__(self, "points", wrap(pts))
        object.__setattr__(self, "weights", w)

    @classmethod
    def normalized(cls, points, weights=None) -> "WeightedAtoms":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.ones(len(pts)) if weights is None else np.asarray(weights, dtype=float)
        return cls(pts, w / math.fsum(w))

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.weights.size

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "atoms": [[p.tolist(), float(w)] for p, w in zip(self.points, self.weights)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "WeightedAtoms":
        atoms = obj["atoms"]
        pts = np.array([np.atleast_1d(a[0]) for a in atoms], dtype=float)
        w = np.array([a[1] for a in atoms], dtype=float)
        if pts.shape[1] != int(obj.get("d", pts.shape[1])):
            raise ValueError("atom coordinates do not match d")
        return cls(pts, w)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i + 1}" for i in range(self.d)] + ["weight"])
            for p, w in zip(self.points, self.weights):
                wr.writerow([*map(repr, p.tolist()), repr(float(w))])


@dataclass(frozen=True, eq=False)
class GridDensity:
    """Probability measure given by cell masses on the uniform N^d grid."""

    grid: Grid
    mass: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if m.shape != self.grid.shape:
            if m.size != self.grid.size:
                raise ValueError(f"mass has {m.size} cells, grid has {self.grid.size}")
            m = m.reshape(self.grid.shape)
        if np.any(m < 0):
            raise ValueError("cell masses must be nonnegative")
        if abs(math.fsum(m.ravel()) - 1.0) > MASS_TOL:
            raise ValueError(f"cell masses sum to {math.fsum(m.ravel())!r}, not 1")
        object.__setattr__(self, "mass", m)

    @classmethod
    def from_values(cls, grid: Grid, values) -> "GridDensity":
        """Normalize arbitrary nonnegative cell values to unit total mass."""
        v = np.asarray(values, dtype=float).reshape(grid.shape)
        return cls(grid, v / math.fsum(v.ravel()))

    @property
    def d(self) -> int:
        return self.grid.d

    @property
    def N(self) -> int:
        return self.grid.N

    def density(self) -> np.ndarray:
        """Cell-averaged density (mass times N^d)."""
        return self.mass * self.grid.size

    def to_json(self) -> dict:
        return {"d": self.d, "N": self.N, "mass": self.mass.ravel().tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "GridDensity":
        grid = Grid(int(obj["d"]), int(obj["N"]))
        return cls(grid, np.asarray(obj["mass"], dtype=float))

    def write_csv(self, path) -> None:
        centers = self.grid.centers().reshape(-1, self.d)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i + 1}" for i in range(self.d)] + ["mass"])
            for c, m in zip(centers, self.mass.ravel()):
                wr.writerow([*map(repr, c.tolist()), repr(float(m))])


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Fourier coefficients for all k with |k|_inf <= K.

    ``values`` has shape (2K+1,)*d; entry ``values[k + K]`` is coefficient k.
    """

    K: int
    values: np.ndarray

    @property
    def d(self) -> int:
        return self.values.ndim

    def __getitem__(self, k):
        k = np.atleast_1d(np.asarray(k, dtype=int))
        if np.any(np.abs(k) > self.K):
            raise KeyError(f"{tuple(k)} outside cutoff {self.K}")
        return self.values[tuple(k + self.K)]

    def wavevectors(self) -> np.ndarray:
        ax = np.arange(-self.K, self.K + 1)
        mesh = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(mesh, axis=-1)

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        flipped = self.values[tuple(slice(None, None, -1) for _ in range(self.d))]
        return bool(np.allclose(flipped, np.conj(self.values), rtol=0, atol=atol))


# ---------------------------------------------------------------------------
# conversions


def grid_project(rho: WeightedAtoms, N: int) -> GridDensity:
    """Put each atom's full weight into the half-open cell that contains it."""
    grid = Grid(rho.d, N)
    idx = grid.cell_of(rho.points)
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    mass = np.bincount(flat, weights=rho.weights, minlength=grid.size)
    # bincount sums in arbitrary order; renormalize away the rounding
    return GridDensity(grid, (mass / math.fsum(mass)).reshape(grid.shape))


def density_to_atoms(rho: GridDensity) -> WeightedAtoms:
    """Atoms at cell centers with the cell masses; empty cells are dropped."""
    flat = rho.mass.ravel()
    keep = flat > 0
    pts = rho.grid.centers().reshape(-1, rho.d)[keep]
    w = flat[keep]
    return WeightedAtoms(pts, w / math.fsum(w))


def regrid(rho: GridDensity, N: int) -> GridDensity:
    if rho.N == N:
        return rho
    return grid_project(density_to_atoms(rho), N)


def uniform_density(N: int, d: int = 1) -> GridDensity:
    grid = Grid(d, N)
    return GridDensity(grid, np.full(grid.shape, 1.0 / grid.size))


def uniform_atoms(N: int, d: int = 1) -> WeightedAtoms:
    return density_to_atoms(uniform_density(N, d))


# ---------------------------------------------------------------------------
# test families


def bump_family(eps: float, N: int, d: int = 1, radius: float = 1.0 / 3.0) -> GridDensity:
    """Density 1 - eps |B| + eps chi_B with B = B(0; radius), sampled at centers."""
    vol = ball_volume(d, radius)
    if eps < 0 or 1.0 - eps * vol < 0:
        raise ValueError(f"eps={eps} makes the density negative")
    grid = Grid(d, N)
    inside = grid.center_norms() < radius
    vals = 1.0 - eps * vol + eps * inside
    return GridDensity.from_values(grid, vals)


def discrete_laplacian(f: np.ndarray, h: float) -> np.ndarray:
    """Second-order centered Laplacian with zero extension outside the array."""
    out = np.zeros_like(f)
    for ax in range(f.ndim):
        fp = np.zeros_like(f)
        fm = np.zeros_like(f)
        sl_hi = [slice(None)] * f.ndim
        sl_lo = [slice(None)] * f.ndim
        sl_hi[ax] = slice(1, None)
        sl_lo[ax] = slice(None, -1)
        fp[tuple(sl_lo)] = f[tuple(sl_hi)]
        fm[tuple(sl_hi)] = f[tuple(sl_lo)]
        out += fp - 2.0 * f + fm
    return out / (h * h)


@dataclass
class LaplacianProfile:
    """(-Delta)^M psi sampled on a fine local grid around the origin.

    ``coords`` holds the 1D fine-cell centers (in x units) shared by all axes;
    ``values`` is Psi_{M,eps}(x) = eps^-d Psi_M(x/eps); ``h`` the fine spacing.
    """

    eps: float
    M: int
    d: int
    h: float
    coords: np.ndarray
    values: np.ndarray
    sup: float  # max |Psi_M| in the scaled variable

    def moments(self, max_order: int) -> dict:
        """Discrete moments sum x^alpha Psi_{M,eps}(x) h^d for |alpha| <= max_order."""
        import itertools

        out = {}
        mesh = np.meshgrid(*([self.coords] * self.d), indexing="ij")
        vol = self.h ** self.d
        for order in range(max_order + 1):
            for alpha in itertools.product(range(order + 1), repeat=self.d):
                if sum(alpha) != order:
                    continue
                term = self.values.copy()
                for ax, a in enumerate(alpha):
                    if a:
                        term = term * mesh[ax] ** a
                out[alpha] = math.fsum(term.ravel()) * vol
        return out


def laplacian_profile(eps: float, M: int, d: int, h: float, pad_cells: int = 0) -> LaplacianProfile:
    """Fine-grid sample of Psi_{M,eps} via M applications of the discrete Laplacian.

    Fine cells are ``[i h, (i+1) h)``; the grid covers the ball B(0; eps)
    plus ``M + 2 + pad_cells`` empty cells on each side.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    half = int(math.ceil(eps / h)) + M + 2 + pad_cells
    coords = (np.arange(-half, half) + 0.5) * h
    mesh = np.meshgrid(*([coords / eps] * d), indexing="ij")
    r = np.sqrt(sum(m * m for m in mesh))
    f = mollifier(r, d=d)
    hy = h / eps
    for _ in range(M):
        f = -discrete_laplacian(f, hy)
    sup = float(np.max(np.abs(f)))
    return LaplacianProfile(eps, M, d, h, coords, f / eps ** d, sup)


def laplacian_family(eps: float, M: int, N: int, d: int = 1, c0="sup",
                     oversample: int = 8, return_profile: bool = False):
    """Density 1 + c0 eps^d Psi_{M,eps}, Psi_M = (-Delta)^M psi, on the N^d grid.

    ``c0="sup"`` uses 1/max|Psi_M| so that |rho - 1| <= 1. Psi is built on an
    auxiliary grid ``oversample`` times finer than the target and block-averaged
    onto the target cells.
    """
    if not 0 < eps < 0.25:
        raise ValueError("eps must lie in (0, 1/4)")
    if M < 1:
        raise ValueError("M must be >= 1")
    if eps * N < 8:
        raise ValueError(f"under-resolved: eps*N = {eps * N:.3g} < 8 cells; use N >= {math.ceil(8 / eps)}")
    grid = Grid(d, N)
    hf = 1.0 / (N * oversample)
    half_coarse = int(math.ceil(eps * N)) + int(math.ceil((M + 2) / oversample)) + 1
    prof = laplacian_profile(eps, M, d, hf, pad_cells=half_coarse * oversample - int(math.ceil(eps / hf)) - M - 2)
    if len(prof.coords) != 2 * half_coarse * oversample:
        raise RuntimeError("fine grid misaligned with target cells")
    scale = (1.0 / prof.sup) if c0 == "sup" else float(c0)
    # rho - 1 = c0 eps^d Psi_{M,eps} = c0 Psi_M(x/eps)
    dev = scale * prof.values * eps ** d
    # block-average fine cells onto coarse cells
    shp = []
    for _ in range(d):
        shp += [2 * half_coarse, oversample]
    blocks = dev.reshape(shp).mean(axis=tuple(range(1, 2 * d, 2)))
    vals = np.ones(grid.shape)
    idx = np.mod(np.arange(-half_coarse, half_coarse), N)
    vals[np.ix_(*([idx] * d))] += blocks
    neg = -np.minimum(vals, 0.0)
    clip = float(neg.max(initial=0.0))
    if clip > CLIP_TOL:
        raise ValueError(f"construction negative by {clip:.3g}")
    if clip > 0:
        log.info("laplacian_family: clipped %.3g", clip)
        vals = np.maximum(vals, 0.0)
    rho = GridDensity.from_values(grid, vals)
    if return_profile:
        return rho, prof
    return rho


# ---------------------------------------------------------------------------
# Fourier side


def fourier_coeffs(rho, K: int) -> SpectralCoeffs:
    """Coefficients sum_cells w_j exp(-2 pi i k . c_j) for |k|_inf <= K.

    For a GridDensity the weights are the cell masses; for any object with
    ``grid`` and ``values`` (a field) they are values / N^d, i.e. the
    midpoint-rule coefficient of the sampled function.
    """
    grid = rho.grid
    if K >= grid.N / 2:
        raise ValueError(f"cutoff K={K} must be < N/2 = {grid.N / 2}")
    if isinstance(rho, GridDensity):
        w = rho.mass
    else:
        w = np.asarray(rho.values, dtype=float) / grid.size
    F = np.fft.fftn(w)
    ks = np.arange(-K, K + 1)
    sub = F[np.ix_(*([np.mod(ks, grid.N)] * grid.d))]
    mesh = np.meshgrid(*([ks] * grid.d), indexing="ij")
    phase = np.exp(-1j * np.pi * sum(mesh) / grid.N)
    return SpectralCoeffs(K, sub * phase)


def fft_wavenumbers(grid: Grid):
    """Integer wavevector components in numpy FFT order, one array per axis."""
    k1 = np.fft.fftfreq(grid.N, d=1.0 / grid.N)
    return np.meshgrid(*([k1] * grid.d), indexing="ij", sparse=True)
