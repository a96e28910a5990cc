"""Parameter sweeps: sharpness scaling, mollified-kernel norms, energy stability."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dinfty import ball_witness_scan, dinfty_to_uniform, discrepancy_1d
from .energy import energy_spectral
from .measures import GridDensity, bump_family, laplacian_family
from .riesz import conjugate_exponent, lp_norm, potential_field, u_eps_field
from .torus import Grid

log = logging.getLogger(__name__)

DEFAULT_EPS = tuple(2.0 ** -np.arange(4, 8))


def fit_slope(x, y) -> float:
    """Least-squares slope of log y against log x (nan for fewer than 2 points)."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if len(x) < 2:
        return math.nan
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def dinfty_lower_bound(rho: GridDensity, eps: float) -> tuple[float, str]:
    """Lower bound on d-infinity(rho, uniform) for a family localized at scale eps.

    In d = 1 this is half the discrepancy, which equals the distance exactly for
    cellwise-constant densities; otherwise the best ball/complement witness.
    """
    if rho.d == 1:
        return 0.5 * discrepancy_1d(rho), "discrepancy"
    r, R, which = ball_witness_scan(rho, eps)
    return r, f"{which} R={R}"


@dataclass
class ScalingRow:
    eps: float
    N: int
    norm: float
    dinfty_lo: float
    witness: str


@dataclass
class ScalingResult:
    d: int
    p: float
    s: float
    M: int
    rows: list = field(default_factory=list)

    @property
    def target(self) -> float:
        return self.d + (0.0 if self.p == math.inf else self.d / self.p) - self.s

    @property
    def norm_slope(self) -> float:
        return fit_slope([r.eps for r in self.rows], [r.norm for r in self.rows])

    @property
    def dinfty_slope(self) -> float:
        return fit_slope([r.eps for r in self.rows], [r.dinfty_lo for r in self.rows])

    def table(self) -> list[dict]:
        return [vars(r) for r in self.rows]


def scaling_experiment(d: int, p: float, s: float, eps_list=DEFAULT_EPS, M: int = 2,
                       cells_per_eps: int = 16, with_dinfty: bool = True, cache=None) -> ScalingResult:
    """Norms of W_s * rho for the Laplacian family on self-similar grids N = cells_per_eps / eps."""
    out = ScalingResult(d, p, s, M)
    for eps in eps_list:
        N = int(round(cells_per_eps / eps))
        key = (d, eps, M, N)
        if cache is not None and key in cache:
            rho, lo, how = cache[key]
        else:
            rho = laplacian_family(eps, M, N, d)
            lo, how = dinfty_lower_bound(rho, eps) if with_dinfty else (math.nan, "")
            if cache is not None:
                cache[key] = (rho, lo, how)
        norm = lp_norm(potential_field(s, rho), p)
        out.rows.append(ScalingRow(float(eps), N, norm, lo, how))
        log.info("scaling d=%d p=%s s=%s eps=%g N=%d norm=%.6g dinf>=%.6g", d, p, s, eps, N, norm, lo)
    return out


@dataclass
class UepsResult:
    d: int
    beta: float
    p: float
    eps: list
    norms: list

    @property
    def q(self) -> float:
        return conjugate_exponent(self.p)

    @property
    def target(self) -> float:
        return -self.beta - (0.0 if self.p == math.inf else self.d / self.p)

    @property
    def slope(self) -> float:
        return fit_slope(self.eps, self.norms)

    def log_ratios(self) -> np.ndarray:
        """norm / (1 + |log eps|)^(1/q), the model for the critical 1D case."""
        e = np.asarray(self.eps)
        return np.asarray(self.norms) / (1 + np.abs(np.log(e))) ** (1 / self.q)


def u_eps_sweep(d: int, beta: float, p: float, eps_list=DEFAULT_EPS, N: int | None = None) -> UepsResult:
    """L^q norms (q conjugate to p) of u_eps over an eps sweep on a fixed grid."""
    if N is None:
        N = 8192 if d == 1 else 2048
    q = conjugate_exponent(p)
    norms = [u_eps_field(beta, e, q, N, d)[1] for e in eps_list]
    return UepsResult(d, beta, p, [float(e) for e in eps_list], norms)


# ---------------------------------------------------------------------------
# energy stability


def cosine_family(a: float, N: int, d: int = 1) -> GridDensity:
    """Cell averages of 1 + a cos(2 pi x_1), |a| <= 1."""
    if abs(a) > 1:
        raise ValueError("|a| must be <= 1")
    grid = Grid(d, N)
    lo = np.arange(N) / N
    # exact cell average of cos(2 pi x) over [j/N, (j+1)/N)
    avg = (np.sin(2 * np.pi * (lo + 1 / N)) - np.sin(2 * np.pi * lo)) * N / (2 * np.pi)
    shape = [1] * d
    shape[0] = N
    vals = 1.0 + a * avg.reshape(shape) * np.ones(grid.shape)
    return GridDensity.from_values(grid, vals)


@dataclass
class StabilityRow:
    param: float
    energy: float
    lo: float
    hi: float
    ratio: float  # hi / E^gamma


@dataclass
class StabilityResult:
    family: str
    d: int
    s: float
    gamma: float
    rows: list = field(default_factory=list)

    @property
    def constant(self) -> float:
        """Smallest A with d-infinity upper enclosure <= A E^gamma across the sweep."""
        vals = [r.ratio for r in self.rows if np.isfinite(r.ratio)]
        return max(vals) if vals else math.nan

    def slope(self) -> float:
        rows = [r for r in self.rows if r.energy > 0 and r.lo > 0]
        return fit_slope([r.energy for r in rows], [0.5 * (r.lo + r.hi) for r in rows])


def stability_experiment(family: str, sweep, d: int = 1, s: float = 0.0, N: int = 128,
                         N_dinf: int | None = None, M: int = 2) -> StabilityResult:
    """Energy versus d-infinity enclosure across a family of densities.

    Families: ``cos`` (amplitude sweep), ``bump`` and ``laplacian`` (eps sweep).
    """
    gamma = 1.0 / (2 * d - s)
    out = StabilityResult(family, d, s, gamma)
    for param in sweep:
        if family == "cos":
            rho = cosine_family(param, N, d)
        elif family == "bump":
            rho = bump_family(param, N, d)
        elif family == "laplacian":
            rho = laplacian_family(param, M, N, d)
        else:
            raise ValueError(f"unknown family {family!r}")
        E = energy_spectral(rho, s)
        enc = dinfty_to_uniform(rho, N_dinf)
        ratio = enc.hi / E ** gamma if E > 0 else math.inf
        out.rows.append(StabilityRow(float(param), E, enc.lo, enc.hi, ratio))
    return out
