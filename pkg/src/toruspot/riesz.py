"""Periodized Riesz potentials on T^d.

W_s is the zero-mean kernel with Fourier coefficients |k|^(s-d) for k != 0.
Pointwise values come from an Ewald split of the heat-kernel representation
at splitting parameter ``lam``:

    c W_s(x) + C0 = sum_j  int_lam^inf  exp(-|x-j|^2 t) t^(s/2-1) dt
                  + sum_{k!=0} cos(2 pi k.x) pi^(d/2) (pi^2|k|^2)^(-(d-s)/2)
                                Gamma((d-s)/2, pi^2 |k|^2 / lam)

with c = pi^(s-d/2) Gamma((d-s)/2) and C0 = 2 pi^(d/2) lam^((s-d)/2) / (d-s).
Both t-integrals are upper incomplete gamma functions and are evaluated in
closed form.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .measures import GridDensity, fft_wavenumbers, mollifier_hat
from .torus import Grid, wrap

SINGULAR_TOL = 1e-12
NEAR_INTEGER = 1e-4


# ---------------------------------------------------------------------------
# incomplete gamma for any real order


def upper_gamma(alpha: float, z):
    """Upper incomplete gamma Gamma(alpha, z) for real alpha and z > 0."""
    z = np.asarray(z, dtype=float)
    if alpha > 0:
        return special.gamma(alpha) * special.gammaincc(alpha, z)
    if 0 < abs(alpha - round(alpha)) < NEAR_INTEGER:
        # the recurrence below would divide by an order close to 0
        return _upper_gamma_quad(alpha, z)
    # step up to an order in (0, 1] or exactly 0, then recur back down:
    # Gamma(a, z) = (Gamma(a+1, z) - z^a e^-z) / a
    n = int(math.ceil(-alpha)) if alpha != math.floor(alpha) else int(-alpha)
    base = alpha + n
    if base == 0:
        g = special.exp1(z)
    else:
        g = special.gamma(base) * special.gammaincc(base, z)
    a = base
    ez = np.exp(-z)
    for _ in range(n):
        a -= 1.0
        g = (g - z ** a * ez) / a
    return g


def _upper_gamma_quad(alpha: float, z):
    """z^alpha int_1^inf exp(-z t) t^(alpha-1) dt by adaptive quadrature."""

    def one(zz):
        val, _ = integrate.quad(lambda t: math.exp(-zz * (t - 1.0)) * t ** (alpha - 1.0), 1.0, math.inf,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        return zz ** alpha * math.exp(-zz) * val

    return np.vectorize(one, otypes=[float])(z)


def upper_tail(alpha: float, a, lam: float):
    """int_lam^inf exp(-a t) t^(alpha-1) dt for a >= 0 (a = 0 needs alpha < 0)."""
    a = np.asarray(a, dtype=float)
    out = np.empty_like(a)
    zero = a == 0
    if np.any(zero):
        if alpha >= 0:
            raise ValueError("singular point")
        out[zero] = lam ** alpha / (-alpha)
    pos = ~zero
    if np.any(pos):
        ap = a[pos]
        out[pos] = ap ** (-alpha) * upper_gamma(alpha, lam * ap)
    return out


# ---------------------------------------------------------------------------
# kernel parameters


@dataclass(frozen=True)
class EwaldConstants:
    c: float
    C0: float


@dataclass(frozen=True)
class RieszSpec:
    """Kernel W_s on T^d with Ewald truncation parameters.

    ``J`` and ``K`` are minimum box sizes for the lattice and Fourier sums;
    both are enlarged automatically until the tail bounds drop below ``tau``.
    """

    d: int
    s: float
    J: int = 4
    K: int = 8
    tau: float = 1e-12
    lam: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not self.s < self.d:
            raise ValueError("need s < d")
        if self.J < 1:
            raise ValueError("J must be >= 1")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0 < self.tau <= 1e-8:
            raise ValueError("tau must lie in (0, 1e-8]")
        if self.lam <= 0:
            raise ValueError("lam must be positive")

    @property
    def constants(self) -> EwaldConstants:
        return ewald_constants(self.d, self.s, self.lam)

    @property
    def singular(self) -> bool:
        return self.s >= 0

    def lattice_radius(self) -> int:
        """Box size J for the real-space sum: images outside sit at distance >= J + 1/2."""
        J = self.J
        while math.exp(-self.lam * (J + 0.5) ** 2) * (2 * J + 3) ** self.d > 1e-2 * self.tau:
            J += 1
        return J

    def fourier_radius(self) -> int:
        """Box size K for the Fourier sum, from the Gaussian decay of its terms."""
        K = self.K
        while math.exp(-math.pi ** 2 * (K + 1) ** 2 / self.lam) * (2 * K + 3) ** self.d > 1e-2 * self.tau:
            K += 1
        return K


@functools.lru_cache(maxsize=None)
def ewald_constants(d: int, s: float, lam: float = 1.0) -> EwaldConstants:
    c = math.pi ** (s - d / 2) * math.gamma((d - s) / 2)
    C0 = 2.0 * math.pi ** (d / 2) * lam ** ((s - d) / 2) / (d - s)
    return EwaldConstants(c, C0)


def singular_coefficient(d: int, s: float) -> float:
    """c_s with W_s(x) - c_s |x|^-s smooth near 0 (0 < s < d)."""
    if not 0 < s < d:
        raise ValueError("defined for 0 < s < d")
    return math.gamma(s / 2) / ewald_constants(d, s).c


@functools.lru_cache(maxsize=64)
def _lattice(d: int, J: int) -> np.ndarray:
    rng = range(-J, J + 1)
    return np.array(list(itertools.product(rng, repeat=d)), dtype=float)


@functools.lru_cache(maxsize=64)
def _fourier_modes(d: int, s: float, lam: float, K: int):
    """Half of the nonzero modes (one per +-k pair) and their Ewald weights."""
    ks = np.array(list(itertools.product(range(-K, K + 1), repeat=d)), dtype=float)
    # keep k > 0 in lexicographic order
    first = np.zeros(len(ks), dtype=bool)
    undecided = np.ones(len(ks), dtype=bool)
    for ax in range(d):
        first |= undecided & (ks[:, ax] > 0)
        undecided &= ks[:, ax] == 0
    ks = ks[first]
    k2 = np.sum(ks * ks, axis=1)
    sigma = (d - s) / 2
    z = math.pi ** 2 * k2
    w = math.pi ** (d / 2) * z ** (-sigma) * upper_gamma(sigma, z / lam)
    keep = w > 0
    # factor 2 from the pair +-k
    return ks[keep], 2.0 * w[keep]


def _prepare(spec: RieszSpec, x):
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0 or (x.ndim == 1 and spec.d > 1)
    if spec.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != spec.d:
        raise ValueError(f"expected points in dimension {spec.d}")
    pts = wrap(x.reshape(-1, spec.d))
    if spec.singular:
        r = np.sqrt(np.sum(pts * pts, axis=1))
        if np.any(r < SINGULAR_TOL):
            raise ValueError("singular point")
    return pts, x.shape[:-1], scalar


def _real_space(spec: RieszSpec, pts: np.ndarray, grad: bool):
    J = spec.lattice_radius()
    alpha = spec.s / 2
    out = np.zeros((len(pts), spec.d)) if grad else np.zeros(len(pts))
    for j in _lattice(spec.d, J):
        diff = pts - j
        a = np.sum(diff * diff, axis=1)
        if grad:
            out += -2.0 * diff * upper_tail(alpha + 1, a, spec.lam)[:, None]
        else:
            out += upper_tail(alpha, a, spec.lam)
    return out


def _fourier_space(spec: RieszSpec, pts: np.ndarray, grad: bool):
    ks, w = _fourier_modes(spec.d, float(spec.s), float(spec.lam), spec.fourier_radius())
    out = np.zeros((len(pts), spec.d)) if grad else np.zeros(len(pts))
    for lo in range(0, len(pts), 4096):
        phase = 2.0 * np.pi * pts[lo:lo + 4096] @ ks.T
        if grad:
            out[lo:lo + 4096] = -(np.sin(phase) * w) @ (2.0 * np.pi * ks)
        else:
            out[lo:lo + 4096] = np.cos(phase) @ w
    return out


def eval_Ws(spec: RieszSpec, x):
    """W_s at torus points ``x`` (last axis = d; plain floats allowed for d = 1)."""
    pts, shape, scalar = _prepare(spec, x)
    const = spec.constants
    val = (_real_space(spec, pts, False) + _fourier_space(spec, pts, False) - const.C0) / const.c
    return float(val[0]) if scalar else val.reshape(shape)


def grad_Ws(spec: RieszSpec, x):
    """Gradient of W_s, differentiated term by term through the Ewald split."""
    pts, shape, scalar = _prepare(spec, x)
    c = spec.constants.c
    g = (_real_space(spec, pts, True) + _fourier_space(spec, pts, True)) / c
    return g[0] if scalar else g.reshape(shape + (spec.d,))


def eval_Wlog(x):
    """-log|2 sin(pi x)|; note W_s with d = 1, s = 0 equals twice this."""
    x = np.asarray(x, dtype=float)
    sn = np.abs(2.0 * np.sin(np.pi * x))
    if np.any(sn < SINGULAR_TOL):
        raise ValueError("singular point")
    out = -np.log(sn)
    return float(out) if out.ndim == 0 else out


def grad_Wlog(x):
    x = np.asarray(x, dtype=float)
    return -np.pi / np.tan(np.pi * x)


# ---------------------------------------------------------------------------
# grid fields


@dataclass(frozen=True, eq=False)
class PotentialField:
    grid: Grid
    values: np.ndarray

    @property
    def d(self) -> int:
        return self.grid.d

    def mean(self) -> float:
        return float(np.mean(self.values))

    def to_json(self) -> dict:
        return {"d": self.grid.d, "N": self.grid.N, "values": self.values.ravel().tolist()}

    def write_csv(self, path) -> None:
        import csv

        centers = self.grid.centers().reshape(-1, self.d)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow([f"x{i + 1}" for i in range(self.d)] + ["value"])
            for c, v in zip(centers, self.values.ravel()):
                wr.writerow([*map(repr, c.tolist()), repr(float(v))])


def _mode_norms(grid: Grid):
    ks = fft_wavenumbers(grid)
    k2 = sum(k * k for k in ks)
    kinf = functools.reduce(np.maximum, [np.abs(k) for k in ks])
    return np.sqrt(k2), kinf, sum(ks)


def synthesize(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    """Grid values at cell centers from coefficients in FFT order."""
    _, _, ksum = _mode_norms(grid)
    phase = np.exp(1j * np.pi * ksum / grid.N)
    vals = np.fft.ifftn(coeffs * phase) * grid.size
    return vals.real


def density_spectrum(rho: GridDensity) -> np.ndarray:
    """rho-hat(k) for all FFT-order modes, phased to cell centers."""
    _, _, ksum = _mode_norms(rho.grid)
    return np.fft.fftn(rho.mass) * np.exp(-1j * np.pi * ksum / rho.N)


def potential_field(spec: RieszSpec | float, rho: GridDensity, K: int | None = None) -> PotentialField:
    """W_s * rho on the grid, with modes 0 < |k|_inf <= K.

    ``spec`` may be a RieszSpec or just the exponent s.
    """
    s = spec.s if isinstance(spec, RieszSpec) else float(spec)
    d = rho.d
    if not s < d:
        raise ValueError("need s < d")
    grid = rho.grid
    if K is None:
        K = (grid.N - 1) // 2
    if K >= grid.N / 2:
        raise ValueError(f"cutoff K={K} must be < N/2 = {grid.N / 2}")
    knorm, kinf, _ = _mode_norms(grid)
    keep = (kinf > 0) & (kinf <= K)
    mult = np.zeros(grid.shape)
    mult[keep] = knorm[keep] ** (s - d)
    return PotentialField(grid, synthesize(grid, mult * density_spectrum(rho)))


def lp_norm(V, p: float) -> float:
    """(mean |V|^p)^(1/p) over the grid cells; the max for p = inf."""
    vals = np.abs(V.values if hasattr(V, "values") else np.asarray(V, dtype=float))
    if p == math.inf:
        return float(vals.max(initial=0.0))
    if p < 1:
        raise ValueError("need p >= 1")
    return float(np.mean(vals ** p) ** (1.0 / p))


def conjugate_exponent(p: float) -> float:
    if p == 1:
        return math.inf
    if p == math.inf:
        return 1.0
    return p / (p - 1.0)


def u_eps_field(beta: float, eps: float, q: float, N: int, d: int = 1):
    """Grid synthesis of u_eps with coefficients psi-hat(eps k)|k|^beta, k != 0.

    Returns ``(field, norm)`` with the L^q norm of the field.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if beta < 0 and not (d == 1 and beta > -1):
        raise ValueError("negative beta is only allowed for d = 1 with beta > -1")
    grid = Grid(d, N)
    knorm, kinf, _ = _mode_norms(grid)
    keep = (kinf > 0) & (kinf < N / 2)
    coeff = np.zeros(grid.shape)
    kk = knorm[keep]
    coeff[keep] = mollifier_hat(eps * kk, d=d) * kk ** beta
    field = PotentialField(grid, synthesize(grid, coeff.astype(complex)))
    return field, lp_norm(field, q)
