"""Interaction energies, perturbed kernels and the particle gradient flow."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .measures import GridDensity, mollifier, mollifier_hat, mollifier_max
from .riesz import RieszSpec, density_spectrum, eval_Ws, grad_Ws, upper_gamma, upper_tail
from .torus import pairwise_torus_dist, torus_diff, wrap

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# energies


def riesz_multiplier(d: int, s: float):
    """k -> |k|^(s-d) as a function of |k| (used as W-hat)."""
    return lambda knorm: knorm ** (s - d)


def energy_spectral(rho: GridDensity, W_hat, K: int | None = None) -> float:
    """1/2 sum over 0 < |k|_inf <= K of W-hat(k) |rho-hat(k)|^2.

    ``W_hat`` maps an array of wavevectors (last axis = d) to coefficients;
    a plain number is read as the Riesz exponent s.
    """
    grid = rho.grid
    if K is None:
        K = (grid.N - 1) // 2
    if K >= grid.N / 2:
        raise ValueError(f"cutoff K={K} must be < N/2 = {grid.N / 2}")
    k1 = np.fft.fftfreq(grid.N, d=1.0 / grid.N)
    mesh = np.meshgrid(*([k1] * grid.d), indexing="ij")
    kvec = np.stack(mesh, axis=-1)
    kinf = np.max(np.abs(kvec), axis=-1)
    keep = (kinf > 0) & (kinf <= K)
    if isinstance(W_hat, (int, float)):
        s = float(W_hat)
        coef = np.sqrt(np.sum(kvec[keep] ** 2, axis=-1)) ** (s - grid.d)
    else:
        coef = np.asarray(W_hat(kvec[keep]), dtype=float)
    power = np.abs(density_spectrum(rho)[keep]) ** 2
    return 0.5 * math.fsum(coef * power)


def energy_discrete(positions, W) -> float:
    """1/(2N^2) sum_{i != j} W(x_i - x_j) for an evaluator W on difference vectors."""
    X = _positions(positions)
    n = len(X)
    iu, ju = np.triu_indices(n, k=1)
    diffs = torus_diff(X[iu], X[ju])
    if hasattr(W, "pair_values"):
        vals = W.pair_values(diffs)
    else:
        vals = np.asarray(W(diffs), dtype=float)
    # each unordered pair appears twice in the double sum
    return math.fsum(vals) / n ** 2


def _positions(state) -> np.ndarray:
    X = state.positions if isinstance(state, ParticleState) else state
    X = np.asarray(X, dtype=float)
    return X[:, None] if X.ndim == 1 else X


# ---------------------------------------------------------------------------
# perturbed kernel


@dataclass(frozen=True)
class PerturbedPotential:
    """W-tilde(x) = W_s(x) - c0 eps^-s psi(x / eps)."""

    base: RieszSpec
    eps: float
    c0: float

    def __post_init__(self):
        if not 0 < self.eps < 0.5:
            raise ValueError("eps must lie in (0, 1/2)")
        if self.c0 <= 0:
            raise ValueError("c0 must be positive")

    @property
    def amplitude(self) -> float:
        return self.c0 * self.eps ** (-self.base.s)

    def perturbation(self, x):
        x = wrap(np.asarray(x, dtype=float))
        if self.base.d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            x = x[..., None]
        return self.amplitude * mollifier(x / self.eps)

    def __call__(self, x):
        return eval_Ws(self.base, x) - self.perturbation(x)

    def sup_gap(self) -> float:
        """||W - W-tilde||_inf, attained at the origin."""
        return self.amplitude * mollifier_max(self.base.d)


def perturbed_coeffs(pp: PerturbedPotential, k):
    """|k|^(s-d) - c0 eps^(d-s) psi-hat(eps k) for nonzero wavevectors k."""
    k = np.asarray(k, dtype=float)
    d, s = pp.base.d, pp.base.s
    if d == 1 and (k.ndim == 0 or k.shape[-1] != 1):
        k = k[..., None]
    knorm = np.sqrt(np.sum(k * k, axis=-1))
    if np.any(knorm == 0):
        raise ValueError("k = 0 excluded")
    out = knorm ** (s - d) - pp.c0 * pp.eps ** (d - s) * mollifier_hat(pp.eps * knorm, d=d)
    return float(out) if out.ndim == 0 else out


def half_level_radius(d: int) -> float:
    """Largest R with psi-hat >= 1/2 on the ball B(0; R)."""
    from scipy.optimize import brentq

    return brentq(lambda r: float(mollifier_hat(np.array([r]), d=d)[0]) - 0.5, 1e-6, 2.0, xtol=1e-14)


@dataclass
class NegativityScan:
    kmax: int
    negative: np.ndarray   # wavevectors with negative coefficient
    values: np.ndarray
    band: tuple            # (|k| lower, |k| upper) where negativity is guaranteed
    c0_threshold: float

    @property
    def found(self) -> bool:
        return len(self.negative) > 0

    @property
    def min_value(self) -> float:
        return float(self.values.min()) if len(self.values) else math.nan


def negativity_scan(pp: PerturbedPotential, kmax: int | None = None) -> NegativityScan:
    """All k with 0 < |k|_inf <= kmax where the perturbed coefficient is negative."""
    d, s = pp.base.d, pp.base.s
    R = half_level_radius(d)
    if kmax is None:
        kmax = int(math.ceil(2 * R / pp.eps)) + 1
    ax = np.arange(-kmax, kmax + 1)
    mesh = np.meshgrid(*([ax] * d), indexing="ij")
    ks = np.stack(mesh, axis=-1).reshape(-1, d)
    ks = ks[np.any(ks != 0, axis=1)]
    vals = perturbed_coeffs(pp, ks)
    vals = np.atleast_1d(vals)
    neg = vals < 0
    band = (R / (2 * pp.eps), R / pp.eps)
    return NegativityScan(kmax, ks[neg], vals[neg], band, 2.0 * (R / 2) ** (s - d))


# ---------------------------------------------------------------------------
# pair interactions for particle systems


class EwaldInteraction:
    """Fast W_s on difference vectors for all-pairs particle computations.

    The Ewald split parameter is chosen large enough that only the minimum
    image contributes to the real-space sum; the Fourier sum is evaluated via
    structure factors, O(N K^d) per force evaluation.
    """

    def __init__(self, d: int, s: float, tau: float = 1e-10, eps: float | None = None, c0: float = 0.0):
        self.d, self.s = d, s
        self.lam = 4.0 * math.log(1.0 / tau)
        self.spec = RieszSpec(d, s, J=1, K=1, tau=min(tau, 1e-8), lam=self.lam)
        K = self.spec.fourier_radius()
        ax = np.arange(-K, K + 1)
        ks = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d).astype(float)
        first = np.zeros(len(ks), dtype=bool)
        undecided = np.ones(len(ks), dtype=bool)
        for i in range(d):
            first |= undecided & (ks[:, i] > 0)
            undecided &= ks[:, i] == 0
        ks = ks[first]
        z = math.pi ** 2 * np.sum(ks * ks, axis=1)
        sigma = (d - s) / 2
        w = 2.0 * math.pi ** (d / 2) * z ** (-sigma) * upper_gamma(sigma, z / self.lam)
        keep = w > 1e-3 * tau * w.max()
        self.ks, self.w = ks[keep], w[keep]
        const = self.spec.constants
        self.c, self.C0 = const.c, const.C0
        self.eps, self.c0 = eps, c0
        self.amp = 0.0 if eps is None else c0 * eps ** (-s)

    @classmethod
    def for_potential(cls, pp: PerturbedPotential, tau: float = 1e-10):
        return cls(pp.base.d, pp.base.s, tau=tau, eps=pp.eps, c0=pp.c0)

    def _check(self, a):
        if self.s >= 0 and np.any(a < 1e-24):
            raise ValueError("particle collision at a singular kernel")

    def pair_values(self, diffs: np.ndarray) -> np.ndarray:
        diffs = wrap(np.asarray(diffs, dtype=float).reshape(-1, self.d))
        a = np.sum(diffs * diffs, axis=1)
        self._check(a)
        real = upper_tail(self.s / 2, a, self.lam)
        four = np.cos(2 * np.pi * diffs @ self.ks.T) @ self.w
        out = (real + four - self.C0) / self.c
        if self.amp:
            out -= self.amp * mollifier(diffs / self.eps)
        return out

    def pair_grads(self, diffs: np.ndarray) -> np.ndarray:
        diffs = wrap(np.asarray(diffs, dtype=float).reshape(-1, self.d))
        a = np.sum(diffs * diffs, axis=1)
        self._check(a)
        real = -2.0 * diffs * upper_tail(self.s / 2 + 1, a, self.lam)[:, None]
        four = -(np.sin(2 * np.pi * diffs @ self.ks.T) * self.w) @ (2 * np.pi * self.ks)
        g = (real + four) / self.c
        if self.amp:
            g -= self.amp * _mollifier_grad(diffs, self.eps)
        return g

    def __call__(self, diffs):
        return self.pair_values(diffs)

    def velocities(self, X: np.ndarray) -> np.ndarray:
        """-1/N sum_{j != i} grad W(x_i - x_j) for every particle."""
        n = len(X)
        iu, ju = np.triu_indices(n, k=1)
        diffs = wrap(X[iu] - X[ju])
        a = np.sum(diffs * diffs, axis=1)
        self._check(a)
        # short-range pieces per pair, reused with opposite sign for (j, i)
        g = -2.0 * diffs * upper_tail(self.s / 2 + 1, a, self.lam)[:, None] / self.c
        if self.amp:
            near = a < self.eps ** 2
            if np.any(near):
                g[near] -= self.amp * _mollifier_grad(diffs[near], self.eps)
        F = np.zeros_like(X)
        for ax in range(self.d):
            F[:, ax] = np.bincount(iu, weights=g[:, ax], minlength=n) - np.bincount(ju, weights=g[:, ax], minlength=n)
        # long-range piece through structure factors
        th = 2 * np.pi * X @ self.ks.T
        cs, sn = np.cos(th), np.sin(th)
        C, S = cs.sum(axis=0), sn.sum(axis=0)
        # sum_j sin(k.(x_i - x_j)) = sin_i C - cos_i S
        F += -((sn * C - cs * S) * self.w) @ (2 * np.pi * self.ks) / self.c
        return -F / n

    def energy(self, X: np.ndarray) -> float:
        """1/(2N^2) sum_{i != j} W(x_i - x_j), Fourier part via |S(k)|^2 - N."""
        n = len(X)
        iu, ju = np.triu_indices(n, k=1)
        diffs = wrap(X[iu] - X[ju])
        a = np.sum(diffs * diffs, axis=1)
        self._check(a)
        pair = math.fsum(upper_tail(self.s / 2, a, self.lam)) / self.c
        if self.amp:
            near = a < self.eps ** 2
            pair -= self.amp * math.fsum(mollifier(diffs[near] / self.eps))
        th = 2 * np.pi * X @ self.ks.T
        S2 = np.cos(th).sum(axis=0) ** 2 + np.sin(th).sum(axis=0) ** 2
        # ordered pairs i != j: half of (|S|^2 - n) per +-k mode pair, weights carry the 2
        four = 0.5 * float((S2 - n) @ self.w) / self.c
        const = 0.5 * n * (n - 1) * self.C0 / self.c
        return (pair + four - const) / n ** 2


def _mollifier_grad(x: np.ndarray, eps: float) -> np.ndarray:
    """Gradient of x -> psi(x / eps)."""
    y = x / eps
    r2 = np.sum(y * y, axis=1)
    out = np.zeros_like(x)
    inside = r2 < 1.0
    ri = r2[inside]
    psi = mollifier(y[inside])
    out[inside] = (-2.0 * psi / (1.0 - ri) ** 2)[:, None] * y[inside] / eps
    return out


class DirectInteraction:
    """Same interface backed by the general pointwise evaluators (slow, reference)."""

    def __init__(self, spec: RieszSpec, pp: PerturbedPotential | None = None):
        self.spec, self.pp, self.d = spec, pp, spec.d

    def pair_values(self, diffs):
        if self.pp is not None:
            return np.atleast_1d(self.pp(diffs))
        return np.atleast_1d(eval_Ws(self.spec, diffs))

    def pair_grads(self, diffs):
        diffs = np.asarray(diffs, dtype=float).reshape(-1, self.d)
        g = grad_Ws(self.spec, diffs)
        if self.pp is not None:
            g = g - self.pp.amplitude * _mollifier_grad(wrap(diffs), self.pp.eps)
        return g

    def __call__(self, diffs):
        return self.pair_values(diffs)

    def velocities(self, X):
        n = len(X)
        iu, ju = np.triu_indices(n, k=1)
        g = self.pair_grads(wrap(X[iu] - X[ju]))
        F = np.zeros_like(X)
        for ax in range(self.d):
            F[:, ax] = np.bincount(iu, weights=g[:, ax], minlength=n) - np.bincount(ju, weights=g[:, ax], minlength=n)
        return -F / n


# ---------------------------------------------------------------------------
# flow


@dataclass(frozen=True, eq=False)
class ParticleState:
    positions: np.ndarray
    t: float = 0.0
    step: int = 0

    def __post_init__(self):
        X = np.asarray(self.positions, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if len(X) < 2:
            raise ValueError("need at least two particles")
        object.__setattr__(self, "positions", wrap(X))

    @property
    def n(self) -> int:
        return len(self.positions)

    @property
    def d(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class FlowConfig:
    h: float = 5e-3
    T: float = 10.0
    integrator: str = "rk4"
    seed: int | None = None
    potential: str = "pure"   # "pure" or "perturbed"
    d: int = 2
    s: float = -1.0
    eps: float = 0.1
    c0: float = 50.0
    n: int = 256
    record_every: int = 50
    energy_tol: float = 1e-8

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.T < self.h:
            raise ValueError("need T >= h")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError("integrator must be 'euler' or 'rk4'")
        if self.potential not in ("pure", "perturbed"):
            raise ValueError("potential must be 'pure' or 'perturbed'")
        if self.n < 2:
            raise ValueError("need at least two particles")

    def interaction(self):
        if self.potential == "pure":
            return EwaldInteraction(self.d, self.s)
        return EwaldInteraction(self.d, self.s, eps=self.eps, c0=self.c0)

    def with_seed(self) -> "FlowConfig":
        if self.seed is not None:
            return self
        seed = int(np.random.SeedSequence().entropy % 2**63)
        log.info("no seed given; using %d", seed)
        return replace(self, seed=seed)


def flow_step(state: ParticleState, cfg: FlowConfig, W) -> ParticleState:
    """One explicit step of x_i' = -1/N sum_{j != i} grad W(x_i - x_j)."""
    X, h = state.positions, cfg.h
    if cfg.integrator == "euler":
        Xn = X + h * W.velocities(X)
    else:
        k1 = W.velocities(X)
        k2 = W.velocities(wrap(X + 0.5 * h * k1))
        k3 = W.velocities(wrap(X + 0.5 * h * k2))
        k4 = W.velocities(wrap(X + h * k3))
        Xn = X + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return ParticleState(Xn, state.t + h, state.step + 1)


def random_state(n: int, d: int, seed: int) -> ParticleState:
    rng = np.random.default_rng(seed)
    return ParticleState(rng.random((n, d)) - 0.5)


def nearest_neighbor_distances(X: np.ndarray) -> np.ndarray:
    D = pairwise_torus_dist(X, X)
    np.fill_diagonal(D, np.inf)
    return D.min(axis=1)


@dataclass
class ClusterStats:
    count: int
    sizes: np.ndarray
    radii: np.ndarray
    labels: np.ndarray

    @property
    def mean_radius(self) -> float:
        return float(self.radii.mean()) if len(self.radii) else 0.0


def single_linkage_clusters(X: np.ndarray, link: float) -> ClusterStats:
    """Connected components of the graph joining particles closer than ``link``.

    A cluster's radius is the largest distance from its members to their
    centroid, computed in minimum-image coordinates around the first member.
    """
    D = pairwise_torus_dist(X, X)
    adj = csr_matrix(D <= link)
    count, labels = connected_components(adj, directed=False)
    sizes = np.bincount(labels, minlength=count)
    radii = np.zeros(count)
    for c in range(count):
        members = X[labels == c]
        rel = torus_diff(members, members[0])
        center = rel.mean(axis=0)
        radii[c] = np.sqrt(np.sum((rel - center) ** 2, axis=1)).max()
    return ClusterStats(count, sizes, radii, labels)


@dataclass
class FlowResult:
    config: FlowConfig
    initial: ParticleState
    final: ParticleState
    times: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    aborted: str | None = None

    def nn_stats(self) -> dict:
        nn = nearest_neighbor_distances(self.final.positions)
        return {"mean": float(nn.mean()), "std": float(nn.std()), "cv": float(nn.std() / nn.mean())}

    def clusters(self) -> ClusterStats:
        return single_linkage_clusters(self.final.positions, 2 * self.config.eps)

    def energy_slope(self) -> float:
        """dE/dt over the last recorded interval."""
        if len(self.times) < 2:
            return math.nan
        return (self.energies[-1] - self.energies[-2]) / (self.times[-1] - self.times[-2])


def run_flow(cfg: FlowConfig, initial: ParticleState | None = None, callback=None) -> FlowResult:
    """Integrate to time T, recording energies and snapshots every ``record_every`` steps.

    Aborts (``result.aborted`` set) if the discrete energy rises by more than
    ``energy_tol`` (relative to its magnitude) between records.
    """
    if initial is None:
        cfg = cfg.with_seed()
        initial = random_state(cfg.n, cfg.d, cfg.seed)
    W = cfg.interaction()
    state = initial
    res = FlowResult(cfg, initial, initial)
    n_steps = int(round(cfg.T / cfg.h))
    E = W.energy(state.positions)
    res.times.append(state.t)
    res.energies.append(E)
    res.snapshots.append((state.t, state.positions.copy()))
    for step in range(1, n_steps + 1):
        state = flow_step(state, cfg, W)
        if step % cfg.record_every == 0 or step == n_steps:
            E_new = W.energy(state.positions)
            res.times.append(state.t)
            res.energies.append(E_new)
            res.snapshots.append((state.t, state.positions.copy()))
            if E_new > E + cfg.energy_tol * max(1.0, abs(E)):
                res.aborted = f"energy rose from {E!r} to {E_new!r} at t={state.t:.4g}"
                log.warning("flow aborted: %s", res.aborted)
                break
            E = E_new
            if callback is not None:
                callback(state, E)
    res.final = state
    return res
