"""Wasserstein-infinity distance on T^d.

Atomic measures are compared exactly through the weighted Hall criterion:
transport at radius r is feasible iff the bipartite network
source -> x_i (a_i), x_i -> y_j (inf, when dist <= r), y_j -> sink (b_j)
carries unit flow. When it does not, the source side of a minimum cut is a set
of atoms whose mass exceeds that of its r-neighborhood.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .maxflow import FlowNetwork
from .measures import GridDensity, WeightedAtoms, density_to_atoms, grid_project, regrid
from .torus import Grid, GridSet, distance_to_set, pairwise_torus_dist

log = logging.getLogger(__name__)

FLOW_TOL = 1e-10
CANDIDATE_RTOL = 1e-12
DEFAULT_GRID = {1: 64, 2: 24, 3: 8}
MAX_NODES = 20000
MAX_PAIRS = 4_000_000


@dataclass
class TransportFeasibility:
    radius: float
    feasible: bool
    deficit: float
    plan: np.ndarray | None = None      # (n, m) transport plan when feasible
    witness: np.ndarray | None = None   # indices of rho_1 atoms when infeasible
    neighbors: np.ndarray | None = None  # indices of rho_2 atoms within r of the witness
    margin: float | None = None         # rho_1(S) - rho_2(N(S))

    def plan_edges(self) -> list:
        """Nonzero plan entries as (i, j, mass), in lexicographic edge order."""
        if self.plan is None:
            return []
        ii, jj = np.nonzero(self.plan)
        return [(int(i), int(j), float(self.plan[i, j])) for i, j in zip(ii, jj)]


@dataclass
class DinftyResult:
    value: float
    plan: np.ndarray
    witness: np.ndarray
    witness_radius: float  # largest candidate below value (-inf if none)
    witness_margin: float
    n_candidates: int = 0
    n_solves: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        ii, jj = np.nonzero(self.plan)
        return {
            "r_star": self.value,
            "plan_edges": [[int(i), int(j), float(self.plan[i, j])] for i, j in zip(ii, jj)],
            "witness": self.witness.tolist(),
            "witness_radius": None if not np.isfinite(self.witness_radius) else self.witness_radius,
            "witness_margin": self.witness_margin,
        }


def candidate_radii(dist: np.ndarray):
    """Sorted distinct distances (relative tolerance) and the rank of every pair.

    Returns ``(values, order, group_end, rank)``: ``order`` sorts the flattened
    pairs by distance, ``group_end[k]`` is the number of sorted pairs with rank
    <= k, and ``rank`` has the shape of ``dist``.
    """
    flat = dist.ravel()
    order = np.argsort(flat, kind="stable")
    srt = flat[order]
    # start a new group when the gap exceeds the relative tolerance
    new = np.empty(srt.size, dtype=bool)
    new[0] = True
    new[1:] = srt[1:] - srt[:-1] > CANDIDATE_RTOL * np.maximum(srt[1:], 1e-300)
    grp = np.cumsum(new) - 1
    starts = np.flatnonzero(new)
    values = srt[starts]
    group_end = np.append(starts[1:], srt.size)
    rank = np.empty(flat.size, dtype=np.int64)
    rank[order] = grp
    return values, order, group_end, rank.reshape(dist.shape)


class _HallSolver:
    """Incremental feasibility oracle for a fixed pair of atomic measures."""

    def __init__(self, a: np.ndarray, b: np.ndarray, dist: np.ndarray):
        self.a, self.b = a, b
        self.n, self.m = len(a), len(b)
        self.dist = dist
        self.values, self.order, self.group_end, self.rank = candidate_radii(dist)
        n, m = self.n, self.m
        self.src, self.sink = n + m, n + m + 1
        self.net = FlowNetwork(n + m + 2)
        self.src_edges = [self.net.add_edge(self.src, i, a[i]) for i in range(n)]
        self.sink_edges = [self.net.add_edge(n + j, self.sink, b[j]) for j in range(m)]
        self.pair_edges: list[tuple[int, int, int]] = []
        self.n_pairs = 0  # prefix of sorted pairs currently in the network
        self.n_solves = 0

    def _grow(self, n_pairs: int) -> None:
        m = self.m
        for p in self.order[self.n_pairs:n_pairs]:
            i, j = divmod(int(p), m)
            e = self.net.add_edge(i, self.n + j, math.inf)
            self.pair_edges.append((i, j, e))
        self.n_pairs = n_pairs

    def solve(self, k: int) -> TransportFeasibility:
        """Feasibility with all pairs of rank <= k admissible (k = -1: no pairs)."""
        target = 0 if k < 0 else int(self.group_end[k])
        if target < self.n_pairs:
            raise ValueError("the network only grows; restore a snapshot first")
        self._grow(target)
        self.net.max_flow(self.src, self.sink)
        self.n_solves += 1
        cap = self.net.cap
        deficit = max(math.fsum(cap[e] for e in self.src_edges),
                      math.fsum(cap[e] for e in self.sink_edges))
        r = -math.inf if k < 0 else float(self.values[k])
        if deficit <= FLOW_TOL:
            plan = np.zeros((self.n, self.m))
            for i, j, e in self.pair_edges:
                plan[i, j] += self.net.flow_on(e)
            return TransportFeasibility(r, True, deficit, plan=plan)
        seen = self.net.reachable(self.src)
        S = np.array([i for i in range(self.n) if seen[i]], dtype=np.int64)
        margin, nbrs = hall_margin(self.a, self.b, self.rank, k, S)
        return TransportFeasibility(r, False, deficit, witness=S, neighbors=nbrs, margin=margin)


def hall_margin(a, b, rank, k, S):
    """rho_1(S) - rho_2(N(S)) where N(S) are atoms joined to S by rank <= k pairs."""
    S = np.asarray(S, dtype=np.int64)
    if S.size == 0:
        return 0.0, np.zeros(0, dtype=np.int64)
    nbrs = np.flatnonzero(np.any(rank[S] <= k, axis=0))
    return math.fsum(a[S]) - math.fsum(b[nbrs]), nbrs


def _as_arrays(rho1: WeightedAtoms, rho2: WeightedAtoms):
    if rho1.d != rho2.d:
        raise ValueError(f"dimension mismatch: {rho1.d} vs {rho2.d}")
    dist = pairwise_torus_dist(rho1.points, rho2.points)
    return rho1.weights, rho2.weights, dist


def feasible_at(rho1: WeightedAtoms, rho2: WeightedAtoms, r: float) -> TransportFeasibility:
    """Is there a plan moving rho1 to rho2 with every displacement <= r?"""
    a, b, dist = _as_arrays(rho1, rho2)
    solver = _HallSolver(a, b, dist)
    # admissible pairs: distance <= r, with candidates within tolerance merged
    k = int(np.searchsorted(solver.values, r * (1 + CANDIDATE_RTOL), side="right")) - 1
    res = solver.solve(k)
    res.radius = float(r)
    return res


def dinfty_atomic(rho1: WeightedAtoms, rho2: WeightedAtoms) -> DinftyResult:
    """Exact d-infinity between atomic measures by bisection over pair distances.

    The flow at the largest known-infeasible radius is reused as the starting
    point for every larger radius tried afterwards.
    """
    a, b, dist = _as_arrays(rho1, rho2)
    return _bisect(_HallSolver(a, b, dist))


def _bisect(solver: _HallSolver) -> DinftyResult:
    lo, hi = -1, len(solver.values) - 1
    lo_res = None
    hi_res = None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        snap = solver.net.snapshot()
        pairs_before = (solver.n_pairs, len(solver.pair_edges))
        res = solver.solve(mid)
        if res.feasible:
            hi, hi_res = mid, res
            solver.net.restore(snap)
            solver.n_pairs = pairs_before[0]
            del solver.pair_edges[pairs_before[1]:]
        else:
            lo, lo_res = mid, res
    if hi_res is None:
        hi_res = solver.solve(hi)
        if not hi_res.feasible:
            raise RuntimeError(f"no feasible plan at the largest distance (deficit {hi_res.deficit:.3g})")
    if lo_res is None:
        # below the smallest candidate no pair is admissible
        lo_res = TransportFeasibility(-math.inf, False, 1.0,
                                      witness=np.arange(solver.n), neighbors=np.zeros(0, dtype=np.int64),
                                      margin=math.fsum(solver.a))
    return DinftyResult(
        value=float(solver.values[hi]),
        plan=hi_res.plan,
        witness=lo_res.witness,
        witness_radius=lo_res.radius,
        witness_margin=lo_res.margin,
        n_candidates=len(solver.values),
        n_solves=solver.n_solves,
    )


def bottleneck_bruteforce(xs, ys) -> float:
    """Bottleneck assignment value by enumerating all permutations (n <= 8)."""
    dist = pairwise_torus_dist(xs, ys)
    n = dist.shape[0]
    if dist.shape[1] != n:
        raise ValueError("equal-weight oracle needs n == m")
    if n > 8:
        raise ValueError("too many atoms for exhaustive search")
    rows = np.arange(n)
    return float(min(dist[rows, list(p)].max() for p in itertools.permutations(range(n))))


@dataclass
class SetFormulationReport:
    passed: bool
    r_star: float
    r_pred: float
    witness: np.ndarray
    margin_below: float   # rho_1(S) - rho_2(S_r) at the predecessor radius
    deficit_at: float     # unmatched mass at r_star
    margin_at: float      # best Hall margin found at r_star (should be <= 0)


def set_formulation_check(rho1: WeightedAtoms, rho2: WeightedAtoms) -> SetFormulationReport:
    """Check the set characterization of d-infinity on an atomic instance.

    Just below r* an extracted set S must satisfy rho_1(S) > rho_2(S_r); at r*
    the residual-reachable set must not violate the Hall condition.
    """
    a, b, dist = _as_arrays(rho1, rho2)
    solver = _HallSolver(a, b, dist)
    res = _bisect(solver)
    k_star = int(np.searchsorted(solver.values, res.value, side="left"))
    # fresh network at r*: its residual-reachable set is the best Hall candidate
    at_solver = _HallSolver(a, b, dist)
    at = at_solver.solve(k_star)
    seen = at_solver.net.reachable(at_solver.src)
    S_at = np.array([i for i in range(at_solver.n) if seen[i]], dtype=np.int64)
    margin_at, _ = hall_margin(a, b, solver.rank, k_star, S_at)
    margin_below, _ = hall_margin(a, b, solver.rank, k_star - 1, res.witness)
    deficit = at.deficit
    passed = margin_below > 0 and deficit <= FLOW_TOL and margin_at <= FLOW_TOL
    return SetFormulationReport(passed, res.value, res.witness_radius, res.witness,
                                margin_below, deficit, margin_at)


# ---------------------------------------------------------------------------
# distance to the uniform distribution


@dataclass
class Enclosure:
    lo: float
    hi: float
    r_hat: float
    N: int

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def half_width(self) -> float:
        return 0.5 * (self.hi - self.lo)

    def contains(self, x: float, slack: float = 0.0) -> bool:
        return self.lo - slack <= x <= self.hi + slack

    def to_json(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "r_hat": self.r_hat, "N": self.N}


def dinfty_to_uniform(rho, N: int | None = None) -> Enclosure:
    """Rigorous enclosure of d-infinity(rho, uniform) from an N^d grid surrogate.

    Both measures are replaced by atoms at grid cell centers; each replacement
    moves mass by at most sqrt(d)/N, hence the +-2 sqrt(d)/N enclosure.
    """
    d = rho.d
    if N is None:
        N = DEFAULT_GRID.get(d, 8)
    if isinstance(rho, GridDensity):
        atoms = density_to_atoms(regrid(rho, N))
    else:
        atoms = density_to_atoms(grid_project(rho, N))
    m = N ** d
    if len(atoms) + m > MAX_NODES or len(atoms) * m > MAX_PAIRS:
        suggest = int(math.floor((MAX_PAIRS ** 0.5) ** (1.0 / d)))
        raise ValueError(f"instance too large for N={N} in d={d}; try N <= {suggest}")
    uni = density_to_atoms(GridDensity(Grid(d, N), np.full((N,) * d, 1.0 / m)))
    r_hat = dinfty_atomic(atoms, uni).value
    pad = 2.0 * math.sqrt(d) / N
    return Enclosure(max(r_hat - pad, 0.0), r_hat + pad, r_hat, N)


def discrepancy_1d(rho: GridDensity) -> float:
    """Largest excess mass over uniform on a circular interval of cells."""
    if rho.d != 1:
        raise ValueError("discrepancy_1d needs d = 1")
    v = rho.mass - 1.0 / rho.N
    P = np.concatenate(([0.0], np.cumsum(v)))
    best = float(np.max(P - np.minimum.accumulate(P)))        # plain intervals
    worst = float(np.min(P - np.maximum.accumulate(P)))       # most negative interval
    total = float(P[-1])
    return max(0.0, best, total - worst)


# ---------------------------------------------------------------------------
# set witnesses for grid densities


def _witness_sup(dist: np.ndarray, grow: np.ndarray, target: float) -> float:
    """sup{r : sum of ``grow`` over cells with dist < r is < target}."""
    order = np.argsort(dist, kind="stable")
    D = dist[order]
    G = np.cumsum(grow[order])
    # cumulative measure strictly below each distinct value
    starts = np.flatnonzero(np.concatenate(([True], D[1:] > D[:-1])))
    below = np.concatenate(([0.0], G))[starts]
    ok = np.flatnonzero(below < target)
    if ok.size == 0:
        return 0.0
    return float(D[starts[ok[-1]]])


def witness_radius(rho: GridDensity, S: GridSet) -> float:
    """Certified lower bound on d-infinity(rho, uniform) from the set S.

    Treats rho as cellwise constant and S as a union of closed cells. If a
    point is within r of S, its cell center is within r + sqrt(d)/N of a center
    in S, so comparing rho(S) with the cells at center distance < r + sqrt(d)/N
    (and |S| with their rho-mass) certifies d-infinity >= r.
    """
    if S.is_empty():
        return 0.0
    dist = distance_to_set(S).ravel()
    mass = rho.mass.ravel()
    cell = np.full(mass.size, 1.0 / mass.size)
    inside = S.mask.ravel()
    r1 = _witness_sup(dist, cell, math.fsum(mass[inside]))
    r2 = _witness_sup(dist, mass, math.fsum(cell[inside]))
    return max(0.0, max(r1, r2) - math.sqrt(rho.d) / rho.N)


def ball_witness_scan(rho: GridDensity, eps: float, R_values=None, refine: int = 32, margin: float = 1.25):
    """Best certified witness among S = B(0; eps R) and its complement.

    Works on a window around the origin refined ``refine`` times per axis, so
    the sqrt(d)/N certification slack shrinks accordingly; the density must
    be uniform outside the window. Returns ``(r, R, which)``.
    """
    if R_values is None:
        R_values = np.round(np.arange(0.1, 0.95, 0.1), 2)
    d, N = rho.d, rho.N
    half = int(math.ceil(margin * eps * N))
    if 2 * half >= N:
        raise ValueError("window does not fit in the torus; lower margin or raise N")
    idx = np.mod(np.arange(-half, half), N)
    win = rho.mass[np.ix_(*([idx] * d))]
    dens = win * N ** d
    for ax in range(d):
        dens = np.repeat(dens, refine, axis=ax)
    h = 1.0 / (N * refine)
    vol = np.full(dens.shape, h ** d)
    fmass = dens * h ** d
    m_out = 1.0 - math.fsum(win.ravel())
    v_out = 1.0 - (2 * half / N) ** d
    coords = (np.arange(-half * refine, half * refine) + 0.5) * h
    mesh = np.meshgrid(*([coords] * d), indexing="ij")
    rad = np.sqrt(sum(m * m for m in mesh))
    slack = math.sqrt(d) * h
    best = (0.0, None, None)
    for R in R_values:
        B = rad < eps * R
        if not B.any():
            continue
        cases = []
        # S = ball: its r-neighborhood stays inside the window
        D = ndimage.distance_transform_edt(~B) * h
        cases.append(("ball", D, math.fsum(fmass[B].ravel()), math.fsum(vol[B].ravel()), 0.0, 0.0))
        # S = complement: everything outside the window belongs to S
        D = ndimage.distance_transform_edt(B) * h
        cases.append(("complement", D, m_out + math.fsum(fmass[~B].ravel()),
                      v_out + math.fsum(vol[~B].ravel()), v_out, m_out))
        for which, D, rho_S, vol_S, v_off, m_off in cases:
            r1 = _witness_sup(D.ravel(), vol.ravel(), rho_S - v_off)
            r2 = _witness_sup(D.ravel(), fmass.ravel(), vol_S - m_off)
            r = max(r1, r2) - slack
            if r > best[0]:
                best = (r, float(R), which)
    return best
