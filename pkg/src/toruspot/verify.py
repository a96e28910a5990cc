"""Invariant suites and the empirical calibration of the set-geometry diagnostics."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import dinfty, energy, measures, riesz, torus
from .torus import Grid, GridSet

log = logging.getLogger(__name__)

CALIBRATION_FILE = "calibration.json"
# safety factors applied to the observed extremes when fixing the bounds
LAYER_FACTOR = 2.0
ISO_FACTOR = 0.5


# ---------------------------------------------------------------------------
# random sets


def random_set(rng: np.random.Generator, grid: Grid) -> GridSet:
    """Union of a few random balls, or a sparse Bernoulli mask."""
    if rng.random() < 0.25:
        return GridSet(grid, rng.random(grid.shape) < rng.uniform(0.01, 0.3))
    mask = np.zeros(grid.shape, dtype=bool)
    for _ in range(rng.integers(1, 5)):
        c = rng.random(grid.d) - 0.5
        mask |= GridSet.ball(grid, rng.uniform(0.02, 0.25), c).mask
    return GridSet(grid, mask)


def random_instance(rng: np.random.Generator, d: int | None = None, N: int | None = None):
    """A random (S, r) pair on a small grid."""
    if d is None:
        d = int(rng.integers(1, 3))
    if N is None:
        N = int(rng.integers(16, 129)) if d == 1 else int(rng.integers(8, 33))
    grid = Grid(d, N)
    r = float(rng.uniform(1.0 / N, 0.2))
    return random_set(rng, grid), r


def diagnostic_sample(rng: np.random.Generator, d: int = 2, N: int = 64):
    """One r-regular set with its layer and isoperimetric ratios (None if degenerate)."""
    grid = Grid(d, N)
    S = random_set(rng, grid)
    r = float(rng.uniform(1.5 / N, 0.1))
    T = torus.regularize(S, r)
    lay = torus.layer_diagnostic(T, r)
    iso = torus.isoperimetric_diagnostic(T, r)
    if lay.degenerate or iso.degenerate:
        return None
    return lay.ratio, iso.ratio


# ---------------------------------------------------------------------------
# calibration


def calibrate(count: int = 500, seed: int = 0, d: int = 2, N: int = 64) -> dict:
    rng = np.random.default_rng(seed)
    layer, iso = [], []
    while len(layer) < count:
        out = diagnostic_sample(rng, d, N)
        if out is not None:
            layer.append(out[0])
            iso.append(out[1])
    return {
        "d": d, "N": N, "count": count, "seed": seed,
        "layer_max": max(layer), "iso_min": min(iso),
        "layer_bound": LAYER_FACTOR * max(layer),
        "iso_bound": ISO_FACTOR * min(iso),
    }


def calibration_path() -> Path:
    return Path(str(resources.files("toruspot") / "data" / CALIBRATION_FILE))


def load_calibration(path=None) -> dict:
    p = Path(path) if path is not None else calibration_path()
    with open(p) as fh:
        return json.load(fh)


def write_calibration(cal: dict, path=None) -> Path:
    from .io import atomic_write_text

    p = Path(path) if path is not None else calibration_path()
    atomic_write_text(p, json.dumps(cal, indent=2) + "\n")
    return p


# ---------------------------------------------------------------------------
# suites


@dataclass
class SuiteResult:
    name: str
    passed: bool
    count: int
    worst: float
    seconds: float = 0.0

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return f"{flag} {self.name}: n={self.count} worst={self.worst:.3g} ({self.seconds:.1f}s)"


def _suite_metric(rng, n):
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 4))
        x, y, z = rng.random((3, d)) - 0.5
        dxy, dyz, dxz = torus.torus_dist(x, y), torus.torus_dist(y, z), torus.torus_dist(x, z)
        worst = max(worst, abs(dxy - torus.torus_dist(y, x)), dxz - dxy - dyz)
    return worst <= 1e-15, worst


def _suite_regularization(rng, n):
    worst = 0
    for _ in range(n):
        S, r = random_instance(rng)
        T = torus.regularize(S, r)
        bad = (not S.issubset(T)) + (torus.expand(T, r) != torus.expand(S, r)) + (torus.regularize(T, r) != T)
        worst = max(worst, int(bad))
    return worst == 0, float(worst)


def _suite_bottleneck(rng, n):
    worst = 0.0
    for _ in range(n):
        k, d = int(rng.integers(1, 7)), int(rng.integers(1, 3))
        X, Y = rng.random((k, d)) - 0.5, rng.random((k, d)) - 0.5
        got = dinfty.dinfty_atomic(measures.WeightedAtoms.normalized(X), measures.WeightedAtoms.normalized(Y)).value
        worst = max(worst, abs(got - dinfty.bottleneck_bruteforce(X, Y)))
    return worst == 0.0, worst


def _suite_hall(rng, n):
    worst = math.inf
    for _ in range(n):
        a, b, d = int(rng.integers(1, 13)), int(rng.integers(1, 13)), int(rng.integers(1, 3))
        r1 = measures.WeightedAtoms.normalized(rng.random((a, d)), rng.random(a) + 1e-3)
        r2 = measures.WeightedAtoms.normalized(rng.random((b, d)), rng.random(b) + 1e-3)
        rep = dinfty.set_formulation_check(r1, r2)
        worst = min(worst, rep.margin_below if rep.passed else -1.0)
    return worst > 1e-9, worst


def _suite_gradient(rng, n):
    worst = 0.0
    for d, s in ((1, 0.5), (1, -0.5), (2, 1.0), (2, -1.0), (3, 1.5)):
        spec = riesz.RieszSpec(d, s)
        for _ in range(max(1, n // 5)):
            x = rng.random(d) - 0.5
            if np.linalg.norm(x) < 0.05:
                continue
            worst = max(worst, gradient_error(spec, x))
    return worst <= 1e-4, worst


def gradient_error(spec, x, h=1e-5) -> float:
    """Relative error of grad_Ws against central differences of eval_Ws."""
    x = np.asarray(x, dtype=float)
    g = np.atleast_1d(riesz.grad_Ws(spec, x))
    fd = np.empty(spec.d)
    for i in range(spec.d):
        e = np.zeros(spec.d)
        e[i] = h
        fd[i] = (riesz.eval_Ws(spec, x + e) - riesz.eval_Ws(spec, x - e)) / (2 * h)
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-12))


def _suite_spectral(rng, n):
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 3))
        N = 32 if d == 1 else 24
        rho = measures.GridDensity.from_values(Grid(d, N), rng.random((N,) * d))
        s = float(rng.uniform(-1, 0.9 * d))
        V = riesz.potential_field(s, rho, K=8)
        got = measures.fourier_coeffs(V, 8).values
        want = measures.fourier_coeffs(rho, 8)
        kn = np.linalg.norm(want.wavevectors(), axis=-1)
        mult = np.where(kn > 0, kn, 1.0) ** (s - d) * (kn > 0)
        worst = max(worst, float(np.abs(got - mult * want.values).max()))
    return worst <= 1e-10, worst


def _suite_energy(rng, n):
    worst = 0.0
    for _ in range(n):
        d = int(rng.integers(1, 3))
        N = 32 if d == 1 else 16
        rho = measures.GridDensity.from_values(Grid(d, N), rng.random((N,) * d))
        s = float(rng.choice([-1.0, 0.0, 0.5]))
        E = energy.energy_spectral(rho, s)
        V = riesz.potential_field((d + s) / 2, rho)
        worst = max(worst, abs(E - 0.5 * riesz.lp_norm(V, 2) ** 2))
    return worst <= 1e-8, worst


def _suite_momentum(rng, n):
    worst = 0.0
    for _ in range(n):
        X = rng.random((int(rng.integers(2, 40)), 2)) - 0.5
        W = energy.EwaldInteraction(2, -1.0, eps=0.1, c0=50.0) if rng.random() < 0.5 else energy.EwaldInteraction(2, -1.0)
        worst = max(worst, float(np.abs(W.velocities(X).sum(axis=0)).max()))
    return worst <= 1e-12, worst


def _suite_diagnostics(rng, n, cal):
    worst = 0.0
    ok = True
    for _ in range(n):
        out = diagnostic_sample(rng, cal["d"], cal["N"])
        if out is None:
            continue
        lay, iso = out
        ok &= lay <= cal["layer_bound"] and iso >= cal["iso_bound"]
        worst = max(worst, lay / cal["layer_bound"])
    return ok, worst


SUITES = {
    "torus_metric": (_suite_metric, 200),
    "regularization": (_suite_regularization, 200),
    "bottleneck_oracle": (_suite_bottleneck, 100),
    "hall_duality": (_suite_hall, 100),
    "gradient_fd": (_suite_gradient, 50),
    "spectral_identity": (_suite_spectral, 20),
    "energy_identity": (_suite_energy, 20),
    "momentum": (_suite_momentum, 10),
}


def run_suites(seed: int = 0, scale: float = 1.0, names=None, calibration: dict | None = None) -> list[SuiteResult]:
    rng = np.random.default_rng(seed)
    results = []
    for name, (fn, n) in SUITES.items():
        if names and name not in names:
            continue
        t = time.perf_counter()
        passed, worst = fn(rng, max(1, int(n * scale)))
        results.append(SuiteResult(name, bool(passed), max(1, int(n * scale)), float(worst), time.perf_counter() - t))
    if calibration is not None and (not names or "diagnostics" in names):
        t = time.perf_counter()
        n = max(1, int(100 * scale))
        passed, worst = _suite_diagnostics(rng, n, calibration)
        results.append(SuiteResult("diagnostics", bool(passed), n, float(worst), time.perf_counter() - t))
    return results


def report(results) -> dict:
    return {"passed": all(r.passed for r in results), "suites": [asdict(r) for r in results]}
