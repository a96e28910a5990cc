import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import riesz_series
from toruspot import measures, riesz
from toruspot.measures import GridDensity, WeightedAtoms
from toruspot.riesz import RieszSpec
from toruspot.torus import Grid
from toruspot.verify import gradient_error

MATRIX = [(1, 0.5), (1, -0.5), (2, 1.0), (2, -1.0), (3, 1.5)]


@given(st.floats(-3.5, 3.0), st.floats(0.01, 20.0))
def test_upper_gamma_vs_mpmath(alpha, z):
    want = float(mp.gammainc(alpha, z))
    assert riesz.upper_gamma(alpha, z) == pytest.approx(want, rel=1e-9, abs=1e-300)


def test_upper_tail_at_zero():
    assert riesz.upper_tail(-1.5, np.array([0.0]), 2.0)[0] == pytest.approx(2.0 ** -1.5 / 1.5)
    with pytest.raises(ValueError, match="singular"):
        riesz.upper_tail(0.5, np.array([0.0]), 1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        RieszSpec(1, 1.0)
    with pytest.raises(ValueError):
        RieszSpec(2, 0.0, tau=1e-3)
    spec = RieszSpec(2, 1.0)
    assert spec.lattice_radius() >= 4 and spec.fourier_radius() >= 8


@pytest.mark.parametrize("d,s", MATRIX)
def test_eval_matches_series(d, s):
    rng = np.random.default_rng(hash((d, s)) % 2**32)
    spec = RieszSpec(d, s)
    for _ in range(8):
        x = rng.random(d) - 0.5
        if np.abs(x).max() < 0.05:
            continue
        assert riesz.eval_Ws(spec, x if d > 1 else x[0]) == pytest.approx(riesz_series(x, s), abs=1e-9)


def test_quarter_point_1d():
    spec = RieszSpec(1, 0.5)
    want = riesz_series([0.25], 0.5)
    assert riesz.eval_Ws(spec, 0.25) == pytest.approx(want, abs=1e-10)
    # sharp truncation at 10^4 converges slowly; it agrees to its own tail size
    k = np.arange(1, 10001)
    sharp = 2 * np.sum(k ** -0.5 * np.cos(2 * np.pi * k * 0.25))
    assert abs(sharp - want) < 1e-2


@pytest.mark.parametrize("d,s", MATRIX)
def test_lambda_invariance(d, s):
    rng = np.random.default_rng(11)
    x = rng.random((5, d)) - 0.5
    base = riesz.eval_Ws(RieszSpec(d, s), x)
    for lam in (0.4, 3.0):
        assert np.allclose(riesz.eval_Ws(RieszSpec(d, s, lam=lam), x), base, atol=1e-9)


@pytest.mark.parametrize("d,s", MATRIX)
def test_even_and_odd(d, s):
    rng = np.random.default_rng(12)
    spec = RieszSpec(d, s)
    x = rng.random((6, d)) - 0.5
    assert np.allclose(riesz.eval_Ws(spec, x), riesz.eval_Ws(spec, -x), atol=1e-13)
    assert np.allclose(riesz.grad_Ws(spec, x), -riesz.grad_Ws(spec, -x), atol=1e-12)


@pytest.mark.parametrize("d,s", MATRIX)
def test_gradient_fd(d, s):
    rng = np.random.default_rng(13)
    spec = RieszSpec(d, s)
    for _ in range(10):
        x = rng.random(d) - 0.5
        if np.linalg.norm(x) < 0.05:
            continue
        assert gradient_error(spec, x) <= 1e-4


def test_mean_zero():
    from scipy import integrate

    for s in (-0.5, 0.5):
        spec = RieszSpec(1, s)
        val = integrate.quad(lambda x: riesz.eval_Ws(spec, x), -0.5, 0.5, points=[0])[0]
        assert abs(val) < 1e-8
    # the cusp at 0 limits the midpoint rule to third order in 2D
    spec = RieszSpec(2, -1.0)
    means = [abs(np.mean(riesz.eval_Ws(spec, Grid(2, N).centers().reshape(-1, 2)))) for N in (32, 64)]
    assert means[1] < 2e-5 and means[1] < means[0] / 6


def test_singular_point():
    with pytest.raises(ValueError, match="singular"):
        riesz.eval_Ws(RieszSpec(2, 1.0), [0.0, 0.0])
    # negative s is finite at the origin
    assert np.isfinite(riesz.eval_Ws(RieszSpec(2, -1.0), [0.0, 0.0]))


def test_wlog():
    assert riesz.eval_Wlog(0.25) == pytest.approx(-0.5 * math.log(2))
    assert riesz.eval_Wlog(0.5) == pytest.approx(-math.log(2))
    with pytest.raises(ValueError):
        riesz.eval_Wlog(0.0)
    spec = RieszSpec(1, 0.0)
    for x in (0.05, 0.2, 0.37, 0.5):
        assert riesz.eval_Ws(spec, x) == pytest.approx(2 * riesz.eval_Wlog(x), abs=1e-6)
        want = -2 * math.pi / math.tan(math.pi * x)
        assert riesz.grad_Ws(spec, x)[0] == pytest.approx(want, abs=1e-5)
        assert 2 * riesz.grad_Wlog(x) == pytest.approx(want)


def test_smooth_remainder():
    d, s = 2, 1.0
    spec = RieszSpec(d, s)
    cs = riesz.singular_coefficient(d, s)
    u = np.array([0.6, 0.8])
    ts = 10.0 ** -np.arange(1, 6)
    rem = np.array([riesz.eval_Ws(spec, t * u) - cs / t for t in ts])
    assert np.all(np.abs(np.diff(rem)) < 0.1)
    # and it converges: increments shrink with t
    assert abs(rem[-1] - rem[-2]) < 1e-5


def test_potential_field_examples():
    g = Grid(1, 64)
    assert np.abs(riesz.potential_field(0.5, measures.uniform_density(64)).values).max() < 1e-15
    rho = GridDensity.from_values(g, 1 + np.cos(2 * np.pi * g.axis_centers()))
    for s in (-1.0, 0.0, 0.5):
        V = riesz.potential_field(s, rho)
        assert np.allclose(V.values, np.cos(2 * np.pi * g.axis_centers()), atol=1e-12)
    with pytest.raises(ValueError):
        riesz.potential_field(0.5, rho, K=32)


def test_potential_field_linear():
    rng = np.random.default_rng(14)
    g = Grid(2, 16)
    r1 = GridDensity.from_values(g, rng.random(g.shape))
    r2 = GridDensity.from_values(g, rng.random(g.shape))
    mix = GridDensity(g, 0.3 * r1.mass + 0.7 * r2.mass)
    V = riesz.potential_field(1.0, mix).values
    assert np.allclose(V, 0.3 * riesz.potential_field(1.0, r1).values + 0.7 * riesz.potential_field(1.0, r2).values)
    assert abs(np.mean(V)) < 1e-8


def test_potential_field_vs_ewald_atoms():
    N = 512
    g = Grid(1, N)
    c = g.axis_centers()
    idx = np.array([10, 11, 200])
    atoms = WeightedAtoms.normalized(c[idx][:, None], [0.2, 0.3, 0.5])
    rho = measures.grid_project(atoms, N)
    V = riesz.potential_field(-1.0, rho)
    spec = RieszSpec(1, -1.0)
    far = np.array([100, 300, 400])
    direct = [sum(w * riesz.eval_Ws(spec, c[j] - p[0]) for p, w in zip(atoms.points, atoms.weights)) for j in far]
    assert np.allclose(V.values[far], direct, atol=1e-4)


def test_spectral_identity():
    rng = np.random.default_rng(15)
    for d, N in ((1, 40), (2, 24)):
        rho = GridDensity.from_values(Grid(d, N), rng.random((N,) * d))
        s = -0.5
        V = riesz.potential_field(s, rho, K=8)
        got = measures.fourier_coeffs(V, 8)
        want = measures.fourier_coeffs(rho, 8)
        kn = np.linalg.norm(want.wavevectors(), axis=-1)
        mult = np.where(kn > 0, np.where(kn > 0, kn, 1) ** (s - d), 0)
        assert np.abs(got.values - mult * want.values).max() < 1e-10


def test_lp_norm():
    g = Grid(1, 1024)
    zero = riesz.PotentialField(g, np.zeros(1024))
    assert riesz.lp_norm(zero, 2) == 0
    const = riesz.PotentialField(g, np.full(1024, -3.0))
    for p in (1, 2, 7, math.inf):
        assert riesz.lp_norm(const, p) == pytest.approx(3.0)
    cos = riesz.PotentialField(g, np.cos(2 * np.pi * g.axis_centers()))
    assert riesz.lp_norm(cos, 2) == pytest.approx(math.sqrt(0.5), abs=1e-6)
    assert riesz.conjugate_exponent(2) == 2 and riesz.conjugate_exponent(1) == math.inf


def test_u_eps_beta_zero_is_mollifier():
    field, norm1 = riesz.u_eps_field(0.0, 0.05, 1, 2048)
    assert norm1 <= 2.0
    # u_eps = periodized psi_eps minus its mean
    x = field.grid.axis_centers()
    psi = measures.mollifier(x / 0.05, 1) / 0.05
    assert np.allclose(field.values, psi - 1.0, atol=1e-6)


def test_u_eps_validation():
    with pytest.raises(ValueError):
        riesz.u_eps_field(-0.5, 0.1, 2, 64, d=2)
    with pytest.raises(ValueError):
        riesz.u_eps_field(0.5, 0.6, 2, 64)
