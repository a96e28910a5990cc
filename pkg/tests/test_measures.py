import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from toruspot import dinfty, measures
from toruspot.measures import GridDensity, WeightedAtoms
from toruspot.torus import Grid


def test_mollifier_normalized():
    for d in (1, 2, 3):
        if d == 1:
            val = integrate.quad(lambda x: measures.mollifier(x, 1), -1, 1)[0]
        else:
            val = measures.sphere_area(d) * integrate.quad(lambda r: measures.mollifier(r, d) * r ** (d - 1), 0, 1)[0]
        assert val == pytest.approx(1.0, rel=1e-10)


def test_mollifier_support():
    assert measures.mollifier(1.0, 1) == 0.0
    assert measures.mollifier(np.array([1.5, -2.0]), 1).max() == 0.0


@pytest.mark.parametrize("d", [1, 2, 3])
def test_mollifier_hat_table_vs_quadrature(d):
    xi = np.array([0.0, 0.3, 1.7, 5.2, 11.0, 30.5])
    assert np.allclose(measures.mollifier_hat(xi, d), measures.mollifier_hat(xi, d, exact=True), atol=1e-9)
    assert measures.mollifier_hat(0.0, d) == pytest.approx(1.0, abs=1e-12)


def test_mollifier_hat_tail_bound():
    for d in (1, 2, 3):
        far = measures.mollifier_hat(np.array([64.5, 80.0]), d, exact=True)
        assert np.abs(far).max() <= measures.hat_tail_bound(d)


def test_atoms_validation():
    with pytest.raises(ValueError):
        WeightedAtoms(np.zeros((2, 1)), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        WeightedAtoms(np.zeros((2, 1)), np.array([1.0, 0.0]))
    a = WeightedAtoms.normalized([[0.7], [0.2]], [1.0, 3.0])
    assert a.points[0, 0] == pytest.approx(-0.3)
    assert WeightedAtoms.from_json(a.to_json()).weights.tolist() == a.weights.tolist()


def test_grid_project_examples():
    rho = measures.grid_project(WeightedAtoms.normalized([[0.0]]), 8)
    assert rho.mass[0] == 1.0
    rho = measures.grid_project(WeightedAtoms.normalized([[0.1], [0.6]]), 4)
    assert rho.mass.tolist() == [0.5, 0.0, 0.5, 0.0]


def test_grid_project_mass_and_distance():
    rng = np.random.default_rng(0)
    for d in (1, 2):
        atoms = WeightedAtoms.normalized(rng.random((100, d)), rng.random(100) + 0.1)
        N = 10
        rho = measures.grid_project(atoms, N)
        assert math.fsum(rho.mass.ravel()) == 1.0
        # atoms moved to the cell centers change d-infinity by at most sqrt(d)/N
        moved = measures.density_to_atoms(rho)
        ref = WeightedAtoms.normalized(rng.random((7, d)))
        a = dinfty.dinfty_atomic(atoms, ref).value
        b = dinfty.dinfty_atomic(moved, ref).value
        assert abs(a - b) <= math.sqrt(d) / N + 1e-12


def test_grid_project_contraction():
    rng = np.random.default_rng(1)
    for _ in range(20):
        d = int(rng.integers(1, 3))
        s1 = WeightedAtoms.normalized(rng.random((6, d)), rng.random(6) + 0.1)
        s2 = WeightedAtoms.normalized(rng.random((5, d)), rng.random(5) + 0.1)
        N = 12
        lhs = dinfty.dinfty_atomic(measures.density_to_atoms(measures.grid_project(s1, N)),
                                   measures.density_to_atoms(measures.grid_project(s2, N))).value
        assert lhs <= dinfty.dinfty_atomic(s1, s2).value + 2 * math.sqrt(d) / N + 1e-12


def test_density_to_atoms():
    atoms = measures.density_to_atoms(measures.uniform_density(3))
    assert len(atoms) == 3
    assert np.allclose(atoms.weights, 1 / 3)
    back = measures.grid_project(atoms, 3)
    assert np.allclose(back.mass, 1 / 3)
    assert abs(math.fsum(back.mass) - 1.0) <= 1e-15


def test_uniform_density():
    u = measures.uniform_density(2, 2)
    assert u.mass.tolist() == [[0.25, 0.25], [0.25, 0.25]]
    c = measures.fourier_coeffs(measures.uniform_density(16, 2), 7)
    vals = c.values.copy()
    vals[7, 7] = 0
    assert np.abs(vals).max() < 1e-15
    assert c[(0, 0)] == pytest.approx(1.0)


def test_fourier_examples():
    g = Grid(1, 32)
    centers = g.axis_centers()
    j0 = int(np.argmin(np.abs(centers)))
    delta = GridDensity(g, np.eye(1, 32, j0)[0])
    c = measures.fourier_coeffs(delta, 10)
    assert np.allclose(c.values, np.exp(-2j * np.pi * np.arange(-10, 11) * centers[j0]), atol=1e-14)
    x = centers
    rho = GridDensity.from_values(g, 1 + np.cos(2 * np.pi * x))
    c = measures.fourier_coeffs(rho, 5)
    assert abs(c[1] - 0.5) < 1e-12 and abs(c[-1] - 0.5) < 1e-12
    assert c.is_hermitian()
    with pytest.raises(ValueError):
        measures.fourier_coeffs(rho, 16)


def test_single_atom_at_origin_spectrum():
    # an atom exactly at 0 has all coefficients 1; on a grid put it at a center
    atoms = WeightedAtoms.normalized([[0.0, 0.0]])
    pts = atoms.points
    k = np.array([[1, 0], [3, -2], [0, 5]])
    assert np.allclose(np.exp(-2j * np.pi * k @ pts[0]), 1.0)


def test_bump_family():
    N = 3000
    assert np.allclose(measures.bump_family(0.0, N).density(), 1.0)
    eps = 0.3
    rho = measures.bump_family(eps, N)
    inside = rho.grid.center_norms() < 1 / 3
    excess = rho.mass[inside].sum() - inside.mean()
    # excess mass of the bump region over uniform is eps |B| (1 - |B|)
    assert excess == pytest.approx(2 * eps / 9, abs=2 / N)
    with pytest.raises(ValueError):
        measures.bump_family(2.0, 64)


def test_bump_family_dinfty_linear_in_eps():
    ratios = []
    for eps in (0.1, 0.2, 0.4):
        D = dinfty.discrepancy_1d(measures.bump_family(eps, 600))
        ratios.append(D / 2 / eps)
    assert max(ratios) / min(ratios) < 1.05
    assert min(ratios) > 0.05


@pytest.mark.parametrize("M", [1, 2, 3])
@pytest.mark.parametrize("d", [1, 2])
def test_laplacian_family_invariants(M, d):
    eps = 0.1
    N = 160 if d == 1 else 96
    rho = measures.laplacian_family(eps, M, N, d)
    dens = rho.density()
    assert abs(math.fsum((dens - 1).ravel()) / rho.grid.size) < 1e-12
    assert np.abs(dens - 1).max() <= 1 + 1e-9
    assert dens.min() >= 0
    # support of rho - 1 inside B(0; eps) up to one cell of blur
    outside = rho.grid.center_norms() > eps + math.sqrt(d) / N
    assert np.abs(dens[outside] - 1).max() < 1e-12


def test_laplacian_under_resolved():
    with pytest.raises(ValueError, match="under-resolved"):
        measures.laplacian_family(0.05, 2, 64)


@pytest.mark.parametrize("M", [1, 2, 3])
@pytest.mark.parametrize("d", [1, 2])
def test_profile_moments_vanish(M, d):
    prof = measures.laplacian_profile(0.1, M, d, h=0.1 / 32)
    for alpha, m in prof.moments(2 * M - 1).items():
        assert abs(m) < 1e-7, (alpha, m)


def test_psi1_sign_pattern():
    eps = 0.1
    prof = measures.laplacian_profile(eps, 1, 1, h=eps / 200)
    x = prof.coords / eps
    core = prof.values[np.abs(x) < 0.2]
    shoulder = prof.values[(np.abs(x) > 0.85) & (np.abs(x) < 0.95)]
    # psi is concave at its peak, so -psi'' is positive there and negative on the flanks
    assert core.min() > 0
    assert shoulder.max() < 0
    # against a finite-difference second derivative of the mollifier
    f = measures.mollifier(x, 1)
    hy = x[1] - x[0]
    fd = -(np.roll(f, -1) - 2 * f + np.roll(f, 1)) / hy ** 2
    assert np.allclose(prof.values * eps, fd, atol=1e-8)


def test_regrid_roundtrip():
    rng = np.random.default_rng(2)
    rho = GridDensity.from_values(Grid(2, 8), rng.random((8, 8)))
    assert measures.regrid(rho, 8) is rho
    up = measures.regrid(rho, 16)
    assert math.fsum(up.mass.ravel()) == pytest.approx(1.0, abs=1e-15)


@given(st.integers(1, 2), st.integers(2, 20), st.integers(0, 2**32 - 1))
def test_density_json_roundtrip(d, N, seed):
    vals = np.random.default_rng(seed).random((N,) * d) + 1e-3
    rho = GridDensity.from_values(Grid(d, N), vals)
    back = GridDensity.from_json(rho.to_json())
    assert np.array_equal(back.mass, rho.mass)
