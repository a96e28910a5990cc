"""Independent reference computations used only by the test-suite."""

import itertools
import math

import mpmath as mp
import numpy as np
from scipy import special

from toruspot.torus import pairwise_torus_dist


def lattice_cosine_sum(x, sigma):
    """sum_{k != 0} |k|^-sigma exp(2 pi i k x) in d = 1, via the polylogarithm."""
    z = mp.exp(2j * mp.pi * mp.mpf(x))
    return 2.0 * float(mp.re(mp.polylog(sigma, z)))


def bessel_row(y, a, sigma):
    """Fourier transform of t -> (t^2 + a^2)^(-sigma/2) at frequency y != 0."""
    y = np.abs(y)
    nu = (sigma - 1) / 2
    return (2.0 * math.pi ** (sigma / 2) / math.gamma(sigma / 2)
            * (y / a) ** nu * special.kv(nu, 2.0 * math.pi * a * y))


def riesz_series(x, s, tol=1e-12):
    """sum_{k != 0} |k|^(s-d) exp(2 pi i k.x) by resumming one coordinate.

    The coordinate with the largest |x_i| is summed in closed form: the row
    with all other components zero is a 1D polylog sum, every other row is
    turned by Poisson summation into a rapidly decaying Bessel-K series.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x = x - np.rint(x)
    d = x.size
    sigma = d - s
    if d == 1:
        return lattice_cosine_sum(x[0], sigma)
    ax = int(np.argmax(np.abs(x)))
    x1 = abs(x[ax])
    rest = np.delete(x, ax)
    total = lattice_cosine_sum(x1, sigma)
    # rows k' != 0 decay like exp(-2 pi |k'| x1)
    amax = (-math.log(tol) + 10) / (2 * math.pi * x1)
    R = int(math.ceil(amax))
    ks = np.array(list(itertools.product(range(-R, R + 1), repeat=d - 1)), dtype=float)
    a = np.sqrt(np.sum(ks * ks, axis=1))
    keep = (a > 0) & (a <= amax)
    ks, a = ks[keep], a[keep]
    m = np.arange(-8, 9)
    ys = m[None, :] - x1
    rows = bessel_row(ys, a[:, None], sigma).sum(axis=1)
    total += float(np.sum(np.cos(2 * math.pi * ks @ rest) * rows))
    return total


def bottleneck_oracle(xs, ys):
    dist = pairwise_torus_dist(xs, ys)
    n = dist.shape[0]
    return min(max(dist[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def expand_bruteforce(mask, r):
    """Direct double loop over all cell pairs (small grids only)."""
    N = mask.shape[0]
    d = mask.ndim
    cells = list(itertools.product(range(N), repeat=d))
    members = [c for c in cells if mask[c]]
    out = np.zeros_like(mask)
    for c in cells:
        for m in members:
            diff = (np.array(c) - np.array(m)) / N
            diff -= np.rint(diff)
            if math.sqrt(float(np.sum(diff * diff))) < r * (1 - 1e-12):
                out[c] = True
                break
    return out
