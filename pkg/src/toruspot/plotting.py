"""SVG figures for the experiment outputs."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import atomic_write_bytes  # noqa: E402

STYLE = {
    "font.family": "serif",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.0, 3.0),
    # fixed ids so reruns produce identical files
    "svg.hashsalt": "toruspot",
    "svg.fonttype": "none",
}


def save_svg(fig, path):
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return atomic_write_bytes(path, buf.getvalue())


def _loglog_fit(ax, x, y, label, marker):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    ok = (x > 0) & (y > 0)
    ax.loglog(x[ok], y[ok], marker, label=label)
    if ok.sum() >= 2:
        k, b = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
        xs = np.array([x[ok].min(), x[ok].max()])
        ax.loglog(xs, np.exp(b) * xs ** k, "k:", lw=0.8)
        return k
    return np.nan


def plot_scaling(result, path):
    """log-log norm and d-infinity lower bound against eps, with fitted slopes."""
    eps = [r.eps for r in result.rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        k1 = _loglog_fit(ax, eps, [r.norm for r in result.rows], "norm", "o-")
        k2 = _loglog_fit(ax, eps, [r.dinfty_lo for r in result.rows], r"$d_\infty$ lower bound", "s--")
        ax.set_xlabel(r"$\epsilon$")
        ax.set_title(f"d={result.d} p={result.p:g} s={result.s:g}: slopes {k1:.3f} (target {result.target:g}), {k2:.3f}")
        ax.legend(frameon=False)
        return save_svg(fig, path)


def plot_ueps(result, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        k = _loglog_fit(ax, result.eps, result.norms, r"$\|u_\epsilon\|_{L^q}$", "o-")
        ax.set_xlabel(r"$\epsilon$")
        ax.set_title(f"d={result.d} beta={result.beta:g} p={result.p:g}: slope {k:.3f} (target {result.target:g})")
        ax.legend(frameon=False)
        return save_svg(fig, path)


def plot_particles(X, path, title="", link: float | None = None, labels=None):
    """Scatter of particle positions on the unit torus drawn as [-1/2, 1/2)^2."""
    X = np.asarray(X)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.2, 3.2))
        y = X[:, 1] if X.shape[1] > 1 else np.zeros(len(X))
        if labels is None:
            ax.scatter(X[:, 0], y, s=4, c="C0", lw=0)
        else:
            ax.scatter(X[:, 0], y, s=4, c=labels % 20, cmap="tab20", vmin=0, vmax=19, lw=0)
        ax.set_xlim(-0.5, 0.5)
        ax.set_ylim(-0.5, 0.5)
        ax.set_aspect("equal")
        ax.set_xticks([-0.5, 0, 0.5])
        ax.set_yticks([-0.5, 0, 0.5])
        if link is not None:
            title = f"{title} (link {link:g})".strip()
        ax.set_title(title)
        return save_svg(fig, path)


def plot_energy(times, energies, path, title=""):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(times, energies, "-")
        ax.set_xlabel("t")
        ax.set_ylabel("discrete energy")
        ax.set_title(title)
        return save_svg(fig, path)


def plot_field(field, path, title=""):
    """Line plot (d = 1) or image (d = 2) of a grid field."""
    vals = field.values
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if field.d == 1:
            ax.plot(field.grid.axis_centers(), vals, "-")
            ax.set_xlabel("x")
        else:
            sl = vals if field.d == 2 else vals[..., vals.shape[-1] // 2]
            im = ax.imshow(np.fft.fftshift(sl).T, origin="lower", extent=(-0.5, 0.5, -0.5, 0.5))
            fig.colorbar(im, ax=ax)
        ax.set_title(title)
        return save_svg(fig, path)


def plot_stability(result, path):
    rows = [r for r in result.rows if r.energy > 0]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        E = np.array([r.energy for r in rows])
        ax.loglog(E, [r.hi for r in rows], "v", label="upper")
        ax.loglog(E, [max(r.lo, 1e-300) for r in rows], "^", label="lower")
        if len(E):
            ax.loglog(E, result.constant * E ** result.gamma, "k:", lw=0.8, label=r"$A E^\gamma$")
        ax.set_xlabel("energy")
        ax.set_ylabel(r"$d_\infty$ enclosure")
        ax.set_title(f"{result.family}: gamma={result.gamma:.3g}, A={result.constant:.3g}")
        ax.legend(frameon=False)
        return save_svg(fig, path)
