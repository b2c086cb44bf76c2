"""Figures for walk paths, convergence tables and exit-time tables."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .atlas import SphereAtlas  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 4.0),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "lines.linewidth": 0.9,
    "svg.hashsalt": "finslerwalk",
}
SAVE = {"metadata": {"Date": None}}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, **SAVE)
    plt.close(fig)
    return path


def plot_paths(paths, atlas, path):
    """Polylines of walk paths.

    Sphere paths are embedded in R^3 and drawn in orthographic projection on
    the x-z plane with the unit circle as outline; line paths are drawn
    against time; plane paths in their coordinates.
    """
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for p in paths:
            if isinstance(atlas, SphereAtlas):
                pts = atlas.embed(p.chart, p.x)
                ax.plot(pts[:, 0], pts[:, 2], label=f"path {p.path_id}")
            elif p.x.shape[-1] == 1:
                ax.step(p.t, p.x[:, 0], where="post", label=f"path {p.path_id}")
            else:
                ax.plot(p.x[:, 0], p.x[:, 1], label=f"path {p.path_id}")
        if isinstance(atlas, SphereAtlas):
            a = np.linspace(0, 2 * np.pi, 361)
            ax.plot(np.cos(a), np.sin(a), color="0.6", lw=0.6)
            ax.set_aspect("equal")
            ax.set_xlabel("x")
            ax.set_ylabel("z")
        elif paths and paths[0].x.shape[-1] == 1:
            ax.set_xlabel("t")
            ax.set_ylabel("x")
        else:
            ax.set_aspect("equal")
            ax.set_xlabel("x0")
            ax.set_ylabel("x1")
        if 0 < len(paths) <= 8:
            ax.legend(loc="best", fontsize=7)
        return _finish(fig, path)


def plot_convergence(table, path):
    """Log-log plot of the generator error against N with the fitted slope."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        Ns, err = np.asarray(table.Ns), np.asarray(table.errors)
        ax.loglog(Ns, err, "o-", label="sup error")
        if np.isfinite(table.slope) and np.all(err > 0):
            c = np.exp(np.mean(np.log(err) - table.slope * np.log(Ns)))
            ax.loglog(Ns, c * Ns**table.slope, "--", color="0.4", label=f"slope {table.slope:.3f}")
        ax.set_xlabel("N")
        ax.set_ylabel("sup |A_N f - A f|")
        ax.legend(loc="best")
        return _finish(fig, path)


def plot_exit(table, path):
    """Exit probabilities against t with Wilson intervals, one curve per radius."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for delta in sorted({r["delta"] for r in table.rows}):
            rows = table.probabilities(delta)
            t = np.array([r["t"] for r in rows])
            p = np.array([r["p"] for r in rows])
            lo = np.array([r["lo"] for r in rows])
            hi = np.array([r["hi"] for r in rows])
            line = ax.errorbar(t, p, yerr=[p - lo, hi - p], fmt="o", capsize=2, label=f"delta {delta:g}")
            C = table.fits.get(delta)
            if C is not None and np.isfinite(C):
                ax.plot(t, C * t, "--", color=line[0].get_color())
        ax.set_xlabel("t")
        ax.set_ylabel("P(tau <= t)")
        ax.legend(loc="best")
        return _finish(fig, path)
