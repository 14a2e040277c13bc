"""Figures written next to the CSV reports."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

# keeps PNG bytes stable across runs
_METADATA = {"Software": None}


def _save(fig, path):
    fig.savefig(path, metadata=_METADATA)
    plt.close(fig)


def plot_trajectory(traj, path, title=None):
    """States on top, applied input below."""
    with plt.rc_context(STYLE):
        fig, (ax_x, ax_u) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 4.2))
        t = [r.t for r in traj.rows]
        ax_x.plot(t, [r.x1 for r in traj.rows], label="$x_1$")
        ax_x.plot(t, [r.x2 for r in traj.rows], label="$x_2$")
        ax_x.set_ylabel("state")
        ax_x.legend(loc="upper right")
        ax_u.step(t, [r.u_decoded for r in traj.rows], where="post", color="k")
        ax_u.set_ylabel("input $u$")
        ax_u.set_xlabel("time [s]")
        fig.suptitle(title or f"closed loop, {traj.scheme}")
        _save(fig, path)


def plot_bench(rows, path):
    """Grouped bars of per-step modular operations and messages for each scheme and role."""
    roles = ["distributor", "server", "collector"]
    schemes = sorted({r["scheme"] for r in rows})
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(8.0, 2.8))
        width = 0.8 / max(len(schemes), 1)
        for ax, key in zip(axes, ("muls", "adds", "messages")):
            for i, scheme in enumerate(schemes):
                vals = [next((r[key] for r in rows if r["scheme"] == scheme and r["role"] == role), 0)
                        for role in roles]
                ax.bar([k + i * width for k in range(len(roles))], vals, width, label=scheme)
            ax.set_xticks([k + width * (len(schemes) - 1) / 2 for k in range(len(roles))])
            ax.set_xticklabels(roles, rotation=20)
            ax.set_title(f"{key} per step")
        axes[0].legend()
        fig.tight_layout()
        _save(fig, path)
