"""Figure rendering for the report path.

Everything goes through the Agg backend straight to PNG files; the pipeline
lists whatever was emitted in the manifest.  Figures are a convenience view
of the tables, never the other way around: nothing here feeds a verdict.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["render_all"]


def _save(fig, path, paths):
    fig.savefig(path, dpi=110)
    plt.close(fig)
    paths.append(path)


def _axis_values(grid):
    return grid.axes[0]


def fig_critical(path, estimates, paths):
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    labels = [m for m, _v, _u in estimates]
    values = [v for _m, v, _u in estimates]
    errs = [u for _m, _v, u in estimates]
    ax.errorbar(range(len(values)), values, yerr=errs, fmt="o", capsize=4)
    ax.set_xticks(range(len(values)), labels, rotation=15, fontsize=8)
    ax.axhline(0.0, color="0.8", lw=0.8, zorder=0)
    ax.set_ylabel("critical value")
    ax.set_title("critical value estimates")
    fig.tight_layout()
    _save(fig, path, paths)


def fig_distance(path, grid, dset, k_mid, paths):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    if grid.dim == 1:
        x = _axis_values(grid)
        step = max(1, len(dset.sources) // 8)
        for k in range(0, len(dset.sources), step):
            ax.plot(x, dset.values[k], lw=0.7, color="0.7")
        if k_mid is not None:
            ax.plot(x, dset.values[k_mid], lw=1.8, color="C0", label="source at center")
            ax.legend(fontsize=8)
        ax.set_xlabel("x")
        ax.set_ylabel("d(x, y)")
        ax.set_title("Mane distance fields")
    else:
        k = k_mid if k_mid is not None else 0
        im = ax.imshow(dset.values[k].T, origin="lower", extent=(0, 1, 0, 1), aspect="equal")
        fig.colorbar(im, ax=ax, label="d(x, center)")
        ax.set_title("Mane distance from the center source")
    fig.tight_layout()
    _save(fig, path, paths)


def fig_aubry(path, grid, aubry, paths):
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    pos = grid.positions
    pts = np.array([pos[tuple(s)] for s in aubry.sources])
    flags = aubry.flags.astype(bool)
    if grid.dim == 1:
        ax.plot(pts[:, 0], aubry.residuals, ".", ms=3, color="0.6", label="residual")
        ax.plot(pts[flags, 0], aubry.residuals[flags], "o", ms=4, color="C3", label="flagged")
        ax.axhline(-aubry.tol, color="C3", lw=0.8, ls="--", label="-tol")
        ax.set_xlabel("source x")
        ax.set_ylabel("cone-apex residual")
        ax.legend(fontsize=8)
    else:
        ax.plot(pts[~flags, 0], pts[~flags, 1], ".", ms=3, color="0.7")
        ax.plot(pts[flags, 0], pts[flags, 1], "o", ms=5, color="C3")
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_title(f"Aubry membership ({int(np.sum(flags))}/{len(aubry.sources)} flagged)")
    fig.tight_layout()
    _save(fig, path, paths)


def fig_evolution(path, grid, run, paths):
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    times = run.snap_times
    if grid.dim == 1:
        x = _axis_values(grid)
        cmap = plt.get_cmap("viridis")
        for i, t in enumerate(times):
            ax.plot(x, run.value_at(t), lw=0.9, color=cmap(i / max(1, len(times) - 1)))
        ax.set_xlabel("x")
        ax.set_ylabel("u(x, t)")
        ax.set_title("evolution snapshots (dark = early)")
    else:
        im = ax.imshow(run.value_at(times[-1]).T, origin="lower", extent=(0, 1, 0, 1), aspect="equal")
        fig.colorbar(im, ax=ax, label=f"u(., {times[-1]:g})")
        ax.set_title("final snapshot")
    fig.tight_layout()
    _save(fig, path, paths)


def fig_profiles(path, grid, bundle, paths):
    fig, ax = plt.subplots(figsize=(5.4, 3.4))
    fields = [("u0_minus", bundle.u0_minus), ("ud_minus", bundle.ud_minus),
              ("u_minus(0)", bundle.u_minus_at0), ("u0_inf", bundle.u0_inf),
              ("ud_inf", bundle.ud_inf), ("u_inf", bundle.u_inf)]
    if grid.dim == 1:
        x = _axis_values(grid)
        for i, (label, gf) in enumerate(fields):
            ls = "-" if i < 3 else "--"
            ax.plot(x, gf.values, ls, lw=1.1, label=label)
        ax.set_xlabel("x")
        ax.legend(fontsize=7, ncols=2)
        ax.set_title("floor and limit profiles, three routes each")
    else:
        mid = grid.shape[1] // 2
        x = _axis_values(grid)
        for i, (label, gf) in enumerate(fields):
            ls = "-" if i < 3 else "--"
            ax.plot(x, gf.values[:, mid], ls, lw=1.1, label=label)
        ax.set_xlabel("x (slice at mid y)")
        ax.legend(fontsize=7, ncols=2)
        ax.set_title("profiles on the midline")
    fig.tight_layout()
    _save(fig, path, paths)


def fig_gap(path, gap_series, threshold, paths):
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ts = [t for t, g in gap_series if g > 0]
    gs = [g for _t, g in gap_series if g > 0]
    if gs:
        ax.semilogy(ts, gs, "o-", ms=3, lw=0.9)
    else:
        ax.plot([t for t, _g in gap_series], [g for _t, g in gap_series], "o-", ms=3, lw=0.9)
    ax.axhline(threshold, color="C3", lw=0.8, ls="--", label="threshold")
    ax.set_xlabel("t")
    ax.set_ylabel("sup |u + c t - limit|")
    ax.legend(fontsize=8)
    ax.set_title("long-time convergence gap")
    fig.tight_layout()
    _save(fig, path, paths)


def fig_trajectory(path, traj, paths):
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    if traj.dim == 1:
        ax.plot(traj.t_mesh, traj.eta[:, 0], lw=1.0)
        steps = traj.t_mesh[:-1]
        ax.step(steps, traj.l, where="post", lw=0.8, color="C3", label="multiplier l")
        ax.set_xlabel("t")
        ax.set_ylabel("position / multiplier")
        ax.legend(fontsize=8)
    else:
        ax.plot(traj.eta[:, 0], traj.eta[:, 1], lw=1.0)
        ax.plot(traj.eta[0, 0], traj.eta[0, 1], "o", color="C2")
        ax.set_aspect("equal")
        ax.set_xlabel("x")
        ax.set_ylabel("y")
    ax.set_title("sample reflected trajectory")
    fig.tight_layout()
    _save(fig, path, paths)


def fig_scaling(path, report, paths):
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.loglog(report.deltas, report.omega1, "o-", label="empirical")
    if report.closed_omega1 is not None:
        ax.loglog(report.deltas, report.closed_omega1, "s--", label="closed form")
    ax.set_xlabel("delta")
    ax.set_ylabel("omega_1(delta)")
    ax.legend(fontsize=8)
    ax.set_title("scaling excess trend")
    fig.tight_layout()
    _save(fig, path, paths)


def render_all(out_dir, *, grid, estimates, dset, k_mid, aubry, run, bundle,
               gap_series, threshold, traj, scaling_report) -> list:
    """Render every figure the run's data supports; return emitted paths."""
    paths = []
    fig_critical(out_dir / "critical.png", estimates, paths)
    fig_distance(out_dir / "distance.png", grid, dset, k_mid, paths)
    fig_aubry(out_dir / "aubry.png", grid, aubry, paths)
    fig_evolution(out_dir / "evolution.png", grid, run, paths)
    fig_profiles(out_dir / "profiles.png", grid, bundle, paths)
    fig_gap(out_dir / "gap.png", gap_series, threshold, paths)
    fig_trajectory(out_dir / "trajectory.png", traj, paths)
    if scaling_report is not None:
        fig_scaling(out_dir / "scaling.png", scaling_report, paths)
    return paths
