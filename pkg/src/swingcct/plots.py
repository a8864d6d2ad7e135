"""Geometry export: per-machine set polylines as CSV and SVG renderings.

Each machine gets one figure showing its angle slab, the admissible-set and
MRPI boundaries, the pre- and post-fault equilibrium projections, and the
projected fault-on trajectory with crossing-time markers.  An empty MRPI is
annotated instead of drawn.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .cct import CctReport, PreparedScenario, _project
from .dynamics import Trajectory
from .model import Scenario
from .safety_sets import SafetySet


def _write_polyline(path, points):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["z1", "z2"])
        for z1, z2 in points:
            w.writerow([f"{z1:.12g}", f"{z2:.12g}"])


def export_geometry(sets, out_dir, scenario: Scenario,
                    traj: Trajectory | None = None,
                    cct_report: CctReport | None = None,
                    prep: PreparedScenario | None = None) -> list:
    """Write set polylines (CSV) and per-machine SVG figures; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    m = scenario.m
    for i, (adm, mrpi) in enumerate(sets):
        tag = f"machine_{i + 1}"
        for sset, kind in ((adm, "admissible"), (mrpi, "mrpi")):
            if not sset.empty:
                path = out / f"{tag}_{kind}.csv"
                closed = np.vstack([sset.boundary, sset.boundary[:1]])
                _write_polyline(path, closed)
                written.append(path)
        written.append(_render_machine(out / f"{tag}.svg", i, adm, mrpi,
                                       scenario, traj, cct_report, prep))
    if traj is not None:
        path = out / "fault_trajectory.csv"
        traj.to_csv(path)
        written.append(path)
    return [str(p) for p in written]


def _render_machine(path, i, adm: SafetySet, mrpi: SafetySet,
                    scenario: Scenario, traj, cct_report, prep):
    lo = float(scenario.bounds.lower[i])
    hi = float(scenario.bounds.upper[i])
    cap = adm.z2_cap if not adm.empty else (mrpi.z2_cap if not mrpi.empty
                                            else scenario.solver.z2_cap)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.axvline(lo, color="0.3", lw=1.2, ls="--", label="slab")
    ax.axvline(hi, color="0.3", lw=1.2, ls="--")

    def draw(sset, color, label):
        if sset.empty:
            return
        poly = np.vstack([sset.boundary, sset.boundary[:1]])
        ax.fill(poly[:, 0], poly[:, 1], color=color, alpha=0.15)
        ax.plot(poly[:, 0], poly[:, 1], color=color, lw=1.5, label=label)

    draw(adm, "tab:blue", "admissible set")
    draw(mrpi, "tab:green", "MRPI")
    if mrpi.empty:
        ax.annotate("MRPI empty", xy=(0.02, 0.95), xycoords="axes fraction",
                    color="tab:green")

    if prep is not None:
        ax.plot([prep.eq_pre[i]], [0.0], "k^", ms=6, label="pre-fault equilibrium")
        ax.plot([prep.eq_post[i]], [0.0], "kv", ms=6, label="post-fault equilibrium")

    if traj is not None:
        center = 0.5 * (lo + hi)
        proj = _project(traj, i, scenario.m, center)
        ts = np.linspace(traj.t0, traj.t1, 600)
        pts = np.array([proj(float(t)) for t in ts])
        ax.plot(pts[:, 0], pts[:, 1], color="tab:red", lw=1.0,
                label="fault-on trajectory")
        if cct_report is not None:
            times = cct_report.times[i]
            for t_cross, marker, lbl in ((times.t_mrpi, "o", "MRPI crossing"),
                                         (times.t_adm, "s", "admissible crossing")):
                if 0.0 < t_cross < math.inf and t_cross <= traj.t1:
                    z = proj(t_cross)
                    ax.plot([z[0]], [z[1]], marker, color="tab:red", mfc="none",
                            ms=9, label=f"{lbl} (t={t_cross:.3f}s)")

    pad = 0.1 * (hi - lo)
    ax.set_xlim(lo - pad, hi + pad)
    ax.set_ylim(-1.05 * cap, 1.05 * cap)
    ax.set_xlabel("angle (rad)")
    ax.set_ylabel("angular velocity (rad/s)")
    ax.set_title(f"G{i + 1} safety sets")
    ax.legend(loc="lower left", fontsize=8)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
