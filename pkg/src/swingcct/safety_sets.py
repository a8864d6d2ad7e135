"""Admissible sets and maximal robust positively invariant sets per machine.

Each decoupled machine lives in a planar slab  [lower_i, upper_i] x R  and is
driven by its neighbors' angles, constrained to boxes.  Because the input
enters the acceleration through bounded sine terms, two extremal feedbacks
bracket every input signal:

  * helpful  -- pointwise maximizer of the acceleration (per neighbor, the
    box angle minimizing sin(z1 - u)),
  * harmful  -- pointwise minimizer of the acceleration.

The boundaries of both safety sets are system trajectories integrated
backward in time from the ultimate tangentiality points (bound, 0), where
tangency to a vertical constraint line forces zero velocity:

  * admissible set: the upper-corner curve runs under maximal braking
    (harmful) and the lower-corner curve under maximal thrust (helpful) --
    states beyond them cannot avoid the respective bound for any input;
  * MRPI: the corners swap roles -- the upper curve runs under the worst
    upward push (helpful) and the lower under the worst downward push
    (harmful), so states inside survive every input signal.

The sets are assembled as polygons (curves plus constraint-line and
velocity-cap closure segments) and validated against a brute-force grid
oracle that simulates the extremal closed loops directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from shapely.geometry import (LineString, MultiPolygon, Point, Polygon,
                              box as shapely_box)
from shapely.geometry.polygon import orient
from shapely.ops import split

from .dynamics import IntegrationError, MachineModel
from .model import Bounds, SolverSettings

TWO_PI = 2.0 * math.pi

ADMISSIBLE = "admissible"
MRPI = "mrpi"

HELPFUL = "helpful"   # maximize the acceleration pointwise
HARMFUL = "harmful"   # minimize the acceleration pointwise


class AmbiguousTopologyError(RuntimeError):
    """Barrier curves produced a set whose topology needs manual inspection."""


# ---------------------------------------------------------------------------
# extremal inputs
# ---------------------------------------------------------------------------

def _interval_has(target, a, b):
    """Whether target + 2*pi*k lies in [a, b] for some integer k."""
    k = np.floor((b - target) / TWO_PI)
    return target + TWO_PI * k >= a


def extremal_input(machine: MachineModel, z1: float, mode: str) -> np.ndarray:
    """Neighbor angles extremizing the acceleration at angle z1.

    Per neighbor the extremum of sin(z1 - u) over the box is attained at a
    box endpoint or at the interior angle where z1 - u hits -pi/2 (helpful)
    or +pi/2 (harmful) modulo 2*pi, when that argument is attainable.
    """
    if mode not in (HELPFUL, HARMFUL):
        raise ValueError(f"unknown input mode {mode!r}")
    target = -math.pi / 2 if mode == HELPFUL else math.pi / 2
    u = np.empty(machine.n_neighbors)
    for j, (lo, hi) in enumerate(zip(machine.u_lower, machine.u_upper)):
        a, b = z1 - hi, z1 - lo
        if _interval_has(target, a, b):
            k = math.floor((b - target) / TWO_PI)
            u[j] = z1 - (target + TWO_PI * k)
        else:
            vals = (math.sin(a), math.sin(b))
            pick = vals.index(min(vals)) if mode == HELPFUL else vals.index(max(vals))
            u[j] = hi if pick == 0 else lo
    return u


def extremal_coupling(machine: MachineModel, z1, mode: str):
    """Sum over neighbors of K_j * extremal sin(z1 - u_j); vectorized in z1.

    helpful returns the pointwise minimum of the coupling sum (largest
    acceleration), harmful the maximum.
    """
    z1 = np.asarray(z1, dtype=float)
    target = -math.pi / 2 if mode == HELPFUL else math.pi / 2
    total = np.zeros_like(z1)
    for kj, lo, hi in zip(machine.k, machine.u_lower, machine.u_upper):
        a = z1 - hi
        b = z1 - lo
        ends = np.sin(a), np.sin(b)
        ext = np.minimum(*ends) if mode == HELPFUL else np.maximum(*ends)
        hit = _interval_has(target, a, b)
        total += kj * np.where(hit, math.sin(target), ext)
    return total


def closed_loop_rhs(machine: MachineModel, mode: str):
    """Planar RHS under the extremal feedback of the given mode."""
    def rhs(z):
        cpl = extremal_coupling(machine, z[0], mode)
        return np.array([z[1], machine.p - cpl - machine.d * z[1]])
    return rhs


def _switching_loci(machine: MachineModel, z_lo: float, z_hi: float) -> np.ndarray:
    """Angles where a neighbor's extremizing input changes branch.

    These are the kinks of the extremal coupling: where the +-pi/2 interior
    argument enters or leaves a box, and where the two endpoint values tie.
    """
    loci = set()
    for lo, hi in zip(machine.u_lower, machine.u_upper):
        for target in (-math.pi / 2, math.pi / 2):
            for base in (lo + target, hi + target):
                k0 = math.floor((z_lo - base) / TWO_PI)
                for k in range(int(k0), int(k0 + (z_hi - z_lo) / TWO_PI) + 2):
                    s = base + TWO_PI * k
                    if z_lo < s < z_hi:
                        loci.add(s)
        # endpoint tie: sin(z - hi) = sin(z - lo)  =>  z = (lo+hi+pi)/2 + pi*k
        base = 0.5 * (lo + hi + math.pi)
        k0 = math.floor((z_lo - base) / math.pi)
        for k in range(int(k0), int(k0 + (z_hi - z_lo) / math.pi) + 2):
            s = base + math.pi * k
            if z_lo < s < z_hi:
                loci.add(s)
    return np.array(sorted(loci))


# ---------------------------------------------------------------------------
# barrier curves
# ---------------------------------------------------------------------------

@dataclass
class BarrierCurve:
    corner: str                 # "upper" | "lower"
    mode: str                   # input mode along the curve
    points: np.ndarray          # polyline from the tangency point, shape (n, 2)
    stop_reason: str            # exited_slab | z2_cap | horizon | closed
    max_abs_z2: float


def barrier_curve(machine: MachineModel, bounds: Bounds, corner: str, mode: str,
                  settings: SolverSettings = SolverSettings(),
                  z2_cap: float | None = None) -> BarrierCurve:
    """Backward-integrate one barrier curve from its ultimate tangentiality point.

    Integration restarts at every feedback-switching locus and stops when the
    curve leaves the angle slab, exceeds the velocity cap, exhausts the
    backward horizon, or returns to its starting point.
    """
    i = machine.index
    z_lo, z_hi = float(bounds.lower[i]), float(bounds.upper[i])
    cap = float(z2_cap if z2_cap is not None else settings.z2_cap)
    start = np.array([z_hi if corner == "upper" else z_lo, 0.0])
    rhs = closed_loop_rhs(machine, mode)

    def backward(t, z):
        return -rhs(z)

    close_tol = 1e-4 * (z_hi - z_lo)
    loci = _switching_loci(machine, z_lo - 0.1, z_hi + 0.1)
    pad = 1e-9 * max(1.0, z_hi - z_lo)

    def make_events():
        evts = []
        def ev_left(t, z): return z[0] - (z_lo - pad)
        def ev_right(t, z): return z[0] - (z_hi + pad)
        def ev_up(t, z): return z[1] - cap
        def ev_down(t, z): return z[1] + cap
        for ev in (ev_left, ev_right, ev_up, ev_down):
            ev.terminal = True
            evts.append(ev)
        for s in loci:
            def ev_s(t, z, s=s): return z[0] - s
            ev_s.terminal = True
            evts.append(ev_s)
        return evts

    events = make_events()
    pts = [start.copy()]
    z = start.copy()
    t = 0.0
    stop = "horizon"
    max_abs_z2 = 0.0
    left_start = False
    while t < settings.backward_horizon_s:
        sol = solve_ivp(backward, (t, settings.backward_horizon_s), z,
                        method="RK45", dense_output=True,
                        rtol=settings.rel_tol, atol=settings.abs_tol,
                        events=events, max_step=0.05)
        if not sol.success:
            raise IntegrationError(f"barrier curve failed: {sol.message}")
        seg_t = np.linspace(sol.t[0], sol.t[-1], max(8, 4 * len(sol.t)))
        seg = sol.sol(seg_t).T
        pts.extend(seg[1:])
        max_abs_z2 = max(max_abs_z2, float(np.abs(seg[:, 1]).max()))
        dist = np.hypot(seg[:, 0] - start[0], seg[:, 1] - start[1])
        if left_start and dist.min() < close_tol:
            stop = "closed"
            break
        if dist.max() > 10 * close_tol:
            left_start = True

        t = float(sol.t[-1])
        z = seg[-1].copy()
        hit = [k for k, te in enumerate(sol.t_events) if len(te)]
        if any(k < 2 for k in hit):
            stop = "exited_slab"
            break
        if any(k in (2, 3) for k in hit):
            stop = "z2_cap"
            break
        if hit:
            # feedback switch: nudge across the locus and restart
            z = z + 1e-10 * np.sign(backward(t, z))
            continue
        if sol.status == 0:
            stop = "horizon"
            break
    arr = np.array(pts)
    return BarrierCurve(corner=corner, mode=mode, points=arr,
                        stop_reason=stop, max_abs_z2=max_abs_z2)


# ---------------------------------------------------------------------------
# set assembly
# ---------------------------------------------------------------------------

@dataclass
class SafetySet:
    """Polygonal admissible set or MRPI of one machine."""

    machine_index: int
    kind: str
    boundary: np.ndarray | None        # closed polygon vertices, shape (n, 2)
    empty: bool
    z_lower: float
    z_upper: float
    z2_cap: float
    log: dict = field(default_factory=dict)

    @property
    def area(self) -> float:
        return 0.0 if self.empty else shoelace_area(self.boundary)


def shoelace_area(poly: np.ndarray) -> float:
    """Absolute polygon area by the shoelace formula."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _curve_modes(kind: str) -> dict:
    if kind == ADMISSIBLE:
        return {"upper": HARMFUL, "lower": HELPFUL}
    if kind == MRPI:
        return {"upper": HELPFUL, "lower": HARMFUL}
    raise ValueError(f"unknown set kind {kind!r}")


def _splitter(curve: BarrierCurve, z_lo, z_hi, cap) -> LineString:
    """Barrier curve as a box-splitting line, endpoints nudged outside."""
    pts = curve.points.copy()
    eps = 0.01 * ((z_hi - z_lo) + 2 * cap)
    # the curve starts on the slab edge; extend it horizontally outward
    first = pts[0] + (np.array([eps, 0.0]) if curve.corner == "upper"
                      else np.array([-eps, 0.0]))
    d = pts[-1] - pts[-2]
    norm = float(np.hypot(*d))
    last = pts[-1] + (d / norm * eps if norm > 0 else 0.0)
    return LineString(np.vstack([first, pts, last]))


def assemble_set(machine: MachineModel, bounds: Bounds, kind: str,
                 settings: SolverSettings = SolverSettings(),
                 probe: np.ndarray | None = None) -> SafetySet:
    """Compose the barrier curves into the admissible set or MRPI polygon.

    ``probe`` is a point expected inside a nonempty set (the post-fault
    equilibrium projection); it robustifies emptiness detection.  Emptiness
    is declared when the composed region has (near) zero area or the probe
    falls outside; a disagreement between the two raises
    AmbiguousTopologyError rather than guessing.
    """
    i = machine.index
    z_lo, z_hi = float(bounds.lower[i]), float(bounds.upper[i])
    modes = _curve_modes(kind)

    # ultimate tangentiality: a barrier can only leave the upper corner if
    # the mode acceleration there is non-positive (non-negative at the lower
    # corner).  A violated corner means the face cannot be ultimately
    # satisfied at rest, which empties the set outright.
    acc_hi = machine.p - float(extremal_coupling(machine, z_hi, modes["upper"]))
    acc_lo = machine.p - float(extremal_coupling(machine, z_lo, modes["lower"]))
    corner_tol = 1e-9 * max(1.0, abs(machine.p) + machine.k.sum())
    invalid = []
    if acc_hi > -corner_tol:
        invalid.append(("upper", acc_hi))
    if acc_lo < corner_tol:
        invalid.append(("lower", acc_lo))
    degenerate = [c for c, a in invalid if abs(a) <= corner_tol]
    if degenerate and kind == ADMISSIBLE:
        # a degenerate admissible corner would make an emptied set unsound
        # (the set is only allowed to shrink for the MRPI, whose emptiness
        # errs on the safe side)
        raise AmbiguousTopologyError(
            f"machine {i + 1} admissible set: degenerate tangency at "
            f"{degenerate} corner (extremal acceleration vanishes)"
        )
    if invalid:
        log = {
            "tangency_points": {"upper": [z_hi, 0.0], "lower": [z_lo, 0.0]},
            "modes": modes,
            "invalid_corners": {c: a for c, a in invalid},
            "z2_cap": float(settings.z2_cap),
        }
        return SafetySet(machine_index=i, kind=kind, boundary=None, empty=True,
                         z_lower=z_lo, z_upper=z_hi,
                         z2_cap=float(settings.z2_cap), log=log)

    # provisional curves set the velocity cap: 4x the largest speed reached
    # before a slab exit, floored at the configured cap
    curves = {c: barrier_curve(machine, bounds, c, modes[c], settings,
                               z2_cap=max(settings.z2_cap, 100.0))
              for c in ("upper", "lower")}
    cap = max(settings.z2_cap,
              4.0 * max(c.max_abs_z2 for c in curves.values()
                        if c.stop_reason == "exited_slab") if
              any(c.stop_reason == "exited_slab" for c in curves.values()) else 0.0)

    log = {
        "tangency_points": {"upper": [z_hi, 0.0], "lower": [z_lo, 0.0]},
        "modes": modes,
        "stop_reasons": {c: curves[c].stop_reason for c in curves},
        "z2_cap": cap,
    }

    box = shapely_box(z_lo, -cap, z_hi, cap)
    if probe is None:
        # slab midpoint at rest: interior whenever the set is nonempty in
        # every scenario this artifact targets
        probe = np.array([0.5 * (z_lo + z_hi), 0.0])
        log["probe"] = "slab midpoint (none supplied)"
    pt = Point(float(probe[0]), float(probe[1]))
    if not box.contains(pt):
        raise AmbiguousTopologyError(
            f"machine {i + 1} {kind}: probe {probe} outside the state box")

    # each barrier curve splits the box; keep the probe's side per face,
    # then intersect the per-face survivors
    region = box
    for c in curves.values():
        if c.stop_reason == "closed":
            piece = Polygon(c.points).buffer(0).intersection(box)
            log["closed_curve"] = c.corner
            if not piece.contains(pt):
                region = Polygon()
                break
            region = region.intersection(piece)
            continue
        if c.stop_reason == "horizon":
            # curve ends mid-interior without separating the box; the face
            # stays unconstrained rather than guessed
            log.setdefault("unconstrained_faces", []).append(c.corner)
            continue
        pieces = split(box, _splitter(c, z_lo, z_hi, cap))
        hits = [g for g in pieces.geoms if g.contains(pt)]
        if len(hits) != 1:
            raise AmbiguousTopologyError(
                f"machine {i + 1} {kind}: probe {probe} lies on the "
                f"{c.corner} barrier curve")
        region = region.intersection(hits[0])

    parts = [g for g in (region.geoms if isinstance(region, MultiPolygon)
                         else [region])
             if isinstance(g, Polygon) and not g.is_empty]
    area_tol = 1e-6 * (z_hi - z_lo) * 2 * cap
    chosen = next((g for g in parts if g.area > area_tol and g.contains(pt)),
                  None)

    if chosen is None:
        return SafetySet(machine_index=i, kind=kind, boundary=None, empty=True,
                         z_lower=z_lo, z_upper=z_hi, z2_cap=cap, log=log)

    chosen = orient(chosen.simplify(1e-9), sign=1.0)
    verts = np.asarray(chosen.exterior.coords)[:-1]
    return SafetySet(machine_index=i, kind=kind, boundary=verts, empty=False,
                     z_lower=z_lo, z_upper=z_hi, z2_cap=cap, log=log)


# ---------------------------------------------------------------------------
# membership and area
# ---------------------------------------------------------------------------

def contains_many(sset: SafetySet, points: np.ndarray,
                  tol_band: float | None = None):
    """Even-odd containment for an array of points, shape (n, 2).

    Returns (inside, on_boundary); points within tol_band of the boundary
    are flagged in ``on_boundary`` (their ``inside`` value is still the
    raw even-odd result).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if sset.empty:
        z = np.zeros(len(pts), dtype=bool)
        return z, z.copy()
    poly = sset.boundary
    if tol_band is None:
        tol_band = 0.01 * (sset.z_upper - sset.z_lower)

    ax, ay = poly[:, 0], poly[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    dx, dy = bx - ax, by - ay
    L2 = np.maximum(dx * dx + dy * dy, 1e-300)

    inside = np.zeros(len(pts), dtype=bool)
    dist2 = np.full(len(pts), np.inf)
    # broadcast points against all edges at once, chunked to bound memory
    chunk = max(1, int(2e6) // len(poly))
    for s in range(0, len(pts), chunk):
        x = pts[s:s + chunk, 0][:, None]
        y = pts[s:s + chunk, 1][:, None]
        crosses = (ay > y) != (by > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (y - ay) * dx / np.where(dy == 0.0, np.inf, dy)
        inside[s:s + chunk] = np.logical_xor.reduce(crosses & (x < xint), axis=1)
        t = np.clip(((x - ax) * dx + (y - ay) * dy) / L2, 0.0, 1.0)
        d2 = (x - (ax + t * dx)) ** 2 + (y - (ay + t * dy)) ** 2
        dist2[s:s + chunk] = d2.min(axis=1)
    on_boundary = dist2 <= tol_band * tol_band
    return inside, on_boundary


def contains(sset: SafetySet, point, tol_band: float | None = None) -> bool:
    """Even-odd membership of a single planar point; False for empty sets."""
    inside, _ = contains_many(sset, np.asarray(point, dtype=float)[None, :], tol_band)
    return bool(inside[0])


def volume(sset: SafetySet) -> float:
    """Polygon area (rad * rad/s); zero for empty sets."""
    return sset.area


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

@dataclass
class OracleGrid:
    z1: np.ndarray            # grid axis, angles
    z2: np.ndarray            # grid axis, velocities
    inside: np.ndarray        # boolean labels, shape (len(z2), len(z1))
    kind: str
    machine_index: int


def _coupling_table(machine: MachineModel, z_lo, z_hi, mode, n=4096):
    margin = 0.05 * (z_hi - z_lo) + 1e-6
    grid = np.linspace(z_lo - margin, z_hi + margin, n)
    return grid, extremal_coupling(machine, grid, mode)


def _simulate_face(machine, z1, z2, z_lo, z_hi, mode, face, horizon,
                   until_turn, dt=None):
    """Vectorized closed-loop simulation of one extremal feedback.

    Returns a boolean "survived" array: the trajectory never violated the
    given face ("upper": z1 > z_hi, "lower": z1 < z_lo).  With
    ``until_turn`` the check only runs until the velocity changes sign
    toward the interior (sufficient for the admissible set's face test);
    otherwise it runs for the whole horizon.
    """
    tab_x, tab_y = _coupling_table(machine, z_lo, z_hi, mode)
    p, d = machine.p, machine.d
    scale = max(1.0, d, math.sqrt(abs(p) + machine.k.sum() + 1e-12))
    if dt is None:
        dt = min(2e-3, 0.25 / scale)
    n_steps = int(math.ceil(horizon / dt))

    ok = np.ones(z1.shape, dtype=bool)
    # only still-active points are advanced; finished ones are dropped so the
    # per-step cost shrinks as the grid resolves
    idx = np.arange(z1.size)
    x = z1.copy()
    v = z2.copy()

    def acc(xx, vv):
        return p - np.interp(xx, tab_x, tab_y) - d * vv

    for _ in range(n_steps):
        if idx.size == 0:
            break
        k1x, k1v = v, acc(x, v)
        k2x, k2v = v + 0.5 * dt * k1v, acc(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k3x, k3v = v + 0.5 * dt * k2v, acc(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k4x, k4v = v + dt * k3v, acc(x + dt * k3x, v + dt * k3v)
        x = x + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)

        if face == "upper":
            viol = x > z_hi
            turned = v <= 0.0
        else:
            viol = x < z_lo
            turned = v >= 0.0
        ok[idx[viol]] = False
        done = viol
        if until_turn:
            done = done | turned
        else:
            # leaving the slab on the other side ends the relevant dynamics;
            # those points finish with their face never violated
            done = done | (x < z_lo - 0.5) | (x > z_hi + 0.5)
        if done.any():
            keep = ~done
            idx, x, v = idx[keep], x[keep], v[keep]
    return ok


def oracle_set(machine: MachineModel, bounds: Bounds, kind: str,
               settings: SolverSettings = SolverSettings(),
               z2_cap: float | None = None) -> OracleGrid:
    """Label a state grid by direct simulation of the extremal closed loops.

    admissible: a point is inside iff maximal braking avoids the upper bound
    until the velocity turns, and maximal thrust avoids the lower bound until
    the velocity turns (the two face tests a switching input can realize
    independently).

    mrpi: a point is inside iff it survives the worst upward push without
    exceeding the upper bound and the worst downward push without leaving
    through the lower bound, over the full oracle horizon.
    """
    i = machine.index
    z_lo, z_hi = float(bounds.lower[i]), float(bounds.upper[i])
    cap = float(z2_cap if z2_cap is not None else settings.z2_cap)
    n = settings.grid_resolution
    g1 = np.linspace(z_lo, z_hi, n)
    g2 = np.linspace(-cap, cap, n)
    Z1, Z2 = np.meshgrid(g1, g2)
    z1 = Z1.ravel().copy()
    z2 = Z2.ravel().copy()
    T = settings.oracle_horizon_s

    if kind == ADMISSIBLE:
        ok_up = _simulate_face(machine, z1, z2, z_lo, z_hi, HARMFUL, "upper",
                               T, until_turn=True)
        ok_lo = _simulate_face(machine, z1, z2, z_lo, z_hi, HELPFUL, "lower",
                               T, until_turn=True)
    elif kind == MRPI:
        ok_up = _simulate_face(machine, z1, z2, z_lo, z_hi, HELPFUL, "upper",
                               T, until_turn=False)
        ok_lo = _simulate_face(machine, z1, z2, z_lo, z_hi, HARMFUL, "lower",
                               T, until_turn=False)
    else:
        raise ValueError(f"unknown set kind {kind!r}")

    inside = (ok_up & ok_lo).reshape(n, n)
    return OracleGrid(z1=g1, z2=g2, inside=inside, kind=kind, machine_index=i)
