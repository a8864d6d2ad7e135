"""Fault-on simulation, set-crossing times, and clearing-time classification.

The fault-on grid is simulated from the pre-fault equilibrium (at rest).
Each machine's planar projection of that single trajectory is intersected
with its admissible set and MRPI; the first-exit times bracket the critical
clearing time:

  * t_safe  = min over machines of the MRPI exit time -- clearing before it
    guarantees the decoupled constraints hold forever,
  * t_unsafe = min over machines of the admissible-set exit time -- clearing
    after it guarantees an eventual constraint violation.

Clearing times between the two are indeterminate ("potentially safe").
All times are measured from the fault onset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import MachineModel, Trajectory, coupled_rhs, event_time, integrate
from .equilibrium import find_equilibrium
from .model import Bounds, Scenario, SolverSettings, StageModel, rotating_frame_shift
from .safety_sets import ADMISSIBLE, MRPI, SafetySet, assemble_set, contains

SAFE = "safe"
POTENTIALLY_SAFE = "potentially_safe"
UNSAFE = "unsafe"


@dataclass(frozen=True)
class PreparedScenario:
    """Frame-shifted stages with their equilibria, ready for analysis.

    Pre- and post-fault stages are shifted into their own synchronous frames
    so their equilibria exist.  The fault stage is expressed in the
    post-fault frame: its genuine net accelerating power must survive the
    shift, and the post-fault frame is where the safety sets live.
    """

    pre: StageModel
    fault: StageModel
    post: StageModel
    omega_pre: float
    omega_post: float
    eq_pre: np.ndarray
    eq_post: np.ndarray


def prepare(scenario: Scenario) -> PreparedScenario:
    pre_sh, w_pre = rotating_frame_shift(scenario.pre)
    post_sh, w_post = rotating_frame_shift(scenario.post)
    fault_sh = StageModel(p=scenario.fault.p - scenario.fault.d * w_post,
                          d=scenario.fault.d, K=scenario.fault.K)
    eq_pre = find_equilibrium(pre_sh, guess=np.zeros(scenario.pre.m))
    eq_post = find_equilibrium(post_sh, guess=eq_pre.angles)
    return PreparedScenario(pre=pre_sh, fault=fault_sh, post=post_sh,
                            omega_pre=w_pre, omega_post=w_post,
                            eq_pre=eq_pre.angles, eq_post=eq_post.angles)


def build_sets(scenario: Scenario,
               settings: SolverSettings = SolverSettings(),
               prep: PreparedScenario | None = None):
    """Assemble (admissible, MRPI) pairs for every machine.

    The post-fault stage defines the decoupled dynamics; the post-fault
    equilibrium projection serves as the interior probe point.
    """
    if scenario.bounds is None:
        raise ValueError("scenario has no angle bounds; provide them first")
    prep = prep or prepare(scenario)
    pairs = []
    for i in range(scenario.post.m):
        machine = MachineModel.from_stage(prep.post, i, scenario.bounds)
        probe = np.array([prep.eq_post[i], 0.0])
        adm = assemble_set(machine, scenario.bounds, ADMISSIBLE, settings, probe=probe)
        mrpi = assemble_set(machine, scenario.bounds, MRPI, settings, probe=probe)
        pairs.append((adm, mrpi))
    return pairs, prep


def simulate_fault(scenario: Scenario, horizon: float,
                   settings: SolverSettings = SolverSettings(),
                   prep: PreparedScenario | None = None) -> Trajectory:
    """Integrate the fault-on grid from the pre-fault equilibrium at rest."""
    prep = prep or prepare(scenario)
    m = scenario.fault.m
    x0 = np.concatenate([prep.eq_pre, np.zeros(m)])
    return integrate(lambda y: coupled_rhs(prep.fault, y), x0, 0.0, horizon, settings)


def _project(traj: Trajectory, i: int, m: int, center: float):
    """Machine i's planar projection, re-based by whole turns onto the slab.

    The lifted angle is shifted by the multiple of 2*pi that brings its
    initial value closest to the slab center; the shift is constant along
    the trajectory so continuity (and crossing times) are preserved.
    """
    z0 = float(traj.at(traj.t0)[i])
    shift = 2.0 * math.pi * round((z0 - center) / (2.0 * math.pi))

    def proj(t):
        x = traj.at(t)
        return np.array([x[i] - shift, x[m + i]])

    return proj


@dataclass
class MachineTimes:
    index: int
    t_mrpi: float               # seconds, 0 if the MRPI is empty, inf if no exit
    t_adm: float
    horizon_limited: bool = False


@dataclass
class CctReport:
    times: list                  # MachineTimes per machine
    t_safe: float
    t_unsafe: float
    critical_safe: list          # machine indices attaining t_safe
    critical_unsafe: list        # machine indices attaining t_unsafe
    horizon: float
    horizon_limited: bool = False

    def summary_line(self, t_clear: float | None = None) -> str:
        def fmt(t):
            return "inf" if math.isinf(t) else f"{t:.4f}"
        crit = "G" + ",G".join(str(i + 1) for i in self.critical_unsafe) \
            if self.critical_unsafe else "-"
        line = (f"t_safe={fmt(self.t_safe)}, t_unsafe={fmt(self.t_unsafe)}, "
                f"critical={crit}")
        if t_clear is not None:
            line += f", classification(t_C={t_clear:g})={classify(t_clear, self)}"
        return line


class _TimeTrajectory:
    """Adapter exposing time itself as the state, for time-domain events."""

    def __init__(self, traj: Trajectory):
        self.times = traj.times
        self.t0 = traj.t0
        self.t1 = traj.t1

    @staticmethod
    def at(t):
        return t


def _set_exit_time(traj: Trajectory, proj, sset: SafetySet,
                   settings: SolverSettings):
    """First time the projected state leaves the set (0 if never inside)."""
    if sset.empty:
        return 0.0
    t = event_time(_TimeTrajectory(traj),
                   lambda t_: not contains(sset, proj(float(t_))),
                   time_tol=settings.event_tol)
    return math.inf if t is None else float(t)


def crossing_times(traj: Trajectory, sets, scenario: Scenario,
                   settings: SolverSettings = SolverSettings(),
                   prep: PreparedScenario | None = None):
    """Per-machine first-exit times from (MRPI, admissible set)."""
    prep = prep or prepare(scenario)
    m = scenario.post.m
    out = []
    for i, (adm, mrpi) in enumerate(sets):
        center = 0.5 * (scenario.bounds.lower[i] + scenario.bounds.upper[i])
        proj = _project(traj, i, m, center)
        t_m = _set_exit_time(traj, proj, mrpi, settings)
        t_a = _set_exit_time(traj, proj, adm, settings)
        out.append(MachineTimes(index=i, t_mrpi=t_m, t_adm=t_a,
                                horizon_limited=math.isinf(t_m) or math.isinf(t_a)))
    return out


def cct_summary(times, horizon: float) -> CctReport:
    t_safe = min(t.t_mrpi for t in times)
    t_unsafe = min(t.t_adm for t in times)
    crit_s = [t.index for t in times if t.t_mrpi == t_safe]
    crit_u = [t.index for t in times if t.t_adm == t_unsafe]
    return CctReport(times=list(times), t_safe=t_safe, t_unsafe=t_unsafe,
                     critical_safe=crit_s, critical_unsafe=crit_u,
                     horizon=horizon,
                     horizon_limited=any(t.horizon_limited for t in times))


def compute_cct(scenario: Scenario, settings: SolverSettings = SolverSettings(),
                sets=None, prep: PreparedScenario | None = None):
    """Full CCT analysis: sets, fault simulation, crossing times.

    The fault-on horizon starts at the configured default and doubles (up to
    the cap) while a finite admissible-set crossing is still pending and the
    trajectory stays bounded; +inf results at the cap are flagged rather
    than truncated.

    Returns (CctReport, sets, trajectory, PreparedScenario).
    """
    if sets is None:
        sets, prep = build_sets(scenario, settings, prep)
    else:
        prep = prep or prepare(scenario)
    horizon = settings.horizon_s
    while True:
        traj = simulate_fault(scenario, horizon, settings, prep)
        times = crossing_times(traj, sets, scenario, settings, prep)
        pending = any(math.isinf(t.t_adm) or math.isinf(t.t_mrpi) for t in times)
        bounded = float(np.abs(traj.states).max()) < 1e6
        if not pending or horizon >= settings.max_horizon_s or not bounded:
            break
        horizon = min(2.0 * horizon, settings.max_horizon_s)
    return cct_summary(times, horizon), sets, traj, prep


def classify(t_clear: float, report: CctReport) -> str:
    """Threshold the clearing time against the safe/unsafe CCT brackets."""
    if t_clear < 0.0:
        raise ValueError("clearing time precedes the fault onset")
    if t_clear <= report.t_safe:
        return SAFE
    if t_clear >= report.t_unsafe:
        return UNSAFE
    return POTENTIALLY_SAFE


@dataclass
class VerificationResult:
    in_slab: bool
    first_exit_time: float | None       # seconds after clearing
    exit_machine: int | None            # 0-based index
    horizon: float

    @property
    def inconclusive(self) -> bool:
        """No exit observed within the horizon; not a proof of safety."""
        return self.in_slab


def verify_classification(scenario: Scenario, t_clear: float, horizon: float,
                          settings: SolverSettings = SolverSettings(),
                          prep: PreparedScenario | None = None) -> VerificationResult:
    """Simulate fault-on to t_clear, then post-fault; check the angle slabs.

    Corroborates the set-based verdicts: a clearing time classified safe
    must keep every machine's re-based angle inside its slab over the
    horizon, and one classified unsafe should exhibit a slab exit.
    """
    if scenario.bounds is None:
        raise ValueError("scenario has no angle bounds; provide them first")
    prep = prep or prepare(scenario)
    m = scenario.post.m
    if t_clear > 0.0:
        fault_traj = simulate_fault(scenario, t_clear, settings, prep)
        x_clear = fault_traj.at(t_clear)
    else:
        x_clear = np.concatenate([prep.eq_pre, np.zeros(m)])
    post_traj = integrate(lambda y: coupled_rhs(prep.post, y), x_clear,
                          0.0, horizon, settings)

    lo, hi = scenario.bounds.lower, scenario.bounds.upper
    center = 0.5 * (lo + hi)
    x0 = post_traj.at(post_traj.t0)[:m]
    shift = 2.0 * np.pi * np.round((x0 - center) / (2.0 * np.pi))

    def outside(x):
        ang = x[:m] - shift
        return bool(np.any(ang < lo) or np.any(ang > hi))

    t_exit = event_time(post_traj, outside, time_tol=settings.event_tol)
    if t_exit is None:
        return VerificationResult(in_slab=True, first_exit_time=None,
                                  exit_machine=None, horizon=horizon)
    ang = post_traj.at(t_exit + settings.event_tol)[:m] - shift
    viol = np.where((ang < lo) | (ang > hi))[0]
    machine = int(viol[0]) if len(viol) else None
    return VerificationResult(in_slab=False, first_exit_time=float(t_exit),
                              exit_machine=machine, horizon=horizon)
