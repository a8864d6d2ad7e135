"""Coupled and decoupled swing dynamics, adaptive integration, event location.

The coupled system is the full 2m-dimensional grid; the decoupled system is
one machine's planar dynamics with its neighbors' angles treated as a bounded
input vector.  Integration uses an adaptive embedded Runge-Kutta pair (RK45)
with dense output; event times are localized by bisection on the dense
interpolant.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .model import Bounds, SolverSettings, StageModel


class IntegrationError(RuntimeError):
    pass


def coupled_rhs(stage: StageModel, state: np.ndarray) -> np.ndarray:
    """Right-hand side of the full grid dynamics.

    ``state`` stacks the m angles then the m velocities; the derivative is
    (velocities, p - row sums of K*sin(angle differences) - d*velocities).
    """
    m = stage.m
    x1 = state[:m]
    x2 = state[m:]
    coupling = (stage.K * np.sin(x1[:, None] - x1[None, :])).sum(axis=1)
    return np.concatenate([x2, stage.p - coupling - stage.d * x2])


@dataclass(frozen=True)
class MachineModel:
    """One decoupled machine: planar state, neighbor angles as inputs."""

    index: int
    p: float
    d: float
    neighbors: np.ndarray   # neighbor machine indices (0-based)
    k: np.ndarray           # couplings to those neighbors, all > 0
    u_lower: np.ndarray     # per-neighbor input box
    u_upper: np.ndarray

    def __post_init__(self):
        if np.any(self.k <= 0.0):
            raise ValueError("neighbor couplings must be positive")
        if np.any(self.u_lower > self.u_upper):
            raise ValueError("neighbor input boxes must satisfy lower <= upper")

    @property
    def n_neighbors(self) -> int:
        return self.k.shape[0]

    @classmethod
    def from_stage(cls, stage: StageModel, i: int, bounds: Bounds) -> "MachineModel":
        nbrs = stage.neighbors(i)
        return cls(
            index=i,
            p=float(stage.p[i]),
            d=float(stage.d[i]),
            neighbors=nbrs,
            k=stage.K[i, nbrs].copy(),
            u_lower=bounds.lower[nbrs].copy(),
            u_upper=bounds.upper[nbrs].copy(),
        )


def decoupled_rhs(machine: MachineModel, z: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Planar dynamics of one machine for a given neighbor-angle vector u."""
    u = np.asarray(u, dtype=float)
    if u.shape != (machine.n_neighbors,):
        raise ValueError(f"expected {machine.n_neighbors} inputs, got {u.shape}")
    coupling = float(np.dot(machine.k, np.sin(z[0] - u)))
    return np.array([z[1], machine.p - coupling - machine.d * z[1]])


class Trajectory:
    """Integration result with dense output between stored nodes."""

    def __init__(self, times: np.ndarray, states: np.ndarray, interpolant):
        self.times = times
        self.states = states          # shape (n_nodes, dim)
        self._interp = interpolant

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def at(self, t):
        """Dense-output state; exact stored states at the nodes."""
        t = np.asarray(t, dtype=float)
        out = self._interp(t).T if t.ndim else self._interp(float(t))
        # snap node evaluations to the stored states
        if t.ndim == 0:
            k = np.searchsorted(self.times, float(t))
            if k < len(self.times) and self.times[k] == t:
                return self.states[k].copy()
            return np.asarray(out, dtype=float)
        idx = np.searchsorted(self.times, t)
        hit = (idx < len(self.times)) & (self.times[np.minimum(idx, len(self.times) - 1)] == t)
        out = np.asarray(out, dtype=float)
        out[hit] = self.states[idx[hit]]
        return out

    def to_csv(self, path, step: float = 0.01):
        """Write samples as CSV: t, x_11..x_m1, x_12..x_m2."""
        m = self.states.shape[1] // 2
        ts = np.arange(self.t0, self.t1 + 0.5 * step, step)
        ts[-1] = min(ts[-1], self.t1)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i + 1}1" for i in range(m)]
                       + [f"x_{i + 1}2" for i in range(m)])
            for t in ts:
                w.writerow([f"{t:.6f}"] + [f"{v:.12g}" for v in self.at(float(t))])


def integrate(rhs, x0, t0: float, t1: float,
              settings: SolverSettings = SolverSettings()) -> Trajectory:
    """Adaptive RK45 integration with dense output over [t0, t1]."""
    if not t1 > t0:
        raise ValueError("t1 must exceed t0")
    sol = solve_ivp(lambda t, y: rhs(y), (t0, t1), np.asarray(x0, dtype=float),
                    method="RK45", dense_output=True,
                    rtol=settings.rel_tol, atol=settings.abs_tol)
    if not sol.success:
        raise IntegrationError(f"integration failed: {sol.message}")
    return Trajectory(sol.t, sol.y.T, sol.sol)


def event_time(traj: Trajectory, predicate, time_tol: float = 1e-6,
               subsamples: int = 8):
    """Earliest time where ``predicate`` flips False -> True, or None.

    Each node interval of the trajectory is subsampled on the dense output to
    catch flips between nodes; the first flip is then localized by bisection
    to within ``time_tol`` seconds.
    """
    ts = traj.times
    if predicate(traj.at(float(ts[0]))):
        return float(ts[0])
    lo = None
    for a, b in zip(ts[:-1], ts[1:]):
        for t in np.linspace(a, b, subsamples + 1)[1:]:
            if predicate(traj.at(float(t))):
                lo, hi = (a if lo is None else lo), float(t)
                break
            lo = float(t)
        else:
            continue
        break
    else:
        return None
    while hi - lo > time_tol:
        mid = 0.5 * (lo + hi)
        if predicate(traj.at(mid)):
            hi = mid
        else:
            lo = mid
    return hi
