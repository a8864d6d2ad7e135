"""Black-box search over angle bounds maximizing total MRPI volume.

The bounds enter the analysis twice -- as each machine's own slab and as its
neighbors' input boxes -- so widening one machine's slab shrinks everyone
else's robust sets.  The objective J = sum of MRPI areas is non-smooth (areas
jump to zero when a set empties), hence a seeded differential-evolution-style
search over the 2m bound coordinates.  Feasibility is hard: every candidate
slab must contain both the pre- and post-fault equilibrium angles, enforced
by construction (the genome stores nonnegative offsets around the
equilibrium hull).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .cct import PreparedScenario, prepare
from .dynamics import MachineModel
from .model import Bounds, Scenario, SolverSettings
from .safety_sets import MRPI, assemble_set


@dataclass
class BoundsCandidate:
    bounds: Bounds
    objective: float               # total MRPI area; -inf when infeasible
    feasible: bool
    per_machine_areas: np.ndarray
    evaluations: int = 0


def _feasible(bounds: Bounds, prep: PreparedScenario) -> bool:
    return bool(bounds.contains_angles(prep.eq_pre)
                and bounds.contains_angles(prep.eq_post))


def objective(scenario: Scenario, bounds: Bounds,
              settings: SolverSettings = SolverSettings(),
              prep: PreparedScenario | None = None,
              weights: np.ndarray | None = None) -> BoundsCandidate:
    """Total MRPI area for one candidate; infeasible candidates score -inf.

    A per-machine set-assembly failure scores that machine 0 with a warning
    instead of aborting the outer search.
    """
    prep = prep or prepare(scenario)
    m = scenario.post.m
    areas = np.zeros(m)
    if not _feasible(bounds, prep):
        return BoundsCandidate(bounds=bounds, objective=-math.inf,
                               feasible=False, per_machine_areas=areas,
                               evaluations=1)
    if weights is None:
        weights = np.ones(m)
    for i in range(m):
        machine = MachineModel.from_stage(prep.post, i, bounds)
        probe = np.array([prep.eq_post[i], 0.0])
        try:
            sset = assemble_set(machine, bounds, MRPI, settings, probe=probe)
            areas[i] = sset.area
        except Exception as exc:  # noqa: BLE001 - pessimistic fallback
            warnings.warn(f"MRPI assembly failed for machine {i + 1}: {exc}")
            areas[i] = 0.0
    return BoundsCandidate(bounds=bounds, objective=float(np.dot(weights, areas)),
                           feasible=True, per_machine_areas=areas, evaluations=1)


@dataclass
class OptimizeResult:
    best: BoundsCandidate
    history: list = field(default_factory=list)
    # history rows: (generation, candidate, objective, feasible, lo..., up...)

    def history_csv(self, path):
        m = len(self.best.bounds.lower)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["generation", "candidate", "objective", "feasible"]
                       + [f"lower_{i + 1}" for i in range(m)]
                       + [f"upper_{i + 1}" for i in range(m)])
            for row in self.history:
                w.writerow(row)


def _genome_to_bounds(genome: np.ndarray, hull_lo, hull_hi) -> Bounds:
    m = len(hull_lo)
    lo_off = genome[:m]
    up_off = genome[m:]
    return Bounds(lower=hull_lo - lo_off, upper=hull_hi + up_off)


def optimize_bounds(scenario: Scenario, budget: int, seed: int,
                    margin: float = 0.3,
                    settings: SolverSettings = SolverSettings(),
                    weights: np.ndarray | None = None) -> OptimizeResult:
    """Seeded evolutionary search over per-machine bound offsets.

    The genome holds 2m nonnegative offsets below/above the hull of the two
    equilibria, which makes every candidate feasible by construction.  The
    population starts around the hull inflated by ``margin``; selection is
    elitist, so the best objective is non-decreasing along the history.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    prep = prepare(scenario)
    m = scenario.post.m
    hull_lo = np.minimum(prep.eq_pre, prep.eq_post)
    hull_hi = np.maximum(prep.eq_pre, prep.eq_post)
    # keep slab widths strictly under a full turn
    off_max = 0.5 * (2.0 * math.pi - (hull_hi - hull_lo).max()) - 1e-3
    off_min = 1e-3
    rng = np.random.default_rng(seed)

    def clipped(g):
        return np.clip(g, off_min, off_max)

    def evaluate(genome):
        return objective(scenario, _genome_to_bounds(genome, hull_lo, hull_hi),
                         settings, prep, weights)

    pop_size = min(budget, max(8, 4 * m))
    base = np.full(2 * m, margin)
    population = [clipped(base)]
    population += [clipped(base + rng.uniform(-0.5, 1.5, size=2 * m) * margin)
                   for _ in range(pop_size - 1)]

    history = []
    evals = 0
    scores = []
    best = None
    generation = 0
    for idx, genome in enumerate(population):
        if evals >= budget:
            population = population[:idx]
            break
        cand = evaluate(genome)
        evals += 1
        scores.append(cand.objective)
        if best is None or cand.objective > best.objective:
            best = cand
        history.append((generation, idx, cand.objective, cand.feasible,
                        *cand.bounds.lower, *cand.bounds.upper))
    scores = list(scores)

    F, CR = 0.6, 0.7
    while evals < budget:
        generation += 1
        n = len(population)
        for idx in range(n):
            if evals >= budget:
                break
            a, b, c = rng.choice(n, size=3, replace=False)
            mutant = population[a] + F * (population[b] - population[c])
            cross = rng.random(2 * m) < CR
            cross[rng.integers(2 * m)] = True
            trial = clipped(np.where(cross, mutant, population[idx]))
            cand = evaluate(trial)
            evals += 1
            if cand.objective >= scores[idx]:
                population[idx] = trial
                scores[idx] = cand.objective
            if cand.objective > best.objective:
                best = cand
            history.append((generation, idx, cand.objective, cand.feasible,
                            *cand.bounds.lower, *cand.bounds.upper))

    best = BoundsCandidate(bounds=best.bounds, objective=best.objective,
                           feasible=best.feasible,
                           per_machine_areas=best.per_machine_areas,
                           evaluations=evals)
    return OptimizeResult(best=best, history=history)
