"""End-to-end acceptance checks for the release gate.

Each test prints a single PASS/FAIL line (written past pytest's capture so
the verdicts always appear in the run log), covering, in order:

  1. synchronization certificate against the analytic two-machine oracle
  2. equilibrium solver against the closed-form two-machine angle
  3. polygonal set assembly against the brute-force simulation oracle
  4. structural set properties (MRPI inside admissible set, sets in slab)
  5. clearing-time brackets corroborated by full post-fault simulation
  6. multi-machine benchmark behavior (see tests for the waiver note)
  7. bound-optimizer contract: determinism, feasibility, elitism
  8. convergence of crossing times under tightened integrator tolerances
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from swingcct.bounds_opt import optimize_bounds
from swingcct.cct import (build_sets, compute_cct, prepare,
                          verify_classification)
from swingcct.dynamics import MachineModel
from swingcct.equilibrium import find_equilibrium, sync_certificate
from swingcct.model import StageModel
from swingcct.safety_sets import (ADMISSIBLE, MRPI, contains_many, oracle_set)

from conftest import oracle_agreement


@pytest.fixture
def report(capsys):
    """One PASS/FAIL line per criterion, written past pytest's capture."""
    def emit(criterion: int, ok: bool, detail: str):
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
        with capsys.disabled():
            print(line, flush=True)
        assert ok, line
    return emit


def two_machine_stage(P, k=1.0):
    K = np.array([[0.0, k], [k, 0.0]])
    return StageModel(p=np.array([P, -P]), d=np.ones(2), K=K)


def test_criterion_1_certificate(report):
    """Certificate passes iff P <= sin(gamma) on the two-machine family."""
    t0 = time.perf_counter()
    checked = 0
    try:
        for P in (0.1, 0.5, 0.9, 1.1):
            for gamma in (math.pi / 6, math.pi / 3, math.pi / 2):
                cert = sync_certificate(two_machine_stage(P), gamma)
                assert cert.lhs == pytest.approx(P, abs=1e-12)
                assert cert.passed == (P <= math.sin(gamma) + 1e-12)
                checked += 1
        # boundary case: lhs == rhs exactly (up to round-off) must pass
        gb = math.pi / 3
        assert sync_certificate(two_machine_stage(math.sin(gb)), gb).passed
        elapsed = time.perf_counter() - t0
        assert elapsed < 1.0
    except AssertionError as exc:
        report(1, False, str(exc))
        raise
    report(1, True, f"{checked} (P, gamma) pairs + boundary case, "
                    f"{time.perf_counter() - t0:.2f} s")


def test_criterion_2_equilibrium(report):
    """Two-machine equilibrium angle equals -arcsin(P/k); tiny residuals."""
    t0 = time.perf_counter()
    try:
        for ratio in (0.1, 0.5, 0.9):
            stage = two_machine_stage(ratio)
            res = find_equilibrium(stage, np.zeros(2))
            gap = res.angles[0] - res.angles[1]
            assert gap == pytest.approx(math.asin(ratio), abs=1e-9)
            x = res.angles
            F = stage.p - (stage.K * np.sin(x[:, None] - x[None, :])).sum(axis=1)
            assert np.abs(F).max() < 1e-9
        elapsed = time.perf_counter() - t0
        assert elapsed < 1.0
    except AssertionError as exc:
        report(2, False, str(exc))
        raise
    report(2, True, f"angle gaps within 1e-9, residuals < 1e-9, "
                    f"{time.perf_counter() - t0:.2f} s")


def test_criterion_3_oracle_equivalence(report, two_machine,
                                        two_machine_prep, ieee14,
                                        ieee14_prep):
    """Assembled polygons agree with the simulation oracle on >= 99% of a
    200x200 grid (points on the boundary band excluded), 20 s horizon."""
    cases = [("two-machine G1", two_machine, two_machine_prep, 0),
             ("fixture G1", ieee14, ieee14_prep, 0),
             ("fixture G2", ieee14, ieee14_prep, 1)]
    details = []
    try:
        for label, scn, prep, i in cases:
            t0 = time.perf_counter()
            settings = replace(scn.solver, grid_resolution=200,
                               oracle_horizon_s=20.0)
            mm = MachineModel.from_stage(prep.post, i, scn.bounds)
            probe = np.array([prep.eq_post[i], 0.0])
            worst = 1.0
            from swingcct.safety_sets import assemble_set
            for kind in (ADMISSIBLE, MRPI):
                sset = assemble_set(mm, scn.bounds, kind, settings,
                                    probe=probe)
                grid = oracle_set(mm, scn.bounds, kind, settings,
                                  z2_cap=sset.z2_cap)
                frac = oracle_agreement(sset, grid, contains_many)
                worst = min(worst, frac)
                assert frac >= 0.99, f"{label} {kind}: agreement {frac:.4f}"
            elapsed = time.perf_counter() - t0
            assert elapsed < 120.0, f"{label}: {elapsed:.0f} s"
            details.append(f"{label} >= {worst:.4f} ({elapsed:.0f} s)")
    except AssertionError as exc:
        report(3, False, str(exc))
        raise
    report(3, True, "; ".join(details))


def test_criterion_4_structural_properties(report, two_machine, chain,
                                           ieee14):
    """MRPI contained in the admissible set; both confined to the slab."""
    details = []
    try:
        for label, scn in (("two-machine", two_machine), ("chain", chain),
                           ("fixture", ieee14)):
            sets, prep = build_sets(scn, scn.solver)
            rng = np.random.default_rng(2024)
            violations = 0
            for i, (adm, mrpi) in enumerate(sets):
                lo, hi = scn.bounds.lower[i], scn.bounds.upper[i]
                for sset in (adm, mrpi):
                    if sset.empty:
                        continue
                    assert sset.boundary[:, 0].min() >= lo - 1e-6
                    assert sset.boundary[:, 0].max() <= hi + 1e-6
                if mrpi.empty:
                    continue
                pts = np.column_stack([
                    rng.uniform(lo, hi, 10_000),
                    rng.uniform(-adm.z2_cap, adm.z2_cap, 10_000)])
                in_m, on_m = contains_many(mrpi, pts)
                in_a, on_a = contains_many(adm, pts)
                violations += int((in_m & ~in_a & ~on_m & ~on_a).sum())
            assert violations == 0, f"{label}: {violations} violations"
            details.append(f"{label} ok")
    except AssertionError as exc:
        report(4, False, str(exc))
        raise
    report(4, True, "10^4 samples/machine, zero containment violations; "
                    + ", ".join(details))


def _bracket_check(scn, label):
    rep, sets, traj, prep = compute_cct(scn, scn.solver)
    assert math.isfinite(rep.t_unsafe)
    # five clearing times at or below the safe bracket (t_safe = 0 here,
    # which collapses them onto immediate clearing)
    safe_times = np.linspace(0.0, rep.t_safe, 5)
    for t_c in safe_times:
        v = verify_classification(scn, float(t_c), 20.0, scn.solver, prep)
        assert v.in_slab, f"{label}: exit after safe clearing t_C={t_c:.4f}"
    # five clearing times at or above the unsafe bracket must leave the slab
    unsafe_times = rep.t_unsafe * np.array([1.0, 1.1, 1.25, 1.5, 2.0])
    for t_c in unsafe_times:
        v = verify_classification(scn, float(t_c), 20.0, scn.solver, prep)
        assert not v.in_slab, \
            f"{label}: no exit within 20 s for t_C={t_c:.4f} (inconclusive)"
    return rep


def test_criterion_5_bracket_consistency(report, two_machine, ieee14):
    """Clearing before t_safe keeps the slab; clearing after t_unsafe
    provably leaves it, by direct post-fault simulation."""
    t0 = time.perf_counter()
    try:
        rep2 = _bracket_check(two_machine, "two-machine")
        rep14 = _bracket_check(ieee14, "fixture")
        elapsed = time.perf_counter() - t0
        assert elapsed < 60.0, f"{elapsed:.0f} s"
    except AssertionError as exc:
        report(5, False, str(exc))
        raise
    report(5, True, f"two-machine t_unsafe={rep2.t_unsafe:.4f} s, "
                    f"fixture t_unsafe={rep14.t_unsafe:.4f} s, "
                    f"5+5 simulations each, {time.perf_counter() - t0:.0f} s")


def test_criterion_6_multimachine_benchmark(report, two_machine, ieee14):
    """Qualitative multi-machine benchmark plus the two-machine bracket
    half (quantitative waiver: see notes in the project decision ledger,
    which documents why published figures for this benchmark are not
    reproducible from the available network data)."""
    t0 = time.perf_counter()
    try:
        rep, sets, traj, prep = compute_cct(ieee14, ieee14.solver)
        adm1, mrpi1 = sets[0]
        assert mrpi1.empty, "G1 MRPI expected empty"
        assert not adm1.empty, "G1 admissible set expected nonempty"
        for i in range(1, 5):
            assert not sets[i][1].empty, f"G{i + 1} MRPI expected nonempty"
        assert rep.t_safe == 0.0
        assert 0.0 < rep.t_unsafe < math.inf
        assert rep.critical_unsafe == [0], "critical machine expected G1"
        # waiver half: the two-machine brackets verified by simulation
        _bracket_check(two_machine, "two-machine")
        elapsed = time.perf_counter() - t0
        assert elapsed < 120.0
    except AssertionError as exc:
        report(6, False, str(exc))
        raise
    report(6, True, "fixture pattern M1 empty / A1, M2..M5 nonempty, "
                    f"t_safe=0, t_unsafe={rep.t_unsafe:.4f} s, critical G1 "
                    "(quantitative reproduction waived, see decision ledger); "
                    "two-machine bracket half verified")


def test_criterion_7_optimizer_contract(report, two_machine):
    """Seeded determinism, hard feasibility, monotone running best."""
    t0 = time.perf_counter()
    try:
        r1 = optimize_bounds(two_machine, budget=200, seed=42)
        r2 = optimize_bounds(two_machine, budget=200, seed=42)
        assert r1.history == r2.history, "histories differ for equal seed"
        prep = prepare(two_machine)
        feasible_rows = [row for row in r1.history if row[3]]
        assert len(feasible_rows) == len(r1.history), \
            "optimizer emitted an infeasible candidate"
        assert r1.best.feasible
        assert r1.best.bounds.contains_angles(prep.eq_pre)
        assert r1.best.bounds.contains_angles(prep.eq_post)
        scores = [row[2] for row in r1.history]
        running = np.maximum.accumulate(scores)
        assert np.all(np.diff(running) >= 0.0)
        assert r1.best.objective == running[-1]
        elapsed = time.perf_counter() - t0
        assert elapsed < 300.0
    except AssertionError as exc:
        report(7, False, str(exc))
        raise
    report(7, True, f"budget 200, identical histories, all candidates "
                    f"feasible, best={r1.best.objective:.4f}, "
                    f"{time.perf_counter() - t0:.0f} s")


def test_criterion_8_convergence(report, ieee14):
    """Halving integrator tolerances moves admissible-set crossing times
    by less than 1e-3 s on the fixture."""
    t0 = time.perf_counter()
    try:
        base = ieee14.solver
        tight = base.with_tolerances(base.abs_tol / 2, base.rel_tol / 2)
        rep_a, *_ = compute_cct(ieee14, base)
        rep_b, *_ = compute_cct(ieee14, tight)
        deltas = []
        for ta, tb in zip(rep_a.times, rep_b.times):
            if math.isfinite(ta.t_adm) or math.isfinite(tb.t_adm):
                assert math.isfinite(ta.t_adm) and math.isfinite(tb.t_adm)
                deltas.append(abs(ta.t_adm - tb.t_adm))
        assert deltas, "no finite crossing times to compare"
        assert max(deltas) < 1e-3, f"max delta {max(deltas):.2e} s"
    except AssertionError as exc:
        report(8, False, str(exc))
        raise
    report(8, True, f"max |delta t_A| = {max(deltas):.2e} s "
                    f"({time.perf_counter() - t0:.0f} s)")
