"""Analysis pipeline orchestration and structured report serialization.

The full pipeline chains frame shift, synchronization certificate,
equilibria, optional bounds optimization, safety-set assembly, fault-on
simulation, crossing times, and classification.  Every stage failure is
tagged with its stage name; a certificate failure gates the pipeline unless
explicitly forced.  Reports are deterministic for a given scenario, settings,
and seed -- wall-clock timing lives in a separate section excluded from that
contract.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bounds_opt import optimize_bounds
from .cct import CctReport, classify, compute_cct, prepare
from .equilibrium import Certificate, sync_certificate
from .model import Scenario, SolverSettings, dump_scenario


class PipelineError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def scenario_digest(scenario: Scenario) -> str:
    """Stable content hash of the scenario document."""
    return hashlib.sha256(dump_scenario(scenario).encode()).hexdigest()


def _jsonify(x):
    if isinstance(x, dict):
        return {str(k): _jsonify(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonify(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonify(v) for v in x.tolist()]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return "inf" if math.isinf(x) else x
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


@dataclass
class AnalysisReport:
    digest: str
    omega: dict                       # synchronous frequencies per stage
    certificates: dict                # stage -> Certificate
    equilibria: dict                  # "pre"/"post" -> angles
    bounds: dict | None
    sets: list                        # per-machine summaries
    cct: CctReport | None
    classification: dict | None       # t_clear -> verdict
    settings: dict
    version: str = __version__
    timing: dict = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        cct = None
        if self.cct is not None:
            cct = {
                "per_machine": [
                    {"machine": t.index + 1, "t_mrpi": t.t_mrpi,
                     "t_admissible": t.t_adm,
                     "horizon_limited": t.horizon_limited}
                    for t in self.cct.times
                ],
                "t_safe": self.cct.t_safe,
                "t_unsafe": self.cct.t_unsafe,
                "critical_safe": [i + 1 for i in self.cct.critical_safe],
                "critical_unsafe": [i + 1 for i in self.cct.critical_unsafe],
                "horizon": self.cct.horizon,
                "horizon_limited": self.cct.horizon_limited,
            }
        certs = {
            stage: {"gamma": c.gamma, "lhs": c.lhs, "rhs": c.rhs,
                    "passed": c.passed, "margin": c.margin}
            for stage, c in self.certificates.items()
        }
        doc = {
            "version": self.version,
            "scenario_digest": self.digest,
            "omega_synch": self.omega,
            "certificates": certs,
            "equilibria": self.equilibria,
            "bounds": self.bounds,
            "sets": self.sets,
            "cct": cct,
            "classification": self.classification,
            "settings": self.settings,
        }
        if include_timing:
            doc["timing"] = self.timing
        return _jsonify(doc)

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2,
                          sort_keys=True) + "\n"

    def summary_line(self, t_clear: float | None = None) -> str:
        if self.cct is None:
            return "no CCT analysis (bounds missing)"
        return self.cct.summary_line(t_clear)


def _settings_dict(settings: SolverSettings) -> dict:
    return {k: getattr(settings, k) for k in (
        "abs_tol", "rel_tol", "event_tol", "horizon_s", "max_horizon_s",
        "backward_horizon_s", "z2_cap", "grid_resolution",
        "oracle_horizon_s", "tol_band_frac")}


def run_pipeline(scenario: Scenario, *, gamma: float = math.pi / 2,
                 t_clear: float | None = None, force: bool = False,
                 optimize: bool = False, budget: int = 200, seed: int = 0,
                 settings: SolverSettings = SolverSettings()):
    """Execute the end-to-end analysis.

    Returns (AnalysisReport, sets, trajectory, PreparedScenario); the last
    three are None when the scenario carries no bounds and optimization is
    not requested (the report then covers certificate and equilibria only).
    """
    t_start = time.perf_counter()
    timing = {}

    def stage(name):
        timing[name] = time.perf_counter()

    def stage_done(name):
        timing[name] = time.perf_counter() - timing[name]

    stage("equilibria")
    try:
        prep = prepare(scenario)
    except Exception as exc:
        raise PipelineError("equilibria", str(exc)) from exc
    stage_done("equilibria")

    stage("certificate")
    certs = {}
    for name, st in (("pre", prep.pre), ("post", prep.post)):
        try:
            certs[name] = sync_certificate(st, gamma)
        except Exception as exc:
            raise PipelineError("certificate", str(exc)) from exc
    stage_done("certificate")
    failed = [n for n, c in certs.items() if not c.passed]
    if failed and not force:
        raise PipelineError(
            "certificate",
            f"synchronization certificate failed for stage(s) {failed} at "
            f"gamma={gamma:.6g}; pass force to proceed anyway")

    omega = {"pre": prep.omega_pre, "post": prep.omega_post,
             "fault_frame": prep.omega_post}
    scn = scenario
    if optimize:
        stage("bounds_opt")
        try:
            result = optimize_bounds(scenario, budget=budget, seed=seed,
                                     settings=settings)
        except Exception as exc:
            raise PipelineError("bounds_opt", str(exc)) from exc
        stage_done("bounds_opt")
        scn = scenario.with_bounds(result.best.bounds)

    report = AnalysisReport(
        digest=scenario_digest(scenario),
        omega=omega,
        certificates=certs,
        equilibria={"pre": prep.eq_pre, "post": prep.eq_post},
        bounds=None, sets=[], cct=None, classification=None,
        settings=_settings_dict(settings), timing=timing,
    )

    if scn.bounds is None:
        timing["total"] = time.perf_counter() - t_start
        return report, None, None, prep

    report.bounds = {"lower": scn.bounds.lower, "upper": scn.bounds.upper}
    stage("sets_and_cct")
    try:
        cct_report, sets, traj, prep = compute_cct(scn, settings, prep=prep)
    except Exception as exc:
        raise PipelineError("sets", str(exc)) from exc
    stage_done("sets_and_cct")

    for adm, mrpi in sets:
        for sset in (adm, mrpi):
            report.sets.append({
                "machine": sset.machine_index + 1,
                "kind": sset.kind,
                "empty": sset.empty,
                "area": sset.area,
                "vertices": 0 if sset.empty else len(sset.boundary),
            })
    report.cct = cct_report
    if t_clear is not None:
        report.classification = {f"{t_clear:g}": classify(t_clear, cct_report)}
    timing["total"] = time.perf_counter() - t_start
    return report, sets, traj, prep
