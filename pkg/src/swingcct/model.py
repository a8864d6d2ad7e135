"""Stage models, angle bounds and the three-stage fault scenario.

A grid is described by one ``StageModel`` per fault stage (pre-fault,
fault-on, post-fault).  Each stage is a weighted undirected graph over the
machines together with per-machine power injections and damping:

    dx1_i/dt = x2_i
    dx2_i/dt = p_i - sum_j K_ij sin(x1_i - x1_j) - d_i x2_i

Machine indices are 0-based internally; documents and reports use 1-based
labels G1..Gm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario input."""


class ValidationError(ScenarioError):
    """A stage-model or bounds invariant is violated."""


def _as_vector(x, m, name):
    v = np.asarray(x, dtype=float)
    if v.shape != (m,):
        raise ValidationError(f"{name} must have length {m}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} contains non-finite entries")
    return v


@dataclass(frozen=True)
class StageModel:
    """One effective-network system: injections p, damping d, couplings K."""

    p: np.ndarray
    d: np.ndarray
    K: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise ValidationError(f"K must be square, got shape {K.shape}")
        m = K.shape[0]
        p = _as_vector(self.p, m, "p")
        d = _as_vector(self.d, m, "d")
        if not np.all(np.isfinite(K)):
            raise ValidationError("K contains non-finite entries")
        asym = np.abs(K - K.T)
        if asym.max(initial=0.0) > 1e-12:
            i, j = np.unravel_index(np.argmax(asym), K.shape)
            raise ValidationError(
                f"K not symmetric at ({i + 1},{j + 1}): {K[i, j]} vs {K[j, i]}"
            )
        if K.min(initial=0.0) < 0.0:
            i, j = np.unravel_index(np.argmin(K), K.shape)
            raise ValidationError(f"K has negative weight at ({i + 1},{j + 1})")
        if np.any(np.diag(K) != 0.0):
            i = int(np.nonzero(np.diag(K))[0][0])
            raise ValidationError(f"K diagonal must be zero, K[{i + 1},{i + 1}] != 0")
        if np.any(d <= 0.0):
            i = int(np.nonzero(d <= 0.0)[0][0])
            raise ValidationError(f"d must be positive, d[{i + 1}] = {d[i]}")
        for name, arr in (("p", p), ("d", d), ("K", K)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.K.shape[0]

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Pairs (i, j), i < j, with K_ij > 0 (0-based)."""
        i, j = np.nonzero(np.triu(self.K, k=1) > 0.0)
        return list(zip(i.tolist(), j.tolist()))

    def neighbors(self, i: int) -> np.ndarray:
        return np.nonzero(self.K[i] > 0.0)[0]


def rotating_frame_shift(stage: StageModel) -> tuple[StageModel, float]:
    """Move a stage into its synchronous rotating frame.

    The synchronous drift is omega = sum(p) / sum(d); shifting replaces
    p_i by p_i - d_i * omega so the shifted injections sum to zero and
    equilibria sit at zero velocity.  Returns (shifted stage, omega).
    """
    omega = float(stage.p.sum() / stage.d.sum())
    return replace(stage, p=stage.p - stage.d * omega), omega


@dataclass(frozen=True)
class Bounds:
    """Per-machine rotor-angle boxes [lower_i, upper_i] (radians)."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValidationError("bounds lower/upper must be equal-length vectors")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValidationError("bounds contain non-finite entries")
        bad = np.nonzero(lo >= hi)[0]
        if bad.size:
            i = int(bad[0])
            raise ValidationError(f"bounds must satisfy lower < upper, violated for G{i + 1}")
        wide = np.nonzero(hi - lo >= TWO_PI)[0]
        if wide.size:
            i = int(wide[0])
            raise ValidationError(f"angle box wider than 2*pi for G{i + 1}")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def m(self) -> int:
        return self.lower.shape[0]

    def width(self) -> np.ndarray:
        return self.upper - self.lower

    def contains_angles(self, angles, tol: float = 0.0) -> bool:
        a = np.asarray(angles, dtype=float)
        return bool(np.all(a >= self.lower - tol) and np.all(a <= self.upper + tol))


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and horizons shared by the analysis pipeline."""

    abs_tol: float = 1e-9
    rel_tol: float = 1e-7
    event_tol: float = 1e-6          # event localization, seconds
    horizon_s: float = 5.0           # initial fault-on horizon
    max_horizon_s: float = 60.0      # cap for automatic horizon doubling
    backward_horizon_s: float = 30.0 # barrier-curve backward integration
    z2_cap: float = 10.0             # velocity extent of the analysis window
    grid_resolution: int = 200       # oracle grid per axis
    oracle_horizon_s: float = 20.0
    tol_band_frac: float = 0.01      # boundary band as a fraction of slab width

    def with_tolerances(self, abs_tol, rel_tol) -> "SolverSettings":
        return replace(self, abs_tol=abs_tol, rel_tol=rel_tol)


@dataclass(frozen=True)
class GridState:
    """Full grid state: m rotor angles and m angular velocities."""

    angles: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.angles, dtype=float)
        v = np.asarray(self.velocities, dtype=float)
        if a.shape != v.shape or a.ndim != 1:
            raise ValidationError("angles and velocities must be equal-length vectors")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(v))):
            raise ValidationError("state contains non-finite entries")
        a.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "velocities", v)

    @property
    def m(self) -> int:
        return self.angles.shape[0]

    def wrapped_angles(self) -> np.ndarray:
        """Angles wrapped to (-pi, pi] for presentation."""
        return wrap_angle(self.angles)


def wrap_angle(a):
    """Wrap angles to (-pi, pi].  Integration always uses the unwrapped lift."""
    a = np.asarray(a, dtype=float)
    return -((-a + math.pi) % TWO_PI - math.pi)


@dataclass(frozen=True)
class Scenario:
    """Pre-fault / fault-on / post-fault stage triple plus analysis settings."""

    pre: StageModel
    fault: StageModel
    post: StageModel
    t_fault: float = 0.0
    bounds: Bounds | None = None
    solver: SolverSettings = field(default_factory=SolverSettings)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.pre.m == self.fault.m == self.post.m):
            raise ValidationError(
                "stages disagree on machine count: "
                f"pre={self.pre.m}, fault={self.fault.m}, post={self.post.m} "
                "(unequal counts are unsupported)"
            )
        if not math.isfinite(self.t_fault):
            raise ValidationError("t_fault must be finite")
        if self.bounds is not None and self.bounds.m != self.pre.m:
            raise ValidationError("bounds length disagrees with machine count")

    @property
    def m(self) -> int:
        return self.pre.m

    def with_bounds(self, bounds: "Bounds") -> "Scenario":
        return Scenario(pre=self.pre, fault=self.fault, post=self.post,
                        t_fault=self.t_fault, bounds=bounds,
                        solver=self.solver, metadata=self.metadata)


# ---------------------------------------------------------------------------
# scenario document format (JSON)
# ---------------------------------------------------------------------------

_STAGE_KEYS = ("pre", "fault", "post")


def _stage_from_doc(doc, key):
    if key not in doc:
        raise ScenarioError(f"missing top-level key '{key}'")
    sd = doc[key]
    for f in ("p", "d", "K"):
        if f not in sd:
            raise ScenarioError(f"stage '{key}' is missing field '{f}'")
    try:
        return StageModel(p=np.array(sd["p"], float),
                          d=np.array(sd["d"], float),
                          K=np.array(sd["K"], float))
    except ValidationError as e:
        raise ValidationError(f"stage '{key}': {e}") from e
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"stage '{key}': malformed array: {e}") from e


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document (JSON)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"parse error at line {e.lineno}, column {e.colno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")

    stages = {k: _stage_from_doc(doc, k) for k in _STAGE_KEYS}

    bounds = None
    if doc.get("bounds") is not None:
        bd = doc["bounds"]
        for f in ("lower", "upper"):
            if f not in bd:
                raise ScenarioError(f"bounds is missing field '{f}'")
        bounds = Bounds(lower=np.array(bd["lower"], float),
                        upper=np.array(bd["upper"], float))

    solver = SolverSettings()
    if doc.get("solver") is not None:
        known = {f for f in SolverSettings.__dataclass_fields__}
        unknown = set(doc["solver"]) - known
        if unknown:
            raise ScenarioError(f"unknown solver settings: {sorted(unknown)}")
        solver = SolverSettings(**doc["solver"])

    return Scenario(
        pre=stages["pre"], fault=stages["fault"], post=stages["post"],
        t_fault=float(doc.get("t_fault", 0.0)),
        bounds=bounds, solver=solver,
        metadata=doc.get("metadata", {}) or {},
    )


def load_scenario_file(path) -> Scenario:
    with open(path) as fh:
        return load_scenario(fh.read())


def _stage_to_doc(stage: StageModel) -> dict:
    return {"p": stage.p.tolist(), "d": stage.d.tolist(), "K": stage.K.tolist()}


def dump_scenario(scenario: Scenario) -> str:
    """Serialize a scenario; load_scenario(dump_scenario(s)) round-trips exactly."""
    doc = {
        "pre": _stage_to_doc(scenario.pre),
        "fault": _stage_to_doc(scenario.fault),
        "post": _stage_to_doc(scenario.post),
        "t_fault": scenario.t_fault,
    }
    if scenario.bounds is not None:
        doc["bounds"] = {"lower": scenario.bounds.lower.tolist(),
                         "upper": scenario.bounds.upper.tolist()}
    doc["solver"] = {k: getattr(scenario.solver, k)
                     for k in SolverSettings.__dataclass_fields__}
    if scenario.metadata:
        doc["metadata"] = scenario.metadata
    return json.dumps(doc, indent=2)
