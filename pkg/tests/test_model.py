import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from swingcct.model import (Bounds, Scenario, ScenarioError, SolverSettings,
                            StageModel, ValidationError, dump_scenario,
                            load_scenario, rotating_frame_shift, wrap_angle)


def make_stage(m=3, seed=0):
    rng = np.random.default_rng(seed)
    K = rng.uniform(0.1, 1.0, (m, m))
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 0.0)
    return StageModel(p=rng.normal(size=m), d=rng.uniform(0.5, 2.0, m), K=K)


class TestStageModel:
    def test_asymmetric_coupling_rejected_with_location(self):
        K = np.array([[0.0, 1.0], [1.1, 0.0]])
        with pytest.raises(ValidationError, match=r"\(1,2\)|\(2,1\)"):
            StageModel(p=np.zeros(2), d=np.ones(2), K=K)

    def test_negative_coupling_rejected(self):
        K = np.array([[0.0, -1.0], [-1.0, 0.0]])
        with pytest.raises(ValidationError):
            StageModel(p=np.zeros(2), d=np.ones(2), K=K)

    def test_nonzero_diagonal_rejected(self):
        K = np.eye(2)
        with pytest.raises(ValidationError):
            StageModel(p=np.zeros(2), d=np.ones(2), K=K)

    def test_nonpositive_damping_rejected(self):
        with pytest.raises(ValidationError):
            StageModel(p=np.zeros(2), d=np.array([1.0, 0.0]),
                       K=np.array([[0.0, 1.0], [1.0, 0.0]]))

    def test_arrays_read_only(self):
        stage = make_stage()
        with pytest.raises(ValueError):
            stage.p[0] = 1.0

    def test_edges_and_neighbors(self):
        K = np.zeros((3, 3))
        K[0, 1] = K[1, 0] = 2.0
        stage = StageModel(p=np.zeros(3), d=np.ones(3), K=K)
        assert stage.edges == [(0, 1)]
        assert list(stage.neighbors(1)) == [0]
        assert list(stage.neighbors(2)) == []


class TestRotatingFrame:
    def test_shift_zeroes_weighted_power(self):
        stage = make_stage(4, seed=3)
        shifted, omega = rotating_frame_shift(stage)
        assert omega == pytest.approx(stage.p.sum() / stage.d.sum())
        assert abs(shifted.p.sum()) < 1e-12
        np.testing.assert_array_equal(shifted.K, stage.K)

    def test_balanced_stage_unchanged(self):
        stage = StageModel(p=np.array([0.5, -0.5]), d=np.ones(2),
                           K=np.array([[0.0, 1.0], [1.0, 0.0]]))
        shifted, omega = rotating_frame_shift(stage)
        assert omega == 0.0
        np.testing.assert_array_equal(shifted.p, stage.p)


class TestBounds:
    def test_order_enforced(self):
        with pytest.raises(ValidationError):
            Bounds(lower=np.array([0.0]), upper=np.array([0.0]))

    def test_full_turn_rejected(self):
        with pytest.raises(ValidationError):
            Bounds(lower=np.array([0.0]), upper=np.array([2 * math.pi]))

    def test_contains_angles(self):
        b = Bounds(lower=np.array([-1.0, 0.0]), upper=np.array([1.0, 2.0]))
        assert b.contains_angles(np.array([0.0, 1.0]))
        assert not b.contains_angles(np.array([0.0, 2.5]))


class TestWrapAngle:
    @given(st.floats(-1e6, 1e6))
    def test_range_and_congruence(self, a):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-6)
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-6)


class TestScenarioDocument:
    def test_round_trip_exact(self, two_machine):
        text = dump_scenario(two_machine)
        again = load_scenario(text)
        assert dump_scenario(again) == text
        np.testing.assert_array_equal(again.pre.K, two_machine.pre.K)
        np.testing.assert_array_equal(again.bounds.lower,
                                      two_machine.bounds.lower)

    def test_machine_count_mismatch_rejected(self):
        s2 = make_stage(2, seed=1)
        s3 = make_stage(3, seed=1)
        with pytest.raises(ValidationError, match="machine count"):
            Scenario(pre=s2, fault=s3, post=s2)

    def test_missing_stage_rejected(self, two_machine):
        doc = json.loads(dump_scenario(two_machine))
        del doc["fault"]
        with pytest.raises(ScenarioError):
            load_scenario(json.dumps(doc))

    def test_solver_settings_round_trip(self, two_machine):
        doc = json.loads(dump_scenario(two_machine))
        doc["solver"]["abs_tol"] = 1e-7
        scn = load_scenario(json.dumps(doc))
        assert scn.solver.abs_tol == 1e-7

    def test_with_tolerances(self):
        s = SolverSettings()
        s2 = s.with_tolerances(s.abs_tol / 2, s.rel_tol / 2)
        assert s2.abs_tol == s.abs_tol / 2
        assert s2.horizon_s == s.horizon_s
