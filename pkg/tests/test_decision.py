import numpy as np
import pytest

from mechsearch.decision import Thresholds, decide, decide_flat
from mechsearch.dynamics import GraspTarget, MoveView, RemoveOccluder
from mechsearch.errors import ScoresInconsistentError
from mechsearch.grasp_oracle import GraspScores
from mechsearch.scene import CameraPose

POSE = CameraPose(position=(0.3, 0.3, 0.4), look_at=(0.0, 0.0, 0.0), focal_px=55, width=64, height=64)


def scores(q_target, q_occlude, best=7):
    return GraspScores(per_object={}, q_target=q_target, q_occlude=q_occlude, best_occluder=best)


@pytest.mark.parametrize(
    "q_target,q_occlude,tau1,tau2,expected",
    [
        (0.8, 0.9, 0.5, 0.5, GraspTarget()),
        (0.3, 0.7, 0.5, 0.5, RemoveOccluder(7)),
        (0.3, 0.2, 0.5, 0.5, MoveView(POSE)),
        (0.5, 0.0, 0.5, 0.5, GraspTarget()),
        (0.0, 0.0, 0.0, 0.0, GraspTarget()),
        (1.0, 1.0, 1.0, 1.0, GraspTarget()),
        (0.99, 1.0, 1.0, 1.0, RemoveOccluder(7)),
    ],
)
def test_cascade_examples(q_target, q_occlude, tau1, tau2, expected):
    assert decide(Thresholds(tau1, tau2), scores(q_target, q_occlude), POSE) == expected


def test_nbv_is_only_planned_when_both_gates_fail():
    calls = []

    def planner():
        calls.append(1)
        return POSE

    decide(Thresholds(0.5, 0.5), scores(0.9, 0.0), planner)
    decide(Thresholds(0.5, 0.5), scores(0.1, 0.9), planner)
    assert calls == []
    assert decide(Thresholds(0.5, 0.5), scores(0.1, 0.1), planner) == MoveView(POSE)
    assert calls == [1]


def test_gate_without_named_occluder_is_inconsistent():
    with pytest.raises(ScoresInconsistentError):
        decide(Thresholds(0.5, 0.2), scores(0.1, 0.3, best=None), POSE)


@pytest.mark.parametrize("tau", [(-0.1, 0.5), (0.5, 1.2)])
def test_thresholds_outside_unit_interval(tau):
    with pytest.raises(ValueError):
        Thresholds(*tau)


def test_clamped_thresholds():
    assert Thresholds.clamped(-3.0, 7.0) == Thresholds(0.0, 1.0)


def test_truth_table_and_priority_properties():
    grid = np.linspace(0.0, 1.0, 50)
    code = {GraspTarget.tag: 0, RemoveOccluder.tag: 1, MoveView.tag: 2}
    score_objects = [scores(qt, qo) for qt in grid for qo in grid]
    threshold_objects = [Thresholds(t1, t2) for t1 in grid for t2 in grid]

    actual = np.empty((len(score_objects), len(threshold_objects)), dtype=np.int8)
    for i, s in enumerate(score_objects):
        actual[i] = [code[decide(t, s, POSE).tag] for t in threshold_objects]
    actual = actual.reshape(50, 50, 50, 50)  # (q_target, q_occlude, tau1, tau2)

    qt, qo, t1, t2 = np.meshgrid(grid, grid, grid, grid, indexing="ij")
    expected = np.where(qt >= t1, 0, np.where(qo >= t2, 1, 2))
    np.testing.assert_array_equal(actual, expected)

    # grasp dominates whenever its gate passes, whatever the occluder looks like
    assert np.all(actual[qt >= t1] == 0)
    # raising q_target never moves the decision to a lower-priority primitive
    assert np.all(np.diff(actual, axis=0) <= 0)
    # raising tau1 never moves it to a higher-priority primitive
    assert np.all(np.diff(actual, axis=2) >= 0)
    # with the first gate closed, raising q_occlude only helps removal
    assert np.all(np.diff(np.where(qt < t1, actual, 1), axis=1) <= 0)


def test_flat_argmax():
    s = scores(0.1, 0.2)
    assert decide_flat([3.0, 1.0, 2.0], s, POSE) == GraspTarget()
    assert decide_flat([0.0, 5.0, 2.0], s, POSE) == RemoveOccluder(7)
    assert decide_flat([0.0, 1.0, 2.0], s, POSE) == MoveView(POSE)
    assert decide_flat([1.0, 1.0, 1.0], s, POSE) == GraspTarget()


def test_flat_removal_without_occluder_is_left_to_execution():
    assert decide_flat([0.0, 1.0, 0.0], scores(0.1, 0.0, best=None), POSE) == RemoveOccluder(None)


@pytest.mark.parametrize("logits", [[1.0, 2.0], [1.0, np.nan, 0.0]])
def test_flat_rejects_bad_logits(logits):
    with pytest.raises(ValueError):
        decide_flat(logits, scores(0.1, 0.1), POSE)


@pytest.mark.parametrize("tau2", [0.0, 0.3])
def test_no_eligible_occluder_falls_through_to_the_view_move(tau2):
    empty = GraspScores(per_object={1: 0.2}, q_target=0.2, q_occlude=0.0, best_occluder=None)
    assert decide(Thresholds(0.5, tau2), empty, POSE) == MoveView(POSE)


def test_positive_occluder_score_without_a_name_is_inconsistent_at_zero_tau():
    with pytest.raises(ScoresInconsistentError):
        decide(Thresholds(0.5, 0.0), scores(0.2, 0.4, best=None), POSE)
