import pytest

from mechsearch.agent import FixedThresholdPolicy, ScriptedPolicy, run_episode
from mechsearch.decision import Thresholds
from mechsearch.dynamics import MoveView, OutcomeKind
from mechsearch.env import MechanicalSearchEnv, head_for
from mechsearch.evaluation import run_batch


@pytest.mark.parametrize("seed", range(5))
def test_lone_target_is_grasped_in_one_motion(config, seed):
    env = MechanicalSearchEnv(config, "xpg", n_objects=1)
    result = run_episode(env, ScriptedPolicy([Thresholds(0.0, 0.0)]), seed)
    assert result.success
    assert result.motion_count == 1
    assert not result.aborted
    assert [s["action"] for s in result.steps] == ["grasp_target"]
    assert result.steps[0]["q_target"] == pytest.approx(1.0)
    assert result.steps[0]["reward"] == 1000.0


def test_object_count_is_sampled_per_seed(config):
    env = MechanicalSearchEnv(config, "xpg")
    counts = []
    for seed in range(10):
        env.reset(seed)
        counts.append(len(env.scene.objects))
    assert all(config.scene.min_objects <= n <= config.scene.max_objects for n in counts)
    env.reset(3)
    assert len(env.scene.objects) == counts[3]


def test_no_nbv_aborts_instead_of_moving(config):
    env = MechanicalSearchEnv(config, "no_nbv", n_objects=2, family="occluded")
    result = run_episode(env, FixedThresholdPolicy(1.0, 1.0), 0)
    assert result.aborted and not result.success
    assert result.motion_count == 0
    assert [s["outcome"] for s in result.steps] == [OutcomeKind.ABORTED.value]
    assert result.steps[0]["action"] == "move_view"
    assert result.steps[0]["reward"] == -1.0


def test_full_agent_moves_the_camera_when_both_gates_fail(config):
    env = MechanicalSearchEnv(config, "xpg", n_objects=2, family="occluded")
    env.reset(0)
    start = env.scene.camera
    assert len(env.view_candidates()) == len(config.nbv.elevations_deg) * config.nbv.azimuth_count

    step = env.step(Thresholds(1.0, 1.0))
    assert isinstance(step.action, MoveView)
    assert step.outcome.kind is OutcomeKind.VIEW_MOVED
    assert not step.done
    assert env.scene.camera == step.action.pose
    assert not env.scene.camera.same_view(start)
    assert env.scene.step_count == 1
    # the current view is no longer offered
    assert len(env.view_candidates()) == len(config.nbv.elevations_deg) * config.nbv.azimuth_count - 1
    assert env.grid.observed().sum() > 0


def test_flat_policy_picks_primitives_by_index(config):
    env = MechanicalSearchEnv(config, "flat_policy", n_objects=1)
    env.reset(0)
    step = env.step(0)
    assert step.action.tag == "grasp_target"
    assert step.thresholds is None
    assert step.success


def test_step_after_done_raises(config):
    env = MechanicalSearchEnv(config, "xpg", n_objects=1)
    env.reset(1)
    assert env.step(Thresholds(0.0, 0.0)).done
    with pytest.raises(RuntimeError):
        env.step(Thresholds(0.0, 0.0))


def test_budget_ends_the_episode(config):
    tight = config.model_copy(update={"dynamics": config.dynamics.model_copy(update={"max_motions": 3})})
    env = MechanicalSearchEnv(tight, "flat_policy", n_objects=2, family="occluded")
    result = run_episode(env, ScriptedPolicy([2]), 4)
    assert result.motion_count == 3
    assert not result.success
    assert {s["action"] for s in result.steps} == {"move_view"}


def test_unknown_method():
    with pytest.raises(ValueError):
        head_for("oracle")


def test_batches_are_deterministic_and_independent_of_jobs(config):
    first = run_batch("fixed_threshold", 5, 3, 11, config)
    second = run_batch("fixed_threshold", 5, 3, 11, config)
    threaded = run_batch("fixed_threshold", 5, 3, 11, config, jobs=2)
    assert first == second == threaded
    assert [r.scene_seed for r in first] == [11, 12, 13]
    assert all(r.n_objects == 5 and r.method == "fixed_threshold" for r in first)


def test_strict_occluders_with_an_open_removal_gate(config):
    strict = config.model_copy(update={"oracle": config.oracle.model_copy(update={"strict_occluders": True})})
    unblocked = 0
    for n_objects in (5, 10):
        env = MechanicalSearchEnv(strict, "fixed_threshold", n_objects=n_objects)
        for seed in range(40):
            env.reset(seed)
            step = env.step(Thresholds(1.0, 0.0))
            if step.scores.best_occluder is None and step.scores.q_target < 1.0:
                assert isinstance(step.action, MoveView)
                unblocked += 1
    assert unblocked > 0
