"""Desk-scale training and evaluation runs; minutes of CPU time. Run with ``pytest -m slow``."""
import numpy as np
import pytest

from mechsearch.config import RunConfig
from mechsearch.env import MechanicalSearchEnv, head_for
from mechsearch.evaluation import compute_metrics, load_policy, run_ablation_suite, run_batch
from mechsearch.policy import save_checkpoint
from mechsearch.ppo import train
from mechsearch.shared import LEARNED_METHODS, METHODS

pytestmark = pytest.mark.slow

OBJECT_COUNTS = [5, 10, 15, 20]
N_SCENES = 100
# Sampling tolerance only: the success rate should be non-increasing in clutter, but a
# 100-scene cell has a binomial std of about 4 points, so adjacent cells may tick up
# by up to RATE_SLACK. The first-vs-last comparison below has no tolerance.
RATE_SLACK = 5.0
MOTION_SLACK = 0.3


@pytest.fixture(scope="module")
def config():
    return RunConfig(eval=RunConfig().eval.model_copy(update={"jobs": 4}))


@pytest.fixture(scope="module")
def checkpoints(config, tmp_path_factory):
    out = tmp_path_factory.mktemp("checkpoints")
    paths = {}
    for method in LEARNED_METHODS:
        result = train(lambda: MechanicalSearchEnv(config, method), config.ppo, config.seed, config.policy, head_for(method))
        paths[method] = save_checkpoint(out / f"{method}.json", result.params, result.obs_normalizer, method, "trend", config.seed)
    return paths


@pytest.fixture(scope="module")
def table(config, checkpoints):
    table, _ = run_ablation_suite(config, checkpoints, methods=list(METHODS), object_counts=OBJECT_COUNTS, n_scenes=N_SCENES)
    return table


@pytest.mark.parametrize("n_objects", [10, 20])
def test_learned_thresholds_beat_fixed_thresholds(table, n_objects):
    assert table.cell("xpg", n_objects)["efficiency"] >= table.cell("fixed_threshold", n_objects)["efficiency"]


@pytest.mark.parametrize("n_objects", OBJECT_COUNTS)
def test_priority_cascade_beats_the_flat_policy(table, n_objects):
    assert table.cell("xpg", n_objects)["efficiency"] >= table.cell("flat_policy", n_objects)["efficiency"]


def test_view_planning_matters_when_the_target_is_hidden(config, checkpoints):
    records = []
    for method in ("xpg", "no_nbv"):
        policy = load_policy(method, checkpoints[method], config)
        records += run_batch(method, 5, N_SCENES, config.eval.base_seed, config, policy, family="occluded", jobs=config.eval.jobs)
    occluded = compute_metrics(records, "no_nbv")
    assert occluded.cell("xpg", 5)["success_rate"] >= occluded.cell("no_nbv", 5)["success_rate"]
    assert occluded.cell("no_nbv", 5)["success_rate"] < 100.0


def test_clutter_makes_search_harder(table):
    rates = np.array([table.cell("xpg", n)["success_rate"] for n in OBJECT_COUNTS])
    motions = np.array([table.cell("xpg", n)["avg_motions"] for n in OBJECT_COUNTS])
    assert np.all(np.diff(rates) <= RATE_SLACK)
    assert np.all(np.diff(motions) >= -MOTION_SLACK)
    assert rates[-1] <= rates[0]
    assert motions[-1] >= motions[0]
