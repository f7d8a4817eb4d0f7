"""Per-episode agent loop as a LangGraph workflow: policy node -> act node -> route."""
import logging
import operator
from dataclasses import dataclass
from typing import Annotated, Literal, Protocol, TypedDict

from langchain_core.runnables import RunnableConfig
from langgraph.graph import END, StateGraph

from .decision import Thresholds
from .dynamics import OutcomeKind, action_to_dict
from .env import MechanicalSearchEnv
from .normalizer import RunningNormalizer
from .perception import Observation
from .policy import PolicyParams, act

logger = logging.getLogger(__name__)


class Policy(Protocol):
    def choose(self, observation: Observation) -> tuple[Thresholds | int, dict]: ...


class ThresholdPolicy:
    """Trained threshold head, evaluated at its mean."""

    def __init__(self, params: PolicyParams, normalizer: RunningNormalizer | None = None):
        self.params, self.normalizer = params, normalizer

    def choose(self, observation):
        result = act(self.params, observation, self.normalizer, deterministic=True)
        return result.choice, {"tau1": result.choice.tau1, "tau2": result.choice.tau2, "value": result.value}


class FixedThresholdPolicy:
    def __init__(self, tau1: float = 0.5, tau2: float = 0.5):
        self.thresholds = Thresholds(tau1, tau2)

    def choose(self, observation):
        return self.thresholds, {"tau1": self.thresholds.tau1, "tau2": self.thresholds.tau2}


class FlatPolicy:
    """Trained categorical head over the three primitives, argmax at evaluation."""

    def __init__(self, params: PolicyParams, normalizer: RunningNormalizer | None = None):
        self.params, self.normalizer = params, normalizer

    def choose(self, observation):
        result = act(self.params, observation, self.normalizer, deterministic=True)
        return result.choice, {"action_index": result.choice, "value": result.value}


class ScriptedPolicy:
    """Replays a fixed list of choices; repeats the last one when the list runs out."""

    def __init__(self, choices: list):
        if not choices:
            raise ValueError("ScriptedPolicy needs at least one choice")
        self.choices = list(choices)
        self._i = 0

    def choose(self, observation):
        choice = self.choices[min(self._i, len(self.choices) - 1)]
        self._i += 1
        return choice, {}


class EpisodeState(TypedDict):
    observation: Observation
    choice: Thresholds | int | None
    policy_output: dict
    steps: Annotated[list, operator.add]
    done: bool
    success: bool


def policy_node(state: EpisodeState, config: RunnableConfig) -> dict:
    policy: Policy = config["configurable"]["policy"]
    choice, output = policy.choose(state["observation"])
    return {"choice": choice, "policy_output": output}


def act_node(state: EpisodeState, config: RunnableConfig) -> dict:
    env: MechanicalSearchEnv = config["configurable"]["env"]
    result = env.step(state["choice"])
    thresholds = result.thresholds
    entry = {
        "action": result.action.tag,
        "action_detail": action_to_dict(result.action),
        "outcome": result.outcome.kind.value,
        "object_id": result.outcome.object_id,
        "reward": result.reward,
        "q_target": result.scores.q_target,
        "q_occlude": result.scores.q_occlude,
        "tau1": thresholds.tau1 if thresholds is not None else None,
        "tau2": thresholds.tau2 if thresholds is not None else None,
        "policy_output": state["policy_output"],
    }
    logger.debug(f"   {entry['action']} -> {entry['outcome']} (q_t={entry['q_target']:.3f}, q_o={entry['q_occlude']:.3f})")
    return {"observation": result.observation, "steps": [entry], "done": result.done, "success": result.success}


def route(state: EpisodeState) -> Literal["policy", "__end__"]:
    return END if state["done"] else "policy"


workflow = StateGraph(EpisodeState)
workflow.add_node("policy", policy_node)
workflow.add_node("act", act_node)
workflow.set_entry_point("policy")
workflow.add_edge("policy", "act")
workflow.add_conditional_edges("act", route)
graph = workflow.compile()


@dataclass(frozen=True)
class EpisodeResult:
    seed: int
    steps: list[dict]
    success: bool
    motion_count: int
    aborted: bool


def run_episode(env: MechanicalSearchEnv, policy: Policy, seed: int) -> EpisodeResult:
    """Reset ``env`` with ``seed`` and let ``policy`` act until success, budget or abort."""
    observation = env.reset(seed)
    initial_state = {
        "observation": observation,
        "choice": None,
        "policy_output": {},
        "steps": [],
        "done": False,
        "success": False,
    }
    # two supersteps per motion, plus an aborting step
    limit = 2 * env.config.dynamics.max_motions + 10
    result = graph.invoke(initial_state, {"recursion_limit": limit, "configurable": {"env": env, "policy": policy}})
    steps = result["steps"]
    aborted = bool(steps) and steps[-1]["outcome"] == OutcomeKind.ABORTED.value
    motion_count = sum(1 for s in steps if s["outcome"] != OutcomeKind.ABORTED.value)
    return EpisodeResult(seed=seed, steps=steps, success=result["success"], motion_count=motion_count, aborted=aborted)
