"""PPO for the threshold policy: reward, GAE, clipped-surrogate loss with exact gradients, Adam, training loop."""
import logging
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import pandas as pd

from .config import PolicyConfig, PpoConfig
from .dynamics import OutcomeKind, TransitionOutcome
from .errors import TrainingDivergenceError
from .normalizer import ReturnNormalizer, RunningNormalizer
from .policy import (
    Head,
    PolicyParams,
    act_on_input,
    init_policy,
    log_softmax,
    policy_input,
    sigmoid,
    squashed_log_prob,
)

logger = logging.getLogger(__name__)

REWARD_SUCCESS = 1000.0
REWARD_INFEASIBLE = -100.0
REWARD_STEP = -1.0
GAUSSIAN_ENTROPY_CONST = 0.5 * np.log(2.0 * np.pi * np.e)


def reward(outcome: TransitionOutcome) -> float:
    if outcome.kind is OutcomeKind.TARGET_EXTRACTED:
        return REWARD_SUCCESS
    if outcome.kind is OutcomeKind.INFEASIBLE:
        return REWARD_INFEASIBLE
    return REWARD_STEP


def compute_gae(rewards, values, dones, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Backward GAE recursion.

    ``values`` has one more entry than ``rewards``: the bootstrap value of the
    state after the last transition (ignored when that transition is terminal).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=float)
    if values.shape[0] != rewards.shape[0] + 1 or dones.shape != rewards.shape:
        raise ValueError("compute_gae needs len(values) == len(rewards) + 1 == len(dones) + 1")
    advantages = np.zeros_like(rewards)
    last = 0.0
    for t in reversed(range(rewards.shape[0])):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        advantages[t] = last
    return advantages, advantages + values[:-1]


@dataclass
class Transition:
    policy_input: np.ndarray  # already normalized
    raw: np.ndarray | int  # pre-squash sample, or action index
    log_prob: float
    reward: float  # scaled reward used for GAE
    value: float
    done: bool
    env_reward: float = 0.0
    thresholds: tuple[float, float] | None = None


class LossInfo(NamedTuple):
    total: float
    policy_loss: float
    value_loss: float
    entropy: float
    surrogate: float
    clip_fraction: float


def clipped_surrogate(ratio, advantages, clip: float) -> np.ndarray:
    ratio = np.asarray(ratio, dtype=float)
    advantages = np.asarray(advantages, dtype=float)
    return np.minimum(ratio * advantages, np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages)


def ppo_loss_and_grads(
    params: PolicyParams,
    inputs: np.ndarray,
    raws: np.ndarray,
    old_log_probs: np.ndarray,
    advantages: np.ndarray,
    returns: np.ndarray,
    config: PpoConfig,
) -> tuple[LossInfo, dict[str, np.ndarray]]:
    """Loss = -mean(surrogate) + vf_coef * mean((V - R)^2) - ent_coef * entropy.

    Gradients are keyed like ``PolicyParams.named_parameters``.
    """
    batch = inputs.shape[0]
    out = params.actor.forward(inputs)
    values = params.critic.forward(inputs)[:, 0]

    if params.head == "flat":
        actions = np.asarray(raws, dtype=np.int64)
        logp_all = log_softmax(out)
        log_probs = logp_all[np.arange(batch), actions]
        probs = np.exp(logp_all)
        entropy_each = -(probs * logp_all).sum(axis=1)
    else:
        u = np.asarray(raws, dtype=float)
        log_std = params.log_std
        # the squash correction term depends on u only; its parameter gradient is zero
        log_probs = squashed_log_prob(u, out, log_std)
        entropy_each = np.full(batch, float((log_std + GAUSSIAN_ENTROPY_CONST).sum()))

    ratio = np.exp(log_probs - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - config.clip, 1.0 + config.clip) * advantages
    surrogate = clipped_surrogate(ratio, advantages, config.clip)
    policy_loss = -surrogate.mean()
    value_loss = np.mean((values - returns) ** 2)
    entropy = entropy_each.mean()
    total = policy_loss + config.vf_coef * value_loss - config.ent_coef * entropy

    # d(policy_loss)/d(log_prob): the unclipped branch carries gradient, the clipped one is flat
    d_logp = -(unclipped * (unclipped <= clipped)) / batch

    grads: dict[str, np.ndarray] = {}
    if params.head == "flat":
        onehot = np.zeros_like(out)
        onehot[np.arange(batch), actions] = 1.0
        d_out = d_logp[:, None] * (onehot - probs)
        d_entropy = -probs * (logp_all + entropy_each[:, None])
        d_out -= config.ent_coef * d_entropy / batch
    else:
        sigma2 = np.exp(2.0 * log_std)
        d_out = d_logp[:, None] * (u - out) / sigma2
        z2 = (u - out) ** 2 / sigma2
        grads["log_std"] = (d_logp[:, None] * (z2 - 1.0)).sum(axis=0) - config.ent_coef * np.ones_like(log_std)

    params.actor.backward(d_out)
    params.critic.backward((config.vf_coef * 2.0 * (values - returns) / batch)[:, None])
    grads.update({f"actor.{k}": v.copy() for k, v in params.actor.gradients().items()})
    grads.update({f"critic.{k}": v.copy() for k, v in params.critic.gradients().items()})

    info = LossInfo(
        total=float(total),
        policy_loss=float(policy_loss),
        value_loss=float(value_loss),
        entropy=float(entropy),
        surrogate=float(surrogate.mean()),
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > config.clip)),
    )
    return info, grads


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> tuple[dict[str, np.ndarray], float]:
    norm = float(np.sqrt(sum(float((g**2).sum()) for g in grads.values())))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


class Adam:
    def __init__(self, lr: float, eps: float = 1e-8, beta1: float = 0.9, beta2: float = 0.999):
        self.lr, self.eps, self.beta1, self.beta2 = lr, eps, beta1, beta2
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """Update ``params`` in place."""
        self.t += 1
        for name, g in grads.items():
            m = self.m.setdefault(name, np.zeros_like(g))
            v = self.v.setdefault(name, np.zeros_like(g))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g**2
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            params[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _stack_raws(batch: list[Transition], head: Head) -> np.ndarray:
    if head == "flat":
        return np.array([t.raw for t in batch], dtype=np.int64)
    return np.stack([np.asarray(t.raw, dtype=float) for t in batch])


def ppo_update(
    params: PolicyParams,
    batch: list[Transition],
    advantages,
    returns,
    config: PpoConfig,
    rng: np.random.Generator,
    optimizer: Adam | None = None,
) -> tuple[PolicyParams, LossInfo]:
    """Several epochs of shuffled minibatch updates; returns new params and the mean loss."""
    if len(batch) != config.batch_size:
        raise ValueError(f"ppo_update expects {config.batch_size} transitions, got {len(batch)}")
    optimizer = optimizer or Adam(config.learning_rate, eps=config.adam_eps)
    last_good = params
    params = params.copy()

    inputs = np.stack([t.policy_input for t in batch])
    raws = _stack_raws(batch, params.head)
    old_log_probs = np.array([t.log_prob for t in batch])
    advantages = np.asarray(advantages, dtype=float)
    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    returns = np.asarray(returns, dtype=float)

    infos = []
    for _ in range(config.epochs):
        order = rng.permutation(config.batch_size)
        for start in range(0, config.batch_size, config.minibatch_size):
            idx = order[start : start + config.minibatch_size]
            info, grads = ppo_loss_and_grads(
                params, inputs[idx], raws[idx], old_log_probs[idx], advantages[idx], returns[idx], config
            )
            if not np.isfinite(info.total) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingDivergenceError(f"non-finite PPO loss ({info})", last_good=last_good)
            grads, _ = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(params.named_parameters(), grads)
            infos.append(info)
    mean_info = LossInfo(*np.mean(np.array(infos, dtype=float), axis=0).tolist())
    return params, mean_info


TRAINING_LOG_COLUMNS = (
    "iteration",
    "env_steps",
    "mean_return",
    "success_rate",
    "mean_tau1",
    "mean_tau2",
    "policy_loss",
    "value_loss",
)


@dataclass
class TrainingLog:
    rows: list[dict] = field(default_factory=list)

    def append(self, **row) -> None:
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=list(TRAINING_LOG_COLUMNS))

    def to_csv(self, path, **provenance) -> None:
        """Write the log; keyword arguments (config_hash, seed) become constant columns."""
        self.to_frame().assign(**provenance).to_csv(path, index=False, float_format="%.6f")


class TrainResult(NamedTuple):
    params: PolicyParams
    log: TrainingLog
    obs_normalizer: RunningNormalizer | None


def train(
    env_factory: Callable[[], object],
    config: PpoConfig,
    seed: int,
    policy_config: PolicyConfig | None = None,
    head: Head = "thresholds",
) -> TrainResult:
    """Collect ``batch_size``-step rollouts and update until ``total_steps`` environment steps.

    ``env_factory()`` must return an object with ``reset(seed) -> Observation``
    and ``step(choice) -> StepResult``. Initial weights come from
    ``default_rng([seed, 0])``; sampling and shuffling from ``default_rng([seed, 1])``.
    """
    policy_config = policy_config or PolicyConfig()
    init_rng = np.random.default_rng([seed, 0])
    rng = np.random.default_rng([seed, 1])
    env = env_factory()

    def next_episode_seed() -> int:
        return int(rng.integers(0, 2**31 - 1))

    obs = env.reset(next_episode_seed())
    encoder = policy_config.encoder
    raw_input = policy_input(obs, encoder)
    params = init_policy(raw_input.shape, policy_config, head, init_rng)

    use_obs_norm = config.normalize_obs and encoder == "mlp"
    obs_norm = RunningNormalizer(raw_input.shape, clip=config.clip_obs) if use_obs_norm else None
    ret_norm = ReturnNormalizer(config.gamma, clip=config.clip_reward) if config.normalize_reward else None
    optimizer = Adam(config.learning_rate, eps=config.adam_eps)
    log = TrainingLog()

    if config.total_steps == 0:
        logger.info("⚠️  total_steps=0, returning initial parameters")
        return TrainResult(params, log, obs_norm)

    logger.info("=" * 80)
    logger.info(f"Training {head} policy ({encoder}) for {config.total_steps} env steps, seed={seed}")
    logger.info("=" * 80)

    steps, iteration = 0, 0
    episode_return, finished = 0.0, []
    while steps < config.total_steps:
        iteration += 1
        batch: list[Transition] = []
        finished = []
        for _ in range(config.batch_size):
            if obs_norm is not None:
                obs_norm.update(obs.features[None, :])
            x = policy_input(obs, encoder, obs_norm)
            result = act_on_input(params, x, deterministic=False, rng=rng)
            step = env.step(result.choice)
            scaled = ret_norm.scale(step.reward, step.done) if ret_norm is not None else step.reward
            taus = None if head == "flat" else tuple(float(v) for v in sigmoid(result.raw))
            batch.append(Transition(x, result.raw, result.log_prob, scaled, result.value, step.done, step.reward, taus))
            episode_return += step.reward
            if step.done:
                finished.append((episode_return, step.success))
                episode_return = 0.0
                obs = env.reset(next_episode_seed())
            else:
                obs = step.observation
        steps += config.batch_size

        if batch[-1].done:
            bootstrap = 0.0
        else:
            x = policy_input(obs, encoder, obs_norm)[None, ...]
            bootstrap = float(params.critic.forward(x)[0, 0])
        values = [t.value for t in batch] + [bootstrap]
        advantages, returns = compute_gae(
            [t.reward for t in batch], values, [t.done for t in batch], config.gamma, config.gae_lambda
        )
        params, info = ppo_update(params, batch, advantages, returns, config, rng, optimizer)

        taus = np.array([t.thresholds for t in batch if t.thresholds is not None]).reshape(-1, 2)
        row = dict(
            iteration=iteration,
            env_steps=steps,
            mean_return=float(np.mean([r for r, _ in finished])) if finished else float("nan"),
            success_rate=float(np.mean([s for _, s in finished])) if finished else float("nan"),
            mean_tau1=float(taus[:, 0].mean()) if taus.size else float("nan"),
            mean_tau2=float(taus[:, 1].mean()) if taus.size else float("nan"),
            policy_loss=info.policy_loss,
            value_loss=info.value_loss,
        )
        log.append(**row)
        logger.info(
            f"iter {iteration:4d} steps={steps:6d} episodes={len(finished):3d} "
            f"return={row['mean_return']:8.2f} success={row['success_rate']:.2f} "
            f"tau=({row['mean_tau1']:.3f}, {row['mean_tau2']:.3f}) "
            f"pi_loss={info.policy_loss:.4f} v_loss={info.value_loss:.4f}"
        )

    logger.info(f"✓ Training finished after {steps} env steps ({iteration} iterations)")
    return TrainResult(params, log, obs_norm)
