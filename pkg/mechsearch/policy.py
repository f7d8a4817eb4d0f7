"""Actor/critic parameters, the squashed-Gaussian threshold head and the flat categorical head."""
import copy
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np

from .config import PolicyConfig
from .decision import Thresholds
from .errors import ConfigurationError, TrainingDivergenceError
from .networks import Network, conv_mlp, mlp
from .normalizer import RunningNormalizer
from .perception import Observation
from .shared import SCHEMA_VERSION

logger = logging.getLogger(__name__)

Head = Literal["thresholds", "flat"]
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class PolicyParams:
    actor: Network
    critic: Network
    head: Head
    encoder: Literal["mlp", "conv"]
    input_shape: tuple[int, ...]
    hidden_sizes: tuple[int, ...]
    log_std: np.ndarray | None = None  # (2,), thresholds head only

    def named_parameters(self) -> dict[str, np.ndarray]:
        params = {f"actor.{k}": v for k, v in self.actor.parameters().items()}
        params.update({f"critic.{k}": v for k, v in self.critic.parameters().items()})
        if self.log_std is not None:
            params["log_std"] = self.log_std
        return params

    def load_named_parameters(self, params: dict[str, np.ndarray]) -> None:
        self.actor.load_parameters({k[len("actor."):]: v for k, v in params.items() if k.startswith("actor.")})
        self.critic.load_parameters({k[len("critic."):]: v for k, v in params.items() if k.startswith("critic.")})
        if "log_std" in params:
            self.log_std = np.array(params["log_std"], dtype=float)

    def copy(self) -> "PolicyParams":
        return copy.deepcopy(self)


class ActResult(NamedTuple):
    choice: Thresholds | int
    log_prob: float
    value: float
    raw: np.ndarray | int  # pre-squash sample, or action index


def init_policy(input_shape: tuple[int, ...], config: PolicyConfig, head: Head, rng: np.random.Generator) -> PolicyParams:
    """Separate actor and critic, orthogonal weights, zero biases."""
    n_out = 2 if head == "thresholds" else 3
    if config.encoder == "conv":
        actor = conv_mlp(input_shape, config.hidden_sizes, n_out, 0.01, rng)
        critic = conv_mlp(input_shape, config.hidden_sizes, 1, 1.0, rng)
    else:
        actor = mlp(input_shape[0], config.hidden_sizes, n_out, 0.01, rng)
        critic = mlp(input_shape[0], config.hidden_sizes, 1, 1.0, rng)
    log_std = np.full(2, config.init_log_std) if head == "thresholds" else None
    return PolicyParams(actor, critic, head, config.encoder, tuple(input_shape), tuple(config.hidden_sizes), log_std)


def policy_input(obs: Observation, encoder: str, normalizer: RunningNormalizer | None = None) -> np.ndarray:
    if encoder == "conv":
        return obs.stacked()
    return normalizer.normalize(obs.features) if normalizer is not None else np.asarray(obs.features, dtype=float)


def sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(u, dtype=float)))


def gaussian_log_prob(u: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    """log N(u; mean, exp(log_std)^2) summed over the last axis."""
    z = (u - mean) * np.exp(-log_std)
    return (-0.5 * z**2 - log_std - 0.5 * LOG_2PI).sum(axis=-1)


def squash_log_det(u: np.ndarray) -> np.ndarray:
    """log |d sigmoid(u) / du| summed over the last axis."""
    return (-np.logaddexp(0.0, u) - np.logaddexp(0.0, -u)).sum(axis=-1)


def squashed_log_prob(u, mean, log_std) -> np.ndarray:
    """Density of tau = sigmoid(u) with the change-of-variables correction."""
    return gaussian_log_prob(u, mean, log_std) - squash_log_det(u)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def act(
    params: PolicyParams,
    obs: Observation,
    normalizer: RunningNormalizer | None,
    deterministic: bool,
    rng: np.random.Generator | None = None,
) -> ActResult:
    """Thresholds (or an action index for the flat head), log-prob and critic value for one observation."""
    return act_on_input(params, policy_input(obs, params.encoder, normalizer), deterministic, rng)


def act_on_input(params: PolicyParams, x: np.ndarray, deterministic: bool, rng: np.random.Generator | None = None) -> ActResult:
    x = np.asarray(x, dtype=float)[None, ...]
    out = params.actor.forward(x)[0]
    value = float(params.critic.forward(x)[0, 0])
    if not (np.all(np.isfinite(out)) and np.isfinite(value)):
        raise TrainingDivergenceError(f"non-finite network output: actor={out}, value={value}")
    if not deterministic and rng is None:
        raise ValueError("stochastic act needs an rng")

    if params.head == "flat":
        logp_all = log_softmax(out)
        if deterministic:
            index = int(np.argmax(out))
        else:
            index = int(rng.choice(len(out), p=np.exp(logp_all) / np.exp(logp_all).sum()))
        return ActResult(index, float(logp_all[index]), value, index)

    u = out.copy() if deterministic else out + np.exp(params.log_std) * rng.standard_normal(2)
    tau = sigmoid(u)
    log_prob = float(squashed_log_prob(u, out, params.log_std))
    return ActResult(Thresholds.clamped(tau[0], tau[1]), log_prob, value, u)


def save_checkpoint(
    path: str | Path,
    params: PolicyParams,
    normalizer: RunningNormalizer | None,
    method: str,
    config_hash: str,
    seed: int,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "head": params.head,
        "encoder": params.encoder,
        "input_shape": list(params.input_shape),
        "config_hash": config_hash,
        "seed": seed,
        "hidden_sizes": list(params.hidden_sizes),
        "params": {name: value.tolist() for name, value in params.named_parameters().items()},
        "obs_normalizer": normalizer.state_dict() if normalizer is not None else None,
    }
    path.write_text(json.dumps(payload, sort_keys=True))
    logger.info(f"✓ Checkpoint written to {path}")
    return path


def load_checkpoint(path: str | Path) -> tuple[PolicyParams, RunningNormalizer | None, dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"checkpoint not found: {path}")
    payload = json.loads(path.read_text())
    if payload.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(f"{path}: unsupported checkpoint schema {payload.get('schema_version')}")
    config = PolicyConfig(encoder=payload["encoder"], hidden_sizes=payload["hidden_sizes"])
    params = init_policy(tuple(payload["input_shape"]), config, payload["head"], np.random.default_rng(0))
    params.load_named_parameters({k: np.array(v, dtype=float) for k, v in payload["params"].items()})
    state = payload.get("obs_normalizer")
    normalizer = RunningNormalizer.from_state_dict(state) if state else None
    meta = {k: payload[k] for k in ("method", "head", "encoder", "config_hash", "seed")}
    return params, normalizer, meta
