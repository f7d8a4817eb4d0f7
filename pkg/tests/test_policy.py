import json
import math

import numpy as np
import pytest

from mechsearch.config import PolicyConfig
from mechsearch.decision import Thresholds
from mechsearch.errors import ConfigurationError, TrainingDivergenceError
from mechsearch.networks import Conv2d, conv_mlp, mlp, orthogonal
from mechsearch.normalizer import RunningNormalizer
from mechsearch.perception import FEATURE_DIM
from mechsearch.policy import act, init_policy, load_checkpoint, log_softmax, save_checkpoint, sigmoid


def features(seed=0):
    return np.random.default_rng(seed).uniform(0.0, 1.0, FEATURE_DIM)


def thresholds_policy(seed=0, **overrides):
    cfg = PolicyConfig(hidden_sizes=[16, 16], **overrides)
    return init_policy((FEATURE_DIM,), cfg, "thresholds", np.random.default_rng(seed))


def normal_cdf(x):
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def logit(p):
    return math.log(p / (1.0 - p))


def test_deterministic_act_is_stable(feature_observation):
    params = thresholds_policy()
    obs = feature_observation(features())
    first = act(params, obs, None, deterministic=True)
    second = act(params, obs, None, deterministic=True)
    assert first.choice == second.choice
    assert first.value == second.value
    assert isinstance(first.choice, Thresholds)
    assert 0.0 <= first.choice.tau1 <= 1.0 and 0.0 <= first.choice.tau2 <= 1.0


def test_untrained_thresholds_start_near_one_half(feature_observation):
    result = act(thresholds_policy(), feature_observation(features()), None, deterministic=True)
    assert result.choice.tau1 == pytest.approx(0.5, abs=0.05)
    assert result.choice.tau2 == pytest.approx(0.5, abs=0.05)


def test_stochastic_act_needs_an_rng(feature_observation):
    with pytest.raises(ValueError):
        act(thresholds_policy(), feature_observation(features()), None, deterministic=False)


@pytest.mark.parametrize("seed", range(5))
def test_squashed_log_prob_matches_the_threshold_cdf(feature_observation, seed):
    params = thresholds_policy(seed, init_log_std=-0.5)
    obs = feature_observation(features(seed))
    result = act(params, obs, None, deterministic=False, rng=np.random.default_rng(seed))
    mean = params.actor.forward(np.asarray(obs.features)[None, :])[0]
    std = np.exp(params.log_std)

    h = 1e-5
    log_density = 0.0
    for k, tau in enumerate(sigmoid(result.raw)):
        hi = normal_cdf((logit(tau + h) - mean[k]) / std[k])
        lo = normal_cdf((logit(tau - h) - mean[k]) / std[k])
        log_density += math.log((hi - lo) / (2.0 * h))
    assert result.log_prob == pytest.approx(log_density, abs=1e-4)


def test_flat_head_samples_follow_the_softmax(feature_observation):
    cfg = PolicyConfig(hidden_sizes=[16])
    params = init_policy((FEATURE_DIM,), cfg, "flat", np.random.default_rng(1))
    obs = feature_observation(features(1))
    probs = np.exp(log_softmax(params.actor.forward(np.asarray(obs.features)[None, :])[0]))

    greedy = act(params, obs, None, deterministic=True)
    assert greedy.choice == int(np.argmax(probs))
    assert greedy.log_prob == pytest.approx(math.log(probs[greedy.choice]))

    rng = np.random.default_rng(2)
    counts = np.zeros(3)
    for _ in range(3000):
        counts[act(params, obs, None, deterministic=False, rng=rng).choice] += 1
    np.testing.assert_allclose(counts / counts.sum(), probs, atol=0.04)


def test_non_finite_weights_raise_divergence(feature_observation):
    params = thresholds_policy()
    params.actor.layers[0].params["W"][:] = np.nan
    with pytest.raises(TrainingDivergenceError):
        act(params, feature_observation(features()), None, deterministic=True)


def test_checkpoint_round_trip(tmp_path, feature_observation):
    params = thresholds_policy(3)
    norm = RunningNormalizer((FEATURE_DIM,))
    norm.update(np.random.default_rng(0).uniform(size=(50, FEATURE_DIM)))
    path = save_checkpoint(tmp_path / "ckpt.json", params, norm, "xpg", "abc123", 3)

    loaded, loaded_norm, meta = load_checkpoint(path)
    assert meta == {"method": "xpg", "head": "thresholds", "encoder": "mlp", "config_hash": "abc123", "seed": 3}
    for name, value in params.named_parameters().items():
        np.testing.assert_array_equal(loaded.named_parameters()[name], value)
    np.testing.assert_allclose(loaded_norm.mean, norm.mean)
    np.testing.assert_allclose(loaded_norm.var, norm.var)

    obs = feature_observation(features(4))
    before, after = act(params, obs, norm, True), act(loaded, obs, loaded_norm, True)
    assert after.choice == before.choice
    assert after.value == before.value


def test_missing_checkpoint(tmp_path):
    with pytest.raises(ConfigurationError):
        load_checkpoint(tmp_path / "nope.json")


def test_checkpoint_schema_mismatch(tmp_path):
    path = save_checkpoint(tmp_path / "ckpt.json", thresholds_policy(), None, "xpg", "h", 0)
    payload = json.loads(path.read_text())
    payload["schema_version"] = 99
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigurationError):
        load_checkpoint(path)


@pytest.mark.parametrize("shape", [(6, 3), (3, 6), (4, 4)])
def test_orthogonal_init(shape):
    w = orthogonal(*shape, 2.0, np.random.default_rng(0))
    assert w.shape == shape
    small = w @ w.T if shape[0] <= shape[1] else w.T @ w
    np.testing.assert_allclose(small, 4.0 * np.eye(min(shape)), atol=1e-10)


def numeric_grad(f, array, index, eps=1e-6):
    old = array[index]
    array[index] = old + eps
    up = f()
    array[index] = old - eps
    down = f()
    array[index] = old
    return (up - down) / (2.0 * eps)


def test_conv_layer_gradients():
    rng = np.random.default_rng(0)
    layer = Conv2d(2, 3, 3, 2, 1.0, rng)
    layer.params["b"] = rng.standard_normal(3)
    x = rng.standard_normal((2, 2, 7, 7))
    g = rng.standard_normal(layer.forward(x).shape)
    dx = layer.backward(g)

    def loss():
        return float((layer.forward(x) * g).sum())

    for name in ("W", "b"):
        param = layer.params[name]
        expected = np.array([numeric_grad(loss, param, idx) for idx in np.ndindex(param.shape)]).reshape(param.shape)
        np.testing.assert_allclose(layer.grads[name], expected, rtol=1e-5, atol=1e-8)
    expected_dx = np.array([numeric_grad(loss, x, idx) for idx in np.ndindex(x.shape)]).reshape(x.shape)
    np.testing.assert_allclose(dx, expected_dx, rtol=1e-5, atol=1e-8)


@pytest.mark.parametrize("kind", ["mlp", "conv"])
def test_network_gradients_on_sampled_entries(kind):
    rng = np.random.default_rng(1)
    if kind == "conv":
        net = conv_mlp((2, 36, 36), [4], 3, 1.0, rng)
        x = rng.uniform(0.0, 1.0, (2, 2, 36, 36))
    else:
        net = mlp(5, [8, 8], 3, 1.0, rng)
        x = rng.standard_normal((4, 5))
    g = rng.standard_normal((x.shape[0], 3))
    net.forward(x)
    net.backward(g)
    grads = {k: v.copy() for k, v in net.gradients().items()}

    def loss():
        return float((net.forward(x) * g).sum())

    params = net.parameters()
    for name, param in params.items():
        for _ in range(3):
            idx = tuple(int(rng.integers(n)) for n in param.shape)
            assert grads[name][idx] == pytest.approx(numeric_grad(loss, param, idx), rel=1e-4, abs=1e-6)
