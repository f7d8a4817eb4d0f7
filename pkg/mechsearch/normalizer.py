import numpy as np


class RunningNormalizer:
    """Streaming mean/variance (parallel-merge form) used to whiten observations or returns."""

    def __init__(self, shape: tuple = (), clip: float = 10.0, epsilon: float = 1e-8, prior_count: float = 1e-4):
        self.shape = tuple(shape)
        # unit-variance prior with a tiny weight so a single first sample does not collapse var to 0
        self.count = float(prior_count)
        self.mean = np.zeros(self.shape)
        self.var = np.ones(self.shape)
        self.clip = clip
        self.epsilon = epsilon

    def update(self, batch) -> None:
        batch = np.asarray(batch, dtype=float).reshape((-1,) + self.shape)
        n = batch.shape[0]
        if n == 0:
            return
        batch_mean = batch.mean(axis=0)
        batch_var = batch.var(axis=0)
        total = self.count + n
        delta = batch_mean - self.mean
        m2 = self.var * self.count + batch_var * n + delta**2 * self.count * n / total
        self.mean = self.mean + delta * n / total
        self.var = m2 / total
        self.count = total

    def normalize(self, x) -> np.ndarray:
        return np.clip((np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.var + self.epsilon), -self.clip, self.clip)

    def state_dict(self) -> dict:
        return {
            "shape": list(self.shape),
            "count": self.count,
            "mean": np.atleast_1d(self.mean).tolist(),
            "var": np.atleast_1d(self.var).tolist(),
            "clip": self.clip,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_state_dict(cls, state: dict) -> "RunningNormalizer":
        norm = cls(tuple(state["shape"]), clip=state["clip"], epsilon=state["epsilon"])
        norm.count = float(state["count"])
        norm.mean = np.array(state["mean"], dtype=float).reshape(norm.shape)
        norm.var = np.array(state["var"], dtype=float).reshape(norm.shape)
        return norm


class ReturnNormalizer:
    """Scale rewards by the running std of the discounted return."""

    def __init__(self, gamma: float, clip: float = 10.0, epsilon: float = 1e-8):
        self.gamma = gamma
        # a one-sample unit-variance prior keeps early rewards out of the clip range
        self.stats = RunningNormalizer((), clip=clip, epsilon=epsilon, prior_count=1.0)
        self._ret = 0.0

    def scale(self, reward: float, done: bool) -> float:
        self._ret = self._ret * self.gamma + reward
        self.stats.update([self._ret])
        scaled = float(np.clip(reward / np.sqrt(self.stats.var + self.stats.epsilon), -self.stats.clip, self.stats.clip))
        if done:
            self._ret = 0.0
        return scaled
