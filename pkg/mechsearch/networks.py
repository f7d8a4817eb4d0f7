"""Small numpy networks with hand-written backward passes.

Every layer caches what its backward pass needs during ``forward``; call
``backward`` with dL/d(output) right after the matching ``forward``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def orthogonal(n_out: int, n_in: int, gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal (n_out, n_in) matrix scaled by ``gain``."""
    flat = rng.standard_normal((max(n_out, n_in), min(n_out, n_in)))
    q, r = np.linalg.qr(flat)
    q *= np.sign(np.diag(r))
    if n_out < n_in:
        q = q.T
    return gain * q[:n_out, :n_in]


class Dense:
    def __init__(self, n_in: int, n_out: int, gain: float, rng: np.random.Generator):
        self.params = {"W": orthogonal(n_out, n_in, gain, rng).T.copy(), "b": np.zeros(n_out)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def forward(self, x):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, grad):
        self.grads["W"] = self._x.T @ grad
        self.grads["b"] = grad.sum(axis=0)
        return grad @ self.params["W"].T


class Tanh:
    params: dict = {}
    grads: dict = {}

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, grad):
        return grad * (1.0 - self._y**2)


class ReLU:
    params: dict = {}
    grads: dict = {}

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad):
        return grad * self._mask


class Flatten:
    params: dict = {}
    grads: dict = {}

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Conv2d:
    """Valid (unpadded) strided convolution over (B, C, H, W) input via im2col."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int, gain: float, rng: np.random.Generator):
        self.kernel, self.stride = kernel, stride
        self.params = {"W": orthogonal(out_ch, in_ch * kernel * kernel, gain, rng), "b": np.zeros(out_ch)}
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}

    def output_size(self, size: int) -> int:
        return (size - self.kernel) // self.stride + 1

    def forward(self, x):
        k, s = self.kernel, self.stride
        windows = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        b, c, ho, wo = windows.shape[:4]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b, ho, wo, c * k * k)
        self._x_shape, self._cols = x.shape, cols
        out = cols @ self.params["W"].T + self.params["b"]
        return out.transpose(0, 3, 1, 2)

    def backward(self, grad):
        k, s = self.kernel, self.stride
        b, c, h, w = self._x_shape
        g = grad.transpose(0, 2, 3, 1)
        ho, wo, n_out = g.shape[1:]
        self.grads["W"] = g.reshape(-1, n_out).T @ self._cols.reshape(-1, c * k * k)
        self.grads["b"] = g.sum(axis=(0, 1, 2))
        dcols = (g @ self.params["W"]).reshape(b, ho, wo, c, k, k)
        dx = np.zeros(self._x_shape)
        for i in range(k):
            for j in range(k):
                dx[:, :, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dx


class Network:
    def __init__(self, layers: list):
        self.layers = layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.params.items()}

    def gradients(self) -> dict[str, np.ndarray]:
        return {f"{i}.{k}": v for i, layer in enumerate(self.layers) for k, v in layer.grads.items()}

    def load_parameters(self, params: dict[str, np.ndarray]) -> None:
        for name, value in params.items():
            i, k = name.split(".")
            layer = self.layers[int(i)]
            if layer.params[k].shape != np.shape(value):
                raise ValueError(f"shape mismatch for {name}: {layer.params[k].shape} vs {np.shape(value)}")
            layer.params[k] = np.array(value, dtype=float)


def mlp(n_in: int, hidden: list[int], n_out: int, out_gain: float, rng: np.random.Generator) -> Network:
    """tanh MLP; hidden layers use gain sqrt(2), the output layer ``out_gain``."""
    layers, width = [], n_in
    for size in hidden:
        layers += [Dense(width, size, np.sqrt(2.0), rng), Tanh()]
        width = size
    layers.append(Dense(width, n_out, out_gain, rng))
    return Network(layers)


def conv_mlp(input_shape: tuple[int, int, int], hidden: list[int], n_out: int, out_gain: float, rng: np.random.Generator) -> Network:
    """32@8x8/4 -> 64@4x4/2 -> 64@3x3/1 ReLU stack feeding a tanh MLP head."""
    channels, h, w = input_shape
    layers = []
    for out_ch, kernel, stride in ((32, 8, 4), (64, 4, 2), (64, 3, 1)):
        conv = Conv2d(channels, out_ch, kernel, stride, np.sqrt(2.0), rng)
        h, w = conv.output_size(h), conv.output_size(w)
        if h < 1 or w < 1:
            raise ValueError(f"input {input_shape} too small for the conv encoder")
        layers += [conv, ReLU()]
        channels = out_ch
    layers.append(Flatten())
    head = mlp(channels * h * w, hidden, n_out, out_gain, rng)
    return Network(layers + head.layers)
