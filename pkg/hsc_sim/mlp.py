"""Fully-connected networks with hand-written backpropagation and Adam."""

import typing
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch

"""Activation names and their checkpoint codes"""
ACTIVATIONS = {"linear": 0, "relu": 1, "sigmoid": 2}


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class DenseLayer:
    """y = activation(x W + b) with W of shape (fan_in, fan_out)."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"Unknown activation {self.activation}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise DimensionMismatch(
                f"Layer weight {self.weight.shape} and bias {self.bias.shape} do not agree"
            )

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]

    def activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        if self.activation == "sigmoid":
            return _sigmoid(z)
        return z

    def activation_grad(self, y: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return grad * (y > 0.0)
        if self.activation == "sigmoid":
            return grad * y * (1.0 - y)
        return grad


class Mlp:
    """A chain of dense layers operating on row-major batches (N, features)."""

    def __init__(self, layers: typing.List[DenseLayer]):
        for previous, layer in zip(layers, layers[1:]):
            if previous.fan_out != layer.fan_in:
                raise DimensionMismatch(
                    f"Layer output {previous.fan_out} does not feed input {layer.fan_in}"
                )
        self.layers = layers

    @classmethod
    def initialize(
        cls,
        sizes: typing.Sequence[int],
        activations: typing.Sequence[str],
        rng: np.random.Generator,
        zero_last: bool = False,
    ) -> "Mlp":
        """Uniform He fan-in initialization, zero biases.

        Args:
            sizes: layer widths including the input, e.g. (784, 2048, 1024)
            activations: one activation name per layer (len(sizes) - 1)
            rng: generator the weights are drawn from
            zero_last: zero the final layer so a residual wrapper starts as identity
        """
        if len(activations) != len(sizes) - 1:
            raise DimensionMismatch("Need one activation per layer")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            if zero_last and i == len(sizes) - 2:
                weight = np.zeros((fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / fan_in)
                weight = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            layers.append(DenseLayer(weight, np.zeros(fan_out), activations[i]))
        return cls(layers)

    @classmethod
    def zeros(
        cls, sizes: typing.Sequence[int], activations: typing.Sequence[str]
    ) -> "Mlp":
        return cls(
            [
                DenseLayer(np.zeros((fan_in, fan_out)), np.zeros(fan_out), act)
                for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations)
            ]
        )

    @property
    def input_size(self) -> int:
        return self.layers[0].fan_in

    @property
    def output_size(self) -> int:
        return self.layers[-1].fan_out

    @property
    def sizes(self) -> typing.List[int]:
        return [self.input_size] + [layer.fan_out for layer in self.layers]

    @property
    def activations(self) -> typing.List[str]:
        return [layer.activation for layer in self.layers]

    def parameter_count(self) -> int:
        return sum(layer.weight.size + layer.bias.size for layer in self.layers)

    def parameters(self) -> typing.List[np.ndarray]:
        """Weights and biases in layer order; updating them in place updates the net."""
        params = []
        for layer in self.layers:
            params.extend([layer.weight, layer.bias])
        return params

    def copy(self) -> "Mlp":
        return Mlp(
            [
                DenseLayer(layer.weight.copy(), layer.bias.copy(), layer.activation)
                for layer in self.layers
            ]
        )

    def forward(self, x: np.ndarray) -> typing.Tuple[np.ndarray, typing.List]:
        """Run the network and keep what backward() needs."""
        if x.shape[-1] != self.input_size:
            raise DimensionMismatch(
                f"Input has {x.shape[-1]} features, network expects {self.input_size}"
            )
        cache = []
        for layer in self.layers:
            y = layer.activate(x @ layer.weight + layer.bias)
            cache.append((x, y))
            x = y
        return x, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(
        self, cache: typing.List, grad_out: np.ndarray
    ) -> typing.Tuple[typing.List[np.ndarray], np.ndarray]:
        """Backpropagate dLoss/dOutput.

        Returns:
            Gradients matching parameters() order, and dLoss/dInput
        """
        grads: typing.List[np.ndarray] = []
        grad = grad_out
        for layer, (x, y) in zip(reversed(self.layers), reversed(cache)):
            grad = layer.activation_grad(y, grad)
            grads.append(grad.sum(axis=0))
            grads.append(x.T @ grad)
            grad = grad @ layer.weight.T
        grads.reverse()
        return grads, grad


class Adam:
    """Adam optimizer updating a fixed list of parameter arrays in place."""

    def __init__(
        self,
        parameters: typing.List[np.ndarray],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self._parameters = parameters
        self._learning_rate = learning_rate
        self._beta1 = beta1
        self._beta2 = beta2
        self._epsilon = epsilon
        self._m = [np.zeros_like(p) for p in parameters]
        self._v = [np.zeros_like(p) for p in parameters]
        self._t = 0

    def step(self, grads: typing.List[np.ndarray]):
        if len(grads) != len(self._parameters):
            raise DimensionMismatch("Gradient list does not match parameter list")
        self._t += 1
        correction1 = 1.0 - self._beta1**self._t
        correction2 = 1.0 - self._beta2**self._t
        for param, grad, m, v in zip(self._parameters, grads, self._m, self._v):
            m *= self._beta1
            m += (1.0 - self._beta1) * grad
            v *= self._beta2
            v += (1.0 - self._beta2) * grad * grad
            param -= (
                self._learning_rate
                * (m / correction1)
                / (np.sqrt(v / correction2) + self._epsilon)
            )
