# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
Layer kinds and the :py:class:`LayerSequence` container.

Superclass: Layer

Subclasses: Dense, Conv2d, MaxPool2d, BatchNorm, Dropout, ReLU, Sigmoid,
Softmax, Flatten, Reshape, Upsample2d
"""
import numpy as np
from prettytable import PrettyTable

from multifix.errors import DimensionError, ConfigurationError
from multifix.nncore import functional as fn
from multifix.nncore.tensor import Tensor

MODES = ("train", "eval")


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Layer:
    """
    Super class of all layer kinds.

    Attributes
    ----------
    kind: str
        Name used in manifests and error messages.
    hyper: dict
        Kind-specific settings; enough to rebuild the layer.
    """

    kind = "layer"

    def __init__(self, **hyper):
        self.hyper = hyper

    def __str__(self):
        return self.kind

    def parameters(self):
        """Trainable tensors owned by the layer, by local name."""
        return {}

    def buffers(self):
        """Non-trainable state saved in checkpoints, by local name."""
        return {}

    def forward(self, x, train):
        raise NotImplementedError

    def output_shape(self, in_shape):
        """Per-sample output shape for a per-sample input shape."""
        return in_shape

    def spec(self):
        return {"kind": self.kind, **self.hyper}


class Dense(Layer):
    """
    Fully connected layer ``y = x W + b``.

    Parameters
    ----------
    in_features: int
    out_features: int
    init: str
        ``"kaiming"`` for relu-activated layers, ``"xavier"`` otherwise.
    rng: numpy.random.Generator
    """

    kind = "dense"

    def __init__(self, in_features, out_features, init="kaiming", rng=None):
        if in_features < 1 or out_features < 1:
            raise ConfigurationError(f"dense widths must be >= 1, got {in_features}, "
                                     f"{out_features}")
        super().__init__(in_features=in_features, out_features=out_features, init=init)
        rng = rng if rng is not None else np.random.default_rng(0)
        if init == "kaiming":
            bound = np.sqrt(6.0 / in_features)
        else:
            bound = np.sqrt(6.0 / (in_features + out_features))
        self.weight = Tensor(_uniform(rng, bound, (in_features, out_features)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_features, dtype=np.float32), requires_grad=True)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, train):
        if x.ndim != 2 or x.shape[1] != self.hyper["in_features"]:
            raise DimensionError(f"expected (N, {self.hyper['in_features']}), got {x.shape}")
        return x @ self.weight + self.bias

    def output_shape(self, in_shape):
        return (self.hyper["out_features"],)


class Conv2d(Layer):
    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel=3, stride=1, padding=1,
                 init="kaiming", rng=None):
        super().__init__(in_channels=in_channels, out_channels=out_channels, kernel=kernel,
                         stride=stride, padding=padding, init=init)
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_channels * kernel * kernel
        fan_out = out_channels * kernel * kernel
        bound = np.sqrt(6.0 / fan_in) if init == "kaiming" else np.sqrt(6.0 / (fan_in + fan_out))
        self.weight = Tensor(_uniform(rng, bound, (out_channels, in_channels, kernel, kernel)),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_channels, dtype=np.float32), requires_grad=True)

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x, train):
        return fn.conv2d(x, self.weight, self.bias, self.hyper["stride"], self.hyper["padding"])

    def output_shape(self, in_shape):
        _, h, w = in_shape
        k, s, p = self.hyper["kernel"], self.hyper["stride"], self.hyper["padding"]
        return (self.hyper["out_channels"], (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)


class MaxPool2d(Layer):
    kind = "maxpool2d"

    def __init__(self, size=2):
        super().__init__(size=size)

    def forward(self, x, train):
        return fn.max_pool2d(x, self.hyper["size"])

    def output_shape(self, in_shape):
        c, h, w = in_shape
        return c, h // self.hyper["size"], w // self.hyper["size"]


class BatchNorm(Layer):
    """
    Batch normalisation for dense (N, F) or convolutional (N, C, H, W) inputs.

    Running statistics change only in training mode.
    """

    kind = "batchnorm"

    def __init__(self, num_features, momentum=0.1, eps=1e-5):
        super().__init__(num_features=num_features, momentum=momentum, eps=eps)
        self.gamma = Tensor(np.ones(num_features, dtype=np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(num_features, dtype=np.float32), requires_grad=True)
        self.running_mean = np.zeros(num_features, dtype=np.float32)
        self.running_var = np.ones(num_features, dtype=np.float32)

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train):
        return fn.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                             train, self.hyper["momentum"], self.hyper["eps"])


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate=0.0):
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
        super().__init__(rate=rate)
        self.rng = np.random.default_rng(0)

    def forward(self, x, train):
        return fn.dropout(x, self.hyper["rate"], self.rng, train)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train):
        return fn.relu(x)


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, train):
        return fn.sigmoid(x)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, train):
        return fn.softmax(x, axis=1)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, train):
        return x.reshape(x.shape[0], -1)

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, shape):
        super().__init__(shape=list(shape))

    def forward(self, x, train):
        return x.reshape((x.shape[0],) + tuple(self.hyper["shape"]))

    def output_shape(self, in_shape):
        return tuple(self.hyper["shape"])


class Upsample2d(Layer):
    kind = "upsample2d"

    def __init__(self, size):
        super().__init__(size=list(size))

    def forward(self, x, train):
        return fn.upsample_nearest(x, self.hyper["size"])

    def output_shape(self, in_shape):
        return (in_shape[0],) + tuple(self.hyper["size"])


def build_layer(spec, rng=None):
    """
    Rebuild a layer from the dictionary produced by :py:meth:`Layer.spec`.

    Raises
    ------
    ConfigurationError
        If the kind is unknown.
    """
    hyper = {k: v for k, v in spec.items() if k != "kind"}
    match spec.get("kind"):
        case "dense":
            return Dense(rng=rng, **hyper)
        case "conv2d":
            return Conv2d(rng=rng, **hyper)
        case "maxpool2d":
            return MaxPool2d(**hyper)
        case "batchnorm":
            return BatchNorm(**hyper)
        case "dropout":
            return Dropout(**hyper)
        case "relu":
            return ReLU()
        case "sigmoid":
            return Sigmoid()
        case "softmax":
            return Softmax()
        case "flatten":
            return Flatten()
        case "reshape":
            return Reshape(**hyper)
        case "upsample2d":
            return Upsample2d(**hyper)
        case other:
            raise ConfigurationError(f"Unknown layer kind: {other}")


class LayerSequence:
    """
    Ordered list of layers applied one after the other.

    Parameters
    ----------
    layers: list of Layer
    name: str
        Used as prefix in parameter names and error messages.
    """

    def __init__(self, layers, name=""):
        self.layers = list(layers)
        self.name = name

    def __str__(self):
        table = PrettyTable(["#", "kind", "settings", "parameters"])
        table.align = "l"
        for i, layer in enumerate(self.layers):
            settings = ", ".join(f"{k}={v}" for k, v in layer.hyper.items())
            count = sum(p.size for p in layer.parameters().values())
            table.add_row([i, layer.kind, settings, count])
        return f"{self.name}\n{table}" if self.name else str(table)

    def __len__(self):
        return len(self.layers)

    def __call__(self, x, mode="eval", capture=None):
        return self.forward(x, mode, capture)

    def forward(self, x, mode="eval", capture=None):
        """
        Apply all layers.

        Parameters
        ----------
        x: Tensor
        mode: str
            ``"train"`` or ``"eval"``; dropout and batch statistics depend on it.
        capture: dict, optional
            Filled with ``{index: output}`` for the indices already present as
            keys. Used to expose bottleneck logits and convolution maps.

        Raises
        ------
        DimensionError
            Naming the index and kind of the layer that rejected its input.
        """
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode}")
        train = mode == "train"
        if not isinstance(x, Tensor):
            x = Tensor(x)
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, train)
            except DimensionError as e:
                raise DimensionError(f"{self.name or 'sequence'} layer {i} ({layer.kind}): "
                                     f"{e}") from e
            if capture is not None and i in capture:
                capture[i] = x
        return x

    def named_parameters(self):
        return {f"{self.name + '.' if self.name else ''}{i}.{layer.kind}.{key}": tensor
                for i, layer in enumerate(self.layers)
                for key, tensor in layer.parameters().items()}

    def parameters(self):
        return list(self.named_parameters().values())

    def trainable_parameters(self):
        return {k: p for k, p in self.named_parameters().items() if p.requires_grad}

    def freeze(self, start=0, stop=None):
        """Exclude the parameters of layers ``start:stop`` from training."""
        for layer in self.layers[start:stop]:
            for p in layer.parameters().values():
                p.requires_grad = False

    def unfreeze(self, start=0, stop=None):
        for layer in self.layers[start:stop]:
            for p in layer.parameters().values():
                p.requires_grad = True

    def set_rng(self, rng):
        """Give every dropout layer its own stream spawned from ``rng``."""
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.rng = np.random.default_rng(rng.integers(2 ** 63))

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def spec(self):
        return [layer.spec() for layer in self.layers]

    def output_shape(self, in_shape):
        for layer in self.layers:
            in_shape = layer.output_shape(in_shape)
        return in_shape


def forward(model, x, mode="eval"):
    """Run ``model`` on ``x``; module-level form of :py:meth:`LayerSequence.forward`."""
    return model.forward(x, mode)
