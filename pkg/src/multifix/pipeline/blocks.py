# The material in this file is licensed under the BSD 3-clause license
# https://opensource.org/licenses/BSD-3-Clause
# (C) Copyright 2024 MultiFIX contributors
"""
MultiFIX model assembly.

A model has one feature-inducing block per modality and a fusion block::

    image   -> CNN -> dense -> sigmoid -> I_1..I_nI  \
                                                      concat -> fusion MLP -> logits
    tabular -> MLP ---------> sigmoid -> T_1..T_nT  /

Either feature-inducing block may be bypassed by ground-truth features, or
replaced by distilled expressions; the fusion block may be replaced by an
expression over the binarised features.
"""
import logging

import numpy as np

from multifix.errors import ConfigurationError, DataError
from multifix.nncore import (LayerSequence, Dense, Conv2d, MaxPool2d, BatchNorm, Dropout, ReLU,
                             Sigmoid, Flatten, Reshape, Upsample2d, Tensor, concat, no_grad,
                             save_checkpoint, load_checkpoint)
from multifix.parameters import PipelineConfig

logger = logging.getLogger(__name__)

MODALITIES = ("image", "tabular")
EVAL_BATCH = 64


def _activation(name):
    match name:
        case "relu":
            return ReLU()
        case "sigmoid":
            return Sigmoid()
        case other:
            raise ConfigurationError(f"[activation:{other}] is invalid, inner error: "
                                     f"expected relu or sigmoid")


def _init(activation):
    return "kaiming" if activation == "relu" else "xavier"


def _per_layer(value, n):
    values = list(value) if isinstance(value, (list, tuple)) else [value] * n
    if len(values) != n:
        raise ConfigurationError(f"[dropout:{value}] is invalid, inner error: expected one "
                                 f"value per hidden layer ({n})")
    return values


def _mlp(in_width, hidden, dropout, activation, batchnorm, rng):
    layers = []
    for width, rate in zip(hidden, _per_layer(dropout, len(hidden))):
        layers.append(Dense(in_width, width, _init(activation), rng))
        if batchnorm:
            layers.append(BatchNorm(width))
        layers.append(_activation(activation))
        if rate > 0:
            layers.append(Dropout(rate))
        in_width = width
    return layers, in_width


def conv_stack(image_shape, channels, batchnorm, rng):
    """
    Convolution blocks of 3x3 conv, optional batch norm, relu and 2x2 max pool.

    Pooling stops once the map is smaller than 2 pixels.

    Returns
    -------
    layers: list
    conv_outputs: list of int
        Index of the relu closing every block, the Grad-CAM layers.
    out_shape: tuple
        (C, H, W) of the last block.
    """
    height, width = image_shape
    in_channels = 3
    layers, conv_outputs = [], []
    for out_channels in channels:
        layers.append(Conv2d(in_channels, out_channels, 3, 1, 1, "kaiming", rng))
        if batchnorm:
            layers.append(BatchNorm(out_channels))
        layers.append(ReLU())
        conv_outputs.append(len(layers) - 1)
        if min(height, width) >= 2:
            layers.append(MaxPool2d(2))
            height, width = height // 2, width // 2
        in_channels = out_channels
    return layers, conv_outputs, (in_channels, height, width)


def image_block(config, image_shape, rng, latent=None):
    """
    Image feature-inducing block.

    With ``latent`` the block starts with an autoencoder encoder (conv stack
    and a linear latent layer) whose layer count is returned as
    ``n_encoder``.

    Returns
    -------
    block: LayerSequence
    conv_outputs: list of int
    n_encoder: int
    """
    spec = config.image_block
    layers, conv_outputs, (c, h, w) = conv_stack(image_shape, spec["channels"],
                                                 spec["batchnorm"], rng)
    layers.append(Flatten())
    width = c * h * w
    n_encoder = 0
    if latent is not None:
        layers.append(Dense(width, latent, "xavier", rng))
        width = latent
        n_encoder = len(layers)
    head, width = _mlp(width, spec["hidden"], spec["dropout"], spec["activation"],
                       spec["batchnorm"], rng)
    layers += head
    layers += [Dense(width, config.n_i, "xavier", rng), Sigmoid()]
    return LayerSequence(layers, name="image"), conv_outputs, n_encoder


def tabular_block(config, n_features, rng):
    spec = config.tabular_block
    layers, width = _mlp(n_features, spec["hidden"], spec["dropout"], spec["activation"],
                         spec["batchnorm"], rng)
    layers += [Dense(width, config.n_t, "xavier", rng), Sigmoid()]
    return LayerSequence(layers, name="tabular")


def fusion_block(config, in_width, rng):
    spec = config.fusion_block
    if not spec["hidden"]:
        raise ConfigurationError("[fusion_block.hidden:[]] is invalid, inner error: the fusion "
                                 "block needs at least one hidden layer")
    layers, width = _mlp(in_width, spec["hidden"], spec["dropout"], spec["activation"],
                         spec["batchnorm"], rng)
    layers.append(Dense(width, config.n_classes, "xavier", rng))
    return LayerSequence(layers, name="fusion")


def autoencoder(config, image_shape, rng):
    """
    Convolutional autoencoder with a linear latent of ``config.ae_latent`` units.

    Returns
    -------
    encoder, decoder: LayerSequence
    """
    layers, _, (c, h, w) = conv_stack(image_shape, config.image_block["channels"],
                                      config.image_block["batchnorm"], rng)
    layers += [Flatten(), Dense(c * h * w, config.ae_latent, "xavier", rng)]
    decoder = [Dense(config.ae_latent, c * h * w, "kaiming", rng), ReLU(), Reshape((c, h, w)),
               Upsample2d(image_shape), Conv2d(c, 3, 3, 1, 1, "xavier", rng), Sigmoid()]
    return LayerSequence(layers, name="encoder"), LayerSequence(decoder, name="decoder")


def image_tensor(images):
    """(N, H, W, 3) pixels as an (N, 3, H, W) tensor."""
    return Tensor(np.ascontiguousarray(np.transpose(images, (0, 3, 1, 2))), dtype=np.float32)


class PipelineModel:
    """
    Assembled MultiFIX network.

    Parameters
    ----------
    config: PipelineConfig
    blocks: dict
        ``"image"``, ``"tabular"`` and ``"fusion"`` LayerSequences; a
        modality that is bypassed or unused may be missing.
    image_shape: tuple
    n_features: int
    modalities: tuple
        Modalities feeding the fusion block.
    bypass: tuple
        Modalities whose ground-truth features replace the block output.
    conv_outputs: list of int
    n_encoder: int
        Leading image-block layers that came from a pretrained encoder.
    """

    def __init__(self, config, blocks, image_shape, n_features, modalities=MODALITIES,
                 bypass=(), conv_outputs=(), n_encoder=0):
        self.config = config
        self.blocks = dict(blocks)
        self.image_shape = tuple(image_shape)
        self.n_features = n_features
        self.modalities = tuple(m for m in MODALITIES if m in modalities)
        self.bypass = tuple(bypass)
        self.conv_outputs = list(conv_outputs)
        self.n_encoder = n_encoder
        self.tab_mean = np.zeros(n_features)
        self.tab_std = np.ones(n_features)
        self.replacements = {}
        self.thresholds = {}

    def __str__(self):
        return "\n".join(str(self.blocks[name]) for name in ("image", "tabular", "fusion")
                         if name in self.blocks)

    def width(self, modality):
        return self.config.n_i if modality == "image" else self.config.n_t

    def feature_names(self):
        """``I1..InI`` then ``T1..TnT`` for the modalities in use."""
        names = []
        for modality in self.modalities:
            prefix = "I" if modality == "image" else "T"
            names += [f"{prefix}{j + 1}" for j in range(self.width(modality))]
        return names

    def fit_standardizer(self, tabular):
        """Set the tabular scaling from training rows."""
        tabular = np.asarray(tabular, dtype=np.float64)
        self.tab_mean = tabular.mean(axis=0)
        std = tabular.std(axis=0)
        self.tab_std = np.where(std > 0, std, 1.0)

    def tabular_tensor(self, tabular):
        return Tensor((np.asarray(tabular) - self.tab_mean) / self.tab_std, dtype=np.float32)

    def _feature(self, modality, dataset, idx, mode, capture=None):
        if modality in self.bypass:
            truth = dataset.truth_matrix(modality)[idx]
            if truth.shape[1] != self.width(modality):
                raise DataError(f"{modality} bypass has {truth.shape[1]} truth features, model "
                                f"expects {self.width(modality)}")
            return Tensor(truth, dtype=np.float32)
        if modality in self.replacements:
            return Tensor(self.replaced_features(modality, dataset, idx), dtype=np.float32)
        if modality == "image":
            return self.blocks["image"](image_tensor(dataset.images[idx]), mode, capture)
        return self.blocks["tabular"](self.tabular_tensor(dataset.tabular[idx]), mode)

    def replaced_features(self, modality, dataset, idx):
        """Binary outputs of the expressions replacing ``modality``'s block."""
        from multifix.gpgomea import predict_classes
        inputs = dataset.tabular[idx] if modality == "tabular" else None
        if inputs is None:
            raise ConfigurationError(f"the {modality} block cannot be replaced by an expression")
        columns = [predict_classes(expr.evaluate(inputs), 2)
                   for expr in self.replacements[modality]]
        return np.stack(columns, axis=1).astype(np.float64)

    def features(self, dataset, idx=None, mode="eval", capture=None):
        """
        Intermediate features per modality.

        Returns
        -------
        dict
            Modality to Tensor of shape (n, width).
        """
        idx = np.arange(len(dataset)) if idx is None else np.asarray(idx)
        return {m: self._feature(m, dataset, idx, mode, capture if m == "image" else None)
                for m in self.modalities}

    def logits(self, dataset, idx=None, mode="eval"):
        feats = self.features(dataset, idx, mode)
        return self.blocks["fusion"](concat([feats[m] for m in self.modalities], axis=1), mode)

    def bottleneck(self, dataset, idx=None):
        """Intermediate features as one (n, nI + nT) array, batched, without a tape."""
        idx = np.arange(len(dataset)) if idx is None else np.asarray(idx)
        parts = []
        with no_grad():
            for start in range(0, idx.size, EVAL_BATCH):
                feats = self.features(dataset, idx[start:start + EVAL_BATCH])
                parts.append(np.concatenate([feats[m].data for m in self.modalities], axis=1))
        width = sum(self.width(m) for m in self.modalities)
        return np.concatenate(parts).astype(np.float64) if parts else np.zeros((0, width))

    def binarized_bottleneck(self, dataset, idx=None):
        """Bottleneck thresholded per feature (default threshold 0.5)."""
        values = self.bottleneck(dataset, idx)
        names = self.feature_names()
        theta = np.array([self.thresholds.get(name, 0.5) for name in names])
        return (values > theta).astype(np.float64)

    def predict(self, dataset, idx=None):
        """Class index per sample."""
        idx = np.arange(len(dataset)) if idx is None else np.asarray(idx)
        if "fusion" in self.replacements:
            from multifix.gpgomea import predict_classes
            outputs = self.replacements["fusion"].evaluate(self.binarized_bottleneck(dataset, idx))
            return predict_classes(outputs, self.config.n_classes)
        preds = []
        with no_grad():
            for start in range(0, idx.size, EVAL_BATCH):
                preds.append(self.logits(dataset, idx[start:start + EVAL_BATCH]).data.argmax(1))
        return np.concatenate(preds).astype(np.int64) if preds else np.zeros(0, np.int64)

    def trainable_blocks(self):
        """Blocks that take part in gradient training."""
        used = [m for m in self.modalities if m not in self.bypass and m not in self.replacements]
        return [self.blocks[name] for name in used + ["fusion"] if name in self.blocks]

    def named_parameters(self):
        params = {}
        for block in self.trainable_blocks():
            params.update(block.named_parameters())
        return params

    def set_rng(self, rng):
        for block in self.blocks.values():
            block.set_rng(rng)

    def freeze_encoder(self):
        if self.n_encoder:
            self.blocks["image"].freeze(0, self.n_encoder)

    def unfreeze_encoder(self):
        if self.n_encoder:
            self.blocks["image"].unfreeze(0, self.n_encoder)

    def save(self, path, extra=None):
        """Write the model as an MFIX1 checkpoint; expressions are stored as prefix text."""
        meta = {
            "config": self.config.as_dict(),
            "image_shape": list(self.image_shape),
            "n_features": self.n_features,
            "modalities": list(self.modalities),
            "bypass": list(self.bypass),
            "conv_outputs": self.conv_outputs,
            "n_encoder": self.n_encoder,
            "tab_mean": self.tab_mean.tolist(),
            "tab_std": self.tab_std.tolist(),
            "thresholds": self.thresholds,
            "replacements": {
                "tabular": [e.prefix() for e in self.replacements.get("tabular", [])],
                "fusion": (self.replacements["fusion"].prefix()
                           if "fusion" in self.replacements else None),
            },
            **(extra or {}),
        }
        save_checkpoint(path, self.blocks, meta)

    @classmethod
    def load(cls, path):
        """
        Read a model written by :py:meth:`save`.

        Returns
        -------
        model: PipelineModel
        meta: dict
        """
        from multifix.gpgomea import parse_prefix
        blocks, meta = load_checkpoint(path)
        model = cls(PipelineConfig(meta["config"]), blocks, meta["image_shape"],
                    meta["n_features"], meta["modalities"], meta["bypass"],
                    meta["conv_outputs"], meta["n_encoder"])
        model.tab_mean = np.asarray(meta["tab_mean"])
        model.tab_std = np.asarray(meta["tab_std"])
        model.thresholds = dict(meta["thresholds"])
        stored = meta.get("replacements", {})
        n_features = meta["n_features"]
        names = [f"x{j}" for j in range(n_features)]
        if stored.get("tabular"):
            model.replacements["tabular"] = [parse_prefix(text, names)
                                             for text in stored["tabular"]]
        if stored.get("fusion"):
            model.replacements["fusion"] = parse_prefix(stored["fusion"], model.feature_names())
        return model, meta


def assemble(config, image_shape, n_features, rng=None, modalities=MODALITIES, bypass=(),
             encoder=None):
    """
    Build a fresh model for ``config``.

    Parameters
    ----------
    config: PipelineConfig or dict
    image_shape: tuple
        (H, W) of the input images.
    n_features: int
        Tabular column count.
    rng: numpy.random.Generator, optional
    modalities: tuple
        ``("image",)`` or ``("tabular",)`` gives a single-modality model whose
        fusion block works as the classification head.
    bypass: tuple
        Modalities fed with ground-truth features instead of their block.
    encoder: LayerSequence, optional
        Pretrained encoder whose layers open the image block.

    Raises
    ------
    ConfigurationError
        On an invalid block specification.
    """
    config = config if isinstance(config, PipelineConfig) else PipelineConfig(config)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    modalities = tuple(m for m in MODALITIES if m in modalities)
    if not modalities:
        raise ConfigurationError(f"[modalities:{modalities}] is invalid, inner error: expected "
                                 f"image and/or tabular")
    blocks, conv_outputs, n_encoder = {}, [], 0
    if "image" in modalities and "image" not in bypass:
        latent = config.ae_latent if encoder is not None else None
        blocks["image"], conv_outputs, n_encoder = image_block(config, image_shape, rng, latent)
        if encoder is not None:
            _copy_encoder(encoder, blocks["image"], n_encoder)
    if "tabular" in modalities and "tabular" not in bypass:
        blocks["tabular"] = tabular_block(config, n_features, rng)
    in_width = sum(config.n_i if m == "image" else config.n_t for m in modalities)
    blocks["fusion"] = fusion_block(config, in_width, rng)
    model = PipelineModel(config, blocks, image_shape, n_features, modalities, bypass,
                          conv_outputs, n_encoder)
    model.set_rng(rng)
    return model


def _copy_encoder(encoder, block, n_encoder):
    if len(encoder) != n_encoder:
        raise ConfigurationError(f"encoder has {len(encoder)} layers, image block expects "
                                 f"{n_encoder}")
    for source, target in zip(encoder.layers, block.layers[:n_encoder]):
        if source.spec() != target.spec():
            raise ConfigurationError(f"encoder layer {source.spec()} does not match "
                                     f"{target.spec()}")
        for key, tensor in source.parameters().items():
            target.parameters()[key].data = tensor.data.copy()
        for key, array in source.buffers().items():
            target.buffers()[key][...] = array
