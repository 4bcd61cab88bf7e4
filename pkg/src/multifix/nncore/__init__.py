"""
Minimal neural-network substrate: tensors with a gradient tape, layers,
losses, Adam and the MFIX1 checkpoint format.
"""
from multifix.nncore.tensor import Tensor, no_grad, concat
from multifix.nncore.layers import (LayerSequence, Dense, Conv2d, MaxPool2d, BatchNorm,
                                    Dropout, ReLU, Sigmoid, Softmax, Flatten, Reshape,
                                    Upsample2d, forward)
from multifix.nncore.losses import cross_entropy, mse_loss, bce_with_logits
from multifix.nncore.optim import AdamState, adam_step
from multifix.nncore.checkpoint import save_checkpoint, load_checkpoint


def backward(loss, parameters=()):
    """
    Populate the gradient of every tracked parameter that ``loss`` depends on.

    Entries of ``parameters`` that ``loss`` does not depend on get a zero
    gradient.
    """
    loss.backward(inputs=parameters)
