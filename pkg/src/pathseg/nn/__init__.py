from .network import (
    ArchitectureSpec,
    LayerSpec,
    Network,
    NeuralNetClassifier,
    adam_step,
    build_architecture,
    softmax,
    softmax_cross_entropy,
    train_network,
)

__all__ = [
    "ArchitectureSpec",
    "LayerSpec",
    "Network",
    "NeuralNetClassifier",
    "adam_step",
    "build_architecture",
    "softmax",
    "softmax_cross_entropy",
    "train_network",
]
