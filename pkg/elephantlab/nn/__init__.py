"""Networks, activations, optimizers and checkpoints."""

from .activations import ActivationKind, ActivationSpec, ElephantParams
from .network import (GradientBundle, LayerSpec, Network, backward, build_mlp, flatten_gradients,
                      forward, mlp_specs)
from .optim import OptimizerKind, OptimizerState, optimizer_step
