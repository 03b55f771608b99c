"""
Minimal reverse-mode automatic differentiation, multilayer perceptrons and the
AdamW optimizer used by every trainable model.
"""
from .graph import Graph, Node, backward
from .params import ParamSlice, ParamStore, save_checkpoint, load_checkpoint
from .mlp import Activation, Mlp, forward
from .optim import AdamWState, adamw_step
from .gradcheck import grad_check, graph_closure
