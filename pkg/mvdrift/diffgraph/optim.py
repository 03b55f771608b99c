"""
AdamW optimizer with exponential learning-rate decay.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..constants import (
    ADAMW_BETA1,
    ADAMW_BETA2,
    ADAMW_EPS,
    ADAMW_GAMMA,
    ADAMW_LR,
    ADAMW_WEIGHT_DECAY,
)
from ..errors import ConfigError, NumericError

logger = logging.getLogger(__name__)


@dataclass
class AdamWState:
    """
    Optimizer state.

    Attributes
    ----------
    m, v : np.ndarray
        First and second moment buffers.
    step : int
        Number of updates applied.
    lr : float
        Base learning rate.
    eps : float
    weight_decay : float
        Decoupled weight decay.
    gamma : float
        Per-update learning-rate decay factor.
    beta1, beta2 : float
    clip_norm : float | None
        Global gradient-norm clip; None disables clipping.
    """

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = ADAMW_LR
    eps: float = ADAMW_EPS
    weight_decay: float = ADAMW_WEIGHT_DECAY
    gamma: float = ADAMW_GAMMA
    beta1: float = ADAMW_BETA1
    beta2: float = ADAMW_BETA2
    clip_norm: Optional[float] = None
    n_clipped: int = field(default=0)

    @classmethod
    def create(cls, n_params: int, **kwargs) -> "AdamWState":
        state = cls(np.zeros(n_params), np.zeros(n_params), **kwargs)
        if state.lr <= 0 or state.eps < 0 or state.weight_decay < 0:
            raise ConfigError("AdamW needs lr > 0, eps >= 0 and weight_decay >= 0")
        return state

    @property
    def current_lr(self) -> float:
        """Learning rate of the next update."""
        return self.lr * self.gamma ** self.step


def adamw_step(state: AdamWState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """
    Apply one AdamW update.

    Parameters
    ----------
    state : AdamWState
        Updated in place (moments and step counter).
    params : np.ndarray
        Current parameters.
    grads : np.ndarray
        Gradient of the minimised loss.

    Returns
    -------
    params : np.ndarray
        Updated parameters (new array).
    """
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ConfigError(
            f"parameter ({params.shape}), gradient ({grads.shape}) and state ({state.m.shape}) lengths differ"
        )
    if not np.all(np.isfinite(grads)):
        raise NumericError(f"non-finite gradient at optimizer step {state.step + 1}", step=state.step + 1)
    if state.clip_norm is not None:
        norm = float(np.linalg.norm(grads))
        if norm > state.clip_norm:
            grads = grads * (state.clip_norm / norm)
            state.n_clipped += 1
            logger.warning(
                "Gradient norm %.4g clipped to %.4g at step %d", norm, state.clip_norm, state.step + 1
            )
    lr = state.current_lr
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    denom = np.sqrt(v_hat) + state.eps
    # zero moments with eps = 0 give a zero step, not 0/0
    direction = np.divide(m_hat, denom, out=np.zeros_like(m_hat), where=denom > 0)
    decayed = params * (1.0 - lr * state.weight_decay)
    return decayed - lr * direction
