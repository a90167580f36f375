"""Adam over the flat parameter vector."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import TrainingError
from .params import ModelParams


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, num_params, dtype=np.float64):
        return cls(m=np.zeros(num_params, dtype=dtype), v=np.zeros(num_params, dtype=dtype))


def _first_nonfinite_tensor(params, grads):
    for name in params.index:
        if not np.all(np.isfinite(grads[params.slice_of(name)])):
            return name
    return "<unindexed>"


def adam_step(params: ModelParams, grads, state: AdamState, lr,
              beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard bias-corrected Adam update, in place. Returns (params, state).

    Raises TrainingError naming the offending tensor if the gradient has any
    non-finite entry.
    """
    grads = np.asarray(grads)
    if grads.shape != params.data.shape:
        raise TrainingError(f"gradient shape {grads.shape} != params {params.data.shape}")
    if not np.all(np.isfinite(grads)):
        raise TrainingError(f"non-finite gradient in tensor {_first_nonfinite_tensor(params, grads)}")
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grads
    state.v = beta2 * state.v + (1.0 - beta2) * np.square(grads)
    m_hat = state.m / (1.0 - beta1 ** state.step)
    v_hat = state.v / (1.0 - beta2 ** state.step)
    params.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state
