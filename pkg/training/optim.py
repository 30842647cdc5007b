# training/optim.py
"""
Adam com correção de viés e recorte opcional pela norma global
"""
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import ContractError
from transformer.params import Params
from .config import TrainConfig


@dataclass
class OptimizerState:
    m: 'OrderedDict[str, np.ndarray]' = field(default_factory=OrderedDict)
    v: 'OrderedDict[str, np.ndarray]' = field(default_factory=OrderedDict)
    step: int = 0

    @classmethod
    def create(cls, params: Params) -> 'OptimizerState':
        return cls(
            m=OrderedDict((name, np.zeros(tensor.shape)) for name, tensor in params.items()),
            v=OrderedDict((name, np.zeros(tensor.shape)) for name, tensor in params.items()),
        )


def gradients(params: Params) -> 'OrderedDict[str, np.ndarray]':
    return OrderedDict((name, tensor.grad.copy()) for name, tensor in params.items())


def gradient_norms(grads: dict) -> dict:
    return {name: float(np.linalg.norm(grad)) for name, grad in grads.items()}


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(grad ** 2)) for grad in grads.values())))


def clip_gradients(grads: dict, max_norm: float) -> tuple[dict, float]:
    """Escala todos os gradientes quando a norma global passa de max_norm"""
    norm = global_norm(grads)
    if norm <= max_norm or norm == 0:
        return grads, norm
    factor = max_norm / norm
    return OrderedDict((name, grad * factor) for name, grad in grads.items()), norm


def adam_step(params: Params, grads: dict, state: OptimizerState, config: TrainConfig):
    """Atualiza `params` no lugar e devolve (params, state)"""
    missing = [name for name in params if name not in grads]
    if missing:
        raise ContractError(f"Gradientes ausentes para {', '.join(missing[:3])}")
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for name, tensor in params.items():
        grad = grads[name]
        if grad.shape != tensor.shape or state.m[name].shape != tensor.shape or state.v[name].shape != tensor.shape:
            raise ContractError(f"Formas divergentes em {name}: parâmetro {tensor.shape}, gradiente {grad.shape}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * grad
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * grad * grad
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        tensor.data -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)
    return params, state
