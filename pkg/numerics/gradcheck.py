# numerics/gradcheck.py
"""
Verificação de gradientes por diferenças finitas centrais
"""
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def analytic_gradients(loss_fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> list[np.ndarray]:
    for tensor in tensors:
        tensor.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    backward(loss, tape)
    return [tensor.grad.copy() for tensor in tensors]


def numeric_gradient(loss_fn: Callable[[], Tensor], tensor: Tensor, flat_index: int, h: float = 1e-5) -> float:
    """Derivada central de loss_fn em relação a um elemento de `tensor`"""
    flat = tensor.data.reshape(-1)
    original = flat[flat_index]
    flat[flat_index] = original + h
    plus = loss_fn().item()
    flat[flat_index] = original - h
    minus = loss_fn().item()
    flat[flat_index] = original
    return (plus - minus) / (2.0 * h)


def max_gradient_error(
    loss_fn: Callable[[], Tensor],
    tensors: Sequence[Tensor],
    h: float = 1e-5,
    samples_per_tensor: int = None,
    rng: np.random.Generator = None,
    floor: float = 1e-8,
) -> float:
    """
    Maior erro relativo entre gradiente analítico e numérico.

    Com `samples_per_tensor`, apenas essa quantidade de elementos (sorteados
    com `rng`) é verificada em cada tensor.
    """
    rng = rng or np.random.default_rng(0)
    grads = analytic_gradients(loss_fn, tensors)
    worst = 0.0
    for tensor, grad in zip(tensors, grads):
        indices = np.arange(tensor.size)
        if samples_per_tensor is not None and tensor.size > samples_per_tensor:
            indices = rng.choice(tensor.size, size=samples_per_tensor, replace=False)
        for flat_index in indices:
            numeric = numeric_gradient(loss_fn, tensor, int(flat_index), h)
            analytic = float(grad.reshape(-1)[flat_index])
            worst = max(worst, relative_error(analytic, numeric, floor))
    return worst
