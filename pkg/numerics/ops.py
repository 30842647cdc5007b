# numerics/ops.py
"""
Operações diferenciáveis sobre Tensor

Todas aceitam operandos com dimensões iniciais extras (lote), seguindo as
regras de broadcasting do numpy. As regras de backward devolvem gradientes já
reduzidos para a forma de cada entrada.
"""
import math
from typing import Sequence

import numpy as np

from core.exceptions import ContractError, DimensionError
from .tensor import Tensor, check_finite, current_tape

GELU_COEF = 0.044715
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _emit(op: str, data: np.ndarray, inputs: tuple, backward_rule) -> Tensor:
    """Cria a saída de uma operação e a registra na fita ativa"""
    check_finite(op, data)
    tape = current_tape()
    requires_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._from_op(data, requires_grad)
    if requires_grad:
        tape.record(op, inputs, out, backward_rule)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Soma as dimensões que foram expandidas por broadcasting"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: formas incompatíveis {a.shape} e {b.shape}") from None


# ---------------------------------------------------------------------------
# Elementares
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('add', a, b)

    def rule(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _emit('add', a.data + b.data, (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('sub', a, b)

    def rule(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _emit('sub', a.data - b.data, (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape('mul', a, b)

    def rule(grad):
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)

    return _emit('mul', a.data * b.data, (a, b), rule)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)

    def rule(grad):
        return (grad * factor,)

    return _emit('scale', a.data * factor, (a,), rule)


def log(a: Tensor, floor: float = 0.0) -> Tensor:
    """log(max(a, floor)); gradiente nulo onde o piso está ativo"""
    clamped = np.maximum(a.data, floor) if floor > 0 else a.data

    def rule(grad):
        active = a.data >= floor if floor > 0 else True
        return (np.where(active, grad / clamped, 0.0),)

    with np.errstate(divide='ignore', invalid='ignore'):
        data = np.log(clamped)
    return _emit('log', data, (a,), rule)


def sum(a: Tensor, axis: int = None) -> Tensor:  # noqa: A001
    def rule(grad):
        if axis is not None:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape).copy(),)

    return _emit('sum', np.asarray(a.data.sum(axis=axis)), (a,), rule)


def mean(a: Tensor, axis: int = None) -> Tensor:
    count = a.size if axis is None else a.shape[axis]
    return scale(sum(a, axis=axis), 1.0 / count)


# ---------------------------------------------------------------------------
# Álgebra linear e forma
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Produto matricial a[..., m, k] @ b[..., k, n]"""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: formas incompatíveis {a.shape} e {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: lotes incompatíveis {a.shape} e {b.shape}") from None

    def rule(grad):
        grad_a = np.matmul(grad, np.swapaxes(b.data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a.data, -1, -2), grad)
        return _unbroadcast(grad_a, a.shape), _unbroadcast(grad_b, b.shape)

    return _emit('matmul', np.matmul(a.data, b.data), (a, b), rule)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: {a.shape} não cabe em {tuple(shape)}") from None

    def rule(grad):
        return (grad.reshape(a.shape),)

    return _emit('reshape', data, (a,), rule)


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def rule(grad):
        return (grad.transpose(inverse),)

    return _emit('transpose', a.data.transpose(axes), (a,), rule)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise DimensionError(f"concat: formas incompatíveis {shapes} no eixo {axis}") from None
    splits = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(grad):
        return tuple(np.split(grad, splits, axis=axis))

    return _emit('concat', data, tensors, rule)


def select(a: Tensor, index: int, axis: int = 0) -> Tensor:
    """Seleciona uma posição ao longo de `axis`, removendo esse eixo"""
    axis = axis % a.ndim
    if not -a.shape[axis] <= index < a.shape[axis]:
        raise ContractError(f"select: índice {index} fora do eixo {axis} de forma {a.shape}")

    def rule(grad):
        full = np.zeros_like(a.data)
        where = [slice(None)] * a.ndim
        where[axis] = index
        full[tuple(where)] = grad
        return (full,)

    return _emit('select', np.take(a.data, index, axis=axis), (a,), rule)


def gather(a: Tensor, indices: Sequence[int]) -> Tensor:
    """Para a[B, n] e índices[B], devolve a[b, indices[b]]"""
    indices = np.asarray(indices, dtype=np.int64)
    if a.ndim != 2 or indices.shape != (a.shape[0],):
        raise DimensionError(f"gather: esperado a[B, n] e índices[B], recebeu {a.shape} e {indices.shape}")
    if np.any(indices < 0) or np.any(indices >= a.shape[1]):
        raise ContractError(f"gather: índices fora de [0, {a.shape[1]})")
    rows = np.arange(a.shape[0])

    def rule(grad):
        full = np.zeros_like(a.data)
        full[rows, indices] = grad
        return (full,)

    return _emit('gather', a.data[rows, indices], (a,), rule)


# ---------------------------------------------------------------------------
# Camadas
# ---------------------------------------------------------------------------

def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normaliza cada vetor do último eixo e aplica ganho/viés afins"""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(
            f"layer_norm: último eixo {d} incompatível com ganho {gain.shape} / viés {bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std

    def rule(grad):
        grad_hat = grad * gain.data
        grad_x = inv_std * (
            grad_hat
            - grad_hat.mean(axis=-1, keepdims=True)
            - x_hat * (grad_hat * x_hat).mean(axis=-1, keepdims=True)
        )
        reduce_axes = tuple(range(grad.ndim - 1))
        grad_gain = (grad * x_hat).sum(axis=reduce_axes)
        grad_bias = grad.sum(axis=reduce_axes)
        return grad_x, grad_gain, grad_bias

    return _emit('layer_norm', x_hat * gain.data + bias.data, (x, gain, bias), rule)


def softmax(x: Tensor, mask: np.ndarray = None) -> Tensor:
    """
    Softmax estável no último eixo. `mask` (booleana, broadcastable) marca as
    posições permitidas; posições mascaradas recebem probabilidade 0.
    """
    if x.shape[-1] == 0:
        raise DimensionError("softmax: último eixo vazio")
    logits = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
        if not np.all(mask.any(axis=-1)):
            raise ContractError("softmax: linha totalmente mascarada")
        logits = np.where(mask, logits, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    probs = exps / exps.sum(axis=-1, keepdims=True)

    def rule(grad):
        return (probs * (grad - (grad * probs).sum(axis=-1, keepdims=True)),)

    return _emit('softmax', probs, (x,), rule)


def gelu(x: Tensor) -> Tensor:
    """GELU, aproximação por tanh"""
    u = SQRT_2_OVER_PI * (x.data + GELU_COEF * x.data ** 3)
    t = np.tanh(u)

    def rule(grad):
        du = SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEF * x.data ** 2)
        local = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * du
        return (grad * local,)

    return _emit('gelu', 0.5 * x.data * (1.0 + t), (x,), rule)
