# numerics/tensor.py
"""
Tensor denso em float64 e fita (Tape) para diferenciação automática reversa

Cada operação diferenciável registra na fita ativa (thread-local) suas entradas,
sua saída e a regra de backward. `backward` percorre a fita em ordem reversa.
"""
import logging
import threading
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from core.exceptions import ContractError, NumericError

logger = logging.getLogger(__name__)

# Fita ativa por thread: uma fita nunca é compartilhada entre forwards concorrentes
_thread_local = threading.local()

DEBUG_CHECKS = {
    'check_finite': True,
}


def set_check_finite(enabled: bool):
    """Liga/desliga a asserção de NaN/Inf em todas as operações"""
    DEBUG_CHECKS['check_finite'] = bool(enabled)


def check_finite(op: str, data: np.ndarray):
    if DEBUG_CHECKS['check_finite'] and not np.all(np.isfinite(data)):
        raise NumericError(f"{op}: valores não finitos na saída")


class Tensor:
    """
    Array n-dimensional (row-major, float64) com gradiente opcional.

    Tensores criados pelo usuário são folhas; `grad` só existe em folhas com
    requires_grad. Tensores produzidos por operações são intermediários e
    recebem gradiente apenas dentro de `backward`.
    """

    __slots__ = ('data', 'requires_grad', 'grad', 'name', '_is_leaf')

    def __init__(self, data, requires_grad: bool = False, name: str = None):
        self.data = np.array(data, dtype=np.float64)
        if self.data.size == 0:
            raise ContractError("Tensor vazio não é permitido")
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self.name = name
        self._is_leaf = True

    @classmethod
    def _from_op(cls, data: np.ndarray, requires_grad: bool) -> 'Tensor':
        tensor = cls.__new__(cls)
        tensor.data = data
        tensor.requires_grad = requires_grad
        tensor.grad = None
        tensor.name = None
        tensor._is_leaf = False
        return tensor

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def is_leaf(self) -> bool:
        return self._is_leaf

    def zero_grad(self):
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() exige tensor escalar, forma {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ''
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Açúcar sintático, delegando para numerics.ops
    def __add__(self, other):
        from numerics import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from numerics import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from numerics import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from numerics import ops
        return ops.matmul(self, other)


@dataclass
class TapeRecord:
    op: str
    inputs: tuple
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """
    Lista ordenada de operações gravadas durante um forward.

    Uso:
        with Tape() as tape:
            loss = ...
        backward(loss, tape)
    """

    def __init__(self):
        self.records: list[TapeRecord] = []

    def record(self, op: str, inputs: tuple, output: Tensor, backward_rule):
        self.records.append(TapeRecord(op, inputs, output, backward_rule))

    def __len__(self):
        return len(self.records)

    def __enter__(self):
        stack = getattr(_thread_local, 'tapes', None)
        if stack is None:
            stack = _thread_local.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _thread_local.tapes.pop()
        return False


def current_tape() -> Optional[Tape]:
    """Retorna a fita ativa na thread atual, se houver"""
    stack = getattr(_thread_local, 'tapes', None)
    return stack[-1] if stack else None


def backward(loss: Tensor, tape: Tape):
    """
    Propaga gradientes a partir de uma perda escalar.

    Gradientes de folhas são acumulados (+=): chamar backward duas vezes sem
    zerar os gradientes soma as duas contribuições. Gradientes intermediários
    são locais a cada chamada.
    """
    if loss.size != 1:
        raise ContractError(f"backward exige perda escalar, recebeu forma {loss.shape}")
    if not loss.requires_grad:
        logger.warning("backward chamado sobre perda sem requires_grad; nada a propagar")
        return

    seed = np.ones_like(loss.data)
    if loss.is_leaf:
        loss.grad += seed
        return

    pending = {id(loss): seed}
    for record in reversed(tape.records):
        grad_out = pending.pop(id(record.output), None)
        if grad_out is None:
            continue
        input_grads = record.backward(grad_out)
        for tensor, grad in zip(record.inputs, input_grads):
            if grad is None or not tensor.requires_grad:
                continue
            if tensor.is_leaf:
                tensor.grad += grad
            else:
                key = id(tensor)
                acc = pending.get(key)
                pending[key] = grad if acc is None else acc + grad
