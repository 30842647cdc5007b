# metrics/losses.py
"""
Entropia cruzada ponderada por classe, diferenciável via numerics
"""
from typing import Sequence, Union

import numpy as np

from binning.weights import ClassWeights
from core.exceptions import ContractError, DimensionError
from numerics import ops
from numerics.tensor import Tensor

# Piso de probabilidade dentro do log (treino e avaliação)
PROB_FLOOR = 1e-12


def weighted_cce(probs: Tensor, labels: Sequence[int], weights: Union[ClassWeights, np.ndarray, None] = None) -> Tensor:
    """
    Média sobre o lote de -w[label] * log(max(p[label], 1e-12)).
    Sem `weights`, equivale à entropia cruzada comum.
    """
    probs = ops.as_tensor(probs)
    if probs.ndim == 1:
        probs = ops.reshape(probs, (1, probs.shape[0]))
    if probs.ndim != 2:
        raise DimensionError(f"weighted_cce espera probs[B, n], recebeu {probs.shape}")
    n = probs.shape[1]
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape != (probs.shape[0],):
        raise DimensionError(f"{labels.size} rótulos para um lote de {probs.shape[0]}")
    if np.any(labels < 0) or np.any(labels >= n):
        raise ContractError(f"Rótulo fora de [0, {n})")

    if weights is None:
        w = np.ones(n)
    else:
        w = np.asarray(weights.w if isinstance(weights, ClassWeights) else weights, dtype=np.float64)
        if w.shape != (n,):
            raise DimensionError(f"{w.shape[0]} pesos para {n} classes")

    picked = ops.log(ops.gather(probs, labels), floor=PROB_FLOOR)
    return ops.scale(ops.mean(ops.mul(picked, w[labels])), -1.0)


def cross_entropy(probs: Tensor, labels: Sequence[int]) -> Tensor:
    return weighted_cce(probs, labels, None)
