# binning/weights.py
"""
Pesos por classe: w_i = -log(|D_i| / |D_total|) sobre o conjunto de treino
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from core.exceptions import ContractError, DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassWeights:
    w: np.ndarray
    histogram: np.ndarray
    total: int

    @property
    def n(self) -> int:
        return len(self.w)

    @property
    def empty_bins(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.histogram == 0)]

    @classmethod
    def uniform(cls, n: int) -> 'ClassWeights':
        """Pesos unitários (perda sem reponderação)"""
        return cls(w=np.ones(n), histogram=np.zeros(n, dtype=np.int64), total=0)

    def to_meta(self) -> dict:
        return {'weights.w': [float(v) for v in self.w], 'weights.histogram': [int(v) for v in self.histogram]}


def label_histogram(labels: Sequence[int], n: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n):
        raise ContractError(f"Classe fora de [0, {n}) no histograma")
    return np.bincount(labels, minlength=n)


def class_weights(labels: Sequence[int], n: int, mean_normalize: bool = False) -> ClassWeights:
    """
    Classes vazias recebem o maior peso entre as ocupadas. Com
    `mean_normalize`, os pesos são divididos pela sua média.
    """
    histogram = label_histogram(labels, n)
    total = int(histogram.sum())
    if total == 0:
        raise DataError("Nenhum rótulo para calcular pesos de classe")

    occupied = histogram > 0
    weights = np.zeros(n)
    weights[occupied] = -np.log(histogram[occupied] / total) + 0.0
    if not occupied.all():
        weights[~occupied] = weights[occupied].max()
        logger.info(f"{int((~occupied).sum())} classes vazias recebem o peso máximo {weights[occupied].max():.4f}")
    if mean_normalize:
        mean = weights.mean()
        if mean > 0:
            weights = weights / mean
    return ClassWeights(w=weights, histogram=histogram, total=total)
