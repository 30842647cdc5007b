# metrics/scores.py
"""
CRPS categórico e métricas ponderadas por classe (BW)

As variantes BW calculam a métrica por classe e tiram a média simples entre
as classes presentes no lote, neutralizando o desbalanceamento.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from binning.targets import BinSpec, bin_centers
from core.exceptions import ContractError, DataError, DimensionError

logger = logging.getLogger(__name__)

# Tolerância para linhas de probabilidade somarem 1
SIMPLEX_TOL = 1e-9


def _values(probs) -> np.ndarray:
    return np.asarray(getattr(probs, 'data', probs), dtype=np.float64)


@dataclass
class PredictionBatch:
    """Saídas do modelo probs[B, n], rótulos[B] e, opcionalmente, alvos y_reg[B]"""
    probs: np.ndarray
    labels: np.ndarray
    targets: Optional[np.ndarray] = None

    def __post_init__(self):
        probs = _values(self.probs)
        if probs.size == 0 and probs.ndim < 2:
            # lote vazio sem número de classes conhecido
            probs = probs.reshape(0, 0)
        self.probs = np.atleast_2d(probs)
        self.labels = np.atleast_1d(np.asarray(self.labels, dtype=np.int64))
        if self.probs.ndim != 2 or self.labels.shape != (self.probs.shape[0],):
            raise DimensionError(f"probs {self.probs.shape} incompatível com {self.labels.shape[0]} rótulos")
        if np.any(np.abs(self.probs.sum(axis=1) - 1.0) > SIMPLEX_TOL):
            raise ContractError("Linhas de probabilidade devem somar 1")
        if np.any(self.labels < 0) or np.any(self.labels >= self.n):
            raise ContractError(f"Rótulo fora de [0, {self.n})")
        if self.targets is not None:
            self.targets = np.atleast_1d(np.asarray(self.targets, dtype=np.float64))
            if self.targets.shape != self.labels.shape:
                raise DimensionError("targets e labels com tamanhos diferentes")

    @property
    def size(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n(self) -> int:
        return int(self.probs.shape[1])

    def present_classes(self) -> np.ndarray:
        return np.unique(self.labels)

    def require_non_empty(self):
        if self.size == 0:
            raise DataError("Lote de avaliação vazio")


def pmf_to_cmf(probs) -> np.ndarray:
    """Soma prefixada no último eixo"""
    return np.cumsum(_values(probs), axis=-1)


def step_indicator(label: int, n: int) -> np.ndarray:
    """1(y <= bin_i): zero antes do rótulo, um a partir dele"""
    return (np.arange(n) >= label).astype(np.float64)


def crps(cmf, label: int) -> float:
    """Soma de (F(bin_i) - 1(y <= bin_i))^2 sobre as classes, sem normalização"""
    cmf = _values(cmf)
    if not 0 <= label < cmf.shape[-1]:
        raise ContractError(f"Rótulo {label} fora de [0, {cmf.shape[-1]})")
    return float(np.sum((cmf - step_indicator(label, cmf.shape[-1])) ** 2))


def crps_per_sample(batch: PredictionBatch) -> np.ndarray:
    cmf = pmf_to_cmf(batch.probs)
    steps = (np.arange(batch.n)[None, :] >= batch.labels[:, None]).astype(np.float64)
    return np.sum((cmf - steps) ** 2, axis=1)


def top_k_indices(probs, k: int) -> np.ndarray:
    """k maiores probabilidades por linha; empates favorecem o menor índice"""
    probs = np.atleast_2d(_values(probs))
    return np.argsort(-probs, axis=1, kind='stable')[:, :k]


def top_k_hits(batch: PredictionBatch, k: int = 3) -> np.ndarray:
    if k < 1:
        raise ContractError("k deve ser >= 1")
    return np.any(top_k_indices(batch.probs, k) == batch.labels[:, None], axis=1).astype(np.float64)


def per_class_mean(batch: PredictionBatch, values: np.ndarray) -> dict:
    """Média de `values` por classe presente, em ordem crescente de classe"""
    return {int(label): float(values[batch.labels == label].mean()) for label in batch.present_classes()}


def _bin_weighted(batch: PredictionBatch, values: np.ndarray) -> float:
    batch.require_non_empty()
    means = per_class_mean(batch, values)
    return float(np.mean(list(means.values())))


def top_k_accuracy(batch: PredictionBatch, k: int = 3) -> float:
    batch.require_non_empty()
    return float(top_k_hits(batch, k).mean())


def bw_top_k(batch: PredictionBatch, k: int = 3) -> float:
    return _bin_weighted(batch, top_k_hits(batch, k))


def bw_crps(batch: PredictionBatch) -> float:
    return _bin_weighted(batch, crps_per_sample(batch))


def expected_value(probs, spec: BinSpec) -> np.ndarray:
    """Precipitação esperada sum_i p_i * centro_i (mm)"""
    probs = _values(probs)
    if probs.shape[-1] != spec.n:
        raise DimensionError(f"{probs.shape[-1]} probabilidades para {spec.n} classes")
    return probs @ bin_centers(spec)


def bw_mae(batch: PredictionBatch, spec: BinSpec) -> float:
    """Erro absoluto médio do valor esperado, ponderado por classe"""
    if batch.targets is None:
        raise ContractError("bw_mae exige os alvos y_reg no lote")
    return _bin_weighted(batch, np.abs(expected_value(batch.probs, spec) - batch.targets))

