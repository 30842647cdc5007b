# binning/targets.py
"""
Alvo de regressão (chuva acumulada) e sua discretização em classes

y_reg = 4 * média(r) sobre os 16 quadros de 15 minutos da janela de 4 horas.
A classe i cobre o intervalo centrado em y_min + i*delta.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

from core.exceptions import ConfigError, ContractError, DataError, DimensionError

logger = logging.getLogger(__name__)

# Horas cobertas pela janela alvo
TARGET_HOURS = 4.0


def derive_target(r) -> float:
    """Chuva acumulada em mm a partir das taxas r[T', H', W'] em mm/h"""
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 3:
        raise DimensionError(f"Campo de chuva deve ter 3 eixos (T', H', W'), recebeu {r.shape}")
    if not np.all(np.isfinite(r)):
        raise DataError("Campo de chuva contém valores não finitos")
    if np.any(r < 0):
        raise DataError(f"Taxa de chuva negativa ({r.min():.4g} mm/h)")
    return TARGET_HOURS * float(r.sum()) / r.size


@dataclass(frozen=True)
class BinSpec:
    y_min: float
    y_max: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ConfigError(f"BinSpec exige n >= 2, recebeu {self.n}")
        if not (np.isfinite(self.y_min) and np.isfinite(self.y_max)) or self.y_max <= self.y_min:
            raise ConfigError(f"BinSpec exige y_max > y_min, recebeu [{self.y_min}, {self.y_max}]")

    @property
    def delta(self) -> float:
        return (self.y_max - self.y_min) / (self.n - 1)

    @classmethod
    def from_targets(cls, targets: Iterable[float], n: int) -> 'BinSpec':
        """Faixa [min, max] dos alvos de treino; faixa degenerada vira delta = 1"""
        values = np.asarray(list(targets), dtype=np.float64)
        if values.size == 0:
            raise DataError("Nenhum alvo para construir as classes")
        y_min, y_max = float(values.min()), float(values.max())
        if y_max <= y_min:
            logger.warning(f"Todos os alvos iguais a {y_min}; usando delta = 1 para as {n} classes")
            y_max = y_min + (n - 1)
        return cls(y_min=y_min, y_max=y_max, n=n)

    def to_meta(self) -> dict:
        return {'bins.y_min': self.y_min, 'bins.y_max': self.y_max, 'bins.n': self.n}

    @classmethod
    def from_meta(cls, meta: dict) -> 'BinSpec':
        try:
            return cls(y_min=float(meta['bins.y_min']), y_max=float(meta['bins.y_max']), n=int(meta['bins.n']))
        except KeyError as exc:
            raise ConfigError(f"Checkpoint sem a chave {exc.args[0]}") from None


def _round_half_away(value: np.ndarray) -> np.ndarray:
    return np.sign(value) * np.floor(np.abs(value) + 0.5)


def to_bin(y_reg: float, spec: BinSpec) -> int:
    """round((y - y_min) / delta), empates para longe do zero, limitado a [0, n-1]"""
    if not np.isfinite(y_reg):
        raise DataError(f"Alvo não finito: {y_reg}")
    index = _round_half_away(np.float64((y_reg - spec.y_min) / spec.delta))
    return int(np.clip(index, 0, spec.n - 1))


def to_bins(targets, spec: BinSpec) -> np.ndarray:
    """Versão vetorizada de to_bin"""
    targets = np.asarray(targets, dtype=np.float64)
    if not np.all(np.isfinite(targets)):
        raise DataError("Alvos não finitos")
    indices = _round_half_away((targets - spec.y_min) / spec.delta)
    return np.clip(indices, 0, spec.n - 1).astype(np.int64)


def bin_center(index: int, spec: BinSpec) -> float:
    if not 0 <= index < spec.n:
        raise ContractError(f"Classe {index} fora de [0, {spec.n})")
    if index == spec.n - 1:
        return spec.y_max
    return spec.y_min + index * spec.delta


def bin_centers(spec: BinSpec) -> np.ndarray:
    centers = spec.y_min + np.arange(spec.n) * spec.delta
    centers[-1] = spec.y_max
    return centers


def one_hot(index: int, n: int) -> np.ndarray:
    if not 0 <= index < n:
        raise ContractError(f"one_hot: índice {index} fora de [0, {n})")
    vector = np.zeros(n)
    vector[index] = 1.0
    return vector


@dataclass(frozen=True)
class SampleRecord:
    """
    Par entrada/alvo: radiâncias x_raw[T, C, H, W], chuva r[T', H', W'],
    alvo y_reg (mm) e classe. `origin` guarda (região, instante, linha, coluna)
    do recorte no mundo sintético.
    """
    x_raw: np.ndarray
    r: np.ndarray
    y_reg: float
    label: Optional[int] = None
    origin: tuple = field(default=(0, 0, 0, 0))

    @property
    def region(self) -> int:
        return int(self.origin[0])


def relabel(records: Iterable[SampleRecord], spec: BinSpec) -> list[SampleRecord]:
    """Recalcula as classes de um conjunto de registros para `spec`"""
    return [replace(record, label=to_bin(record.y_reg, spec)) for record in records]
