# binning/normalization.py
"""
Normalização min-max por canal das radiâncias, com estatísticas do treino
"""
import logging
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from core.exceptions import ConfigError, DataError, DimensionError

logger = logging.getLogger(__name__)

# Eixo de canal em x_raw[..., C, H, W]
CHANNEL_AXIS = -3


@dataclass(frozen=True)
class NormStats:
    x_min: tuple
    x_max: tuple

    def __post_init__(self):
        if len(self.x_min) != len(self.x_max):
            raise ConfigError("NormStats: x_min e x_max com tamanhos diferentes")
        if any(high < low for low, high in zip(self.x_min, self.x_max)):
            raise ConfigError("NormStats: x_max menor que x_min em algum canal")

    @property
    def channels(self) -> int:
        return len(self.x_min)

    @property
    def degenerate_channels(self) -> list[int]:
        return [c for c, (low, high) in enumerate(zip(self.x_min, self.x_max)) if high == low]

    def _broadcast(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64)[:, None, None]

    def to_meta(self) -> dict:
        return {'norm.x_min': list(self.x_min), 'norm.x_max': list(self.x_max)}

    @classmethod
    def from_meta(cls, meta: dict) -> 'NormStats':
        try:
            return cls(x_min=tuple(map(float, meta['norm.x_min'])), x_max=tuple(map(float, meta['norm.x_max'])))
        except KeyError as exc:
            raise ConfigError(f"Checkpoint sem a chave {exc.args[0]}") from None


def compute_stats(dataset: Iterable) -> NormStats:
    """
    Mínimo e máximo por canal sobre todas as entradas do conjunto de treino.
    Aceita SampleRecord ou arrays x_raw[T, C, H, W].
    """
    low = high = None
    count = 0
    for item in dataset:
        x_raw = np.asarray(getattr(item, 'x_raw', item), dtype=np.float64)
        if x_raw.ndim < 3:
            raise DimensionError(f"Entrada sem eixo de canal: forma {x_raw.shape}")
        axes = tuple(axis for axis in range(x_raw.ndim) if axis != x_raw.ndim + CHANNEL_AXIS)
        item_low, item_high = x_raw.min(axis=axes), x_raw.max(axis=axes)
        if low is None:
            low, high = item_low, item_high
        elif item_low.shape != low.shape:
            raise DimensionError(f"Número de canais inconsistente: {item_low.shape[0]} vs {low.shape[0]}")
        else:
            low, high = np.minimum(low, item_low), np.maximum(high, item_high)
        count += 1
    if count == 0:
        raise DataError("Conjunto de treino vazio; impossível calcular estatísticas")

    stats = NormStats(x_min=tuple(float(v) for v in low), x_max=tuple(float(v) for v in high))
    for channel in stats.degenerate_channels:
        logger.warning(f"Canal {channel} constante ({stats.x_min[channel]}); será normalizado para 0")
    return stats


def normalize(x_raw, stats: NormStats) -> np.ndarray:
    """(x_raw - x_min) / (x_max - x_min) por canal; canais degenerados viram 0"""
    x_raw = np.asarray(x_raw, dtype=np.float64)
    if x_raw.ndim < 3 or x_raw.shape[CHANNEL_AXIS] != stats.channels:
        raise DimensionError(f"Entrada {x_raw.shape} incompatível com {stats.channels} canais")
    low, high = stats._broadcast(stats.x_min), stats._broadcast(stats.x_max)
    span = high - low
    safe = np.where(span > 0, span, 1.0)
    return np.where(span > 0, (x_raw - low) / safe, 0.0)


def denormalize(x, stats: NormStats) -> np.ndarray:
    """Inversa de normalize; canais degenerados voltam para x_min"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim < 3 or x.shape[CHANNEL_AXIS] != stats.channels:
        raise DimensionError(f"Entrada {x.shape} incompatível com {stats.channels} canais")
    low, high = stats._broadcast(stats.x_min), stats._broadcast(stats.x_max)
    return low + x * (high - low)
