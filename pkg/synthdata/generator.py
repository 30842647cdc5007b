# synthdata/generator.py
"""
Mundo sintético: tempestades gaussianas com picos de Pareto que se deslocam
linearmente sobre cada região, e radiâncias derivadas da chuva.

Sementes: a região i usa o filho i de SeedSequence(seed); as transformações
de canal usam o filho `regions`; o ruído do quadro (região, t) usa a semente
derivada de (seed, região, t).
"""
import logging
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter

from core.exceptions import ConfigError, ContractError
from core.utils import SeedUtils

logger = logging.getLogger(__name__)

# Tempestades são truncadas a partir desta distância (em desvios-padrão)
BLOB_CUTOFF = 3.0
BLOB_SIGMA_RANGE = (3.0, 8.0)
BLOB_LIFETIME_RANGE = (6, 24)
BLOB_SPEED = 2.0
# Canais finais copiados com atraso (em quadros)
LAGGED_CHANNELS = (1, 2)
RADIANCE_CACHE_FRAMES = 512


@dataclass(frozen=True)
class GeneratorConfig:
    regions: int = 7
    region_size: int = 128
    frames_per_region: int = 96
    blob_rate: float = 1.0
    intensity_tail: float = 1.5
    intensity_scale: float = 1.0
    seed: int = 0
    noise: float = 0.05
    val_fraction: float = 0.25
    train_samples: int = 512
    val_samples: int = 128
    label_bins: int = 64
    channels: int = 11
    input_frames: int = 4
    target_frames: int = 16
    crop_size: int = 32

    def __post_init__(self):
        for name in ('regions', 'region_size', 'frames_per_region', 'channels', 'input_frames',
                     'target_frames', 'crop_size'):
            if getattr(self, name) < 1:
                raise ConfigError(f"GeneratorConfig.{name} deve ser positivo")
        if self.region_size < self.crop_size:
            raise ConfigError(f"region_size {self.region_size} menor que o recorte {self.crop_size}")
        if self.blob_rate < 0:
            raise ConfigError("blob_rate deve ser >= 0")
        if self.intensity_tail <= 0 or self.intensity_scale <= 0:
            raise ConfigError("intensity_tail e intensity_scale devem ser positivos")
        if self.noise < 0:
            raise ConfigError("noise deve ser >= 0")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("val_fraction deve estar em (0, 1)")
        if self.train_samples < 1 or self.val_samples < 0:
            raise ConfigError("train_samples deve ser >= 1 e val_samples >= 0")
        if self.label_bins < 2:
            raise ConfigError("label_bins deve ser >= 2")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed deve caber em 64 bits sem sinal")
        train_frames, val_frames = self.split_frame, self.frames_per_region - self.split_frame
        if min(train_frames, val_frames) < self.window:
            raise ConfigError(
                f"Cada partição temporal precisa de {self.window} quadros; "
                f"treino tem {train_frames} e validação {val_frames}"
            )

    @property
    def window(self) -> int:
        """Quadros de entrada mais quadros alvo"""
        return self.input_frames + self.target_frames

    @property
    def split_frame(self) -> int:
        """Primeiro quadro da partição de validação"""
        return int(round(self.frames_per_region * (1.0 - self.val_fraction)))

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> 'GeneratorConfig':
        values = self.to_dict()
        values.update(changes)
        return GeneratorConfig(**values)


@dataclass(frozen=True)
class Storm:
    birth: float
    lifetime: float
    row: float
    col: float
    d_row: float
    d_col: float
    sigma: float
    peak: float

    def intensity(self, t: int) -> float:
        age = t - self.birth
        if age < 0 or age > self.lifetime:
            return 0.0
        return self.peak * float(np.sin(np.pi * age / self.lifetime))


@dataclass(frozen=True)
class ChannelTransform:
    sigma: float
    gain: float
    offset: float
    lag: int


def draw_storms(config: GeneratorConfig, rng: np.random.Generator) -> list[Storm]:
    """Processo de Poisson: em média `blob_rate` tempestades por janela de entrada+alvo"""
    expected = config.blob_rate * config.frames_per_region / config.window
    count = int(rng.poisson(expected)) if expected > 0 else 0
    storms = []
    for _ in range(count):
        lifetime = float(rng.integers(BLOB_LIFETIME_RANGE[0], BLOB_LIFETIME_RANGE[1] + 1))
        storms.append(Storm(
            birth=float(rng.uniform(-lifetime, config.frames_per_region)),
            lifetime=lifetime,
            row=float(rng.uniform(0, config.region_size)),
            col=float(rng.uniform(0, config.region_size)),
            d_row=float(rng.uniform(-BLOB_SPEED, BLOB_SPEED)),
            d_col=float(rng.uniform(-BLOB_SPEED, BLOB_SPEED)),
            sigma=float(rng.uniform(*BLOB_SIGMA_RANGE)),
            peak=config.intensity_scale * (1.0 + float(rng.pareto(config.intensity_tail))),
        ))
    return storms


def render_rain(storms: list[Storm], config: GeneratorConfig) -> np.ndarray:
    """Campo de chuva (quadros, H, W) em mm/h, não negativo"""
    size = config.region_size
    grid = np.arange(size, dtype=np.float64)
    rain = np.zeros((config.frames_per_region, size, size))
    for storm in storms:
        for t in range(config.frames_per_region):
            peak = storm.intensity(t)
            if peak <= 0:
                continue
            age = t - storm.birth
            center_row = storm.row + storm.d_row * age
            center_col = storm.col + storm.d_col * age
            d2 = (grid[:, None] - center_row) ** 2 + (grid[None, :] - center_col) ** 2
            blob = peak * np.exp(-d2 / (2.0 * storm.sigma ** 2))
            blob[d2 > (BLOB_CUTOFF * storm.sigma) ** 2] = 0.0
            rain[t] += blob
    return rain


def draw_channel_transforms(config: GeneratorConfig, rng: np.random.Generator) -> list[ChannelTransform]:
    """Desfoque, ganho (com sinal) e deslocamento fixos por canal"""
    lags = [0] * config.channels
    for position, lag in enumerate(reversed(LAGGED_CHANNELS)):
        if config.channels - 1 - position >= 0:
            lags[config.channels - 1 - position] = lag
    transforms = []
    for channel in range(config.channels):
        sign = -1.0 if rng.uniform() < 0.5 else 1.0
        transforms.append(ChannelTransform(
            sigma=float(rng.uniform(0.5, 3.0)),
            gain=sign * float(rng.uniform(0.5, 5.0)),
            offset=float(rng.uniform(0.0, 300.0)),
            lag=lags[channel],
        ))
    return transforms


class SyntheticWorld:
    """
    Sequências de chuva por região (calculadas na criação) e radiâncias
    (calculadas sob demanda por quadro e mantidas em cache)
    """

    def __init__(self, config: GeneratorConfig, rain: list, transforms: list[ChannelTransform]):
        self.config = config
        self.rain = rain
        self.transforms = transforms
        self._frame = lru_cache(maxsize=RADIANCE_CACHE_FRAMES)(self._compute_frame)

    def __getstate__(self):
        # o cache não atravessa processos
        state = self.__dict__.copy()
        del state['_frame']
        return state

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._frame = lru_cache(maxsize=RADIANCE_CACHE_FRAMES)(self._compute_frame)

    def _compute_frame(self, region: int, t: int) -> np.ndarray:
        rain = self.rain[region]
        noise_rng = np.random.default_rng(SeedUtils.child_seed(self.config.seed, region, t))
        noise = noise_rng.normal(size=(self.config.channels,) + rain.shape[1:])
        frame = np.empty_like(noise)
        for channel, transform in enumerate(self.transforms):
            source = rain[max(t - transform.lag, 0)]
            blurred = gaussian_filter(source, sigma=transform.sigma, mode='nearest')
            amplitude = self.config.noise * abs(transform.gain) * self.config.intensity_scale
            frame[channel] = transform.offset + transform.gain * blurred + amplitude * noise[channel]
        frame.flags.writeable = False
        return frame

    def radiance_frame(self, region: int, t: int) -> np.ndarray:
        if not 0 <= region < self.config.regions or not 0 <= t < self.config.frames_per_region:
            raise ContractError(f"Quadro ({region}, {t}) fora do mundo sintético")
        return self._frame(int(region), int(t))

    def radiance(self, region: int, start: int, stop: int) -> np.ndarray:
        """Radiâncias (stop - start, C, H, W)"""
        return np.stack([self.radiance_frame(region, t) for t in range(start, stop)])

    def radiance_sequence(self, region: int) -> np.ndarray:
        return self.radiance(region, 0, self.config.frames_per_region)


def generate_world(config: GeneratorConfig) -> SyntheticWorld:
    rngs = SeedUtils.spawn(config.seed, config.regions + 1)
    rain = []
    for region in range(config.regions):
        storms = draw_storms(config, rngs[region])
        rain.append(render_rain(storms, config))
        logger.debug(f"Região {region}: {len(storms)} tempestades")
    transforms = draw_channel_transforms(config, rngs[config.regions])
    logger.info(f"Mundo sintético gerado: {config.regions} regiões de {config.frames_per_region} quadros (seed {config.seed})")
    return SyntheticWorld(config, rain, transforms)
