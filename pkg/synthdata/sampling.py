# synthdata/sampling.py
"""
Amostragem de pares entrada/alvo: recorte espacial aleatório e janela de
4 quadros de entrada seguida dos 16 quadros alvo, com partição temporal
treino/validação por região.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from binning.targets import BinSpec, SampleRecord, derive_target, relabel, to_bin
from binning.weights import label_histogram
from core.exceptions import DataError
from core.utils import FileUtils, SeedUtils
from .generator import GeneratorConfig, SyntheticWorld, generate_world

logger = logging.getLogger(__name__)

# Índices de fluxo para as sementes de amostragem de cada partição
TRAIN_STREAM = 1001
VAL_STREAM = 1002


def quantize(values: np.ndarray) -> np.ndarray:
    """Arredonda para float32 (precisão em disco) e promove para float64"""
    return np.asarray(values, dtype=np.float32).astype(np.float64)


def sample_pair(world: SyntheticWorld, rng: np.random.Generator, spec: Optional[BinSpec] = None,
                time_range: Optional[tuple] = None, region: Optional[int] = None) -> SampleRecord:
    """
    Sorteia região (se não informada), instante inicial e recorte. O instante
    inicial é uniforme entre as janelas que cabem inteiras em `time_range`.
    """
    config = world.config
    start, stop = time_range or (0, config.frames_per_region)
    if stop - start < config.window:
        raise DataError(f"Nenhuma janela de {config.window} quadros cabe em [{start}, {stop})")
    if region is None:
        region = int(rng.integers(config.regions))
    t0 = int(rng.integers(start, stop - config.window + 1))
    row = int(rng.integers(config.region_size - config.crop_size + 1))
    col = int(rng.integers(config.region_size - config.crop_size + 1))
    crop = (slice(row, row + config.crop_size), slice(col, col + config.crop_size))

    x_raw = quantize(world.radiance(region, t0, t0 + config.input_frames)[(Ellipsis,) + crop])
    target_start = t0 + config.input_frames
    r = quantize(world.rain[region][(slice(target_start, target_start + config.target_frames),) + crop])
    y_reg = derive_target(r)
    label = to_bin(y_reg, spec) if spec is not None else None
    return SampleRecord(x_raw=x_raw, r=r, y_reg=y_reg, label=label, origin=(region, t0, row, col))


@dataclass
class SplitManifest:
    """Origens (região, instante, linha, coluna) das amostras de cada partição"""
    split_frame: int
    window: int
    frames: int
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)

    def is_temporally_disjoint(self) -> bool:
        train_ok = all(t0 + self.window <= self.split_frame for _, t0, _, _ in self.train)
        val_ok = all(t0 >= self.split_frame and t0 + self.window <= self.frames for _, t0, _, _ in self.val)
        return train_ok and val_ok

    def to_dict(self) -> dict:
        return {
            'split_frame': self.split_frame,
            'window': self.window,
            'frames': self.frames,
            'train': [list(origin) for origin in self.train],
            'val': [list(origin) for origin in self.val],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'SplitManifest':
        return cls(
            split_frame=int(data['split_frame']),
            window=int(data['window']),
            frames=int(data['frames']),
            train=[tuple(origin) for origin in data['train']],
            val=[tuple(origin) for origin in data['val']],
        )

    def save(self, path):
        return FileUtils.write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> 'SplitManifest':
        return cls.from_dict(FileUtils.read_json(path))


@dataclass
class DatasetSplits:
    config: GeneratorConfig
    train: list
    val: list
    bin_spec: BinSpec
    manifest: SplitManifest
    # Presente apenas quando o conjunto foi gerado nesta execução
    world: Optional[SyntheticWorld] = None

    def histogram(self) -> np.ndarray:
        return label_histogram([record.label for record in self.train], self.bin_spec.n)


def draw_records(world: SyntheticWorld, count: int, time_range: tuple, stream: int) -> list[SampleRecord]:
    """Sorteio região primeiro: cada amostra escolhe a região e depois a janela"""
    rng = np.random.default_rng(SeedUtils.child_seed(world.config.seed, stream))
    return [sample_pair(world, rng, time_range=time_range) for _ in range(count)]


def build_dataset(config: GeneratorConfig, world: Optional[SyntheticWorld] = None) -> DatasetSplits:
    """
    Amostras de treino em [0, split_frame) e de validação em
    [split_frame, frames); classes derivadas dos alvos de treino.
    """
    world = world or generate_world(config)
    split = config.split_frame
    train = draw_records(world, config.train_samples, (0, split), TRAIN_STREAM)
    val = draw_records(world, config.val_samples, (split, config.frames_per_region), VAL_STREAM)
    spec = BinSpec.from_targets([record.y_reg for record in train], config.label_bins)
    train, val = relabel(train, spec), relabel(val, spec)
    manifest = SplitManifest(
        split_frame=split,
        window=config.window,
        frames=config.frames_per_region,
        train=[record.origin for record in train],
        val=[record.origin for record in val],
    )
    dataset = DatasetSplits(config=config, train=train, val=val, bin_spec=spec, manifest=manifest, world=world)
    logger.info(
        f"Conjunto sintético: {len(train)} treino / {len(val)} validação, "
        f"{int(dataset.histogram()[0])} amostras na classe 0"
    )
    return dataset
