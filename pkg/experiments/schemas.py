# experiments/schemas.py
"""
Arquivos de configuração de experimentos

JSON com três seções opcionais, todas estritas (chaves desconhecidas são
rejeitadas):

    {
        "generator": {...GeneratorConfig},
        "model": {...ModelConfig},
        "training": {...TrainConfig}
    }

Os valores sobrepõem os padrões das dataclasses; flags da linha de comando
sobrepõem o arquivo.
"""
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from jsonschema import Draft202012Validator

from core.exceptions import ConfigError
from synthdata.generator import GeneratorConfig
from training.config import TrainConfig
from transformer.config import AttentionMode, ModelConfig, ScoreScale

logger = logging.getLogger(__name__)

POSITIVE_INT = {'type': 'integer', 'minimum': 1}
NON_NEGATIVE_INT = {'type': 'integer', 'minimum': 0}


def _section(properties: dict) -> dict:
    return {'type': 'object', 'properties': properties, 'additionalProperties': False}


GENERATOR_SCHEMA = _section({
    'regions': POSITIVE_INT,
    'region_size': POSITIVE_INT,
    'frames_per_region': POSITIVE_INT,
    'blob_rate': {'type': 'number', 'minimum': 0},
    'intensity_tail': {'type': 'number', 'exclusiveMinimum': 0},
    'intensity_scale': {'type': 'number', 'exclusiveMinimum': 0},
    'seed': NON_NEGATIVE_INT,
    'noise': {'type': 'number', 'minimum': 0},
    'val_fraction': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
    'train_samples': POSITIVE_INT,
    'val_samples': NON_NEGATIVE_INT,
    'label_bins': {'type': 'integer', 'minimum': 2},
    'channels': POSITIVE_INT,
    'input_frames': POSITIVE_INT,
    'target_frames': POSITIVE_INT,
    'crop_size': POSITIVE_INT,
})

MODEL_SCHEMA = _section({
    'frames': POSITIVE_INT,
    'channels': POSITIVE_INT,
    'height': POSITIVE_INT,
    'width': POSITIVE_INT,
    'patch_size': POSITIVE_INT,
    'hidden_dim': POSITIVE_INT,
    'heads': POSITIVE_INT,
    'depth': POSITIVE_INT,
    'n_bins': {'type': 'integer', 'minimum': 2},
    'mlp_ratio': POSITIVE_INT,
    'attention_mode': {'enum': list(AttentionMode.values)},
    'score_scale': {'enum': list(ScoreScale.values)},
    'layer_norm_eps': {'type': 'number', 'exclusiveMinimum': 0},
    'init_std': {'type': 'number', 'minimum': 0},
})

TRAINING_SCHEMA = _section({
    'learning_rate': {'type': 'number', 'exclusiveMinimum': 0},
    'beta1': {'type': 'number', 'minimum': 0, 'exclusiveMaximum': 1},
    'beta2': {'type': 'number', 'minimum': 0, 'exclusiveMaximum': 1},
    'eps': {'type': 'number', 'exclusiveMinimum': 0},
    'batch_size': POSITIVE_INT,
    'max_steps': NON_NEGATIVE_INT,
    'val_interval': POSITIVE_INT,
    'eval_batch_size': POSITIVE_INT,
    'seed': NON_NEGATIVE_INT,
    'attention_mode': {'enum': list(AttentionMode.values) + [None]},
    'n_bins': {'type': ['integer', 'null'], 'minimum': 2},
    'loss_weighting': {'type': 'boolean'},
    'mean_normalize_weights': {'type': 'boolean'},
    'grad_clip': {'type': ['number', 'null'], 'exclusiveMinimum': 0},
})

EXPERIMENT_SCHEMA = {
    '$schema': 'https://json-schema.org/draft/2020-12/schema',
    'type': 'object',
    'properties': {
        'generator': GENERATOR_SCHEMA,
        'model': MODEL_SCHEMA,
        'training': TRAINING_SCHEMA,
    },
    'additionalProperties': False,
}

_validator = Draft202012Validator(EXPERIMENT_SCHEMA)


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorConfig
    model: ModelConfig
    training: TrainConfig

    def to_dict(self) -> dict:
        return {
            'generator': self.generator.to_dict(),
            'model': self.model.to_dict(),
            'training': self.training.to_dict(),
        }

    def with_overrides(self, attention: Optional[str] = None, bins: Optional[int] = None,
                       loss_weighting: Optional[bool] = None, seed: Optional[int] = None) -> 'ExperimentConfig':
        """Aplica as flags da linha de comando sobre a seção de treino"""
        changes = {}
        if attention is not None:
            changes['attention_mode'] = attention
        if bins is not None:
            changes['n_bins'] = bins
        if loss_weighting is not None:
            changes['loss_weighting'] = loss_weighting
        if seed is not None:
            changes['seed'] = seed
        if not changes:
            return self
        return ExperimentConfig(self.generator, self.model, self.training.replace(**changes))


def validate_document(data) -> dict:
    """Valida contra EXPERIMENT_SCHEMA; ConfigError lista todos os problemas"""
    errors = sorted(_validator.iter_errors(data), key=lambda error: list(error.absolute_path))
    if errors:
        problems = '; '.join(
            f"{'/'.join(str(part) for part in error.absolute_path) or '<raiz>'}: {error.message}"
            for error in errors
        )
        raise ConfigError(f"Configuração inválida: {problems}")
    return data


def _build(cls, base, section: dict):
    values = base.to_dict()
    values.update(section)
    try:
        return cls(**values)
    except TypeError as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from None


def default_experiment(challenge: bool = False) -> ExperimentConfig:
    """Padrões de bancada, ou os do desafio com `challenge`"""
    if challenge:
        return ExperimentConfig(GeneratorConfig(), ModelConfig.challenge(), TrainConfig.challenge())
    return ExperimentConfig(GeneratorConfig(), ModelConfig.desk(), TrainConfig())


def parse_experiment(data: dict, challenge: bool = False) -> ExperimentConfig:
    validate_document(data)
    base = default_experiment(challenge)
    return ExperimentConfig(
        generator=_build(GeneratorConfig, base.generator, data.get('generator', {})),
        model=_build(ModelConfig, base.model, data.get('model', {})),
        training=_build(TrainConfig, base.training, data.get('training', {})),
    )


def load_experiment(path=None, challenge: bool = False) -> ExperimentConfig:
    """Lê e valida um arquivo de experimento; sem arquivo, devolve os padrões"""
    if path is None:
        return default_experiment(challenge)
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Arquivo de configuração não encontrado: {path}")
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} não é JSON válido: {exc}") from None
    experiment = parse_experiment(data, challenge)
    logger.info(f"Configuração carregada de {path}")
    return experiment
