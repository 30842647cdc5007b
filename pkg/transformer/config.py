# transformer/config.py
"""
Hiperparâmetros arquiteturais do SaTformer
"""
from dataclasses import asdict, dataclass

from django.db import models

from core.exceptions import ConfigError


class AttentionMode(models.TextChoices):
    """Variantes de atenção do bloco encoder"""
    FULL_ST = 'full', 'Espaço-tempo completo (S + T)'
    S_THEN_T = 's-t', 'Espaço depois tempo (S -> T)'
    T_THEN_S = 't-s', 'Tempo depois espaço (T -> S)'


class ScoreScale(models.TextChoices):
    """Constante de escala dos scores de atenção"""
    MODEL_DIM = 'model_dim', '1/sqrt(d)'
    HEAD_DIM = 'head_dim', '1/sqrt(head_dim)'


@dataclass(frozen=True)
class ModelConfig:
    frames: int = 4
    channels: int = 11
    height: int = 32
    width: int = 32
    patch_size: int = 4
    hidden_dim: int = 512
    heads: int = 8
    depth: int = 12
    n_bins: int = 64
    mlp_ratio: int = 4
    attention_mode: str = AttentionMode.FULL_ST
    score_scale: str = ScoreScale.MODEL_DIM
    layer_norm_eps: float = 1e-5
    init_std: float = 0.02

    def __post_init__(self):
        positive = ('frames', 'channels', 'height', 'width', 'patch_size', 'hidden_dim', 'heads', 'depth', 'mlp_ratio')
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"ModelConfig.{name} deve ser positivo")
        if self.height % self.patch_size or self.width % self.patch_size:
            raise ConfigError(
                f"Altura/largura ({self.height}x{self.width}) devem ser múltiplas do patch {self.patch_size}"
            )
        if self.hidden_dim % self.heads:
            raise ConfigError(f"hidden_dim {self.hidden_dim} não é divisível por {self.heads} cabeças")
        if self.n_bins < 2:
            raise ConfigError("n_bins deve ser >= 2")
        if self.attention_mode not in AttentionMode.values:
            raise ConfigError(f"Modo de atenção desconhecido: {self.attention_mode}")
        if self.score_scale not in ScoreScale.values:
            raise ConfigError(f"Escala de score desconhecida: {self.score_scale}")
        if self.layer_norm_eps <= 0 or self.init_std < 0:
            raise ConfigError("layer_norm_eps deve ser positivo e init_std não negativo")
        # normaliza enums vindos de JSON para str puro
        object.__setattr__(self, 'attention_mode', str(AttentionMode(self.attention_mode).value))
        object.__setattr__(self, 'score_scale', str(ScoreScale(self.score_scale).value))

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.heads

    @property
    def patches_per_frame(self) -> int:
        return (self.height * self.width) // (self.patch_size ** 2)

    @property
    def seq_len(self) -> int:
        return self.frames * self.patches_per_frame + 1

    @property
    def patch_features(self) -> int:
        return self.patch_size * self.patch_size * self.channels

    @property
    def mlp_dim(self) -> int:
        return self.mlp_ratio * self.hidden_dim

    @property
    def attention_units(self) -> int:
        """Sub-etapas de atenção por bloco (2 nas variantes fatoradas)"""
        return 1 if self.attention_mode == AttentionMode.FULL_ST else 2

    @property
    def score_scale_factor(self) -> float:
        dim = self.hidden_dim if self.score_scale == ScoreScale.MODEL_DIM else self.head_dim
        return dim ** -0.5

    def replace(self, **changes) -> 'ModelConfig':
        values = self.to_dict()
        values.update(changes)
        return ModelConfig(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def challenge(cls) -> 'ModelConfig':
        """Configuração de treinamento completa descrita para o desafio"""
        return cls()

    @classmethod
    def desk(cls, **changes) -> 'ModelConfig':
        """Formato de entrada do desafio com um modelo pequeno, treinável em CPU"""
        values = dict(hidden_dim=64, heads=4, depth=2)
        values.update(changes)
        return cls(**values)

    @classmethod
    def toy(cls, **changes) -> 'ModelConfig':
        """Configuração de bancada usada em testes e ablações rápidas"""
        values = dict(frames=2, channels=3, height=16, width=16, patch_size=4,
                      hidden_dim=32, heads=2, depth=2, n_bins=8)
        values.update(changes)
        return cls(**values)
