# training/config.py
"""
Hiperparâmetros de treinamento
"""
from dataclasses import asdict, dataclass
from typing import Optional

from core.exceptions import ConfigError
from transformer.config import AttentionMode


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    max_steps: int = 500
    val_interval: int = 50
    eval_batch_size: int = 64
    seed: int = 0
    # None: mantém o valor da configuração do modelo
    attention_mode: Optional[str] = None
    n_bins: Optional[int] = None
    loss_weighting: bool = True
    mean_normalize_weights: bool = False
    grad_clip: Optional[float] = None

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate deve ser positivo")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 e beta2 devem estar em [0, 1)")
        if self.eps <= 0:
            raise ConfigError("eps deve ser positivo")
        if self.batch_size < 1 or self.eval_batch_size < 1:
            raise ConfigError("batch_size e eval_batch_size devem ser >= 1")
        if self.max_steps < 0 or self.val_interval < 1:
            raise ConfigError("max_steps deve ser >= 0 e val_interval >= 1")
        if self.attention_mode is not None:
            if self.attention_mode not in AttentionMode.values:
                raise ConfigError(f"Modo de atenção desconhecido: {self.attention_mode}")
            object.__setattr__(self, 'attention_mode', str(AttentionMode(self.attention_mode).value))
        if self.n_bins is not None and self.n_bins < 2:
            raise ConfigError("n_bins deve ser >= 2")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip deve ser positivo")

    def replace(self, **changes) -> 'TrainConfig':
        values = self.to_dict()
        values.update(changes)
        return TrainConfig(**values)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def challenge(cls, **changes) -> 'TrainConfig':
        """Adam com lr 1e-5, lote efetivo 128 e 25 mil passos"""
        values = dict(learning_rate=1e-5, batch_size=128, max_steps=25000, val_interval=500)
        values.update(changes)
        return cls(**values)
