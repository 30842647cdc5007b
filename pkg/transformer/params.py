# transformer/params.py
"""
Parâmetros treináveis do SaTformer e sua inicialização
"""
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.stats import truncnorm

from core.exceptions import ContractError, DimensionError
from numerics.tensor import Tensor
from .config import ModelConfig

# Tipos de inicialização
TRUNC_NORMAL = 'trunc_normal'
NORMAL = 'normal'
ZEROS = 'zeros'
ONES = 'ones'


def parameter_layout(config: ModelConfig) -> 'OrderedDict[str, tuple[tuple, str]]':
    """
    Nome -> (forma, inicialização) de todos os parâmetros, em ordem fixa.
    A ordem define o layout do checkpoint.
    """
    d, m = config.hidden_dim, config.mlp_dim
    layout = OrderedDict()
    layout['patch_projection'] = ((config.patch_features, d), TRUNC_NORMAL)
    layout['cls_token'] = ((d,), ZEROS)
    layout['pos_embed'] = ((config.seq_len, d), NORMAL)
    for block in range(config.depth):
        prefix = f'block{block}'
        for unit in range(config.attention_units):
            unit_prefix = f'{prefix}.attn{unit}'
            layout[f'{unit_prefix}.ln_gain'] = ((d,), ONES)
            layout[f'{unit_prefix}.ln_bias'] = ((d,), ZEROS)
            for name in ('w_q', 'w_k', 'w_v', 'w_out'):
                layout[f'{unit_prefix}.{name}'] = ((d, d), TRUNC_NORMAL)
        layout[f'{prefix}.mlp_ln_gain'] = ((d,), ONES)
        layout[f'{prefix}.mlp_ln_bias'] = ((d,), ZEROS)
        layout[f'{prefix}.mlp_w1'] = ((d, m), TRUNC_NORMAL)
        layout[f'{prefix}.mlp_b1'] = ((m,), ZEROS)
        layout[f'{prefix}.mlp_w2'] = ((m, d), TRUNC_NORMAL)
        layout[f'{prefix}.mlp_b2'] = ((d,), ZEROS)
    layout['head_w'] = ((d, config.n_bins), TRUNC_NORMAL)
    layout['head_b'] = ((config.n_bins,), ZEROS)
    return layout


def expected_parameter_count(config: ModelConfig) -> int:
    """Contagem em forma fechada, independente do layout acima"""
    d, m, n = config.hidden_dim, config.mlp_dim, config.n_bins
    attention_unit = 4 * d * d + 2 * d
    block = config.attention_units * attention_unit + 2 * d + d * m + m + m * d + d
    embedding = config.patch_features * d + d + config.seq_len * d
    return embedding + config.depth * block + d * n + n


@dataclass
class AttentionParams:
    ln_gain: Tensor
    ln_bias: Tensor
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_out: Tensor


@dataclass
class BlockParams:
    attention: list
    mlp_ln_gain: Tensor
    mlp_ln_bias: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    mlp_w2: Tensor
    mlp_b2: Tensor


class Params:
    """
    Coleção nomeada e ordenada dos tensores do modelo
    """

    def __init__(self, config: ModelConfig, tensors: 'OrderedDict[str, Tensor]'):
        layout = parameter_layout(config)
        if list(tensors.keys()) != list(layout.keys()):
            raise ContractError("Parâmetros não correspondem ao layout da configuração")
        for name, (shape, _) in layout.items():
            if tensors[name].shape != shape:
                raise DimensionError(f"Parâmetro {name}: forma {tensors[name].shape}, esperado {shape}")
        self.config = config
        self._tensors = tensors

    @classmethod
    def initialize(cls, config: ModelConfig, rng: np.random.Generator) -> 'Params':
        tensors = OrderedDict()
        std = config.init_std
        for name, (shape, kind) in parameter_layout(config).items():
            if kind == TRUNC_NORMAL:
                values = truncnorm.rvs(-2.0, 2.0, loc=0.0, scale=std, size=shape, random_state=rng) if std > 0 else np.zeros(shape)
            elif kind == NORMAL:
                values = rng.normal(0.0, std, size=shape)
            elif kind == ONES:
                values = np.ones(shape)
            else:
                values = np.zeros(shape)
            tensors[name] = Tensor(values, requires_grad=True, name=name)
        return cls(config, tensors)

    @classmethod
    def from_arrays(cls, config: ModelConfig, arrays: dict) -> 'Params':
        layout = parameter_layout(config)
        missing = [name for name in layout if name not in arrays]
        if missing:
            raise ContractError(f"Parâmetros ausentes: {', '.join(missing[:5])}")
        tensors = OrderedDict(
            (name, Tensor(arrays[name], requires_grad=True, name=name)) for name in layout
        )
        return cls(config, tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def values(self):
        return self._tensors.values()

    def count(self) -> int:
        return int(np.sum([tensor.size for tensor in self._tensors.values()]))

    def zero_grad(self):
        for tensor in self._tensors.values():
            tensor.zero_grad()

    def arrays(self) -> 'OrderedDict[str, np.ndarray]':
        return OrderedDict((name, tensor.numpy()) for name, tensor in self._tensors.items())

    def copy(self) -> 'Params':
        return Params.from_arrays(self.config, self.arrays())

    def block(self, index: int) -> BlockParams:
        if not 0 <= index < self.config.depth:
            raise ContractError(f"Bloco {index} inexistente (depth={self.config.depth})")
        prefix = f'block{index}'
        units = [
            AttentionParams(**{
                field: self._tensors[f'{prefix}.attn{unit}.{field}']
                for field in ('ln_gain', 'ln_bias', 'w_q', 'w_k', 'w_v', 'w_out')
            })
            for unit in range(self.config.attention_units)
        ]
        return BlockParams(
            attention=units,
            **{field: self._tensors[f'{prefix}.{field}'] for field in (
                'mlp_ln_gain', 'mlp_ln_bias', 'mlp_w1', 'mlp_b1', 'mlp_w2', 'mlp_b2'
            )},
        )
