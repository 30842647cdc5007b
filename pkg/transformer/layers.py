# transformer/layers.py
"""
Forward do SaTformer: tokenização em patches, atenção (completa ou fatorada),
blocos encoder e cabeça de classificação.

Layout da sequência: linha 0 é o token CLS; o patch p (row-major dentro do
quadro) do quadro t ocupa a linha 1 + t*N + p (índices a partir de 0).
Cada patch é achatado na ordem canal, linha, coluna.

Todas as funções aceitam dimensões de lote à esquerda.
"""
import logging
from dataclasses import dataclass

import numpy as np

from core.exceptions import ContractError, DimensionError, NumericError
from numerics import ops
from numerics.tensor import Tensor
from .config import AttentionMode, ModelConfig
from .params import AttentionParams, BlockParams, Params

logger = logging.getLogger(__name__)


@dataclass
class AttentionWorkspace:
    q: Tensor
    k: Tensor
    v: Tensor
    a: Tensor
    s: Tensor


def patchify(x: Tensor, config: ModelConfig) -> Tensor:
    """(..., T, C, H, W) -> (..., T*N, C*P*P)"""
    lead = x.shape[:-4]
    frames, channels, height, width = x.shape[-4:]
    p = config.patch_size
    rows, cols = height // p, width // p
    k = len(lead)
    grid = ops.reshape(x, lead + (frames, channels, rows, p, cols, p))
    axes = tuple(range(k)) + tuple(k + axis for axis in (0, 2, 4, 1, 3, 5))
    grid = ops.transpose(grid, axes)
    return ops.reshape(grid, lead + (frames * rows * cols, channels * p * p))


def tokenize(x, params: Params, config: ModelConfig) -> Tensor:
    x = ops.as_tensor(x)
    expected = (config.frames, config.channels, config.height, config.width)
    if x.ndim not in (4, 5) or x.shape[-4:] != expected:
        raise DimensionError(f"Entrada com forma {x.shape}, esperado (B?,) + {expected}")
    lead = x.shape[:-4]
    d = config.hidden_dim
    patches = ops.matmul(patchify(x, config), params['patch_projection'])
    cls = ops.reshape(params['cls_token'], (1, d))
    if lead:
        cls = ops.add(np.zeros(lead + (1, d)), cls)
    tokens = ops.concat([cls, patches], axis=-2)
    return ops.add(tokens, params['pos_embed'])


def token_positions(config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Quadro e patch de cada linha da sequência (-1 para o CLS)"""
    frames = np.full(config.seq_len, -1)
    patches = np.full(config.seq_len, -1)
    frames[1:] = np.repeat(np.arange(config.frames), config.patches_per_frame)
    patches[1:] = np.tile(np.arange(config.patches_per_frame), config.frames)
    return frames, patches


def _factorized_mask(groups: np.ndarray) -> np.ndarray:
    mask = groups[:, None] == groups[None, :]
    mask[0, :] = True
    mask[:, 0] = True
    return mask


def spatial_mask(config: ModelConfig) -> np.ndarray:
    """(t,p) vê {(t,p')} e o CLS; o CLS vê todos"""
    frames, _ = token_positions(config)
    return _factorized_mask(frames)


def temporal_mask(config: ModelConfig) -> np.ndarray:
    """(t,p) vê {(t',p)} e o CLS; o CLS vê todos"""
    _, patches = token_positions(config)
    return _factorized_mask(patches)


def attention(tokens: Tensor, unit: AttentionParams, config: ModelConfig, mask: np.ndarray = None,
              return_workspace: bool = False):
    """
    Uma sub-etapa de atenção multi-cabeça pré-normalizada, sem o residual:
    LN -> q, k, v -> softmax(q k^T * escala) -> soma ponderada -> W_out.
    """
    lead = tokens.shape[:-2]
    seq, d = tokens.shape[-2:]
    heads, head_dim = config.heads, config.head_dim
    k = len(lead)
    to_heads = tuple(range(k)) + (k + 1, k, k + 2)
    swap_last = tuple(range(k + 1)) + (k + 2, k + 1)

    normed = ops.layer_norm(tokens, unit.ln_gain, unit.ln_bias, config.layer_norm_eps)

    def split(weight):
        projected = ops.reshape(ops.matmul(normed, weight), lead + (seq, heads, head_dim))
        return ops.transpose(projected, to_heads)

    q, key, v = split(unit.w_q), split(unit.w_k), split(unit.w_v)
    scores = ops.scale(ops.matmul(q, ops.transpose(key, swap_last)), config.score_scale_factor)
    a = ops.softmax(scores, mask=mask)
    s = ops.reshape(ops.transpose(ops.matmul(a, v), to_heads), lead + (seq, d))
    out = ops.matmul(s, unit.w_out)
    if return_workspace:
        return out, AttentionWorkspace(q=q, k=key, v=v, a=a, s=s)
    return out


def full_space_time_attention(tokens: Tensor, block: BlockParams, config: ModelConfig,
                              return_workspace: bool = False):
    """Todos os tokens atendem a todos; o residual fica com quem chama"""
    return attention(tokens, block.attention[0], config, mask=None, return_workspace=return_workspace)


def factorized_attention(tokens: Tensor, block: BlockParams, config: ModelConfig, mode: str) -> Tensor:
    """
    Duas sub-etapas sequenciais (espacial e temporal, na ordem de `mode`),
    cada uma com pesos próprios e residual próprio.
    """
    if mode == AttentionMode.S_THEN_T:
        masks = (spatial_mask(config), temporal_mask(config))
    elif mode == AttentionMode.T_THEN_S:
        masks = (temporal_mask(config), spatial_mask(config))
    else:
        raise ContractError(f"factorized_attention não aceita o modo {mode!r}")
    if len(block.attention) != 2:
        raise ContractError("Bloco fatorado exige duas unidades de atenção")
    z = tokens
    for unit, mask in zip(block.attention, masks):
        z = ops.add(z, attention(z, unit, config, mask=mask))
    return z


def encoder_block(tokens: Tensor, block: BlockParams, config: ModelConfig) -> Tensor:
    if config.attention_mode == AttentionMode.FULL_ST:
        z = ops.add(tokens, full_space_time_attention(tokens, block, config))
    else:
        z = factorized_attention(tokens, block, config, config.attention_mode)
    hidden = ops.layer_norm(z, block.mlp_ln_gain, block.mlp_ln_bias, config.layer_norm_eps)
    hidden = ops.gelu(ops.add(ops.matmul(hidden, block.mlp_w1), block.mlp_b1))
    hidden = ops.add(ops.matmul(hidden, block.mlp_w2), block.mlp_b2)
    return ops.add(z, hidden)


def forward(x, params: Params, config: ModelConfig) -> Tensor:
    """
    Probabilidades por classe: (T, C, H, W) -> (n_bins,) ou, em lote,
    (B, T, C, H, W) -> (B, n_bins).
    """
    z = tokenize(x, params, config)
    for index in range(config.depth):
        z = encoder_block(z, params.block(index), config)
    cls = ops.select(z, 0, axis=-2)
    single = cls.ndim == 1
    if single:
        cls = ops.reshape(cls, (1, config.hidden_dim))
    logits = ops.add(ops.matmul(cls, params['head_w']), params['head_b'])
    probs = ops.softmax(logits)
    if single:
        probs = ops.reshape(probs, (config.n_bins,))
    if not np.all(np.isfinite(probs.data)):
        logger.error("Saída do modelo contém valores não finitos")
        raise NumericError("Saída do modelo contém valores não finitos")
    return probs
