# transformer/checkpoint.py
"""
Formato de checkpoint: um manifesto texto (metadados chave = valor JSON e
tabela de tensores nome/forma/dtype/offset) mais um blob float64 little-endian.
"""
import json
import logging
from collections import OrderedDict
from pathlib import Path

import numpy as np

from core.exceptions import FormatError
from .config import ModelConfig
from .params import Params

logger = logging.getLogger(__name__)

MANIFEST_NAME = 'manifest.txt'
BLOB_NAME = 'params.bin'
HEADER = '# satformer-checkpoint v1'
DTYPE = '<f8'


def write_checkpoint(directory, params: Params, meta: dict = None) -> Path:
    """Grava parâmetros e metadados; chaves `model.*` são reservadas para a configuração"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = OrderedDict((f'model.{key}', value) for key, value in params.config.to_dict().items())
    entries.update(meta or {})

    lines = [HEADER, '[meta]']
    lines += [f'{key} = {json.dumps(value)}' for key, value in entries.items()]
    lines.append('[tensors]')
    offset = 0
    chunks = []
    for name, tensor in params.items():
        payload = tensor.data.astype(DTYPE).tobytes()
        shape = 'x'.join(str(dim) for dim in tensor.shape)
        lines.append(f'{name}\t{shape}\tfloat64\t{offset}')
        chunks.append(payload)
        offset += len(payload)

    (directory / BLOB_NAME).write_bytes(b''.join(chunks))
    (directory / MANIFEST_NAME).write_text('\n'.join(lines) + '\n', encoding='utf-8')
    logger.debug(f"Checkpoint gravado em {directory} ({offset} bytes)")
    return directory


def read_manifest(directory) -> tuple[dict, list]:
    manifest_path = Path(directory) / MANIFEST_NAME
    if not manifest_path.is_file():
        raise FormatError(f"Manifesto ausente em {directory}")
    lines = manifest_path.read_text(encoding='utf-8').splitlines()
    if not lines or lines[0] != HEADER:
        raise FormatError(f"Cabeçalho de checkpoint inválido em {manifest_path}", offset=0)

    meta, tensors, section = OrderedDict(), [], None
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line in ('[meta]', '[tensors]'):
            section = line
        elif section == '[meta]':
            key, sep, value = line.partition(' = ')
            if not sep:
                raise FormatError(f"Linha {number} do manifesto malformada: {line!r}")
            meta[key] = json.loads(value)
        elif section == '[tensors]':
            parts = line.split('\t')
            if len(parts) != 4 or parts[2] != 'float64':
                raise FormatError(f"Linha {number} do manifesto malformada: {line!r}")
            shape = tuple(int(dim) for dim in parts[1].split('x'))
            tensors.append((parts[0], shape, int(parts[3])))
        else:
            raise FormatError(f"Linha {number} fora de seção: {line!r}")
    return meta, tensors


def read_checkpoint(directory) -> tuple[Params, dict]:
    """Retorna (Params, metadados sem as chaves model.*)"""
    directory = Path(directory)
    meta, table = read_manifest(directory)
    blob_path = directory / BLOB_NAME
    if not blob_path.is_file():
        raise FormatError(f"Blob de parâmetros ausente em {directory}")
    blob = blob_path.read_bytes()

    arrays = OrderedDict()
    for name, shape, offset in table:
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(blob):
            raise FormatError(f"Tensor {name} ultrapassa o fim do blob", offset=len(blob))
        arrays[name] = np.frombuffer(blob, dtype=DTYPE, count=count, offset=offset).reshape(shape).astype(np.float64)

    model_values = {key[len('model.'):]: value for key, value in meta.items() if key.startswith('model.')}
    config = ModelConfig(**model_values)
    extra = OrderedDict((key, value) for key, value in meta.items() if not key.startswith('model.'))
    return Params.from_arrays(config, arrays), extra
