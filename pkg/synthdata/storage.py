# synthdata/storage.py
"""
Formato binário .satd (little-endian, versionado)

    cabeçalho   magic 'SATD', versão u16, reservado u16, contagem u32,
                forma da entrada (T, C, H, W) 4*u32, forma do alvo (T', H', W') 3*u32
    payloads    por registro: x_raw float32 seguido de r float32
    índice      por registro: y_reg f64, classe i32 (-1 = sem classe),
                região, instante, linha, coluna 4*u32

O diretório de um conjunto contém train.satd, val.satd, split_manifest.json,
label_histogram.csv e generator.json.
"""
import logging
import struct
from pathlib import Path

import numpy as np

from binning.targets import BinSpec, SampleRecord
from core.exceptions import FormatError
from core.utils import FileUtils
from .generator import GeneratorConfig
from .sampling import DatasetSplits, SplitManifest

logger = logging.getLogger(__name__)

MAGIC = b'SATD'
VERSION = 1
HEADER = struct.Struct('<4sHHI4I3I')
INDEX_ENTRY = struct.Struct('<di4I')
PAYLOAD_DTYPE = '<f4'

TRAIN_FILE = 'train.satd'
VAL_FILE = 'val.satd'
MANIFEST_FILE = 'split_manifest.json'
HISTOGRAM_FILE = 'label_histogram.csv'
GENERATOR_FILE = 'generator.json'
HISTOGRAM_HEADER = ('bin', 'count')


def write_dataset(records: list[SampleRecord], path) -> Path:
    """Grava os registros; todos devem compartilhar as formas de entrada e alvo"""
    path = Path(path)
    if records:
        input_shape, target_shape = records[0].x_raw.shape, records[0].r.shape
    else:
        input_shape, target_shape = (0, 0, 0, 0), (0, 0, 0)
    if len(input_shape) != 4 or len(target_shape) != 3:
        raise FormatError(f"Formas não suportadas: entrada {input_shape}, alvo {target_shape}")

    chunks = [HEADER.pack(MAGIC, VERSION, 0, len(records), *input_shape, *target_shape)]
    index = []
    for number, record in enumerate(records):
        if record.x_raw.shape != input_shape or record.r.shape != target_shape:
            raise FormatError(f"Registro {number} com formas diferentes do primeiro")
        chunks.append(np.ascontiguousarray(record.x_raw, dtype=PAYLOAD_DTYPE).tobytes())
        chunks.append(np.ascontiguousarray(record.r, dtype=PAYLOAD_DTYPE).tobytes())
        label = -1 if record.label is None else int(record.label)
        index.append(INDEX_ENTRY.pack(float(record.y_reg), label, *(int(v) for v in record.origin)))
    chunks.extend(index)

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b''.join(chunks))
    logger.debug(f"{len(records)} registros gravados em {path}")
    return path


def read_dataset(path) -> list[SampleRecord]:
    """Lê um arquivo .satd completo; qualquer inconsistência levanta FormatError"""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"Não foi possível ler {path}: {exc}") from None

    if len(blob) < HEADER.size:
        raise FormatError(f"{path.name}: cabeçalho truncado", offset=len(blob))
    magic, version, _, count, *shapes = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{path.name}: magic inválido {magic!r}", offset=0)
    if version != VERSION:
        raise FormatError(f"{path.name}: versão {version} não suportada", offset=4)
    input_shape, target_shape = tuple(shapes[:4]), tuple(shapes[4:])
    input_size, target_size = int(np.prod(input_shape)), int(np.prod(target_shape))
    record_bytes = 4 * (input_size + target_size)
    expected = HEADER.size + count * (record_bytes + INDEX_ENTRY.size)
    if len(blob) < expected:
        raise FormatError(f"{path.name}: arquivo truncado ({count} registros declarados)", offset=len(blob))
    if len(blob) > expected:
        raise FormatError(f"{path.name}: bytes excedentes após {count} registros declarados", offset=expected)

    index_start = HEADER.size + count * record_bytes
    records = []
    for number in range(count):
        offset = HEADER.size + number * record_bytes
        x_raw = np.frombuffer(blob, dtype=PAYLOAD_DTYPE, count=input_size, offset=offset)
        r = np.frombuffer(blob, dtype=PAYLOAD_DTYPE, count=target_size, offset=offset + 4 * input_size)
        y_reg, label, *origin = INDEX_ENTRY.unpack_from(blob, index_start + number * INDEX_ENTRY.size)
        records.append(SampleRecord(
            x_raw=x_raw.reshape(input_shape).astype(np.float64),
            r=r.reshape(target_shape).astype(np.float64),
            y_reg=y_reg,
            label=None if label < 0 else label,
            origin=tuple(origin),
        ))
    return records


def write_histogram(path, histogram: np.ndarray) -> Path:
    return FileUtils.write_csv(path, HISTOGRAM_HEADER, ((i, int(c)) for i, c in enumerate(histogram)))


def write_dataset_dir(dataset: DatasetSplits, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_dataset(dataset.train, directory / TRAIN_FILE)
    write_dataset(dataset.val, directory / VAL_FILE)
    manifest = dataset.manifest.to_dict()
    manifest['bin_spec'] = dataset.bin_spec.to_meta()
    FileUtils.write_json(directory / MANIFEST_FILE, manifest)
    FileUtils.write_json(directory / GENERATOR_FILE, dataset.config.to_dict())
    write_histogram(directory / HISTOGRAM_FILE, dataset.histogram())
    logger.info(f"Conjunto gravado em {directory}")
    return directory


def read_dataset_dir(directory) -> DatasetSplits:
    directory = Path(directory)
    for name in (TRAIN_FILE, VAL_FILE, MANIFEST_FILE, GENERATOR_FILE):
        if not (directory / name).is_file():
            raise FormatError(f"Conjunto incompleto: {directory / name} não existe")
    manifest_data = FileUtils.read_json(directory / MANIFEST_FILE)
    try:
        bin_spec = BinSpec.from_meta(manifest_data['bin_spec'])
        manifest = SplitManifest.from_dict(manifest_data)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{MANIFEST_FILE} malformado: {exc}") from None
    return DatasetSplits(
        config=GeneratorConfig(**FileUtils.read_json(directory / GENERATOR_FILE)),
        train=read_dataset(directory / TRAIN_FILE),
        val=read_dataset(directory / VAL_FILE),
        bin_spec=bin_spec,
        manifest=manifest,
    )
