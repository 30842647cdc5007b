"""
Utilitários compartilhados: sementes, arquivos CSV/JSON e acesso às
configurações do SaTformer
"""
import csv
import json
import logging
import os
import unittest
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from django.conf import settings

from .exceptions import ConfigError

logger = logging.getLogger(__name__)


class SettingsUtils:
    """
    Leitura do dicionário SATFORMER de config/settings.py
    """

    @staticmethod
    def get(key: str, default: Any = None) -> Any:
        return getattr(settings, 'SATFORMER', {}).get(key, default)

    @staticmethod
    def worker_count() -> int:
        """Número de processos para ablações (SATFORMER_THREADS, mínimo 1)"""
        return max(1, int(SettingsUtils.get('THREADS', 1)))

    @staticmethod
    def output_dir() -> Path:
        return Path(SettingsUtils.get('OUTPUT_DIR', 'runs'))


class SeedUtils:
    """
    Derivação de geradores aleatórios independentes a partir de uma semente
    """

    @staticmethod
    def spawn(seed: int, count: int) -> list[np.random.Generator]:
        """Filhos de SeedSequence(seed): o filho i depende apenas de (seed, i)"""
        children = np.random.SeedSequence(seed).spawn(count)
        return [np.random.default_rng(child) for child in children]

    @staticmethod
    def child_seed(seed: int, *path: int) -> int:
        """Semente inteira determinística para um caminho (ex.: região, quadro)"""
        sequence = np.random.SeedSequence(seed, spawn_key=tuple(path))
        return int(sequence.generate_state(1, dtype=np.uint32)[0])

    @staticmethod
    def parse_seeds(raw: str) -> list[int]:
        """'1,2,3' -> [1, 2, 3]"""
        try:
            seeds = [int(part) for part in raw.split(',') if part.strip()]
        except ValueError:
            raise ConfigError(f"Lista de sementes inválida: {raw!r}") from None
        if not seeds:
            raise ConfigError("Lista de sementes vazia")
        return seeds


class FileUtils:
    """
    Escrita e leitura de CSV e JSON com formato estável
    """

    @staticmethod
    def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open('w', newline='', encoding='utf-8') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([FileUtils.format_value(value) for value in row])
        return path

    @staticmethod
    def read_csv(path) -> list[dict]:
        with Path(path).open(newline='', encoding='utf-8') as handle:
            return list(csv.DictReader(handle))

    @staticmethod
    def format_value(value: Any) -> str:
        """Floats com precisão completa (repr), demais via str"""
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        if isinstance(value, np.integer):
            return str(int(value))
        return str(value)

    @staticmethod
    def write_json(path, data: dict) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + '\n', encoding='utf-8')
        return path

    @staticmethod
    def read_json(path) -> dict:
        return json.loads(Path(path).read_text(encoding='utf-8'))


def slow_test(test_item):
    """Marca testes longos; rodam apenas com SATFORMER_SLOW_TESTS=True"""
    enabled = SettingsUtils.get('SLOW_TESTS', False) or os.environ.get('SATFORMER_SLOW_TESTS', '').lower() in ('1', 'true', 'yes')
    return unittest.skipUnless(enabled, "teste longo (defina SATFORMER_SLOW_TESTS=True)")(test_item)
