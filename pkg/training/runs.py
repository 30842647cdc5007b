# training/runs.py
"""
Diretório de uma execução de treinamento

    config.json           configurações usadas (modelo, treino, gerador)
    train_log.csv         step,loss
    val_log.csv           step,val_loss,bw_top3,bw_crps
    label_histogram.csv   contagem por classe no treino
    checkpoints/step_N/   manifest.txt + params.bin
    best                  link simbólico para o checkpoint de menor val_loss
"""
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from core.exceptions import DataError
from core.utils import FileUtils
from metrics.reports import MetricReport

logger = logging.getLogger(__name__)

CONFIG_FILE = 'config.json'
TRAIN_LOG = 'train_log.csv'
VAL_LOG = 'val_log.csv'
HISTOGRAM_FILE = 'label_histogram.csv'
CHECKPOINT_DIR = 'checkpoints'
BEST_LINK = 'best'
DIVERGENCE_FILE = 'divergence.json'

TRAIN_HEADER = ('step', 'loss')
VAL_HEADER = ('step', 'val_loss', 'bw_top3', 'bw_crps')


@dataclass
class Validation:
    step: int
    val_loss: float
    report: MetricReport


@dataclass
class RunLog:
    train: list = field(default_factory=list)
    validations: list = field(default_factory=list)
    best_step: Optional[int] = None
    best_val_loss: Optional[float] = None
    best_checkpoint: Optional[Path] = None

    @property
    def best_report(self) -> Optional[MetricReport]:
        for validation in self.validations:
            if validation.step == self.best_step:
                return validation.report
        return None

    @property
    def final_report(self) -> Optional[MetricReport]:
        return self.validations[-1].report if self.validations else None

    def improves(self, val_loss: float) -> bool:
        return self.best_val_loss is None or val_loss < self.best_val_loss


class RunDirectory:
    """Caminhos e escrita dos artefatos de uma execução"""

    def __init__(self, root):
        self.root = Path(root)

    def create(self) -> 'RunDirectory':
        (self.root / CHECKPOINT_DIR).mkdir(parents=True, exist_ok=True)
        return self

    def checkpoint_path(self, step: int) -> Path:
        return self.root / CHECKPOINT_DIR / f'step_{step:06d}'

    @property
    def best_path(self) -> Path:
        return self.root / BEST_LINK

    def point_best_to(self, checkpoint: Path):
        link = self.best_path
        if link.is_symlink() or link.exists():
            link.unlink()
        os.symlink(os.path.relpath(checkpoint, self.root), link, target_is_directory=True)

    def write_config(self, data: dict):
        FileUtils.write_json(self.root / CONFIG_FILE, data)

    def write_logs(self, run: RunLog):
        FileUtils.write_csv(self.root / TRAIN_LOG, TRAIN_HEADER, run.train)
        FileUtils.write_csv(
            self.root / VAL_LOG, VAL_HEADER,
            ((v.step, v.val_loss, v.report.bw_top3, v.report.bw_crps) for v in run.validations),
        )

    def write_histogram(self, histogram):
        FileUtils.write_csv(self.root / HISTOGRAM_FILE, ('bin', 'count'), ((i, int(c)) for i, c in enumerate(histogram)))

    def write_divergence(self, diagnostics: dict):
        FileUtils.write_json(self.root / DIVERGENCE_FILE, diagnostics)

    def read_logs(self) -> tuple[list[dict], list[dict]]:
        """Linhas de train_log.csv e val_log.csv; DataError se faltarem"""
        train_log, val_log = self.root / TRAIN_LOG, self.root / VAL_LOG
        if not train_log.is_file() or not val_log.is_file():
            raise DataError(f"Execução sem RunLog: {self.root}")
        return FileUtils.read_csv(train_log), FileUtils.read_csv(val_log)

    def read_histogram(self) -> list[dict]:
        path = self.root / HISTOGRAM_FILE
        if not path.is_file():
            raise DataError(f"Execução sem histograma de classes: {self.root}")
        return FileUtils.read_csv(path)
