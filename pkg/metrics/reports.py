# metrics/reports.py
"""
Relatório de métricas por classe e resumo, serializável em CSV
"""
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from binning.targets import BinSpec
from binning.weights import ClassWeights
from core.utils import FileUtils
from .losses import weighted_cce
from .scores import PredictionBatch, bw_mae, crps_per_sample, per_class_mean, top_k_accuracy, top_k_hits

REPORT_HEADER = ('kind', 'bin', 'count', 'top3_acc', 'mean_crps', 'wcce', 'crps_mean', 'bw_top3', 'bw_crps')


@dataclass(frozen=True)
class ClassMetrics:
    bin: int
    count: int
    top3_acc: float
    mean_crps: float


@dataclass(frozen=True)
class MetricReport:
    wcce: float
    crps_mean: float
    bw_crps: float
    bw_top3: float
    per_class: tuple = field(default_factory=tuple)
    top3_acc: Optional[float] = None
    bw_mae: Optional[float] = None

    @property
    def samples(self) -> int:
        return sum(item.count for item in self.per_class)

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self) -> list[tuple]:
        """Uma linha por classe presente e uma linha de resumo ao final"""
        rows = [('class', item.bin, item.count, item.top3_acc, item.mean_crps, '', '', '', '') for item in self.per_class]
        rows.append(('summary', '', self.samples, '' if self.top3_acc is None else self.top3_acc, '',
                     self.wcce, self.crps_mean, self.bw_top3, self.bw_crps))
        return rows

    def to_csv(self, path) -> Path:
        return FileUtils.write_csv(path, REPORT_HEADER, self.rows())


def build_report(batch: PredictionBatch, weights: Optional[ClassWeights] = None,
                 spec: Optional[BinSpec] = None) -> MetricReport:
    """
    Métricas completas de um lote de avaliação. `weights` define a perda
    reportada (None: entropia cruzada comum); `spec` habilita o BW-MAE.
    """
    batch.require_non_empty()
    crps_values = crps_per_sample(batch)
    hits = top_k_hits(batch, 3)
    class_crps = per_class_mean(batch, crps_values)
    class_hits = per_class_mean(batch, hits)
    per_class = tuple(
        ClassMetrics(bin=label, count=int(np.sum(batch.labels == label)),
                     top3_acc=class_hits[label], mean_crps=class_crps[label])
        for label in class_crps
    )
    return MetricReport(
        wcce=weighted_cce(batch.probs, batch.labels, weights).item(),
        crps_mean=float(crps_values.mean()),
        bw_crps=float(np.mean(list(class_crps.values()))),
        bw_top3=float(np.mean(list(class_hits.values()))),
        per_class=per_class,
        top3_acc=top_k_accuracy(batch, 3),
        bw_mae=bw_mae(batch, spec) if spec is not None and batch.targets is not None else None,
    )
