# experiments/reporting.py
"""
Consolidação de execuções de treino em CSVs para gráficos externos
"""
import logging
from pathlib import Path
from typing import Sequence

from core.exceptions import DataError
from core.utils import FileUtils
from training.runs import RunDirectory

logger = logging.getLogger(__name__)

CURVES_FILE = 'curves.csv'
SUMMARY_FILE = 'runs.csv'
HISTOGRAM_FILE = 'label_histogram.csv'

CURVES_HEADER = ('run', 'step', 'loss', 'val_loss', 'bw_top3', 'bw_crps')
SUMMARY_HEADER = ('run', 'steps', 'best_step', 'best_val_loss', 'bw_top3', 'bw_crps')
HISTOGRAM_HEADER = ('run', 'bin', 'count')


def run_id(directory) -> str:
    return Path(directory).resolve().name


def _best_validation(val_rows: list[dict]):
    best = None
    for row in val_rows:
        if best is None or float(row['val_loss']) < float(best['val_loss']):
            best = row
    return best


def consolidate(run_dirs: Sequence, out_dir) -> dict:
    """
    Une os RunLogs: uma linha de curva por passo registrado (colunas de
    validação preenchidas nos passos validados), um resumo por execução e o
    histograma de classes de cada uma. DataError nomeia o diretório sem RunLog.
    """
    if not run_dirs:
        raise DataError("Nenhum diretório de execução informado")
    ids = [run_id(directory) for directory in run_dirs]
    if len(set(ids)) != len(ids):
        raise DataError(f"Identificadores de execução repetidos: {ids}")

    curves, summary, histogram = [], [], []
    for identifier, directory in zip(ids, run_dirs):
        run = RunDirectory(directory)
        train_rows, val_rows = run.read_logs()
        by_step = {row['step']: row for row in val_rows}
        for row in train_rows:
            val = by_step.get(row['step'], {})
            curves.append((identifier, row['step'], row['loss'], val.get('val_loss', ''),
                           val.get('bw_top3', ''), val.get('bw_crps', '')))
        best = _best_validation(val_rows) or {}
        summary.append((identifier, len(train_rows), best.get('step', ''), best.get('val_loss', ''),
                        best.get('bw_top3', ''), best.get('bw_crps', '')))
        histogram.extend((identifier, row['bin'], row['count']) for row in run.read_histogram())

    out_dir = Path(out_dir)
    paths = {
        'curves': FileUtils.write_csv(out_dir / CURVES_FILE, CURVES_HEADER, curves),
        'summary': FileUtils.write_csv(out_dir / SUMMARY_FILE, SUMMARY_HEADER, summary),
        'histogram': FileUtils.write_csv(out_dir / HISTOGRAM_FILE, HISTOGRAM_HEADER, histogram),
    }
    logger.info(f"Relatório de {len(ids)} execução(ões) gravado em {out_dir}")
    return paths
