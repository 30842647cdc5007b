# experiments/ablations.py
"""
Ablações: pesos de classe, variantes de atenção e número de classes

Cada variante (rótulo, semente) treina um modelo e é avaliada no checkpoint
de menor perda de validação. As variantes rodam em sequência ou num pool de
SATFORMER_THREADS processos; as tabelas seguem sempre a ordem das variantes.
"""
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from core.utils import FileUtils, SettingsUtils
from synthdata.sampling import DatasetSplits
from training.config import TrainConfig
from training.loop import Trainer
from transformer.config import AttentionMode, ModelConfig

logger = logging.getLogger(__name__)

LOSS_HEADER = ('weighting', 'seed', 'bw_top3', 'bw_crps')
ATTENTION_HEADER = ('mode', 'seed', 'bw_top3', 'bw_crps')
BINS_HEADER = ('n_bins', 'crps', 'crps_bins', 'bw_crps', 'bw_top3')
TIMINGS_HEADER = ('mode', 'seed', 'steps', 'seconds_per_step')
DIRECTION_HEADER = ('best_mode', 'full_bw_crps', 'best_factorized_bw_crps', 'full_is_best')

WEIGHTING_VARIANTS = ('weighted', 'unweighted')
ATTENTION_VARIANTS = tuple(AttentionMode.values)
DEFAULT_BIN_COUNTS = (4, 8, 16, 32, 64, 128)

LOSS_TABLE = 'ablate_loss.csv'
ATTENTION_TABLE = 'ablate_attention.csv'
BINS_TABLE = 'ablate_bins.csv'
TIMINGS_FILE = 'timings.csv'
DIRECTION_FILE = 'attention_direction.csv'


@dataclass(frozen=True)
class Variant:
    label: str
    seed: int
    train_config: TrainConfig
    model_config: ModelConfig
    run_dir: Optional[str] = None


@dataclass(frozen=True)
class VariantResult:
    label: str
    seed: int
    bw_top3: float
    bw_crps: float
    crps_bins: float
    crps: float
    steps: int
    seconds_per_step: float


def run_variant(variant: Variant, dataset: DatasetSplits) -> VariantResult:
    """Treina uma variante e resume o relatório do melhor checkpoint"""
    trainer = Trainer(variant.train_config, variant.model_config, dataset, variant.run_dir)
    started = time.perf_counter()
    run = trainer.fit()
    elapsed = time.perf_counter() - started
    report = run.best_report or run.final_report or trainer.validate(0).report
    steps = variant.train_config.max_steps
    logger.info(
        f"Variante {variant.label} (semente {variant.seed}): BW-Top-3 {report.bw_top3:.4f}, "
        f"BW-CRPS {report.bw_crps:.4f}"
    )
    return VariantResult(
        label=variant.label,
        seed=variant.seed,
        bw_top3=report.bw_top3,
        bw_crps=report.bw_crps,
        crps_bins=report.crps_mean,
        # CRPS em unidades do alvo: a soma por classe vezes a largura da classe
        crps=report.crps_mean * trainer.bin_spec.delta,
        steps=steps,
        seconds_per_step=elapsed / steps if steps else 0.0,
    )


def _run_packed(packed):
    return run_variant(*packed)


def run_variants(variants: Sequence[Variant], dataset: DatasetSplits, workers: Optional[int] = None) -> list[VariantResult]:
    """Resultados na ordem de `variants`, independente da ordem de término"""
    workers = SettingsUtils.worker_count() if workers is None else max(1, workers)
    workers = min(workers, len(variants)) if variants else 1
    logger.info(f"Executando {len(variants)} variantes com {workers} processo(s)")
    if workers == 1:
        return [run_variant(variant, dataset) for variant in variants]
    with ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(_run_packed, [(variant, dataset) for variant in variants]))


def _variant_dir(out_dir, label: str, seed: int) -> Optional[str]:
    if out_dir is None:
        return None
    return str(Path(out_dir) / 'runs' / f'{label}_seed{seed}')


def _mean(results: list[VariantResult], field: str) -> float:
    return float(np.mean([getattr(result, field) for result in results]))


def _grouped_rows(labels: Sequence[str], results: list[VariantResult]) -> list[tuple]:
    """Linhas por (variante, semente) seguidas de uma linha de média por variante"""
    rows = [(result.label, result.seed, result.bw_top3, result.bw_crps) for result in results]
    for label in labels:
        group = [result for result in results if result.label == label]
        rows.append((label, 'mean', _mean(group, 'bw_top3'), _mean(group, 'bw_crps')))
    return rows


def loss_variants(train_config: TrainConfig, model_config: ModelConfig, seeds: Sequence[int], out_dir=None) -> list[Variant]:
    return [
        Variant(label, seed, train_config.replace(seed=seed, loss_weighting=label == 'weighted'), model_config,
                _variant_dir(out_dir, label, seed))
        for label in WEIGHTING_VARIANTS
        for seed in seeds
    ]


def attention_variants(train_config: TrainConfig, model_config: ModelConfig, seeds: Sequence[int],
                       out_dir=None) -> list[Variant]:
    return [
        Variant(mode, seed, train_config.replace(seed=seed, attention_mode=mode, loss_weighting=True), model_config,
                _variant_dir(out_dir, mode, seed))
        for mode in ATTENTION_VARIANTS
        for seed in seeds
    ]


def bin_variants(train_config: TrainConfig, model_config: ModelConfig, seeds: Sequence[int],
                 bin_counts: Sequence[int], out_dir=None) -> list[Variant]:
    return [
        Variant(str(n), seed, train_config.replace(seed=seed, n_bins=n), model_config,
                _variant_dir(out_dir, f'bins{n}', seed))
        for n in bin_counts
        for seed in seeds
    ]


def ablate_loss(dataset: DatasetSplits, train_config: TrainConfig, model_config: ModelConfig,
                seeds: Sequence[int], out_dir=None, workers: Optional[int] = None) -> list[tuple]:
    """Com e sem reponderação por frequência de classe: 2 x |seeds| + 2 linhas"""
    results = run_variants(loss_variants(train_config, model_config, seeds, out_dir), dataset, workers)
    rows = _grouped_rows(WEIGHTING_VARIANTS, results)
    if out_dir is not None:
        FileUtils.write_csv(Path(out_dir) / LOSS_TABLE, LOSS_HEADER, rows)
    return rows


def attention_direction(rows: list[tuple]) -> tuple:
    """
    (modo de menor BW-CRPS médio, BW-CRPS médio do modo completo, melhor
    BW-CRPS médio fatorado, se o modo completo empata ou vence)
    """
    means = {row[0]: row[3] for row in rows if row[1] == 'mean'}
    full = means[AttentionMode.FULL_ST.value]
    factorized = min(value for mode, value in means.items() if mode != AttentionMode.FULL_ST.value)
    best = min(ATTENTION_VARIANTS, key=lambda mode: means[mode])
    return best, full, factorized, bool(full <= factorized)


def ablate_attention(dataset: DatasetSplits, train_config: TrainConfig, model_config: ModelConfig,
                     seeds: Sequence[int], out_dir=None,
                     workers: Optional[int] = None) -> tuple[list[tuple], list[tuple], tuple]:
    """
    Três variantes de atenção com perda ponderada: 3 x |seeds| + 3 linhas.
    O tempo por passo vai para timings.csv e a comparação do modo completo
    com os fatorados para attention_direction.csv, ambos fora da tabela principal.
    """
    results = run_variants(attention_variants(train_config, model_config, seeds, out_dir), dataset, workers)
    rows = _grouped_rows(ATTENTION_VARIANTS, results)
    timings = [(result.label, result.seed, result.steps, result.seconds_per_step) for result in results]
    direction = attention_direction(rows)
    if direction[3]:
        logger.info(f"Atenção completa com o menor BW-CRPS médio ({direction[1]:.4f})")
    else:
        logger.warning(
            f"Atenção completa ({direction[1]:.4f}) perdeu para {direction[0]} ({direction[2]:.4f}) em BW-CRPS "
            f"médio; a análise do resultado deve acompanhar o relatório"
        )
    if out_dir is not None:
        FileUtils.write_csv(Path(out_dir) / ATTENTION_TABLE, ATTENTION_HEADER, rows)
        FileUtils.write_csv(Path(out_dir) / TIMINGS_FILE, TIMINGS_HEADER, timings)
        FileUtils.write_csv(Path(out_dir) / DIRECTION_FILE, DIRECTION_HEADER, [direction])
    return rows, timings, direction


def ablate_bins(dataset: DatasetSplits, train_config: TrainConfig, model_config: ModelConfig,
                seeds: Sequence[int], bin_counts: Sequence[int] = DEFAULT_BIN_COUNTS, out_dir=None,
                workers: Optional[int] = None) -> list[tuple]:
    """
    Um modelo por número de classes (média sobre as sementes), uma linha
    por contagem. `crps` está em unidades do alvo, comparável entre contagens.
    """
    results = run_variants(bin_variants(train_config, model_config, seeds, bin_counts, out_dir), dataset, workers)
    rows = []
    for n in bin_counts:
        group = [result for result in results if result.label == str(n)]
        rows.append((n, _mean(group, 'crps'), _mean(group, 'crps_bins'), _mean(group, 'bw_crps'), _mean(group, 'bw_top3')))
    if out_dir is not None:
        FileUtils.write_csv(Path(out_dir) / BINS_TABLE, BINS_HEADER, rows)
    return rows
