# training/loop.py
"""
Laço de treinamento e avaliação

Por passo: sorteia um lote (região primeiro, pares novos quando o mundo
sintético está disponível), normaliza, forward, perda ponderada (ou
entropia cruzada comum), backward e Adam. A cada val_interval passos (e no
último) avalia a partição de validação e grava checkpoint quando a perda
média de validação melhora.
"""
import logging
from collections import defaultdict
from pathlib import Path
from typing import Optional

import numpy as np

from binning.normalization import NormStats, compute_stats, normalize
from binning.targets import BinSpec, relabel
from binning.weights import ClassWeights, class_weights, label_histogram
from core.exceptions import ConfigError, DataError, NumericError, TrainingDivergedError
from core.utils import SeedUtils
from metrics.losses import weighted_cce
from metrics.reports import MetricReport, build_report
from metrics.scores import PredictionBatch
from numerics.tensor import Tape, backward
from synthdata.sampling import DatasetSplits, sample_pair
from transformer.checkpoint import read_checkpoint, write_checkpoint
from transformer.config import ModelConfig
from transformer.layers import forward
from transformer.params import Params
from .config import TrainConfig
from .optim import OptimizerState, adam_step, clip_gradients, gradient_norms, gradients
from .runs import RunDirectory, RunLog, Validation

logger = logging.getLogger(__name__)


def fit_model_config(model_config: ModelConfig, dataset: DatasetSplits,
                     train_config: Optional[TrainConfig] = None) -> ModelConfig:
    """Ajusta a forma de entrada ao conjunto e aplica modo de atenção/classes do treino"""
    generator = dataset.config
    changes = dict(frames=generator.input_frames, channels=generator.channels,
                   height=generator.crop_size, width=generator.crop_size)
    if train_config is not None and train_config.attention_mode is not None:
        changes['attention_mode'] = train_config.attention_mode
    if train_config is not None and train_config.n_bins is not None:
        changes['n_bins'] = train_config.n_bins
    return model_config.replace(**changes)


def _check_input_shape(model_config: ModelConfig, records: list):
    expected = (model_config.frames, model_config.channels, model_config.height, model_config.width)
    if records and records[0].x_raw.shape != expected:
        raise ConfigError(f"Entradas {records[0].x_raw.shape} incompatíveis com o modelo {expected}")


def predict(params: Params, config: ModelConfig, records: list, stats: NormStats, batch_size: int = 64) -> np.ndarray:
    """Probabilidades (N, n_bins) em lotes, sem fita"""
    chunks = []
    for start in range(0, len(records), batch_size):
        x = np.stack([normalize(record.x_raw, stats) for record in records[start:start + batch_size]])
        chunks.append(forward(x, params, config).data)
    return np.concatenate(chunks, axis=0)


def score_records(params: Params, config: ModelConfig, records: list, stats: NormStats, weights: ClassWeights,
                  spec: BinSpec, batch_size: int = 64) -> tuple[float, MetricReport]:
    """(perda média com os pesos do treino, relatório completo)"""
    if not records:
        raise DataError("Partição de avaliação vazia")
    probs = predict(params, config, records, stats, batch_size)
    batch = PredictionBatch(
        probs=probs,
        labels=[record.label for record in records],
        targets=[record.y_reg for record in records],
    )
    report = build_report(batch, weights, spec)
    return report.wcce, report


class Trainer:
    """
    Estado de uma execução: parâmetros, otimizador, amostrador e RunLog
    """

    def __init__(self, train_config: TrainConfig, model_config: ModelConfig, dataset: DatasetSplits,
                 run_dir=None):
        if not dataset.train or not dataset.val:
            raise DataError("O conjunto precisa das partições de treino e validação")
        self.config = train_config
        self.model_config = fit_model_config(model_config, dataset, train_config)
        _check_input_shape(self.model_config, dataset.train)
        self.dataset = dataset
        self.world = dataset.world

        init_rng, self.rng = SeedUtils.spawn(train_config.seed, 2)
        self.bin_spec = BinSpec.from_targets([record.y_reg for record in dataset.train], self.model_config.n_bins)
        self.train_records = relabel(dataset.train, self.bin_spec)
        self.val_records = relabel(dataset.val, self.bin_spec)
        self.stats = compute_stats(self.train_records)
        labels = [record.label for record in self.train_records]
        if train_config.loss_weighting:
            self.weights = class_weights(labels, self.bin_spec.n, train_config.mean_normalize_weights)
        else:
            self.weights = ClassWeights.uniform(self.bin_spec.n)
        self.histogram = label_histogram(labels, self.bin_spec.n)

        self.by_region = defaultdict(list)
        for index, record in enumerate(self.train_records):
            self.by_region[record.region].append(index)
        self.regions = sorted(self.by_region)

        self.params = Params.initialize(self.model_config, init_rng)
        self.state = OptimizerState.create(self.params)
        self.run = RunLog()
        self.run_dir = RunDirectory(run_dir).create() if run_dir is not None else None
        self._last_grad_norms = {}

    # -- amostragem -------------------------------------------------------

    def sample_records(self) -> list:
        """
        Com o mundo sintético disponível, cada elemento do lote é um par novo
        (região, janela e recorte sorteados) na partição de treino; sem ele,
        sorteia do conjunto gravado, também região primeiro.
        """
        if self.world is not None:
            time_range = (0, self.dataset.config.split_frame)
            return [sample_pair(self.world, self.rng, self.bin_spec, time_range=time_range)
                    for _ in range(self.config.batch_size)]
        indices = []
        for _ in range(self.config.batch_size):
            region = self.regions[int(self.rng.integers(len(self.regions)))]
            pool = self.by_region[region]
            indices.append(pool[int(self.rng.integers(len(pool)))])
        return [self.train_records[i] for i in indices]

    def sample_batch(self) -> tuple[np.ndarray, list[int]]:
        records = self.sample_records()
        x = np.stack([normalize(record.x_raw, self.stats) for record in records])
        return x, [record.label for record in records]

    # -- passos -----------------------------------------------------------

    def batch_loss(self, x: np.ndarray, labels: list[int]):
        return weighted_cce(forward(x, self.params, self.model_config), labels, self.weights)

    def _diverged(self, step: int, reason: str, loss: float = None):
        diagnostics = {
            'step': step,
            'learning_rate': self.config.learning_rate,
            'loss': loss,
            'reason': reason,
            'grad_norms': self._last_grad_norms,
        }
        logger.error(f"Treinamento divergiu no passo {step}: {reason}; diagnóstico: {diagnostics}")
        if self.run_dir is not None:
            self.run_dir.write_divergence(diagnostics)
            self.run_dir.write_logs(self.run)
        raise TrainingDivergedError(f"Treinamento divergiu no passo {step}: {reason}", diagnostics)

    def step(self, step: int) -> float:
        x, labels = self.sample_batch()
        self.params.zero_grad()
        try:
            with Tape() as tape:
                loss = self.batch_loss(x, labels)
        except NumericError as exc:
            self._diverged(step, str(exc))
        value = loss.item()
        if not np.isfinite(value):
            self._diverged(step, "perda não finita", value)
        backward(loss, tape)
        grads = gradients(self.params)
        self._last_grad_norms = gradient_norms(grads)
        if not all(np.isfinite(norm) for norm in self._last_grad_norms.values()):
            self._diverged(step, "gradiente não finito", value)
        if self.config.grad_clip is not None:
            grads, norm = clip_gradients(grads, self.config.grad_clip)
            logger.debug(f"Passo {step}: norma global do gradiente {norm:.4g}")
        adam_step(self.params, grads, self.state, self.config)
        logger.debug(f"Passo {step}: perda {value:.6f}")
        return value

    def checkpoint_meta(self, step: int, val_loss: Optional[float]) -> dict:
        meta = {'step': step, 'val_loss': val_loss, 'loss_weighting': self.config.loss_weighting}
        meta.update(self.bin_spec.to_meta())
        meta.update(self.stats.to_meta())
        meta.update(self.weights.to_meta())
        return meta

    def save_checkpoint(self, step: int, val_loss: Optional[float]) -> Optional[Path]:
        if self.run_dir is None:
            return None
        path = write_checkpoint(self.run_dir.checkpoint_path(step), self.params, self.checkpoint_meta(step, val_loss))
        self.run_dir.point_best_to(path)
        return path

    def validate(self, step: int) -> Validation:
        val_loss, report = score_records(self.params, self.model_config, self.val_records, self.stats,
                                         self.weights, self.bin_spec, self.config.eval_batch_size)
        validation = Validation(step=step, val_loss=val_loss, report=report)
        if self.run.improves(val_loss):
            self.run.best_step, self.run.best_val_loss = step, val_loss
            self.run.best_checkpoint = self.save_checkpoint(step, val_loss)
        self.run.validations.append(validation)
        logger.info(
            f"Validação no passo {step}: perda {val_loss:.5f}, BW-Top-3 {report.bw_top3:.4f}, "
            f"BW-CRPS {report.bw_crps:.4f}"
        )
        return validation

    def fit(self) -> RunLog:
        if self.run_dir is not None:
            self.run_dir.write_config({
                'model': self.model_config.to_dict(),
                'training': self.config.to_dict(),
                'generator': self.dataset.config.to_dict(),
            })
            self.run_dir.write_histogram(self.histogram)
            self.run.best_checkpoint = self.save_checkpoint(0, None)

        for step in range(1, self.config.max_steps + 1):
            self.run.train.append((step, self.step(step)))
            if step % self.config.val_interval == 0 or step == self.config.max_steps:
                self.validate(step)

        if self.run_dir is not None:
            self.run_dir.write_logs(self.run)
        logger.info(
            f"Treinamento concluído: {self.config.max_steps} passos, melhor passo {self.run.best_step} "
            f"(val_loss {self.run.best_val_loss})"
        )
        return self.run


def train(train_config: TrainConfig, model_config: ModelConfig, dataset: DatasetSplits, run_dir=None) -> RunLog:
    return Trainer(train_config, model_config, dataset, run_dir).fit()


def evaluate(checkpoint, records: list, bin_spec: Optional[BinSpec] = None, batch_size: int = 64,
             strict_bins: bool = True) -> MetricReport:
    """
    Métricas de um checkpoint sobre `records`. Classes e normalização vêm do
    checkpoint; `bin_spec`, se informado, precisa coincidir com o dele. Com
    `strict_bins` falso a divergência só é registrada e os registros são
    reclassificados com as classes do checkpoint.
    """
    params, meta = read_checkpoint(checkpoint)
    spec = BinSpec.from_meta(meta)
    if bin_spec is not None and bin_spec != spec:
        message = f"Classes do conjunto {bin_spec} diferem das do checkpoint {spec}"
        if strict_bins:
            raise ConfigError(message)
        logger.warning(f"{message}; reclassificando com as do checkpoint")
    stats = NormStats.from_meta(meta)
    weights = ClassWeights(
        w=np.asarray(meta.get('weights.w', np.ones(spec.n)), dtype=np.float64),
        histogram=np.asarray(meta.get('weights.histogram', np.zeros(spec.n)), dtype=np.int64),
        total=int(np.sum(meta.get('weights.histogram', [0]))),
    )
    _check_input_shape(params.config, records)
    _, report = score_records(params, params.config, relabel(records, spec), stats, weights, spec, batch_size)
    return report
