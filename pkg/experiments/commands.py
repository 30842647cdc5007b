# experiments/commands.py
"""
Base dos comandos de gerenciamento do SaTformer

Erros de configuração, de dados e de formato saem com código 2; falhas
numéricas e demais erros internos saem com código 1.
"""
import logging
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from core.exceptions import ConfigError, DataError, FormatError, NumericError, TrainingDivergedError
from core.utils import FileUtils, SeedUtils, SettingsUtils
from synthdata.sampling import build_dataset
from synthdata.storage import read_dataset_dir
from transformer.config import AttentionMode
from .schemas import load_experiment

logger = logging.getLogger(__name__)

USAGE_EXIT = 2
FAILURE_EXIT = 1


class ExperimentCommand(BaseCommand):
    """
    Comando com as flags comuns (--config, --out, --paper-config) e
    tradução de exceções em códigos de saída
    """
    default_out = None

    def add_arguments(self, parser):
        parser.add_argument('--config', type=str, default=None, help='Arquivo JSON do experimento')
        parser.add_argument('--out', type=str, default=None, help='Diretório de saída')
        parser.add_argument('--paper-config', action='store_true', help='Usa os hiperparâmetros do desafio')

    def add_training_arguments(self, parser):
        parser.add_argument('--data', type=str, default=None,
                            help='Diretório gerado por gen_data (padrão: gera a partir da configuração)')
        parser.add_argument('--attention', choices=AttentionMode.values, default=None, help='Variante de atenção')
        parser.add_argument('--bins', type=int, default=None, help='Número de classes de precipitação')
        parser.add_argument('--no-loss-weighting', action='store_true', help='Entropia cruzada sem pesos de classe')

    def add_seeds_argument(self, parser, default='0'):
        parser.add_argument('--seeds', type=str, default=default, help='Sementes separadas por vírgula (ex.: 0,1,2)')

    def handle(self, *args, **options):
        try:
            return self.run(**options)
        except (ConfigError, DataError, FormatError) as exc:
            logger.error(f"{self.__module__}: {exc}")
            raise CommandError(str(exc), returncode=USAGE_EXIT)
        except TrainingDivergedError as exc:
            raise CommandError(f"{exc} (diagnóstico: {exc.diagnostics})", returncode=FAILURE_EXIT)
        except NumericError as exc:
            raise CommandError(str(exc), returncode=FAILURE_EXIT)
        except OSError as exc:
            raise CommandError(f"Falha de E/S: {exc}", returncode=USAGE_EXIT)

    def run(self, **options):
        raise NotImplementedError

    # -- auxiliares -------------------------------------------------------

    def experiment(self, options):
        experiment = load_experiment(options.get('config'), options.get('paper_config', False))
        return experiment.with_overrides(
            attention=options.get('attention'),
            bins=options.get('bins'),
            loss_weighting=False if options.get('no_loss_weighting') else None,
        )

    def out_dir(self, options) -> Path:
        if options.get('out'):
            return Path(options['out'])
        return SettingsUtils.output_dir() / self.default_out

    def seeds(self, options) -> list[int]:
        return SeedUtils.parse_seeds(options['seeds'])

    def dataset(self, options, experiment):
        data = options.get('data')
        if data is None:
            return build_dataset(experiment.generator)
        if not Path(data).is_dir():
            raise DataError(f"Diretório de dados não encontrado: {data}")
        return read_dataset_dir(data)

    def success(self, message: str):
        self.stdout.write(self.style.SUCCESS(message))

    def write_table(self, header, rows):
        self.stdout.write(','.join(header))
        for row in rows:
            self.stdout.write(','.join(FileUtils.format_value(value) for value in row))
