# experiments/management/commands/ablate_bins.py
from core.exceptions import ConfigError
from experiments.ablations import BINS_HEADER, BINS_TABLE, DEFAULT_BIN_COUNTS, ablate_bins
from experiments.commands import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Treina um modelo por número de classes e emite o CRPS de cada contagem em CSV'
    default_out = 'ablate_bins'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_training_arguments(parser)
        self.add_seeds_argument(parser)
        parser.add_argument(
            '--bin-counts',
            type=str,
            default=','.join(str(n) for n in DEFAULT_BIN_COUNTS),
            help='Números de classes separados por vírgula (padrão: 4,8,16,32,64,128)'
        )

    def bin_counts(self, raw: str) -> list[int]:
        try:
            counts = [int(part) for part in raw.split(',') if part.strip()]
        except ValueError:
            raise ConfigError(f"Lista de classes inválida: {raw!r}") from None
        if not counts or any(n < 2 for n in counts):
            raise ConfigError("--bin-counts precisa de valores >= 2")
        return counts

    def run(self, **options):
        experiment = self.experiment(options)
        seeds = self.seeds(options)
        counts = self.bin_counts(options['bin_counts'])
        dataset = self.dataset(options, experiment)
        out = self.out_dir(options)

        rows = ablate_bins(dataset, experiment.training, experiment.model, seeds, counts, out_dir=out)

        self.write_table(BINS_HEADER, rows)
        self.success(f'Tabela gravada em {out / BINS_TABLE}')
