# experiments/management/commands/eval.py
from pathlib import Path

from core.exceptions import DataError
from experiments.commands import ExperimentCommand
from metrics.reports import REPORT_HEADER
from training.loop import evaluate


class Command(ExperimentCommand):
    help = 'Avalia um checkpoint sobre uma partição do conjunto e emite o relatório em CSV'
    default_out = 'eval'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('checkpoint', type=str, help='Diretório do checkpoint (ex.: <run>/best)')
        parser.add_argument('--data', type=str, default=None,
                            help='Diretório gerado por gen_data (padrão: gera a partir da configuração)')
        parser.add_argument('--split', choices=('val', 'train'), default='val', help='Partição avaliada')
        parser.add_argument('--batch-size', type=int, default=64, help='Tamanho do lote de avaliação')
        parser.add_argument('--check-bins', action='store_true',
                            help='Exige que as classes do conjunto coincidam com as do checkpoint')

    def run(self, **options):
        checkpoint = Path(options['checkpoint'])
        if not checkpoint.is_dir():
            raise DataError(f"Checkpoint não encontrado: {checkpoint}")
        experiment = self.experiment(options)
        dataset = self.dataset(options, experiment)
        records = dataset.val if options['split'] == 'val' else dataset.train

        report = evaluate(checkpoint, records, dataset.bin_spec, options['batch_size'],
                          strict_bins=options['check_bins'])

        path = report.to_csv(self.out_dir(options) / 'report.csv')
        self.write_table(REPORT_HEADER, report.rows())
        self.success(f'Relatório gravado em {path}')
