# experiments/management/commands/report.py
from experiments.commands import ExperimentCommand
from experiments.reporting import consolidate


class Command(ExperimentCommand):
    help = 'Consolida RunLogs em CSVs de curvas de treino, resumo e histograma de classes'
    default_out = 'report'

    def add_arguments(self, parser):
        parser.add_argument('run_dirs', nargs='+', type=str, help='Diretórios de execução (saída de train)')
        parser.add_argument('--out', type=str, default=None, help='Diretório de saída')

    def run(self, **options):
        out = self.out_dir(options)
        paths = consolidate(options['run_dirs'], out)
        for kind, path in paths.items():
            self.stdout.write(f'{kind}: {path}')
        self.success(f"Relatório de {len(options['run_dirs'])} execução(ões) gravado em {out}")
