# experiments/management/commands/gen_data.py
from core.utils import FileUtils
from experiments.commands import ExperimentCommand
from synthdata.sampling import build_dataset
from synthdata.storage import HISTOGRAM_HEADER, write_dataset_dir


class Command(ExperimentCommand):
    help = 'Gera o conjunto sintético (treino/validação) e imprime o histograma de classes em CSV'
    default_out = 'dataset'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--seed', type=int, default=None, help='Sobrepõe generator.seed')

    def run(self, **options):
        generator = self.experiment(options).generator
        if options['seed'] is not None:
            generator = generator.replace(seed=options['seed'])
        out = self.out_dir(options)

        dataset = build_dataset(generator)
        write_dataset_dir(dataset, out)

        self.stdout.write(','.join(HISTOGRAM_HEADER))
        for index, count in enumerate(dataset.histogram()):
            self.stdout.write(f'{index},{FileUtils.format_value(count)}')
        self.success(f'Conjunto gravado em {out}: {len(dataset.train)} treino / {len(dataset.val)} validação')
