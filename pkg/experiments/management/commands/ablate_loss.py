# experiments/management/commands/ablate_loss.py
from experiments.ablations import LOSS_HEADER, LOSS_TABLE, ablate_loss
from experiments.commands import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Treina variantes com e sem reponderação de classes por semente e emite a tabela em CSV'
    default_out = 'ablate_loss'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_training_arguments(parser)
        self.add_seeds_argument(parser)

    def run(self, **options):
        experiment = self.experiment(options)
        seeds = self.seeds(options)
        dataset = self.dataset(options, experiment)
        out = self.out_dir(options)

        rows = ablate_loss(dataset, experiment.training, experiment.model, seeds, out_dir=out)

        self.write_table(LOSS_HEADER, rows)
        self.success(f'Tabela gravada em {out / LOSS_TABLE}')
