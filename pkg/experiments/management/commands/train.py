# experiments/management/commands/train.py
from experiments.commands import ExperimentCommand
from training.loop import train


class Command(ExperimentCommand):
    help = 'Treina um SaTformer e grava RunLog e checkpoints no diretório de saída'
    default_out = 'train'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_training_arguments(parser)
        parser.add_argument('--seed', type=int, default=None, help='Sobrepõe training.seed')

    def run(self, **options):
        experiment = self.experiment(options).with_overrides(seed=options['seed'])
        dataset = self.dataset(options, experiment)
        out = self.out_dir(options)

        run = train(experiment.training, experiment.model, dataset, run_dir=out)

        report = run.best_report
        self.stdout.write(f'Passos: {len(run.train)}')
        if report is not None:
            self.stdout.write(f'Melhor passo: {run.best_step} (val_loss {run.best_val_loss:.6f})')
            self.stdout.write(f'BW-Top-3: {report.bw_top3:.4f}  BW-CRPS: {report.bw_crps:.4f}')
        self.success(f'Execução gravada em {out}')
