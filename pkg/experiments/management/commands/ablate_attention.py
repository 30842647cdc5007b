# experiments/management/commands/ablate_attention.py
from experiments.ablations import ATTENTION_HEADER, ATTENTION_TABLE, DIRECTION_FILE, TIMINGS_FILE, ablate_attention
from experiments.commands import ExperimentCommand


class Command(ExperimentCommand):
    help = 'Compara as variantes de atenção (full, s-t, t-s) por semente e emite a tabela em CSV'
    default_out = 'ablate_attention'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        self.add_training_arguments(parser)
        self.add_seeds_argument(parser)

    def run(self, **options):
        experiment = self.experiment(options)
        seeds = self.seeds(options)
        dataset = self.dataset(options, experiment)
        out = self.out_dir(options)

        rows, _, (best, full, factorized, full_is_best) = ablate_attention(
            dataset, experiment.training, experiment.model, seeds, out_dir=out
        )

        self.write_table(ATTENTION_HEADER, rows)
        if full_is_best:
            self.stdout.write(f'Atenção completa com o menor BW-CRPS médio: {full:.4f}')
        else:
            self.stdout.write(self.style.WARNING(
                f'Atenção completa ({full:.4f}) perdeu para {best} ({factorized:.4f}); '
                f'registre a análise junto ao relatório'
            ))
        self.success(f'Tabela gravada em {out / ATTENTION_TABLE} (tempos em {out / TIMINGS_FILE}, '
                     f'comparação em {out / DIRECTION_FILE})')
