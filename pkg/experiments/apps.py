# experiments/apps.py
"""
Configuração do app experiments
"""
from django.apps import AppConfig


class ExperimentsConfig(AppConfig):
    """
    Comandos de linha de comando: geração de dados, treino, avaliação,
    ablações e relatórios
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'experiments'
    verbose_name = 'Experiments'
