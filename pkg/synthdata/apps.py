# synthdata/apps.py
"""
Configuração do app synthdata
"""
from django.apps import AppConfig


class SynthdataConfig(AppConfig):
    """
    Mundo sintético de chuva e radiâncias, amostragem de pares e formato .satd
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'synthdata'
    verbose_name = 'Synthetic Data'
