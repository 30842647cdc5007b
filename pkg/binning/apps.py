# binning/apps.py
"""
Configuração do app binning
"""
from django.apps import AppConfig


class BinningConfig(AppConfig):
    """
    Alvos de precipitação, classes categóricas, normalização e pesos por classe
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'binning'
    verbose_name = 'Target Binning'
