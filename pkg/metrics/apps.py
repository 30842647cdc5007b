# metrics/apps.py
"""
Configuração do app metrics
"""
from django.apps import AppConfig


class MetricsConfig(AppConfig):
    """
    Perda ponderada, CRPS e métricas ponderadas por classe
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'metrics'
    verbose_name = 'Metrics'
