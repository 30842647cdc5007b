# numerics/apps.py
"""
Configuração do app numerics
"""
from django.apps import AppConfig
from django.conf import settings


class NumericsConfig(AppConfig):
    """
    Motor de tensores densos com diferenciação automática reversa
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'numerics'
    verbose_name = 'Numerics Engine'

    def ready(self):
        from .tensor import set_check_finite
        set_check_finite(getattr(settings, 'SATFORMER', {}).get('CHECK_FINITE', True))
