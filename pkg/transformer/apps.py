# transformer/apps.py
"""
Configuração do app transformer
"""
from django.apps import AppConfig


class TransformerConfig(AppConfig):
    """
    Modelo SaTformer: tokenização, atenção espaço-temporal e checkpoints
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'transformer'
    verbose_name = 'SaTformer Model'
