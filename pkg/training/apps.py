# training/apps.py
"""
Configuração do app training
"""
from django.apps import AppConfig


class TrainingConfig(AppConfig):
    """
    Otimizador Adam, laço de treinamento, validação e seleção de checkpoint
    """
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'training'
    verbose_name = 'Training'
