#!/usr/bin/env python
"""Utilitário de linha de comando do SaTformer (gen_data, train, eval, ablate_*, report, test)."""
import os
import sys


def main():
    """Executa os comandos de gerenciamento."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Não foi possível importar o Django. Ele está instalado e disponível "
            "no PYTHONPATH? O ambiente virtual está ativo?"
        ) from exc
    execute_from_command_line(sys.argv)


if __name__ == '__main__':
    main()
