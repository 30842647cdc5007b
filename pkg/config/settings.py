# config/settings.py
from pathlib import Path
from decouple import config # type: ignore

BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('SECRET_KEY', default='satformer-local-only')

DEBUG = config('DJANGO_DEBUG', default=False, cast=bool)

CONSOLE_LOG_LEVEL = config('CONSOLE_LOG_LEVEL', default='DEBUG' if DEBUG else 'INFO', cast=str).upper()
FILE_LOG_LEVEL = config('FILE_LOG_LEVEL', default='DEBUG' if DEBUG else 'INFO', cast=str).upper()
SATFORMER_LOG_LEVEL = config('SATFORMER_LOG_LEVEL', default='DEBUG' if DEBUG else 'INFO', cast=str).upper()

SATFORMER = {
    # Processos paralelos nas ablações
    'THREADS': config('SATFORMER_THREADS', default=1, cast=int),
    # Asserção de NaN/Inf em todas as operações de tensor
    'CHECK_FINITE': config('SATFORMER_CHECK_FINITE', default=True, cast=bool),
    'OUTPUT_DIR': config('SATFORMER_OUTPUT_DIR', default=str(BASE_DIR / 'runs')),
    # Testes empíricos longos (overfit, direções das ablações)
    'SLOW_TESTS': config('SATFORMER_SLOW_TESTS', default=False, cast=bool),
}

INSTALLED_APPS = [
    'core',
    'numerics',
    'transformer',
    'binning',
    'metrics',
    'synthdata',
    'training',
    'experiments',
]

# Sem banco de dados: todo estado vive em arquivos de execução
DATABASES = {}

ALLOWED_HOSTS = []

LANGUAGE_CODE = 'pt-br'
TIME_ZONE = 'America/Sao_Paulo'
USE_I18N = True
USE_TZ = True

LOG_DIR = BASE_DIR / 'logs'
LOG_DIR.mkdir(exist_ok=True)

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module}:{lineno} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': CONSOLE_LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
        'file_app': {
            'level': FILE_LOG_LEVEL,
            'class': 'logging.handlers.RotatingFileHandler',
            'filename': LOG_DIR / 'satformer.log',
            'maxBytes': 1024*1024*5,  # 5 MB
            'backupCount': 5,
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'INFO',
            'propagate': False,
        },
        **{
            app: {
                'handlers': ['console', 'file_app'],
                'level': SATFORMER_LOG_LEVEL,
                'propagate': False,
            }
            for app in ('core', 'numerics', 'transformer', 'binning', 'metrics', 'synthdata', 'training', 'experiments')
        },
    },
    'root': {
        'handlers': ['console', 'file_app'],
        'level': 'INFO',
    }
}
