"""
Django settings for hfo_backend project.

The project has no web surface: Django hosts the management commands
(simulate, detect, evaluate, select_features, rate_ratio, report) and the
logging configuration.
"""

import os
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY', 'hfo-backend-offline-only')

DEBUG = False

ALLOWED_HOSTS = []

# Application definition
INSTALLED_APPS = [
    'analytics',
]

# Commands read and write files only
DATABASES = {}

# Internationalization
LANGUAGE_CODE = 'en-us'
TIME_ZONE = 'UTC'
USE_I18N = False
USE_TZ = True

# Detector defaults shared by every command
TFEC_ENV_PREFIX = 'TFEC_'
TFEC_THREADS = int(os.environ.get('TFEC_THREADS', '1'))
TFEC_OUTPUT_DIR = Path(os.environ.get('TFEC_OUTPUT_DIR', BASE_DIR / 'runs'))
TFEC_LOG_LEVEL = os.environ.get('TFEC_LOG_LEVEL', 'INFO').upper()

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'plain': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'plain',
        },
    },
    'loggers': {
        'analytics': {
            'handlers': ['console'],
            'level': TFEC_LOG_LEVEL,
            'propagate': False,
        },
    },
}
