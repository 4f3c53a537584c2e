"""
Django settings for the fmse_lab project.

The lab has no database, URLs or templates: Django is used for its management
command framework (the `fmse` command) and its test tooling.
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from .env file in development
from fmse_lab.core.utils import load_env_file, is_development
if is_development():
    load_env_file()


SECRET_KEY = os.environ.get('DJANGO_SECRET_KEY')
if not SECRET_KEY:
    if is_development():
        # Nothing in the lab signs data; the key only satisfies Django's startup checks.
        SECRET_KEY = 'fmse-lab-development-key'
    else:
        raise ValueError("DJANGO_SECRET_KEY environment variable must be set for production!")

DEBUG = os.environ.get('DEBUG', 'False').lower() == 'true'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'fmse_lab',
    'fmse_lab.src',
]

MIDDLEWARE = []

DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging: reports go to stdout, so library logging stays on stderr and quiet by default.

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'lab': {
            'format': '%(asctime)s %(levelname)s %(name)s: %(message)s',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'lab',
        },
    },
    'loggers': {
        'fmse_lab': {
            'handlers': ['console'],
            'level': os.environ.get('FMSE_LOG_LEVEL', 'WARNING').upper(),
            'propagate': False,
        },
    },
}

# Initialize dependency injection container and configuration
from fmse_lab.core.config import get_lab_config
from fmse_lab.core.containers import container

# Wire the dependency injection container
container.wire(modules=[__name__])

# Get configuration
LAB_CONFIG = get_lab_config()
