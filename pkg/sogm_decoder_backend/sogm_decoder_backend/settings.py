"""
Django settings for sogm_decoder_backend project.

The project has no web front end: Django provides the management commands
that run the decoding pipeline and the ORM behind the run registry.

Environment variables (read from the process or a ``.env`` file next to
``manage.py``):

SOGM_LOG
    Log level name, default ``INFO``
SOGM_OUTPUT_DIR
    Default output directory of the pipeline commands, default ``runs``
SOGM_JOBS
    Default number of worker processes, default 1
SOGM_DATABASE
    SQLite file of the run registry
"""

import os
from pathlib import Path

from dotenv import load_dotenv

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

load_dotenv(BASE_DIR / ".env")

SECRET_KEY = os.environ.get(
    "DJANGO_SECRET_KEY", "sogm-decoder-local-only-not-for-deployment"
)

DEBUG = False

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    "django.contrib.contenttypes",
    "sogm_decoder_algo",
]


# Database

DATABASES = {
    "default": {
        "ENGINE": "django.db.backends.sqlite3",
        "NAME": os.environ.get("SOGM_DATABASE", BASE_DIR / "db.sqlite3"),
    }
}


# Pipeline defaults

SOGM_OUTPUT_DIR = Path(os.environ.get("SOGM_OUTPUT_DIR", BASE_DIR / "runs"))

SOGM_JOBS = int(os.environ.get("SOGM_JOBS", "1"))


# Logging

SOGM_LOG = os.environ.get("SOGM_LOG", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "plain": {
            "format": "{asctime} {levelname} {name}: {message}",
            "style": "{",
        },
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "plain",
        },
    },
    "loggers": {
        "sogm_decoder_algo": {
            "handlers": ["console"],
            "level": SOGM_LOG,
            "propagate": False,
        },
    },
}


# Internationalization

LANGUAGE_CODE = "en-us"

TIME_ZONE = "UTC"

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = "django.db.models.BigAutoField"
