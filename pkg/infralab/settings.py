from pathlib import Path
import os

from dotenv import load_dotenv

BASE_DIR = Path(__file__).resolve().parent.parent
load_dotenv(BASE_DIR / ".env")

SECRET_KEY = os.environ.get("DJANGO_SECRET_KEY", "insecure-change-me")
DEBUG = os.environ.get("DJANGO_DEBUG", "false").lower() == "true"

INSTALLED_APPS = [
    "rest_framework",
    "lab",
    "runs",
]

# Batch laboratory: no persistence layer.
DATABASES = {}

LANGUAGE_CODE = "en-us"
TIME_ZONE = "UTC"
USE_I18N = False
USE_TZ = True

REST_FRAMEWORK = {
    "DEFAULT_RENDERER_CLASSES": ["rest_framework.renderers.JSONRenderer"],
    "UNAUTHENTICATED_USER": None,
    "STRICT_JSON": True,
}

LAB_ARTIFACT_VERSION = "1.0.0"
LAB_WORKERS = max(1, int(os.environ.get("INFRALAB_WORKERS", "1")))
LAB_DIMENSION_CAP = int(os.environ.get("INFRALAB_DIMENSION_CAP", "20000"))
LAB_DENSE_LIMIT = int(os.environ.get("INFRALAB_DENSE_LIMIT", "2000"))
LAB_ALPHA_MAX = float(os.environ.get("INFRALAB_ALPHA_MAX", "0.01"))

LOG_LEVEL = os.environ.get("DJANGO_LOG_LEVEL", "INFO").upper()

LOGGING = {
    "version": 1,
    "disable_existing_loggers": False,
    "formatters": {
        "standard": {
            "format": "[%(asctime)s] %(levelname)s %(name)s: %(message)s",
        }
    },
    "handlers": {
        "console": {
            "class": "logging.StreamHandler",
            "formatter": "standard",
        }
    },
    "root": {
        "handlers": ["console"],
        "level": LOG_LEVEL,
    },
}
