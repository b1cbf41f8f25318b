import os

import django

os.environ.setdefault("DJANGO_SETTINGS_MODULE", "infralab.settings")
django.setup()
