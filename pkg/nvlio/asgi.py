"""Punto ASGI del registro de corridas."""

import os

from django.core.asgi import get_asgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'nvlio.settings')

application = get_asgi_application()
