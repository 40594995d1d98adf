"""
Punto WSGI del registro de corridas (/api/runs/ y el admin).

El pipeline de odometría no lo necesita: se usa solo para servir el dashboard.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'nvlio.settings')

application = get_wsgi_application()
