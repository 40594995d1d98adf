"""Registro de corridas de los comandos de management."""
import json
import logging

from django.db import DatabaseError

from .models import Run

logger = logging.getLogger(__name__)


def record_run(command, config=None, **fields):
    """
    Guarda una fila Run y la devuelve.

    Un error de base de datos solo se registra como advertencia y devuelve None:
    los archivos de la corrida ya están escritos.
    """
    for key in ('preset', 'dataset', 'output_dir'):
        if fields.get(key) is None:
            fields[key] = ''
        else:
            fields[key] = str(fields[key])
    try:
        run = Run.objects.create(command=command,
                                 config=json.dumps(config or {}, sort_keys=True), **fields)
    except DatabaseError as exc:
        logger.warning('No se pudo registrar la corrida %s: %s', command, exc)
        return None
    logger.debug('Corrida registrada: %s', run)
    return run
