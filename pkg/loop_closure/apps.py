from django.apps import AppConfig


class LoopClosureConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'loop_closure'
