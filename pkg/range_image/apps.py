from django.apps import AppConfig


class RangeImageConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'range_image'
