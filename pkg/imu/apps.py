from django.apps import AppConfig


class ImuConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'imu'
