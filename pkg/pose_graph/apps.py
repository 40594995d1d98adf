from django.apps import AppConfig


class PoseGraphConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'pose_graph'
