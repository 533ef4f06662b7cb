from django.apps import AppConfig


class IterationsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'Certmpc.iterations'
    verbose_name = 'Learning iterations'
