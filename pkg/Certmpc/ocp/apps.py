from django.apps import AppConfig


class OcpConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'Certmpc.ocp'
