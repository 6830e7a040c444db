from django.apps import AppConfig


class SredAppConfig(AppConfig):
    name = 'sred_app'
    verbose_name = "Depth restoration"
