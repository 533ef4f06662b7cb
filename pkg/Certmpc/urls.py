"""
URL configuration for Certmpc project.

Only the Django admin is served; it browses the iteration ledger.
"""
from django.contrib import admin
from django.urls import path

urlpatterns = [
    path('admin/', admin.site.urls),
]
