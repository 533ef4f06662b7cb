"""
WSGI config for Certmpc project.

It exposes the WSGI callable as a module-level variable named ``application``.
Used to browse the iteration ledger through the admin.
"""

import os

from django.core.wsgi import get_wsgi_application

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'Certmpc.settings')

application = get_wsgi_application()
