"""
Test suite for the FMSE lab
"""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'fmse_lab.settings')
django.setup()
