"""Permite `python -m igsense`."""

from igsense.main import run

run()
