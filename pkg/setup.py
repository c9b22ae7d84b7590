"""Setuptools installation script for leadkd."""

from setuptools import setup

setup()
