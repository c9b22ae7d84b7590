# Copyright 2026 The leadkd developers

"""
leadkd: layer-wise distillation of dense retrieval models, from a small reverse-mode autodiff core up to experiment
pipelines on synthetic corpora.

"""

__version__ = '0.1.0'
