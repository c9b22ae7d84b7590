# Copyright 2026 The leadkd developers

import numbers
import math

import numpy as np


def format_timedelta(diff):
    if isinstance(diff, numbers.Real):
        d, s = divmod(int(diff), 86400)
    else:
        s = diff.seconds
        d = diff.days
    h, r = divmod(s, 3600)
    m, s = divmod(r, 60)
    if d > 0:
        return '%02d:%02d:%02d:%02ds' % (d, h, m, s)
    else:
        return '%02d:%02d:%02ds' % (h, m, s)


def make_rng(seed, stream=0):
    """
    Independent, reproducible generator for one consumer of randomness.

    Separate streams (initialisation, batching, layer selection, ...) derived from one seed keep each consumer's draws
    unaffected by how many numbers the others take.
    """
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream),)))


def chunks(lst, n_chunks):
    """Divide a list into n lists where all chunks have even size, except for the last one, which takes the rest."""
    n_chunks = max(1, min(n_chunks, len(lst))) if len(lst) else 1
    out = []
    chunk_size = math.floor(len(lst) / n_chunks)
    for i in range(0, n_chunks):
        start = i * chunk_size
        if i == n_chunks - 1:
            out.append(lst[start:])
        else:
            out.append(lst[start:start + chunk_size])
    return out


def setting_label(teacher_layers, teacher_variant, student_layers, student_variant='DE'):
    """Label a distillation setting the way result tables do, e.g. ``4CB -> 2DE``."""
    return '%i%s -> %i%s' % (teacher_layers, teacher_variant, student_layers, student_variant)
