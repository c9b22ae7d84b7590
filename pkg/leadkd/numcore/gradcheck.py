# Copyright 2026 The leadkd developers

import numpy as np

from .numcore import DiffTensor, ComputeGraph, backward, parameter
from ..errors import InvalidParameterError


def finite_difference_check(fn, point, step=1e-4, max_entries=None, rng=None):
    """
    Compare the analytic gradient of ``fn`` with central differences.

    Parameters
    ----------
    fn : callable
        ``fn(*params)`` returns a scalar :class:`DiffTensor` (or a float for constant functions).
    point : sequence of DiffTensor or array_like
        Parameters at which to check. Arrays are wrapped into gradient-requiring tensors; tensors are perturbed in
        place and restored.
    step : float
        Central-difference half width, > 0.
    max_entries : int or None
        Check at most this many randomly chosen coordinates (all when None).
    rng : np.random.Generator or None
        Source for the coordinate sample.

    Returns
    -------
    float
        ``max |analytic - numeric| / max(1e-12, |analytic| + |numeric|)`` over the checked coordinates.
    """
    if not step > 0:
        raise InvalidParameterError('finite-difference step must be positive, got %r' % step)
    params = [p if isinstance(p, DiffTensor) else parameter(p) for p in point]
    for p in params:
        p.grad = None

    out = fn(*params)
    if isinstance(out, DiffTensor):
        backward(ComputeGraph(out), out)
    analytic = [p.grad if p.grad is not None else np.zeros_like(p.values) for p in params]

    coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    if max_entries is not None and len(coords) > max_entries:
        rng = np.random.default_rng(0) if rng is None else rng
        picks = rng.choice(len(coords), size=max_entries, replace=False)
        coords = [coords[k] for k in sorted(picks)]

    def value():
        v = fn(*params)
        return float(v.values) if isinstance(v, DiffTensor) else float(v)

    worst = 0.0
    for i, j in coords:
        flat = params[i].values.reshape(-1)
        original = flat[j]
        flat[j] = original + step
        f_plus = value()
        flat[j] = original - step
        f_minus = value()
        flat[j] = original
        numeric = (f_plus - f_minus) / (2.0 * step)
        a = float(analytic[i].reshape(-1)[j])
        err = abs(a - numeric) / max(1e-12, abs(a) + abs(numeric))
        worst = max(worst, err)
    return worst
