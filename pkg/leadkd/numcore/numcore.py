# Copyright 2026 The leadkd developers

"""
Minimal reverse-mode differentiation over numpy arrays.

A :class:`DiffTensor` wraps a float64 array. Every operation applied to tensors that require gradients records its
parents and a closure mapping the output gradient to parent gradients. :class:`ComputeGraph` collects the records
reachable from a scalar seed into a ``networkx.DiGraph`` and :func:`backward` walks it once in reverse topological
order, ties broken by creation index so that repeated passes are bit-identical.
"""

import contextlib
import itertools
import threading

import networkx as nx
import numpy as np

from .. import functions
from ..errors import InvalidInputError, InvalidParameterError, DomainError

__all__ = ['DiffTensor', 'ComputeGraph', 'backward', 'no_grad', 'grad_enabled', 'tensor', 'parameter', 'as_tensor',
           'add', 'sub', 'mul', 'div', 'power', 'exp', 'log', 'tanh', 'gelu',
           'matmul', 'reshape', 'swapaxes', 'getitem', 'concatenate', 'stack',
           'tsum', 'mean', 'tmax', 'log_softmax', 'softmax', 'softmax_with_temperature',
           'log_softmax_with_temperature', 'layer_norm', 'kl_divergence', 'kl_from_log_probs', 'mse']

_creation = itertools.count()
_state = threading.local()


def grad_enabled():
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording operations (inference, evaluation)."""
    previous = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = previous


class DiffTensor:
    """
    Shaped float64 array participating in reverse-mode differentiation.

    Attributes
    ----------
    values : np.ndarray
        Forward values (float64).
    grad : np.ndarray or None
        Gradient of the last seed passed to :func:`backward`, same shape as ``values``.
    requires_grad : bool
        Whether operations on this tensor are recorded.
    name : str or None
        Optional label (parameter name).
    """

    __slots__ = ('values', 'grad', 'requires_grad', 'name', '_parents', '_backward', '_op', '_index')

    __array_priority__ = 1000

    def __init__(self, values, requires_grad=False, name=None, _parents=(), _backward=None, _op=''):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents = tuple(_parents)
        self._backward = _backward
        self._op = _op
        self._index = next(_creation)

    @property
    def shape(self):
        return self.values.shape

    @property
    def ndim(self):
        return self.values.ndim

    @property
    def size(self):
        return self.values.size

    def item(self):
        return float(self.values)

    def numpy(self):
        return self.values

    def detach(self):
        """Same values, cut from the graph."""
        out = DiffTensor.__new__(DiffTensor)
        out.values = self.values
        out.grad = None
        out.requires_grad = False
        out.name = self.name
        out._parents = ()
        out._backward = None
        out._op = 'detach'
        out._index = next(_creation)
        return out

    def zero_grad(self):
        self.grad = np.zeros_like(self.values)

    def backward(self):
        """Differentiate this scalar with respect to every tensor it depends on."""
        backward(ComputeGraph(self), self)

    def __repr__(self):
        label = '' if self.name is None else ', name=%r' % self.name
        return 'DiffTensor(shape=%s%s, requires_grad=%s)' % (self.shape, label, self.requires_grad)

    def __len__(self):
        return len(self.values)

    # operators
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def max(self, axis=-1, keepdims=False):
        return tmax(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def tensor(values, requires_grad=False, name=None):
    return DiffTensor(np.array(values, dtype=np.float64), requires_grad=requires_grad, name=name)


def parameter(values, name=None):
    """Leaf tensor that requires gradients."""
    return DiffTensor(np.array(values, dtype=np.float64), requires_grad=True, name=name)


def as_tensor(x):
    return x if isinstance(x, DiffTensor) else DiffTensor(x)


def _make(values, parents, backward_fn, op):
    """Create an op output; record the parents only when one of them requires gradients."""
    if grad_enabled() and any(p.requires_grad for p in parents):
        return DiffTensor(values, requires_grad=True, _parents=parents, _backward=backward_fn, _op=op)
    return DiffTensor(values, _op=op)


def _unbroadcast(grad, shape):
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class ComputeGraph:
    """
    Operation records reachable from a seed tensor.

    Attributes
    ----------
    graph : networkx.DiGraph
        Nodes are creation indices carrying the tensor under ``'tensor'``; edges run parent -> child.
    seed : DiffTensor
    """

    def __init__(self, seed):
        self.seed = seed
        self.graph = nx.DiGraph()
        if not seed.requires_grad:
            self.graph.add_node(seed._index, tensor=seed)
            return
        stack = [seed]
        seen = {seed._index}
        self.graph.add_node(seed._index, tensor=seed)
        while stack:
            node = stack.pop()
            for parent in node._parents:
                if not parent.requires_grad:
                    continue
                if parent._index not in seen:
                    seen.add(parent._index)
                    self.graph.add_node(parent._index, tensor=parent)
                    stack.append(parent)
                self.graph.add_edge(parent._index, node._index)

    def __len__(self):
        return self.graph.number_of_nodes()

    def topological_order(self):
        """Tensors, parents before children, ties by creation index."""
        nodes = self.graph.nodes
        return [nodes[n]['tensor'] for n in nx.lexicographical_topological_sort(self.graph, key=lambda n: n)]

    def leaves(self):
        """Tensors without recorded parents (parameters and other gradient-requiring inputs)."""
        return [self.graph.nodes[n]['tensor'] for n in self.graph if self.graph.in_degree(n) == 0]


def backward(graph, seed):
    """
    Populate ``grad`` on every tensor of ``graph`` with the partial derivative of ``seed``.

    Parameters
    ----------
    graph : ComputeGraph
        Graph built from ``seed``.
    seed : DiffTensor
        Scalar-valued tensor.

    Raises
    ------
    InvalidInputError
        If ``seed`` is not scalar.
    """
    if seed.size != 1:
        raise InvalidInputError('backward seed must be scalar, got shape %s' % (seed.shape,))
    grads = {seed._index: np.ones_like(seed.values)}
    for node in reversed(graph.topological_order()):
        g = grads.pop(node._index, None)
        if g is None:
            g = np.zeros_like(node.values)
        node.grad = g
        if node._backward is None:
            continue
        parent_grads = node._backward(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            if parent._index in grads:
                grads[parent._index] = grads[parent._index] + pg
            else:
                grads[parent._index] = pg
    if not seed.requires_grad:
        seed.grad = np.ones_like(seed.values)


# elementwise arithmetic

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(a.values + b.values, (a, b), _backward, 'add')


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _make(a.values - b.values, (a, b), _backward, 'sub')


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        return _unbroadcast(g * b.values, a.shape), _unbroadcast(g * a.values, b.shape)
    return _make(a.values * b.values, (a, b), _backward, 'mul')


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if np.any(b.values == 0):
        raise DomainError('division by zero')

    def _backward(g):
        return (_unbroadcast(g / b.values, a.shape),
                _unbroadcast(-g * a.values / (b.values ** 2), b.shape))
    return _make(a.values / b.values, (a, b), _backward, 'div')


def power(a, exponent):
    a = as_tensor(a)
    exponent = float(exponent)
    out = a.values ** exponent

    def _backward(g):
        return (g * exponent * a.values ** (exponent - 1.0),)
    return _make(out, (a,), _backward, 'pow')


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.values)

    def _backward(g):
        return (g * out,)
    return _make(out, (a,), _backward, 'exp')


def log(a):
    a = as_tensor(a)
    if np.any(a.values <= 0):
        raise DomainError('log of a non-positive value')

    def _backward(g):
        return (g / a.values,)
    return _make(np.log(a.values), (a,), _backward, 'log')


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.values)

    def _backward(g):
        return (g * (1.0 - out ** 2),)
    return _make(out, (a,), _backward, 'tanh')


def gelu(a):
    a = as_tensor(a)

    def _backward(g):
        return (g * functions.gelu_grad(a.values),)
    return _make(functions.gelu(a.values), (a,), _backward, 'gelu')


# linear algebra and shape

def matmul(a, b):
    """Matrix product with numpy's batching and broadcasting rules; 1-D operands are promoted and squeezed."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0:
        raise InvalidInputError('matmul operands must have at least one dimension')
    av = a.values[np.newaxis, :] if a.ndim == 1 else a.values
    bv = b.values[:, np.newaxis] if b.ndim == 1 else b.values
    if av.shape[-1] != bv.shape[-2]:
        raise InvalidInputError('matmul dimension mismatch: %s @ %s' % (a.shape, b.shape))
    full = np.matmul(av, bv)
    out = full
    if a.ndim == 1:
        out = out[..., 0, :]
    if b.ndim == 1:
        out = out[..., 0]

    def _backward(g):
        gf = g
        if b.ndim == 1:
            gf = gf[..., np.newaxis]
        if a.ndim == 1:
            gf = gf[..., np.newaxis, :]
        ga = np.matmul(gf, np.swapaxes(bv, -1, -2))
        gb = np.matmul(np.swapaxes(av, -1, -2), gf)
        ga = _unbroadcast(ga, av.shape).reshape(a.shape)
        gb = _unbroadcast(gb, bv.shape).reshape(b.shape)
        return ga, gb
    return _make(out, (a, b), _backward, 'matmul')


def reshape(a, shape):
    a = as_tensor(a)

    def _backward(g):
        return (g.reshape(a.shape),)
    return _make(a.values.reshape(shape), (a,), _backward, 'reshape')


def swapaxes(a, axis1, axis2):
    a = as_tensor(a)

    def _backward(g):
        return (np.swapaxes(g, axis1, axis2),)
    return _make(np.swapaxes(a.values, axis1, axis2), (a,), _backward, 'swapaxes')


def getitem(a, index):
    a = as_tensor(a)
    if isinstance(index, DiffTensor):
        raise InvalidInputError('index with integer arrays, not tensors')

    def _backward(g):
        out = np.zeros_like(a.values)
        np.add.at(out, index, g)
        return (out,)
    return _make(a.values[index], (a,), _backward, 'getitem')


def concatenate(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def _backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors)))
    return _make(np.concatenate([t.values for t in tensors], axis=axis), tuple(tensors), _backward, 'concatenate')


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def _backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))
    return _make(np.stack([t.values for t in tensors], axis=axis), tuple(tensors), _backward, 'stack')


# reductions

def _normalize_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _make(np.sum(a.values, axis=axes, keepdims=keepdims), (a,), _backward, 'sum')


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return tsum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


def tmax(a, axis=-1, keepdims=False):
    """Maximum along one axis; the gradient goes to the first maximal entry."""
    a = as_tensor(a)
    axis = axis % a.ndim
    arg = np.argmax(a.values, axis=axis)
    arg_k = np.expand_dims(arg, axis)
    out = np.take_along_axis(a.values, arg_k, axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def _backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(a.values)
        np.put_along_axis(full, arg_k, g, axis=axis)
        return (full,)
    return _make(out, (a,), _backward, 'max')


# normalisation and probability

def log_softmax(a, axis=-1):
    """Fused, max-subtracted log-softmax."""
    a = as_tensor(a)
    out = functions.log_softmax(a.values, axis=axis)

    def _backward(g):
        return (g - np.exp(out) * np.sum(g, axis=axis, keepdims=True),)
    return _make(out, (a,), _backward, 'log_softmax')


def softmax(a, axis=-1):
    a = as_tensor(a)
    out = functions.softmax(a.values, axis=axis)

    def _backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)
    return _make(out, (a,), _backward, 'softmax')


def _check_tau(tau):
    tau = float(tau)
    if not tau > 0 or not np.isfinite(tau):
        raise InvalidParameterError('temperature must be positive, got %r' % tau)
    return tau


def softmax_with_temperature(logits, tau=1.0, axis=-1):
    """
    Probability vector ``softmax(logits / tau)``.

    Parameters
    ----------
    logits : DiffTensor or array_like
        Finite logits; a batch is normalised along ``axis``.
    tau : float
        Temperature, > 0.

    Returns
    -------
    DiffTensor
        Entries in (0, 1] summing to 1 along ``axis``.

    Raises
    ------
    InvalidParameterError
        If ``tau`` is not positive.
    InvalidInputError
        If ``logits`` is empty or not finite.
    """
    tau = _check_tau(tau)
    logits = as_tensor(logits)
    if logits.size == 0 or logits.ndim == 0 or logits.shape[axis] == 0:
        raise InvalidInputError('softmax over an empty vector')
    if not np.all(np.isfinite(logits.values)):
        raise InvalidInputError('softmax logits must be finite')
    return softmax(logits / tau, axis=axis)


def log_softmax_with_temperature(logits, tau=1.0, axis=-1):
    """Log of :func:`softmax_with_temperature`, fused."""
    tau = _check_tau(tau)
    logits = as_tensor(logits)
    if logits.size == 0 or logits.ndim == 0 or logits.shape[axis] == 0:
        raise InvalidInputError('softmax over an empty vector')
    if not np.all(np.isfinite(logits.values)):
        raise InvalidInputError('softmax logits must be finite')
    return log_softmax(logits / tau, axis=axis)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalise over the last axis, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    mu = x.values.mean(axis=-1, keepdims=True)
    xc = x.values - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    n = x.shape[-1]

    def _backward(g):
        gxhat = g * gain.values
        gx = inv / n * (n * gxhat - gxhat.sum(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True))
        return gx, _unbroadcast(g * xhat, gain.shape), _unbroadcast(g, bias.shape)
    return _make(xhat * gain.values + bias.values, (x, gain, bias), _backward, 'layer_norm')


def kl_divergence(p, q, atol=1e-6):
    """
    KL(p || q) = sum_k p_k log(p_k / q_k), with 0 log 0 = 0.

    ``p`` is the target distribution. Batches are reduced along the last axis.

    Parameters
    ----------
    p, q : DiffTensor or array_like
        Probability vectors of equal length, each summing to 1 within ``atol``.

    Returns
    -------
    DiffTensor
        Non-negative divergence (one per row for batched input).

    Raises
    ------
    InvalidInputError
        If the shapes differ or a vector does not sum to 1.
    DomainError
        If ``q`` is zero where ``p`` is positive.
    """
    p, q = as_tensor(p), as_tensor(q)
    if p.shape != q.shape or p.ndim == 0:
        raise InvalidInputError('kl_divergence length mismatch: %s vs %s' % (p.shape, q.shape))
    for name, t in (('p', p), ('q', q)):
        if np.any(t.values < 0) or np.any(np.abs(t.values.sum(axis=-1) - 1.0) > atol):
            raise InvalidInputError('%s is not a probability vector' % name)
    if np.any((q.values <= 0) & (p.values > 0)):
        raise DomainError('q assigns zero probability where p is positive')
    positive = p.values > 0
    safe_q = np.where(positive, q.values, 1.0)
    safe_p = np.where(positive, p.values, 1.0)
    out = functions.kl(p.values, q.values)
    # clamp the round-off of identical inputs
    out = np.maximum(out, 0.0)

    def _backward(g):
        g = np.expand_dims(g, -1)
        gp = np.where(positive, g * (np.log(safe_p / safe_q) + 1.0), 0.0)
        gq = np.where(positive, -g * p.values / safe_q, 0.0)
        return gp, gq
    return _make(out, (p, q), _backward, 'kl_divergence')


def kl_from_log_probs(log_p, log_q):
    """KL(p || q) computed from log-probabilities along the last axis; exact composite of recorded ops."""
    return tsum(exp(log_p) * (log_p - log_q), axis=-1)


def mse(a, b):
    """Mean squared difference over all entries."""
    d = sub(a, b)
    return mean(d * d)
