# Copyright 2026 The leadkd developers

"""Toy transformer encoder stacks that expose every layer's output."""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .. import numcore as nc
from ..errors import InvalidInputError, InvalidParameterError

PAD_ID = 0
CLS_ID = 1
SEP_ID = 2
FIRST_CONTENT_ID = 3

ATTENTION_MASK_VALUE = -1e9


@dataclass(frozen=True)
class TokenSequence:
    """
    Vocabulary indices of one query or passage.

    Attributes
    ----------
    ids : tuple[int]
        Non-negative token ids; at least one.
    """

    ids: tuple

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        if len(ids) == 0:
            raise InvalidInputError('a token sequence needs at least one token')
        if min(ids) < 0:
            raise InvalidInputError('token ids must be non-negative')
        object.__setattr__(self, 'ids', ids)

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


def pad_batch(sequences, max_len=None):
    """
    Stack id lists into a PAD-filled matrix.

    Returns
    -------
    ids : np.ndarray[int], shape (n, L)
    mask : np.ndarray[bool], shape (n, L)
        True at real tokens.
    """
    length = max(len(s) for s in sequences)
    if max_len is not None and length > max_len:
        raise InvalidInputError('sequence of length %i exceeds the maximum of %i' % (length, max_len))
    ids = np.full((len(sequences), length), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(sequences), length), dtype=bool)
    for row, seq in enumerate(sequences):
        ids[row, :len(seq)] = list(seq)
        mask[row, :len(seq)] = True
    return ids, mask


class Linear:
    """Affine map ``x @ weight + bias`` over the last axis."""

    def __init__(self, in_dim, out_dim, rng, name='linear', identity=False):
        if identity and in_dim == out_dim:
            weight = np.eye(in_dim)
        else:
            weight = rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, out_dim))
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = nc.parameter(weight, name='%s.weight' % name)
        self.bias = nc.parameter(np.zeros(out_dim), name='%s.bias' % name)

    def __call__(self, x):
        return nc.matmul(x, self.weight) + self.bias

    def named_parameters(self):
        return [(self.weight.name, self.weight), (self.bias.name, self.bias)]


class EncoderStack:
    """
    Pile of transformer blocks over a token embedding.

    The embedding layer sums token and position embeddings and normalises them. Each block applies single-head
    self-attention and a GELU feed-forward layer, each wrapped in a residual connection and layer normalisation. Block
    ``i`` reads only the output of block ``i - 1``, so the first ``i`` outputs never depend on later blocks.

    Attributes
    ----------
    num_layers : int
        Number of blocks (N for a teacher, M for a student).
    hidden_dim : int
    vocab_size : int
    max_len : int
        Longest accepted input, including reserved tokens.
    params : OrderedDict[str, DiffTensor]
    """

    def __init__(self, num_layers, hidden_dim=32, vocab_size=512, max_len=64, ffn_dim=None, rng=None,
                 name='encoder'):
        if num_layers < 1 or hidden_dim < 1 or vocab_size <= FIRST_CONTENT_ID or max_len < 1:
            raise InvalidParameterError('invalid encoder shape: layers=%r, hidden=%r, vocab=%r, max_len=%r'
                                        % (num_layers, hidden_dim, vocab_size, max_len))
        rng = np.random.default_rng(0) if rng is None else rng
        self.num_layers = int(num_layers)
        self.hidden_dim = d = int(hidden_dim)
        self.vocab_size = int(vocab_size)
        self.max_len = int(max_len)
        self.ffn_dim = f = int(ffn_dim or 2 * hidden_dim)
        self.name = name

        scale = 1.0 / np.sqrt(d)
        p = OrderedDict()

        def add(key, values):
            p[key] = nc.parameter(values, name='%s.%s' % (name, key))

        add('embed.token', rng.normal(0.0, 1.0, size=(self.vocab_size, d)))
        add('embed.position', rng.normal(0.0, 0.1, size=(self.max_len, d)))
        add('embed.ln.gain', np.ones(d))
        add('embed.ln.bias', np.zeros(d))
        for i in range(1, self.num_layers + 1):
            for proj in ('wq', 'wk', 'wv', 'wo'):
                add('block%i.attn.%s' % (i, proj), rng.normal(0.0, scale, size=(d, d)))
            add('block%i.ln1.gain' % i, np.ones(d))
            add('block%i.ln1.bias' % i, np.zeros(d))
            add('block%i.ffn.w1' % i, rng.normal(0.0, scale, size=(d, f)))
            add('block%i.ffn.b1' % i, np.zeros(f))
            add('block%i.ffn.w2' % i, rng.normal(0.0, 1.0 / np.sqrt(f), size=(f, d)))
            add('block%i.ffn.b2' % i, np.zeros(d))
            add('block%i.ln2.gain' % i, np.ones(d))
            add('block%i.ln2.bias' % i, np.zeros(d))
        self.params = p

    def named_parameters(self):
        return [(param.name, param) for param in self.params.values()]

    def parameters(self):
        return list(self.params.values())

    def _check_ids(self, ids):
        if ids.shape[1] > self.max_len:
            raise InvalidInputError('sequence of length %i exceeds the maximum of %i' % (ids.shape[1], self.max_len))
        if ids.size and ids.max() >= self.vocab_size:
            raise InvalidInputError('token id %i outside the vocabulary of %i' % (ids.max(), self.vocab_size))

    def embed(self, ids):
        p = self.params
        length = ids.shape[1]
        h = nc.getitem(p['embed.token'], ids) + nc.getitem(p['embed.position'], slice(0, length))
        return nc.layer_norm(h, p['embed.ln.gain'], p['embed.ln.bias'])

    def block(self, i, h, attention_bias):
        p = self.params
        key = 'block%i.' % i
        q = nc.matmul(h, p[key + 'attn.wq'])
        k = nc.matmul(h, p[key + 'attn.wk'])
        v = nc.matmul(h, p[key + 'attn.wv'])
        scores = nc.matmul(q, nc.swapaxes(k, -1, -2)) * (1.0 / np.sqrt(self.hidden_dim)) + attention_bias
        context = nc.matmul(nc.softmax(scores, axis=-1), v)
        h = nc.layer_norm(h + nc.matmul(context, p[key + 'attn.wo']), p[key + 'ln1.gain'], p[key + 'ln1.bias'])
        ff = nc.matmul(nc.gelu(nc.matmul(h, p[key + 'ffn.w1']) + p[key + 'ffn.b1']), p[key + 'ffn.w2'])
        return nc.layer_norm(h + ff + p[key + 'ffn.b2'], p[key + 'ln2.gain'], p[key + 'ln2.bias'])

    def encode_batch(self, ids, mask=None, upto=None):
        """
        Encode a padded batch.

        Parameters
        ----------
        ids : np.ndarray[int], shape (n, L)
        mask : np.ndarray[bool], shape (n, L) or None
            True at real tokens; padded keys are excluded from attention.
        upto : int or None
            Stop after this many blocks (all when None).

        Returns
        -------
        list[DiffTensor]
            One (n, L, hidden_dim) tensor per block, in block order.
        """
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 2:
            raise InvalidInputError('expected a (batch, length) id matrix, got shape %s' % (ids.shape,))
        self._check_ids(ids)
        if mask is None:
            mask = np.ones(ids.shape, dtype=bool)
        attention_bias = np.where(mask, 0.0, ATTENTION_MASK_VALUE)[:, np.newaxis, :]
        upto = self.num_layers if upto is None else upto
        h = self.embed(ids)
        outputs = []
        for i in range(1, upto + 1):
            h = self.block(i, h, attention_bias)
            outputs.append(h)
        return outputs

    def encode_all_layers(self, seq):
        """
        Per-layer representations of one sequence.

        Returns
        -------
        list[DiffTensor]
            ``num_layers`` matrices of shape (len(seq), hidden_dim); entry ``i - 1`` is the output of block ``i``.
        """
        if not isinstance(seq, TokenSequence):
            seq = TokenSequence(tuple(seq))
        ids = np.asarray([seq.ids], dtype=np.int64)
        return [h[0] for h in self.encode_batch(ids)]


def encode_all_layers(stack, seq):
    """List of per-layer representation matrices of ``seq`` under ``stack``."""
    return stack.encode_all_layers(seq)
