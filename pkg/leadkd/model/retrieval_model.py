# Copyright 2026 The leadkd developers

"""
Unified view of dual encoders (DE), late-interaction encoders (CB) and cross encoders (CE).

Every variant is a pair of layer piles (E1, E2) with a similarity function. DE and CB encode queries with E1 and
passages with E2 and compare them after encoding; CE encodes ``[CLS] q [SEP] p`` with E1 and scores the joint CLS
vector with a projection vector ``w`` (E2) shared by every scored layer. An optional appended linear projection acts
as one more layer on top of the final representations.
"""

import json
from collections import OrderedDict

import numpy as np

from .. import numcore as nc
from ..errors import InvalidInputError, InvalidParameterError, ConfigurationError
from ..util import make_rng
from .encoder import EncoderStack, Linear, TokenSequence, pad_batch, CLS_ID, SEP_ID, ATTENTION_MASK_VALUE

VARIANTS = ('DE', 'CB', 'CE')

CHECKPOINT_FORMAT = 'leadkd-checkpoint-1'


def score_de(q_cls, p_cls):
    """
    Inner product of CLS vectors, broadcast over leading dimensions.

    Raises
    ------
    InvalidInputError
        If the vector dimensions differ.
    """
    q_cls, p_cls = nc.as_tensor(q_cls), nc.as_tensor(p_cls)
    if q_cls.ndim == 0 or p_cls.ndim == 0 or q_cls.shape[-1] != p_cls.shape[-1]:
        raise InvalidInputError('score_de dimension mismatch: %s vs %s' % (q_cls.shape, p_cls.shape))
    return nc.tsum(q_cls * p_cls, axis=-1)


def score_cb(q_tokens, p_tokens, q_mask=None, p_mask=None):
    """
    Late interaction: sum over query tokens of the best inner product with any passage token.

    Parameters
    ----------
    q_tokens : DiffTensor or array_like, shape (..., X, d)
    p_tokens : DiffTensor or array_like, shape (..., Y, d)
        Leading dimensions broadcast against each other.
    q_mask, p_mask : np.ndarray[bool] or None
        True at real tokens, shapes ``q_tokens.shape[:-1]`` and ``p_tokens.shape[:-1]``. Padded passage tokens never
        win the maximum; padded query tokens contribute nothing.

    Raises
    ------
    InvalidInputError
        If a sequence is empty or the token dimensions differ.
    """
    q_tokens, p_tokens = nc.as_tensor(q_tokens), nc.as_tensor(p_tokens)
    if q_tokens.ndim < 2 or p_tokens.ndim < 2 or q_tokens.shape[-2] == 0 or p_tokens.shape[-2] == 0:
        raise InvalidInputError('score_cb needs non-empty token matrices')
    if q_tokens.shape[-1] != p_tokens.shape[-1]:
        raise InvalidInputError('score_cb dimension mismatch: %s vs %s' % (q_tokens.shape, p_tokens.shape))
    sims = nc.matmul(q_tokens, nc.swapaxes(p_tokens, -1, -2))
    if p_mask is not None:
        sims = sims + np.where(p_mask, 0.0, ATTENTION_MASK_VALUE)[..., np.newaxis, :]
    best = nc.tmax(sims, axis=-1)
    if q_mask is not None:
        best = best * np.asarray(q_mask, dtype=np.float64)
    return nc.tsum(best, axis=-1)


def score_ce(joint_cls, w):
    """
    Projection ``w^T cls`` of a joint query-passage CLS vector.

    Raises
    ------
    InvalidInputError
        If the dimensions differ.
    """
    joint_cls, w = nc.as_tensor(joint_cls), nc.as_tensor(w)
    if joint_cls.ndim == 0 or w.ndim != 1 or joint_cls.shape[-1] != w.shape[0]:
        raise InvalidInputError('score_ce dimension mismatch: %s vs %s' % (joint_cls.shape, w.shape))
    return nc.matmul(joint_cls, w)


class RetrievalModel:
    """
    Variant-tagged pair of layer piles with a similarity function.

    Attributes
    ----------
    variant : str
        One of ``'DE'``, ``'CB'``, ``'CE'``.
    e1 : EncoderStack
        Query encoder (DE/CB) or joint encoder (CE).
    e2 : EncoderStack or DiffTensor
        Passage encoder (DE/CB) or the shared projection vector ``w`` (CE).
    projection : Linear or None
        Appended projection, addressable as layer ``num_layers + 1``.
    cb_cls_only : bool
        Score CB layers by CLS inner product instead of late interaction.
    """

    def __init__(self, variant, num_layers, hidden_dim=32, vocab_size=512, max_query_len=16, max_passage_len=32,
                 projection_dim=None, cb_cls_only=False, ffn_dim=None, seed=0):
        if variant not in VARIANTS:
            raise InvalidParameterError('unknown model variant %r; expected one of %s' % (variant, VARIANTS))
        if variant == 'CE' and projection_dim not in (None, hidden_dim):
            raise InvalidParameterError('a CE projection must keep hidden_dim (%i) so that w stays shared'
                                        % hidden_dim)
        self.variant = variant
        self.hidden_dim = int(hidden_dim)
        self.vocab_size = int(vocab_size)
        self.max_query_len = int(max_query_len)
        self.max_passage_len = int(max_passage_len)
        self.projection_dim = None if projection_dim is None else int(projection_dim)
        self.cb_cls_only = bool(cb_cls_only)
        self.ffn_dim = ffn_dim
        self.seed = int(seed)

        rng = make_rng(seed, stream=1)
        if variant == 'CE':
            self.e1 = EncoderStack(num_layers, hidden_dim, vocab_size, max_len=2 + max_query_len + max_passage_len,
                                   ffn_dim=ffn_dim, rng=rng, name='e1')
            self.e2 = nc.parameter(rng.normal(0.0, 1.0 / np.sqrt(hidden_dim), size=hidden_dim), name='w')
        else:
            self.e1 = EncoderStack(num_layers, hidden_dim, vocab_size, max_len=1 + max_query_len, ffn_dim=ffn_dim,
                                   rng=rng, name='e1')
            self.e2 = EncoderStack(num_layers, hidden_dim, vocab_size, max_len=1 + max_passage_len, ffn_dim=ffn_dim,
                                   rng=rng, name='e2')
        self.projection = None
        if self.projection_dim is not None:
            self.projection = Linear(hidden_dim, self.projection_dim, rng, name='projection', identity=True)

    @property
    def num_layers(self):
        return self.e1.num_layers

    @property
    def effective_layers(self):
        """Transformer layers plus the appended projection, if any."""
        return self.num_layers + (1 if self.projection is not None else 0)

    @property
    def output_dim(self):
        return self.projection_dim or self.hidden_dim

    @property
    def w(self):
        if self.variant != 'CE':
            raise AttributeError('only cross encoders carry a projection vector')
        return self.e2

    def named_parameters(self):
        named = self.e1.named_parameters()
        if self.variant == 'CE':
            named.append((self.e2.name, self.e2))
        else:
            named.extend(self.e2.named_parameters())
        if self.projection is not None:
            named.extend(self.projection.named_parameters())
        return named

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def __repr__(self):
        return 'RetrievalModel(%i%s%s)' % (self.num_layers, self.variant, '+linear' if self.projection else '')

    def label(self):
        """Short label such as ``4CB``."""
        return '%i%s' % (self.num_layers, self.variant)

    # input assembly

    def _query_inputs(self, queries):
        for q in queries:
            if len(q) > self.max_query_len:
                raise InvalidInputError('query of length %i exceeds the maximum of %i' % (len(q), self.max_query_len))
        return pad_batch([(CLS_ID,) + tuple(q) for q in queries])

    def _passage_inputs(self, passages):
        for p in passages:
            if len(p) > self.max_passage_len:
                raise InvalidInputError('passage of length %i exceeds the maximum of %i'
                                        % (len(p), self.max_passage_len))
        return pad_batch([(CLS_ID,) + tuple(p) for p in passages])

    def _joint_inputs(self, queries, passages):
        self._query_inputs(queries)
        self._passage_inputs(passages)
        return pad_batch([(CLS_ID,) + tuple(q) + (SEP_ID,) + tuple(p) for q, p in zip(queries, passages)])

    def _check_layers(self, layers):
        if layers is None:
            return list(range(1, self.effective_layers + 1))
        layers = sorted(set(int(i) for i in layers))
        for i in layers:
            if not 1 <= i <= self.effective_layers:
                raise InvalidInputError('layer index %i outside [1, %i] for %r' % (i, self.effective_layers, self))
        return layers

    def _layer_tokens(self, outputs, i):
        """Token representations addressed by effective layer index ``i``."""
        if i <= self.num_layers:
            return outputs[i - 1]
        return self.projection(outputs[-1])

    # scoring

    def pool_scores(self, queries, pools, layers=None, in_batch=False, return_cls=False):
        """
        Score every query against its candidate pool at the requested layers in one forward pass.

        Parameters
        ----------
        queries : list[TokenSequence]
        pools : list[list[TokenSequence]]
            One equally sized candidate list per query.
        layers : iterable[int] or None
            Effective layer indices (all when None).
        in_batch : bool
            Extend every pool with the other queries' candidates, in batch order after the query's own (DE/CB only).
        return_cls : bool
            Also return the final-layer CLS vectors: ``{'query': (n, d), 'passage': (n * size, d)}`` for DE/CB,
            ``{'joint': (n * size, d)}`` for CE.

        Returns
        -------
        dict[int, DiffTensor]
            Scores of shape (n_queries, pool size) per layer.
        dict[str, DiffTensor]
            Only with ``return_cls``.
        """
        if len(queries) != len(pools) or len(queries) == 0:
            raise InvalidInputError('need one non-empty pool per query')
        sizes = {len(pool) for pool in pools}
        if len(sizes) != 1 or 0 in sizes:
            raise InvalidInputError('pools must be non-empty and of equal size, got sizes %s' % sorted(sizes))
        layers = self._check_layers(layers)
        top = self.effective_layers
        upto = self.num_layers if return_cls else min(max(layers), self.num_layers)
        n, size = len(queries), sizes.pop()

        if self.variant == 'CE':
            flat_q = [q for q, pool in zip(queries, pools) for _ in pool]
            flat_p = [p for pool in pools for p in pool]
            ids, mask = self._joint_inputs(flat_q, flat_p)
            outputs = self.e1.encode_batch(ids, mask, upto=upto)
            scores = {}
            for i in layers:
                cls = nc.getitem(self._layer_tokens(outputs, i), (slice(None), 0))
                scores[i] = nc.reshape(score_ce(cls, self.e2), (n, size))
            if return_cls:
                return scores, {'joint': nc.getitem(self._layer_tokens(outputs, top), (slice(None), 0))}
            return scores

        q_ids, q_mask = self._query_inputs(queries)
        flat_p = [p for pool in pools for p in pool]
        p_ids, p_mask = self._passage_inputs(flat_p)
        q_out = self.e1.encode_batch(q_ids, q_mask, upto=upto)
        p_out = self.e2.encode_batch(p_ids, p_mask, upto=upto)

        own = np.arange(n * size).reshape(n, size)
        if in_batch and n > 1:
            columns = np.stack([np.concatenate([own[b], np.delete(own, b, axis=0).reshape(-1)]) for b in range(n)])
        else:
            columns = own
        rows = np.arange(n)[:, np.newaxis]

        scores = {}
        for i in layers:
            q_tok = self._layer_tokens(q_out, i)
            p_tok = self._layer_tokens(p_out, i)
            if self.variant == 'DE' or self.cb_cls_only:
                q_cls = nc.getitem(q_tok, (slice(None), 0))
                p_cls = nc.getitem(p_tok, (slice(None), 0))
                every = nc.matmul(q_cls, nc.swapaxes(p_cls, 0, 1))
                scores[i] = nc.getitem(every, (rows, columns))
            else:
                gathered = nc.getitem(p_tok, columns)
                scores[i] = score_cb(nc.reshape(q_tok, (n, 1) + q_tok.shape[1:]), gathered,
                                     q_mask=q_mask[:, np.newaxis, :], p_mask=p_mask[columns])
        if return_cls:
            return scores, {'query': nc.getitem(self._layer_tokens(q_out, top), (slice(None), 0)),
                            'passage': nc.getitem(self._layer_tokens(p_out, top), (slice(None), 0))}
        return scores

    def layer_score(self, i, q, p):
        """
        Similarity of one query-passage pair at effective layer ``i``.

        Raises
        ------
        InvalidInputError
            If ``i`` is outside ``[1, effective_layers]``.
        """
        q = q if isinstance(q, TokenSequence) else TokenSequence(tuple(q))
        p = p if isinstance(p, TokenSequence) else TokenSequence(tuple(p))
        with nc.no_grad():
            return float(self.pool_scores([q], [[p]], layers=[i])[i].values[0, 0])

    def score(self, q, p):
        """Final similarity f(q, p)."""
        return self.layer_score(self.effective_layers, q, p)

    def score_candidates(self, query, candidates, batch_size=64):
        """Final-layer scores of one query against a list of passages, without recording gradients."""
        top = self.effective_layers
        out = []
        with nc.no_grad():
            for start in range(0, len(candidates), batch_size):
                chunk = list(candidates[start:start + batch_size])
                out.append(self.pool_scores([query], [chunk], layers=[top])[top].values[0])
        return np.concatenate(out) if out else np.zeros(0)

    def _embed(self, stack, ids, mask):
        outputs = stack.encode_batch(ids, mask)
        return self._layer_tokens(outputs, self.effective_layers).values[:, 0, :]

    def embed_queries(self, queries, batch_size=256):
        """Final CLS embeddings of queries (DE and CB), shape (n, output_dim)."""
        self._require_separate_encoders()
        return self._embed_all(self.e1, self._query_inputs, queries, batch_size)

    def embed_passages(self, passages, batch_size=256):
        """Final CLS embeddings of passages (DE and CB), shape (n, output_dim)."""
        self._require_separate_encoders()
        return self._embed_all(self.e2, self._passage_inputs, passages, batch_size)

    def _embed_all(self, stack, assemble, sequences, batch_size):
        rows = []
        with nc.no_grad():
            for start in range(0, len(sequences), batch_size):
                ids, mask = assemble(sequences[start:start + batch_size])
                rows.append(self._embed(stack, ids, mask))
        if not rows:
            return np.zeros((0, self.output_dim))
        return np.concatenate(rows, axis=0)

    def _require_separate_encoders(self):
        if self.variant == 'CE':
            raise InvalidInputError('a cross encoder does not produce standalone embeddings')

    # persistence

    def header(self):
        return {
            'format': CHECKPOINT_FORMAT,
            'variant': self.variant,
            'num_layers': self.num_layers,
            'hidden_dim': self.hidden_dim,
            'vocab_size': self.vocab_size,
            'max_query_len': self.max_query_len,
            'max_passage_len': self.max_passage_len,
            'projection_dim': self.projection_dim,
            'cb_cls_only': self.cb_cls_only,
            'ffn_dim': self.ffn_dim,
            'seed': self.seed,
        }

    def state_dict(self):
        return OrderedDict((name, p.values.copy()) for name, p in self.named_parameters())

    def load_state_dict(self, state):
        named = self.named_parameters()
        missing = [name for name, _ in named if name not in state]
        if missing or len(state) != len(named):
            raise ConfigurationError('parameter names do not match %r (missing: %s)' % (self, missing[:3]))
        for name, p in named:
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != p.shape:
                raise ConfigurationError('parameter %s has shape %s, expected %s' % (name, values.shape, p.shape))
            p.values[...] = values

    def clone(self):
        """Independent copy with identical parameters."""
        twin = RetrievalModel.from_header(self.header())
        twin.load_state_dict(self.state_dict())
        return twin

    @classmethod
    def from_header(cls, header):
        return cls(header['variant'], header['num_layers'], hidden_dim=header['hidden_dim'],
                   vocab_size=header['vocab_size'], max_query_len=header['max_query_len'],
                   max_passage_len=header['max_passage_len'], projection_dim=header['projection_dim'],
                   cb_cls_only=header['cb_cls_only'], ffn_dim=header['ffn_dim'], seed=header['seed'])

    def save(self, path):
        """Write the header and every named parameter array to an ``.npz`` container."""
        arrays = dict(self.state_dict())
        arrays['__header__'] = np.array(json.dumps(self.header(), sort_keys=True))
        with open(path, 'wb') as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as data:
            if '__header__' not in data.files:
                raise ConfigurationError('%s is not a leadkd checkpoint' % path)
            header = json.loads(str(data['__header__']))
            if header.get('format') != CHECKPOINT_FORMAT:
                raise ConfigurationError('%s has unsupported checkpoint format %r' % (path, header.get('format')))
            model = cls.from_header(header)
            model.load_state_dict({k: data[k] for k in data.files if k != '__header__'})
        return model


def layer_score(model, i, q, p):
    """Similarity of ``q`` and ``p`` at effective layer ``i`` of ``model``."""
    return model.layer_score(i, q, p)
