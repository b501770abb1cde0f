#!/usr/bin/env python
# -*- coding: utf-8 -*-
#
# Copyright (c) 2024 Pyprefsim developers
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <http://www.gnu.org/licenses/>.

"""Tabular softmax policies over an item catalog."""

import json
import logging

import numpy as np
from scipy.special import log_softmax, softmax

LOGGER = logging.getLogger(__name__)


class PolicyError(ValueError):
    """Invalid policy data or query."""


class Policy(object):
    """Per-context logit table ``(n_contexts, n_items)``.

    Instances are immutable snapshots: the logits are copied and locked on
    construction. Training code works on plain arrays and wraps the result
    in a new :class:`Policy`.
    """

    def __init__(self, logits):
        logits = np.array(logits, dtype=np.float64)
        if logits.ndim == 1:
            logits = logits[np.newaxis, :]
        if logits.ndim != 2 or logits.shape[0] < 1 or logits.shape[1] < 1:
            raise PolicyError("logits must be a non-empty (contexts, items) table")
        if not np.all(np.isfinite(logits)):
            raise PolicyError("logits must be finite")
        logits.flags.writeable = False
        self.logits = logits

    @classmethod
    def uniform(cls, n_contexts, n_items):
        """All-zero logits."""
        return cls(np.zeros((n_contexts, n_items)))

    @classmethod
    def from_probabilities(cls, probs):
        """Policy whose softmax reproduces *probs* (which must be positive)."""
        probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
        if np.any(probs <= 0):
            raise PolicyError("probabilities must be strictly positive")
        logits = np.log(probs)
        return cls(logits - logits.mean(axis=1, keepdims=True))

    @property
    def n_contexts(self):
        return self.logits.shape[0]

    @property
    def n_items(self):
        return self.logits.shape[1]

    @property
    def shape(self):
        return self.logits.shape

    def _row(self, context):
        if not 0 <= context < self.n_contexts:
            raise PolicyError("context %d out of range 0..%d" % (context, self.n_contexts - 1))
        return self.logits[context]

    def probs(self, context=None):
        """Softmax of one context row, or the whole table when *context* is None."""
        if context is None:
            return softmax(self.logits, axis=1)
        return softmax(self._row(context))

    def log_probs(self, context=None):
        """Log-softmax of one context row, or the whole table."""
        if context is None:
            return log_softmax(self.logits, axis=1)
        return log_softmax(self._row(context))

    def centered(self):
        """Same distribution with zero-mean logit rows."""
        return Policy(self.logits - self.logits.mean(axis=1, keepdims=True))

    def copy(self):
        return Policy(self.logits)

    def with_logits(self, logits):
        """New snapshot with *logits*, checking the shape is unchanged."""
        if np.shape(logits) != self.shape:
            raise PolicyError("logit shape %s does not match %s" % (np.shape(logits), self.shape))
        return Policy(logits)

    def to_dict(self):
        return {"shape": list(self.shape), "logits": self.logits.ravel().tolist()}

    @classmethod
    def from_dict(cls, data):
        try:
            shape = tuple(data["shape"])
            flat = np.asarray(data["logits"], dtype=np.float64)
        except KeyError as err:
            raise PolicyError("policy document misses %s" % err)
        if len(shape) != 2 or flat.size != shape[0] * shape[1]:
            raise PolicyError("policy shape %s does not match %d logits" % (shape, flat.size))
        return cls(flat.reshape(shape))

    def save(self, filename):
        with open(filename, 'w') as fid:
            json.dump(self.to_dict(), fid)

    @classmethod
    def load(cls, filename):
        with open(filename, 'r') as fid:
            return cls.from_dict(json.load(fid))

    def __eq__(self, other):
        if not isinstance(other, Policy):
            return NotImplemented
        return np.array_equal(self.logits, other.logits)

    def __repr__(self):
        return "Policy(n_contexts=%d, n_items=%d)" % self.shape


def softmax_probs(policy, context):
    """Return ``pi(.|context)``."""
    return policy.probs(context)


def sample_item(policy, context, rng):
    """Draw one item from ``pi(.|context)`` with the generator *rng*."""
    return int(rng.choice(policy.n_items, p=policy.probs(context)))


def top_k_items(policy, context, k):
    """The *k* most probable items, ties broken by ascending item id."""
    if not 1 <= k <= policy.n_items:
        raise PolicyError("k must be in 1..%d, got %d" % (policy.n_items, k))
    row = policy._row(context)
    # softmax is monotone, so ranking the logits is exact
    order = np.lexsort((np.arange(policy.n_items), -row))
    return order[:k].tolist()


def beam_negatives(policy, context, n, exclude):
    """Tabular beam: the *n* most probable items other than *exclude*.

    The beam holds the top ``2n`` items; duplicates and *exclude* are
    removed and the best *n* survivors returned. Fewer than *n* items come
    back only when the beam is cut by the catalog size.
    """
    if n < 1:
        raise PolicyError("n must be positive")
    if n > policy.n_items - 1:
        raise PolicyError("cannot draw %d negatives from %d items" % (n, policy.n_items))
    beam = top_k_items(policy, context, min(2 * n, policy.n_items))
    survivors = []
    for item in beam:
        if item != exclude and item not in survivors:
            survivors.append(item)
    return survivors[:n]
