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

"""Objectives and their analytic gradients with respect to policy logits.

All gradients are first accumulated with respect to the log-probabilities
and then pulled back through the log-softmax, so every returned gradient
row sums to zero. Pairwise terms use the stable ``log_expit`` form and
never exponentiate a log-ratio.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, xlogy
from scipy.stats import entropy as _scipy_entropy

LOGGER = logging.getLogger(__name__)

NEGATIVE_SOURCES = ('uniform', 'self_play', 'beam', 'mixed')
DIST_TOL = 1e-9


class LossError(ValueError):
    """Invalid loss inputs."""


@dataclass(frozen=True)
class PreferenceTriple:
    """A positive item with one or more rejected items for one context."""

    context: int
    chosen: int
    rejected: tuple
    source: str = 'uniform'

    def __post_init__(self):
        rejected = tuple(int(item) for item in self.rejected)
        object.__setattr__(self, 'rejected', rejected)
        if not rejected:
            raise LossError("a preference triple needs at least one rejected item")
        if self.chosen in rejected:
            raise LossError("chosen item %d is also rejected" % self.chosen)
        if len(set(rejected)) != len(rejected):
            raise LossError("duplicate rejected items in %s" % (rejected, ))
        if self.source not in NEGATIVE_SOURCES:
            raise LossError("unknown negative source %r" % self.source)


@dataclass
class LossValue:
    """Scalar objective with its logit gradient."""

    value: float
    grad: np.ndarray


def _pull_back(grad_logp, probs):
    """Gradient w.r.t. logits from a gradient w.r.t. log-softmax outputs."""
    return grad_logp - probs * grad_logp.sum(axis=-1, keepdims=True)


def _check_distribution(p, n_items, name):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (n_items, ):
        raise LossError("%s must have %d entries, got shape %s" % (name, n_items, p.shape))
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise LossError("%s must be finite and non-negative" % name)
    if abs(p.sum() - 1.0) > DIST_TOL:
        raise LossError("%s must sum to 1, got %.15g" % (name, p.sum()))
    return p


def _check_pair(policy, ref_policy, beta):
    if policy.shape != ref_policy.shape:
        raise LossError("policy shape %s differs from reference shape %s" % (policy.shape, ref_policy.shape))
    if not beta > 0:
        raise LossError("beta must be positive, got %r" % beta)


def pairwise_dpo_loss(policy, ref_policy, pairs, beta):
    """Weighted sum of ``-log sigma(beta * margin)`` over flattened *pairs*.

    *pairs* is the ``(contexts, chosen, rejected, weights)`` tuple of
    :func:`flatten_triples`; training loops flatten a batch once and reuse it.
    """
    _check_pair(policy, ref_policy, beta)
    contexts, chosen, rejected, weights = pairs
    log_probs = policy.log_probs()
    ratio = log_probs - ref_policy.log_probs()
    margin = ratio[contexts, chosen] - ratio[contexts, rejected]
    value = np.sum(weights * -log_expit(beta * margin))
    coef = weights * beta * expit(-beta * margin)
    grad_logp = np.zeros(policy.shape)
    np.add.at(grad_logp, (contexts, chosen), -coef)
    np.add.at(grad_logp, (contexts, rejected), coef)
    return LossValue(float(value), _pull_back(grad_logp, np.exp(log_probs)))


def flatten_triples(triples):
    """Expand triples into per-pair arrays weighted ``1 / (n_triples * n_rejected)``."""
    contexts, chosen, rejected, weights = [], [], [], []
    n_triples = len(triples)
    for triple in triples:
        n_rejected = len(triple.rejected)
        for item in triple.rejected:
            contexts.append(triple.context)
            chosen.append(triple.chosen)
            rejected.append(item)
            weights.append(1.0 / (n_triples * n_rejected))
    return (np.array(contexts, dtype=np.int64), np.array(chosen, dtype=np.int64),
            np.array(rejected, dtype=np.int64), np.array(weights))


def sft_loss(policy, interactions):
    """Mean negative log-likelihood of the logged positives."""
    if len(interactions) == 0:
        raise LossError("sft_loss needs at least one interaction")
    counts = interactions.counts
    if counts.shape != policy.shape:
        raise LossError("interaction table %s does not match policy %s" % (counts.shape, policy.shape))
    n_records = len(interactions)
    log_probs = policy.log_probs()
    value = -np.sum(counts * log_probs) / n_records
    grad = (counts.sum(axis=1, keepdims=True) * np.exp(log_probs) - counts) / n_records
    return LossValue(float(value), grad)


def sft_expected_loss(policy, p, context=None):
    """Cross-entropy ``-sum p log pi`` against an exact target.

    With *context* given, *p* is that context's target and only its row of
    the gradient is non-zero. Without it, *p* is a full
    ``(n_contexts, n_items)`` target table and contexts are weighted
    equally.
    """
    log_probs = policy.log_probs()
    grad = np.zeros(policy.shape)
    if context is None:
        target = np.asarray(p, dtype=np.float64)
        if target.shape != policy.shape:
            raise LossError("target table %s does not match policy %s" % (target.shape, policy.shape))
        for row in target:
            _check_distribution(row, policy.n_items, "p")
        weight = 1.0 / policy.n_contexts
        value = -weight * np.sum(target * log_probs)
        grad[:] = weight * (np.exp(log_probs) - target)
    else:
        target = _check_distribution(p, policy.n_items, "p")
        row_logp = log_probs[context]
        value = -np.sum(target * row_logp)
        grad[context] = np.exp(row_logp) - target
    return LossValue(float(value), grad)


def entropy(p):
    """Shannon entropy in nats."""
    return float(_scipy_entropy(np.asarray(p, dtype=np.float64)))


def forward_kl(p, policy, context):
    """``KL(p || pi(.|context))`` in nats.

    Returns ``inf`` (with a warning) when the policy has underflowed to zero
    on an item where *p* has mass.
    """
    p = _check_distribution(p, policy.n_items, "p")
    log_probs = policy.log_probs(context)
    support = p > 0
    if np.any(np.exp(log_probs[support]) == 0):
        LOGGER.warning("Policy underflows to zero on the support of p, KL is infinite")
        return np.inf
    return float(max(np.sum(xlogy(p, p)) - np.sum(p[support] * log_probs[support]), 0.0))


def dpo_pair_loss(policy, ref_policy, triple, beta):
    """DPO loss of a triple with exactly one rejected item."""
    if len(triple.rejected) != 1:
        raise LossError("dpo_pair_loss takes one rejected item, got %d" % len(triple.rejected))
    return multi_negative_dpo_loss(policy, ref_policy, triple, beta)


def multi_negative_dpo_loss(policy, ref_policy, triple, beta):
    """Mean of the pairwise DPO terms over the rejected items of *triple*."""
    return dpo_batch_loss(policy, ref_policy, [triple], beta)


def dpo_batch_loss(policy, ref_policy, triples, beta):
    """Mean over *triples* of their (multi-negative) DPO losses."""
    if len(triples) == 0:
        raise LossError("empty preference batch")
    pairs = flatten_triples(triples)
    contexts, chosen, rejected = pairs[:3]
    if np.any(contexts < 0) or np.any(contexts >= policy.n_contexts):
        raise LossError("triple context out of range")
    if max(chosen.max(), rejected.max()) >= policy.n_items or min(chosen.min(), rejected.min()) < 0:
        raise LossError("triple item out of range")
    return pairwise_dpo_loss(policy, ref_policy, pairs, beta)


def exact_weighted_dpo_loss(policy, ref_policy, p, q, weight, beta, context):
    """Exact DPO objective with every ``(chosen, rejected)`` pair enumerated.

    The pair ``(w, l)`` has weight ``p(w) q(l) weight(l)``. ``weight = 1``
    gives the exact DPO objective under negatives ``q``; ``weight = pi_t/q``
    turns the negatives into draws from ``pi_t``. Diagonal pairs are kept and
    contribute their (constant) ``ln 2``.
    """
    _check_pair(policy, ref_policy, beta)
    n_items = policy.n_items
    p = _check_distribution(p, n_items, "p")
    q = _check_distribution(q, n_items, "q")
    weight = np.broadcast_to(np.asarray(weight, dtype=np.float64), (n_items, ))
    if not np.all(np.isfinite(weight)) or np.any(weight < 0):
        raise LossError("weight must be finite and non-negative")
    if np.any((q == 0) & (weight > 0)):
        raise LossError("q vanishes where the weight is positive")

    log_probs = policy.log_probs(context)
    ratio = log_probs - ref_policy.log_probs(context)
    margin = ratio[:, np.newaxis] - ratio[np.newaxis, :]
    pair_weight = p[:, np.newaxis] * (q * weight)[np.newaxis, :]
    value = np.sum(pair_weight * -log_expit(beta * margin))
    coef = pair_weight * beta * expit(-beta * margin)
    grad_logp = coef.sum(axis=0) - coef.sum(axis=1)
    grad = np.zeros(policy.shape)
    grad[context] = _pull_back(grad_logp, np.exp(log_probs))
    return LossValue(float(value), grad)
