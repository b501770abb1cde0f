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

"""SFT, DPO and the self-play loop that alternates them.

One self-play iteration takes the current snapshot ``pi_t`` and

1. subsamples the logged positives,
2. pairs every positive with negatives drawn by the configured strategy
   (from ``pi_t`` itself for self-play),
3. runs an SFT step on the positives,
4. runs a DPO step on the pairs, starting from the SFT result.

All optimization is full-batch gradient descent on the logit table.
"""

import json
import logging
import numbers
import os
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from pyprefsim import child_rng
from pyprefsim.losses import (PreferenceTriple, exact_weighted_dpo_loss, flatten_triples,
                              pairwise_dpo_loss, sft_expected_loss, sft_loss)
from pyprefsim.metrics import write_metrics_csv
from pyprefsim.policy import Policy, beam_negatives, top_k_items

LOGGER = logging.getLogger(__name__)

NEG_STRATEGIES = ('uniform', 'self_play', 'beam', 'mixed')
REFERENCES = ('post_sft', 'pre_sft')
PHASES = ('init', 'post_sft', 'post_dpo')


class ConfigError(ValueError):
    """Invalid configuration value; the message starts with the field path."""


class DivergenceError(RuntimeError):
    """A training step produced a non-finite loss or logits."""

    def __init__(self, step, epoch, last_loss):
        super().__init__("%s step diverged at epoch %d (last finite loss %r)" % (step, epoch, last_loss))
        self.step = step
        self.epoch = epoch
        self.last_loss = last_loss


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters of one training arm.

    A non-zero ``sft_epochs`` replaces ``epochs_per_step`` for the SFT steps.
    """

    beta: float = 0.5
    lr_sft: float = 0.5
    lr_dpo: float = 0.1
    epochs_per_step: int = 200
    sft_epochs: int = 0
    iterations: int = 5
    neg_strategy: str = 'self_play'
    n_negatives: int = 1
    contamination: float = 0.0
    subsample_fraction: float = 0.5
    seed: int = 0
    reference: str = 'post_sft'
    max_resample: int = 100

    def __post_init__(self):
        def fail(name, msg):
            raise ConfigError("train.%s: %s, got %r" % (name, msg, getattr(self, name)))

        for item in fields(self):
            value = getattr(self, item.name)
            if isinstance(item.default, str):
                if not isinstance(value, str):
                    fail(item.name, "must be a string")
            elif isinstance(item.default, int):
                if isinstance(value, bool) or not isinstance(value, numbers.Integral):
                    fail(item.name, "must be an integer")
            elif isinstance(value, bool) or not isinstance(value, numbers.Real):
                fail(item.name, "must be a number")

        if not self.beta > 0:
            fail('beta', "must be positive")
        for name in ('lr_sft', 'lr_dpo'):
            if not getattr(self, name) >= 0:
                fail(name, "must be non-negative")
        for name in ('epochs_per_step', 'sft_epochs', 'max_resample'):
            if getattr(self, name) < 0:
                fail(name, "must be non-negative")
        for name in ('iterations', 'n_negatives'):
            if getattr(self, name) < 1:
                fail(name, "must be at least 1")
        if self.neg_strategy not in NEG_STRATEGIES:
            fail('neg_strategy', "must be one of %s" % (NEG_STRATEGIES, ))
        if not 0 <= self.contamination <= 1:
            fail('contamination', "must be in [0, 1]")
        if not 0 < self.subsample_fraction <= 1:
            fail('subsample_fraction', "must be in (0, 1]")
        if self.reference not in REFERENCES:
            fail('reference', "must be one of %s" % (REFERENCES, ))

    @classmethod
    def field_names(cls):
        return [item.name for item in fields(cls)]

    def to_dict(self):
        return asdict(self)


def _uniform_negatives(n_items, chosen, count, rng):
    if count == 1:
        draws = np.array([rng.integers(0, n_items - 1)])
    else:
        draws = rng.choice(n_items - 1, size=count, replace=False)
    # skip over the chosen item
    return (draws + (draws >= chosen)).tolist()


class _NegativeSampler(object):
    """Draws rejected items for one batch.

    Self-play, uniform and contamination coins use separate generators
    split off the caller's *rng*, so a contamination rate of 0 or 1
    reproduces the pure strategies draw for draw.
    """

    def __init__(self, policy, config, rng):
        self.policy = policy
        self.config = config
        self.n_items = policy.n_items
        seeds = np.random.SeedSequence(rng.integers(0, 2 ** 32, size=4)).spawn(3)
        self.self_play_rng, self.uniform_rng, self.coin_rng = (np.random.default_rng(s) for s in seeds)
        self._cdf = np.cumsum(policy.probs(), axis=1)
        self._ranking = {}
        self._beam = {}
        self.fallbacks = 0

    def ranking(self, context):
        if context not in self._ranking:
            self._ranking[context] = top_k_items(self.policy, context, self.n_items)
        return self._ranking[context]

    def self_play(self, context, chosen):
        count = self.config.n_negatives
        cdf = self._cdf[context]
        drawn = []
        for _ in range(count + self.config.max_resample):
            item = min(int(np.searchsorted(cdf, self.self_play_rng.random() * cdf[-1], side='right')),
                       self.n_items - 1)
            if item != chosen and item not in drawn:
                drawn.append(item)
                if len(drawn) == count:
                    return drawn
        self.fallbacks += 1
        for item in self.ranking(context):
            if item != chosen and item not in drawn:
                drawn.append(item)
                if len(drawn) == count:
                    break
        return drawn

    def uniform(self, chosen):
        return _uniform_negatives(self.n_items, chosen, self.config.n_negatives, self.uniform_rng)

    def beam(self, context, chosen):
        key = (context, chosen)
        if key not in self._beam:
            self._beam[key] = beam_negatives(self.policy, context, self.config.n_negatives, chosen)
        return list(self._beam[key])

    def _uniform_one(self, chosen):
        return _uniform_negatives(self.n_items, chosen, 1, self.uniform_rng)[0]

    def mixed(self, context, chosen):
        base = self.self_play(context, chosen)
        swap = self.coin_rng.random(len(base)) < self.config.contamination
        if not swap.any():
            return base, 'self_play'
        if swap.all():
            return self.uniform(chosen), 'uniform'
        kept = [own for own, use_other in zip(base, swap) if not use_other]
        rejected = []
        for own, use_other in zip(base, swap):
            if not use_other:
                rejected.append(own)
                continue
            # redraw collisions with kept or earlier items
            item = self._uniform_one(chosen)
            while item in kept or item in rejected:
                item = self._uniform_one(chosen)
            rejected.append(item)
        return rejected, 'mixed'

    def draw(self, context, chosen):
        strategy = self.config.neg_strategy
        if strategy == 'uniform':
            return self.uniform(chosen), 'uniform'
        if strategy == 'self_play':
            return self.self_play(context, chosen), 'self_play'
        if strategy == 'beam':
            return self.beam(context, chosen), 'beam'
        return self.mixed(context, chosen)


def build_preference_triples(policy_t, interactions, config, rng):
    """One :class:`PreferenceTriple` per positive, negatives per *config*."""
    if len(interactions) == 0:
        raise ConfigError("interactions: no positives to build preference pairs from")
    if policy_t.n_items < 2:
        raise ConfigError("catalog.n_items: a single item leaves no valid negative")
    if config.n_negatives > policy_t.n_items - 1:
        raise ConfigError("train.n_negatives: %d negatives requested from %d items"
                          % (config.n_negatives, policy_t.n_items))
    sampler = _NegativeSampler(policy_t, config, rng)
    triples = []
    for context, chosen in zip(interactions.contexts.tolist(), interactions.items.tolist()):
        rejected, source = sampler.draw(context, chosen)
        triples.append(PreferenceTriple(context, chosen, tuple(rejected), source))
    if sampler.fallbacks:
        LOGGER.warning("Self-play sampling fell back to the ranking for %d of %d positives",
                       sampler.fallbacks, len(triples))
    return triples


def _descend(step, policy, lr, epochs, loss_fn):
    """Full-batch gradient descent on *loss_fn* (Policy -> LossValue)."""
    if lr == 0 or epochs == 0:
        return policy.copy()
    logits = np.array(policy.logits)
    first = last = None
    for epoch in range(epochs):
        result = loss_fn(Policy(logits))
        if not np.isfinite(result.value) or not np.all(np.isfinite(result.grad)):
            raise DivergenceError(step, epoch, last)
        if first is None:
            first = result.value
        last = result.value
        logits = logits - lr * result.grad
        if not np.all(np.isfinite(logits)):
            raise DivergenceError(step, epoch, last)
    LOGGER.debug("%s step: loss %.6g -> %.6g over %d epochs", step, first, last, epochs)
    return Policy(logits)


def sft_step(policy, interactions, config, target=None):
    """SFT on the logged positives, or on an exact *target* table if given."""
    if target is not None:
        return _descend('SFT', policy, config.lr_sft, config.sft_epochs or config.epochs_per_step,
                        lambda current: sft_expected_loss(current, target))
    if len(interactions) == 0:
        raise ConfigError("interactions: SFT needs at least one positive")
    return _descend('SFT', policy, config.lr_sft, config.sft_epochs or config.epochs_per_step,
                    lambda current: sft_loss(current, interactions))


def dpo_step(policy, ref_snapshot, triples, config):
    """DPO on *triples* against the frozen *ref_snapshot*."""
    if len(triples) == 0:
        raise ConfigError("triples: DPO needs at least one preference pair")
    pairs = flatten_triples(triples)
    return _descend('DPO', policy, config.lr_dpo, config.epochs_per_step,
                    lambda current: pairwise_dpo_loss(current, ref_snapshot, pairs, config.beta))


def dpo_step_expected(policy, ref_snapshot, p, q, config, weight=1.0, context=0):
    """DPO on the exact expectation over ``(chosen ~ p, rejected ~ q)`` for one context.

    ``weight = pi_t / q`` gives the exact self-play objective.
    """
    return _descend('DPO', policy, config.lr_dpo, config.epochs_per_step,
                    lambda current: exact_weighted_dpo_loss(current, ref_snapshot, p, q, weight,
                                                            config.beta, context))


@dataclass
class Trajectory:
    """Snapshots and metrics of one training run.

    *snapshots* holds ``(iteration, phase, Policy)`` in training order;
    *references* the DPO reference used at each iteration.
    """

    config: TrainConfig
    snapshots: list = field(default_factory=list)
    references: list = field(default_factory=list)
    metrics: list = field(default_factory=list)

    def record(self, iteration, phase, policy, evaluator=None):
        if self.snapshots:
            last_iteration, last_phase, _ = self.snapshots[-1]
            if (iteration, PHASES.index(phase)) <= (last_iteration, PHASES.index(last_phase)):
                raise ValueError("snapshot (%d, %s) out of order" % (iteration, phase))
        self.snapshots.append((iteration, phase, policy))
        if evaluator is not None:
            self.metrics.append(evaluator(policy, iteration, phase))

    @property
    def final(self):
        return self.snapshots[-1][2]

    def snapshot(self, iteration, phase):
        for snap_iteration, snap_phase, policy in self.snapshots:
            if (snap_iteration, snap_phase) == (iteration, phase):
                return policy
        raise KeyError((iteration, phase))

    def save(self, directory, arm=''):
        """Write config.json, per-phase checkpoints and metrics.csv under *directory*."""
        checkpoints = os.path.join(directory, 'checkpoints')
        os.makedirs(checkpoints, exist_ok=True)
        with open(os.path.join(directory, 'config.json'), 'w') as fid:
            json.dump(self.config.to_dict(), fid, indent=2, sort_keys=True)
        for iteration, phase, policy in self.snapshots:
            policy.save(os.path.join(checkpoints, 'iter%02d_%s.json' % (iteration, phase)))
        if self.metrics:
            write_metrics_csv(os.path.join(directory, 'metrics.csv'), self.metrics, arm=arm)
        LOGGER.debug("Trajectory with %d snapshots saved in %s", len(self.snapshots), directory)


def sprec_run(init_policy, interactions, config, evaluator=None, seed_seq=None):
    """Run ``config.iterations`` self-play iterations from *init_policy*.

    *evaluator*, if given, is called as ``evaluator(policy, iteration,
    phase)`` on every snapshot and its results are kept in
    ``Trajectory.metrics``. Random streams derive from *seed_seq* (default
    ``SeedSequence(config.seed)``) keyed by iteration.
    """
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(config.seed)
    trajectory = Trajectory(config)
    trajectory.record(0, 'init', init_policy, evaluator)
    current = init_policy
    for iteration in range(1, config.iterations + 1):
        batch = interactions.subsample(config.subsample_fraction, child_rng(seed_seq, iteration, 0))
        triples = build_preference_triples(current, batch, config, child_rng(seed_seq, iteration, 1))
        LOGGER.info("Iteration %d/%d: %d positives, %s negatives",
                    iteration, config.iterations, len(batch), config.neg_strategy)
        post_sft = sft_step(current, batch, config)
        reference = post_sft if config.reference == 'post_sft' else current
        post_dpo = dpo_step(post_sft, reference, triples, config)
        trajectory.references.append(reference)
        trajectory.record(iteration, 'post_sft', post_sft, evaluator)
        trajectory.record(iteration, 'post_dpo', post_dpo, evaluator)
        current = post_dpo
    return trajectory


def train_dpo_baseline(init_policy, interactions, config, evaluator=None, seed_seq=None):
    """One SFT phase then one DPO phase with single uniform negatives."""
    baseline = replace(config, iterations=1, neg_strategy='uniform', n_negatives=1, contamination=0.0)
    return sprec_run(init_policy, interactions, baseline, evaluator, seed_seq)


def train_sft_baseline(init_policy, interactions, config, evaluator=None, seed_seq=None):
    """A single SFT phase on all logged positives."""
    trajectory = Trajectory(replace(config, iterations=1))
    trajectory.record(0, 'init', init_policy, evaluator)
    trajectory.record(1, 'post_sft', sft_step(init_policy, interactions, config), evaluator)
    return trajectory
