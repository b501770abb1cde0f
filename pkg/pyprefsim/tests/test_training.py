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

"""Test SFT, DPO and the self-play loop."""

import json
import logging
import os
from dataclasses import replace

import numpy as np
import pytest

from pyprefsim.catalog import (InteractionSet, assign_popularity_groups, build_catalog, empirical_distribution,
                               sample_interactions)
from pyprefsim.losses import LossError, LossValue, PreferenceTriple
from pyprefsim.metrics import evaluate_policy, expected_group_share, read_metrics_csv
from pyprefsim.policy import Policy
from pyprefsim.theory import closed_form_optimal_policy
from pyprefsim.training import (ConfigError, DivergenceError, TrainConfig, Trajectory, _descend,
                                build_preference_triples, dpo_step, dpo_step_expected, sft_step, sprec_run,
                                train_dpo_baseline, train_sft_baseline)


@pytest.fixture
def world():
    """A small catalog with train and eval logs."""
    catalog = assign_popularity_groups(build_catalog(n_items=12, n_categories=3, seed=1), 4)
    train = sample_interactions(catalog, 300, seed=2)
    evaluation = sample_interactions(catalog, 60, seed=3)
    return catalog, train, evaluation


def _fast(**kwargs):
    defaults = dict(lr_sft=2.0, lr_dpo=0.5, epochs_per_step=20, iterations=2)
    defaults.update(kwargs)
    return TrainConfig(**defaults)


class TestTrainConfig:
    """Test hyper-parameter validation."""

    @pytest.mark.parametrize("name, value", [('beta', 0.0), ('lr_sft', -1.0), ('iterations', 0),
                                             ('n_negatives', 0), ('neg_strategy', 'oracle'),
                                             ('contamination', 1.5), ('subsample_fraction', 0.0),
                                             ('reference', 'frozen'), ('epochs_per_step', 2.5),
                                             ('iterations', True), ('neg_strategy', 3),
                                             ('beta', 'high'), ('sft_epochs', -1)])
    def test_invalid(self, name, value):
        """Each bad value names its field."""
        with pytest.raises(ConfigError, match=r"^train\.%s:" % name):
            TrainConfig(**{name: value})

    def test_defaults(self):
        """Defaults are valid and serializable."""
        config = TrainConfig()
        assert config.to_dict()["reference"] == 'post_sft'
        assert 'contamination' in TrainConfig.field_names()
        assert TrainConfig(beta=1, lr_dpo=0).beta == 1


class TestNegatives:
    """Test the negative samplers."""

    def _positives(self, item, count, n_items):
        return InteractionSet([0] * count, [item] * count, 1, n_items)

    def test_uniform_excludes_positive(self):
        """Uniform negatives cover every other item and never the positive."""
        positives = self._positives(2, 3000, 5)
        triples = build_preference_triples(Policy.uniform(1, 5), positives, TrainConfig(neg_strategy='uniform'),
                                           np.random.default_rng(0))
        rejected = [triple.rejected[0] for triple in triples]
        assert 2 not in rejected
        np.testing.assert_allclose(np.bincount(rejected, minlength=5) / 3000, [0.25, 0.25, 0, 0.25, 0.25],
                                   atol=0.03)
        assert {triple.source for triple in triples} == {'uniform'}

    def test_multiple_uniform(self):
        """Several uniform negatives are distinct."""
        triples = build_preference_triples(Policy.uniform(1, 6), self._positives(0, 50, 6),
                                           TrainConfig(neg_strategy='uniform', n_negatives=3),
                                           np.random.default_rng(1))
        for triple in triples:
            assert len(triple.rejected) == 3
            assert 0 not in triple.rejected

    def test_self_play_follows_policy(self):
        """Self-play negatives follow pi_t restricted to the other items."""
        policy = Policy.from_probabilities([0.5, 0.3, 0.2])
        triples = build_preference_triples(policy, self._positives(0, 5000, 3),
                                           TrainConfig(neg_strategy='self_play'), np.random.default_rng(2))
        rejected = np.array([triple.rejected[0] for triple in triples])
        assert np.mean(rejected == 1) == pytest.approx(0.6, abs=0.03)
        assert {triple.source for triple in triples} == {'self_play'}

    def test_self_play_fallback(self, caplog):
        """A policy concentrated on the positive falls back to its ranking."""
        policy = Policy([[60.0, 1.0, 0.0]])
        config = TrainConfig(neg_strategy='self_play', max_resample=5)
        with caplog.at_level(logging.WARNING):
            triples = build_preference_triples(policy, self._positives(0, 4, 3), config, np.random.default_rng(3))
        assert [triple.rejected for triple in triples] == [(1, )] * 4
        assert "fell back" in caplog.text

    def test_beam(self):
        """Beam negatives are the most probable other items."""
        policy = Policy([[3.0, 2.0, 1.0, 0.0]])
        triples = build_preference_triples(policy, InteractionSet([0, 0], [0, 2], 1, 4),
                                           TrainConfig(neg_strategy='beam', n_negatives=2),
                                           np.random.default_rng(4))
        assert [triple.rejected for triple in triples] == [(1, 2), (0, 1)]
        assert triples[0].source == 'beam'

    @pytest.mark.parametrize("contamination, pure", [(0.0, 'self_play'), (1.0, 'uniform')])
    def test_mixed_extremes(self, contamination, pure):
        """rho = 0 and rho = 1 reproduce the pure strategies draw for draw."""
        policy = Policy(np.random.default_rng(5).normal(size=(2, 8)))
        positives = sample_interactions(build_catalog(n_items=8, n_categories=2, n_contexts=2, seed=6), 200, 7)
        mixed = build_preference_triples(policy, positives,
                                         TrainConfig(neg_strategy='mixed', contamination=contamination,
                                                     n_negatives=2),
                                         np.random.default_rng(8))
        reference = build_preference_triples(policy, positives, TrainConfig(neg_strategy=pure, n_negatives=2),
                                             np.random.default_rng(8))
        assert mixed == reference

    def test_mixed_sources(self):
        """Partial contamination tags triples by where their negatives came from."""
        policy = Policy.uniform(1, 10)
        triples = build_preference_triples(policy, self._positives(0, 400, 10),
                                           TrainConfig(neg_strategy='mixed', contamination=0.5, n_negatives=2),
                                           np.random.default_rng(9))
        assert {triple.source for triple in triples} == {'self_play', 'uniform', 'mixed'}

    def test_mixed_keeps_every_negative(self):
        """Partly replaced negative lists still hold n_negatives distinct items."""
        triples = build_preference_triples(Policy.uniform(1, 6), self._positives(0, 500, 6),
                                           TrainConfig(neg_strategy='mixed', contamination=0.5, n_negatives=4),
                                           np.random.default_rng(12))
        assert [len(triple.rejected) for triple in triples] == [4] * 500
        assert not any(0 in triple.rejected for triple in triples)
        assert 'mixed' in {triple.source for triple in triples}

    def test_deterministic(self, world):
        """The same generator seed gives the same triples."""
        _, train, _ = world
        policy = Policy(np.random.default_rng(10).normal(size=(1, 12)))
        config = TrainConfig(neg_strategy='mixed', contamination=0.3)
        assert (build_preference_triples(policy, train, config, np.random.default_rng(11)) ==
                build_preference_triples(policy, train, config, np.random.default_rng(11)))

    def test_errors(self):
        """Too many negatives or no positives are configuration errors."""
        with pytest.raises(ConfigError, match="n_negatives"):
            build_preference_triples(Policy.uniform(1, 3), self._positives(0, 2, 3),
                                     TrainConfig(n_negatives=3), np.random.default_rng(0))
        with pytest.raises(ConfigError):
            build_preference_triples(Policy.uniform(1, 3), InteractionSet([], [], 1, 3),
                                     TrainConfig(), np.random.default_rng(0))


class TestSteps:
    """Test the gradient-descent steps."""

    def test_sft_reaches_empirical(self):
        """Long SFT from uniform lands on the empirical distribution."""
        interactions = InteractionSet([0] * 10, [0] * 5 + [1] * 3 + [2] * 2, 1, 3)
        trained = sft_step(Policy.uniform(1, 3), interactions, TrainConfig(lr_sft=2.0, epochs_per_step=200))
        np.testing.assert_allclose(trained.probs(0), [0.5, 0.3, 0.2], atol=1e-6)

    def test_sft_exact_target(self):
        """SFT on an exact target table."""
        target = np.array([[0.1, 0.6, 0.3]])
        trained = sft_step(Policy.uniform(1, 3), None, TrainConfig(lr_sft=2.0, epochs_per_step=300), target=target)
        np.testing.assert_allclose(trained.probs(0), target[0], atol=1e-6)

    def test_sft_epochs_override(self):
        """sft_epochs replaces epochs_per_step for SFT only."""
        interactions = InteractionSet([0] * 10, [0] * 5 + [1] * 3 + [2] * 2, 1, 3)
        short = sft_step(Policy.uniform(1, 3), interactions, TrainConfig(lr_sft=2.0, epochs_per_step=1))
        long = sft_step(Policy.uniform(1, 3), interactions,
                        TrainConfig(lr_sft=2.0, epochs_per_step=1, sft_epochs=200))
        assert abs(short.probs(0)[0] - 0.5) > 0.05
        np.testing.assert_allclose(long.probs(0), [0.5, 0.3, 0.2], atol=1e-6)

    def test_dpo_reference_shape(self):
        """A reference of another shape is rejected before any update."""
        with pytest.raises(LossError, match="reference shape"):
            dpo_step(Policy.uniform(1, 3), Policy.uniform(2, 3), [PreferenceTriple(0, 0, (1, ))], _fast())

    def test_zero_learning_rate(self):
        """lr = 0 or no epochs return the input unchanged."""
        policy = Policy([[0.3, -0.1, 0.5]])
        interactions = InteractionSet([0], [1], 1, 3)
        assert sft_step(policy, interactions, TrainConfig(lr_sft=0.0)) == policy
        assert sft_step(policy, interactions, TrainConfig(epochs_per_step=0)) == policy

    def test_dpo_moves_towards_chosen(self):
        """A DPO step raises the chosen item against the rejected one."""
        ref = Policy.uniform(1, 4)
        trained = dpo_step(ref, ref, [PreferenceTriple(0, 1, (3, ))], TrainConfig(lr_dpo=0.5, epochs_per_step=10))
        probs = trained.probs(0)
        assert probs[1] > 0.25 > probs[3]
        with pytest.raises(ConfigError):
            dpo_step(ref, ref, [], TrainConfig())

    def test_expected_dpo_matches_closed_form(self):
        """The exact DPO step heads for the closed-form optimum."""
        p = np.array([0.4, 0.3, 0.2, 0.1])
        q = np.full(4, 0.25)
        ref = Policy.uniform(1, 4)
        trained = dpo_step_expected(ref, ref, p, q, TrainConfig(beta=1.0, lr_dpo=2.0, epochs_per_step=3000))
        np.testing.assert_allclose(trained.probs(0), closed_form_optimal_policy(q, p, q, 1.0), atol=1e-4)

    def test_divergence(self):
        """A non-finite loss aborts with the last finite value."""
        values = iter([3.0, 2.0, np.nan])

        def loss(policy):
            return LossValue(next(values), np.zeros(policy.shape))

        with pytest.raises(DivergenceError) as excinfo:
            _descend('SFT', Policy.uniform(1, 2), 0.1, 10, loss)
        assert excinfo.value.epoch == 2
        assert excinfo.value.last_loss == 2.0
        assert excinfo.value.step == 'SFT'


class TestSelfPlay:
    """Test the self-play loop and its baselines."""

    def test_snapshot_order(self, world):
        """init, then post_sft and post_dpo for every iteration."""
        _, train, _ = world
        trajectory = sprec_run(Policy.uniform(1, 12), train, _fast(iterations=3))
        assert [(it, phase) for it, phase, _ in trajectory.snapshots] == [
            (0, 'init'), (1, 'post_sft'), (1, 'post_dpo'), (2, 'post_sft'), (2, 'post_dpo'),
            (3, 'post_sft'), (3, 'post_dpo')]
        assert trajectory.final is trajectory.snapshot(3, 'post_dpo')
        with pytest.raises(KeyError):
            trajectory.snapshot(4, 'post_sft')

    def test_deterministic(self, world):
        """Same config, same trajectory."""
        _, train, _ = world
        config = _fast(neg_strategy='mixed', contamination=0.4)
        first = sprec_run(Policy.uniform(1, 12), train, config)
        second = sprec_run(Policy.uniform(1, 12), train, config)
        assert all(a[2] == b[2] for a, b in zip(first.snapshots, second.snapshots))
        other = sprec_run(Policy.uniform(1, 12), train, replace(config, seed=1))
        assert other.final != first.final

    def test_reference_choice(self, world):
        """post_sft uses the fresh SFT snapshot, pre_sft the previous iterate."""
        _, train, _ = world
        post = sprec_run(Policy.uniform(1, 12), train, _fast(reference='post_sft'))
        assert post.references[1] == post.snapshot(2, 'post_sft')
        pre = sprec_run(Policy.uniform(1, 12), train, _fast(reference='pre_sft'))
        assert pre.references[0] == Policy.uniform(1, 12)
        assert pre.references[1] == pre.snapshot(1, 'post_dpo')

    def test_dpo_baseline(self, world):
        """The DPO baseline is one uniform-negative iteration."""
        _, train, _ = world
        config = _fast(neg_strategy='beam', n_negatives=3, iterations=4)
        baseline = train_dpo_baseline(Policy.uniform(1, 12), train, config)
        direct = sprec_run(Policy.uniform(1, 12), train,
                           replace(config, iterations=1, neg_strategy='uniform', n_negatives=1))
        assert len(baseline.snapshots) == 3
        assert baseline.final == direct.final

    def test_sft_baseline(self, world):
        """The SFT baseline trains once on all positives."""
        _, train, _ = world
        config = _fast()
        trajectory = train_sft_baseline(Policy.uniform(1, 12), train, config)
        assert [(it, phase) for it, phase, _ in trajectory.snapshots] == [(0, 'init'), (1, 'post_sft')]
        assert trajectory.final == sft_step(Policy.uniform(1, 12), train, config)

    def test_record_order(self):
        """Snapshots must be recorded in training order."""
        trajectory = Trajectory(TrainConfig())
        trajectory.record(1, 'post_dpo', Policy.uniform(1, 2))
        with pytest.raises(ValueError):
            trajectory.record(1, 'post_sft', Policy.uniform(1, 2))

    def test_save(self, world, tmp_path):
        """Checkpoints, config and metrics land on disk."""
        catalog, train, evaluation = world

        def evaluator(policy, iteration, phase):
            return evaluate_policy(policy, catalog, evaluation, train, decode='greedy',
                                   iteration=iteration, phase=phase)

        trajectory = sprec_run(Policy.uniform(1, 12), train, _fast(iterations=1), evaluator=evaluator)
        trajectory.save(str(tmp_path), arm='sprec')
        names = sorted(os.listdir(str(tmp_path / 'checkpoints')))
        assert names == ['iter00_init.json', 'iter01_post_dpo.json', 'iter01_post_sft.json']
        assert Policy.load(str(tmp_path / 'checkpoints' / 'iter01_post_dpo.json')) == trajectory.final
        with open(str(tmp_path / 'config.json')) as fid:
            assert json.load(fid)["iterations"] == 1
        rows = read_metrics_csv(str(tmp_path / 'metrics.csv'))
        assert [(row['arm'], row['iteration'], row['phase']) for row in rows] == [
            ('sprec', 0, 'init'), ('sprec', 1, 'post_sft'), ('sprec', 1, 'post_dpo')]


def test_sft_tracks_popularity():
    """After SFT the policy sits close to the logged popularity."""
    catalog = build_catalog(n_items=20, n_categories=4, seed=0)
    train = sample_interactions(catalog, 2000, seed=1)
    trained = sft_step(Policy.uniform(1, 20), train, TrainConfig(lr_sft=5.0, epochs_per_step=500))
    np.testing.assert_allclose(trained.probs(0), empirical_distribution(train, catalog, 0), atol=1e-3)


def test_small_beta_concentrates_more():
    """DPO with a small beta pushes more mass into the most popular group."""
    catalog = assign_popularity_groups(build_catalog(n_items=20, n_categories=4, seed=0), 4)
    train = sample_interactions(catalog, 2000, seed=1)
    shares = {}
    for beta in (0.1, 0.9):
        config = TrainConfig(beta=beta, lr_sft=5.0, lr_dpo=2.0, epochs_per_step=500, subsample_fraction=1.0)
        final = train_dpo_baseline(Policy.uniform(1, 20), train, config).final
        shares[beta] = expected_group_share(final, catalog)[-1]
    assert shares[0.1] > shares[0.9]
