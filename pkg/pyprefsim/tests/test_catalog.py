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

"""Test the synthetic catalog and interaction logs."""

import unittest

import numpy as np
import pytest
from scipy.stats import chisquare

from pyprefsim.catalog import (CatalogError, InteractionSet, ItemCatalog, assign_popularity_groups,
                               build_catalog, empirical_distribution, sample_interactions)


class TestBuildCatalog(unittest.TestCase):
    """Test the Zipf catalog builder."""

    def test_two_items(self):
        """Two items with s=1 are a permutation of 2/3, 1/3."""
        catalog = build_catalog(n_items=2, n_categories=1, zipf_exponent=1.0, seed=0)
        np.testing.assert_allclose(np.sort(catalog.popularity[0]), [1 / 3, 2 / 3], rtol=1e-14)

    def test_zero_exponent_is_uniform(self):
        """s=0 degenerates to the uniform law."""
        catalog = build_catalog(n_items=4, n_categories=2, zipf_exponent=0.0, seed=3)
        np.testing.assert_allclose(catalog.popularity[0], [0.25] * 4, rtol=1e-14)

    def test_matches_direct_summation(self):
        """The sorted popularity equals an independent Zipf normalization."""
        catalog = build_catalog(n_items=100, zipf_exponent=1.2, seed=7)
        weights = [1.0 / k ** 1.2 for k in range(1, 101)]
        total = 0.0
        for weight in weights:
            total += weight
        expected = [weight / total for weight in weights]
        np.testing.assert_allclose(np.sort(catalog.popularity[0])[::-1], expected, rtol=1e-12)

    def test_rows_sum_to_one(self):
        """Every context row is a distribution."""
        catalog = build_catalog(n_items=50, n_contexts=4, seed=1)
        self.assertEqual(catalog.popularity.shape, (4, 50))
        assert np.all(np.abs(catalog.popularity.sum(axis=1) - 1) <= 1e-12)
        assert np.all(catalog.popularity >= 0)
        # each context gets its own permutation
        assert not np.array_equal(catalog.popularity[0], catalog.popularity[1])

    def test_seeded(self):
        """Same seed, same catalog; another seed, another permutation."""
        self.assertEqual(build_catalog(seed=11), build_catalog(seed=11))
        self.assertNotEqual(build_catalog(seed=11), build_catalog(seed=12))

    def test_round_robin_categories(self):
        """Categories are balanced when n_categories divides n_items."""
        catalog = build_catalog(n_items=100, n_categories=10, seed=2)
        np.testing.assert_array_equal(np.bincount(catalog.category_of), [10] * 10)

    def test_correlated_categories(self):
        """Correlated categories follow the popularity ranking."""
        catalog = build_catalog(n_items=100, n_categories=10, seed=2, correlate_categories=True)
        top = np.argsort(-catalog.popularity[0], kind='stable')[:10]
        np.testing.assert_array_equal(catalog.category_of[top], [0] * 10)
        np.testing.assert_array_equal(np.bincount(catalog.category_of), [10] * 10)

    def test_errors(self):
        """Bad sizes and exponents are rejected."""
        with self.assertRaises(CatalogError):
            build_catalog(n_items=1)
        with self.assertRaises(CatalogError):
            build_catalog(n_items=10, zipf_exponent=-0.5)
        with self.assertRaises(CatalogError):
            build_catalog(n_items=10, n_categories=0)

    def test_catalog_validation(self):
        """Hand-built catalogs are checked."""
        with self.assertRaises(CatalogError):
            ItemCatalog([[0.5, 0.6]], [0, 0])
        with self.assertRaises(CatalogError):
            ItemCatalog([[0.5, 0.5]], [0])
        with self.assertRaises(CatalogError):
            ItemCatalog([[0.5, 0.5]], [0, 3], n_categories=2)


class TestPopularityGroups(unittest.TestCase):
    """Test the popularity quantile groups."""

    def test_equal_groups(self):
        """100 items in 5 groups of 20, masses increasing with the group id."""
        catalog = assign_popularity_groups(build_catalog(n_items=100, seed=0), 5)
        np.testing.assert_array_equal(np.bincount(catalog.group_of), [20] * 5)
        masses = catalog.group_masses()
        assert np.all(np.diff(masses) >= 0)
        self.assertAlmostEqual(masses.sum(), 1.0, places=12)
        popularity = catalog.popularity[0]
        assert popularity[catalog.group_of == 0].max() <= popularity[catalog.group_of == 4].min()

    def test_ties_by_item_id(self):
        """All-equal popularity is split by item id."""
        catalog = assign_popularity_groups(build_catalog(n_items=10, zipf_exponent=0, seed=5), 5)
        np.testing.assert_array_equal(catalog.group_of, [0, 0, 1, 1, 2, 2, 3, 3, 4, 4])

    def test_remainder_goes_to_popular_groups(self):
        """7 items in 3 groups are split (2, 2, 3), the big block most popular."""
        catalog = assign_popularity_groups(build_catalog(n_items=7, n_categories=2, seed=4), 3)
        np.testing.assert_array_equal(np.bincount(catalog.group_of), [2, 2, 3])
        top3 = np.argsort(-catalog.popularity[0])[:3]
        np.testing.assert_array_equal(catalog.group_of[top3], [2, 2, 2])

    def test_partition(self):
        """Every item gets exactly one group."""
        catalog = assign_popularity_groups(build_catalog(n_items=33, n_contexts=3, seed=9), 4)
        self.assertEqual(catalog.group_of.shape, (33, ))
        self.assertEqual(set(catalog.group_of.tolist()), {0, 1, 2, 3})

    def test_errors(self):
        """Too many or too few groups are rejected."""
        catalog = build_catalog(n_items=4, n_categories=2)
        with self.assertRaises(CatalogError):
            assign_popularity_groups(catalog, 5)
        with self.assertRaises(CatalogError):
            assign_popularity_groups(catalog, 1)
        with self.assertRaises(CatalogError):
            catalog.group_masses()


def _three_item_catalog():
    return ItemCatalog([[0.5, 0.3, 0.2]], [0, 1, 1])


class TestInteractions:
    """Test sampling and counting interactions."""

    def test_degenerate(self):
        """All mass on item 0 gives only item 0."""
        catalog = ItemCatalog([[1.0, 0.0]], [0, 0])
        interactions = sample_interactions(catalog, 1000, seed=0)
        assert np.all(interactions.items == 0)

    def test_law_of_large_numbers(self):
        """Frequencies approach p_D."""
        catalog = _three_item_catalog()
        interactions = sample_interactions(catalog, 100000, seed=1)
        counts = interactions.counts[0]
        np.testing.assert_allclose(counts / counts.sum(), [0.5, 0.3, 0.2], atol=0.01)
        assert chisquare(counts, f_exp=np.array([0.5, 0.3, 0.2]) * 100000).pvalue > 1e-3

    def test_deterministic(self):
        """Same seed, same records."""
        catalog = build_catalog(n_items=30, n_contexts=2, seed=3)
        first = sample_interactions(catalog, 500, seed=42)
        second = sample_interactions(catalog, 500, seed=42)
        assert first.records == second.records
        assert first == second

    def test_contexts_are_uniform(self):
        """Contexts are drawn uniformly and stay in range."""
        catalog = build_catalog(n_items=10, n_contexts=4, seed=3)
        interactions = sample_interactions(catalog, 8000, seed=5)
        assert interactions.contexts.min() == 0 and interactions.contexts.max() == 3
        np.testing.assert_allclose(np.bincount(interactions.contexts) / 8000, [0.25] * 4, atol=0.03)

    def test_counts_match_records(self):
        """The count table is recomputable from the records."""
        catalog = build_catalog(n_items=12, n_contexts=3, seed=8)
        interactions = sample_interactions(catalog, 300, seed=2)
        expected = np.zeros((3, 12), dtype=int)
        for context, item in interactions.records:
            expected[context, item] += 1
        np.testing.assert_array_equal(interactions.counts, expected)

    def test_errors(self):
        """No samples or out-of-range ids are rejected."""
        with pytest.raises(CatalogError):
            sample_interactions(_three_item_catalog(), 0, seed=0)
        with pytest.raises(CatalogError):
            InteractionSet([0], [3], 1, 3)
        with pytest.raises(CatalogError):
            InteractionSet([1], [0], 1, 3)

    def test_subsample(self):
        """Subsampling keeps floor(fraction * n) records in order."""
        interactions = InteractionSet([0] * 11, list(range(11)), 1, 11)
        half = interactions.subsample(0.5, np.random.default_rng(0))
        assert len(half) == 5
        assert list(half.items) == sorted(half.items)
        assert set(half.items.tolist()) <= set(range(11))
        assert interactions.subsample(1.0, np.random.default_rng(0)) is interactions
        assert len(interactions.subsample(0.01, np.random.default_rng(0))) == 1
        with pytest.raises(CatalogError):
            interactions.subsample(0.0, np.random.default_rng(0))

    def test_category_distribution(self):
        """Categories of logged items."""
        catalog = _three_item_catalog()
        interactions = InteractionSet([0, 0, 0, 0], [0, 1, 2, 2], 1, 3)
        np.testing.assert_allclose(interactions.category_distribution(catalog), [0.25, 0.75])


class TestEmpiricalDistribution:
    """Test the empirical distribution."""

    def test_counting(self):
        """Records A, A, B."""
        interactions = InteractionSet([0, 0, 0], [0, 0, 1], 1, 3)
        np.testing.assert_allclose(empirical_distribution(interactions, _three_item_catalog(), 0),
                                   [2 / 3, 1 / 3, 0.0], rtol=1e-15)

    def test_single_record(self):
        """One record is one-hot."""
        interactions = InteractionSet([0], [2], 1, 3)
        np.testing.assert_array_equal(empirical_distribution(interactions, _three_item_catalog(), 0),
                                      [0.0, 0.0, 1.0])

    def test_close_to_popularity(self):
        """4096 draws land within TV 0.05 of p_D."""
        catalog = build_catalog(n_items=20, n_categories=4, seed=1)
        interactions = sample_interactions(catalog, 4096, seed=3)
        empirical = empirical_distribution(interactions, catalog, 0)
        assert abs(empirical.sum() - 1) <= 1e-12
        assert 0.5 * np.abs(empirical - catalog.popularity[0]).sum() < 0.05

    def test_empty_context(self):
        """A context without records is an error."""
        catalog = build_catalog(n_items=5, n_categories=1, n_contexts=2, seed=0)
        interactions = InteractionSet([0, 0], [1, 2], 2, 5)
        with pytest.raises(CatalogError):
            empirical_distribution(interactions, catalog, 1)


def test_catalog_json_round_trip(tmp_path):
    """A saved catalog loads back equal."""
    catalog = assign_popularity_groups(build_catalog(n_items=25, n_contexts=2, seed=6), 5)
    filename = str(tmp_path / 'catalog.json')
    catalog.save(filename)
    loaded = ItemCatalog.load(filename)
    assert loaded == catalog
    assert loaded.n_groups == 5
    assert ItemCatalog.from_dict(catalog.to_dict()).n_categories == catalog.n_categories
