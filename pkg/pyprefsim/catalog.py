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

"""Synthetic recommendation world: items, categories, popularity and logs.

The catalog holds the ground-truth conditional popularity ``p_D(y|x)`` for
every context ``x``. A single context reproduces the cold-start setting.

JSON layout of a saved catalog::

    {"n_items": 100, "n_categories": 10, "n_contexts": 1,
     "category_of": [...], "popularity": [[...]], "group_of": [...] or null}
"""

import json
import logging

import numpy as np

LOGGER = logging.getLogger(__name__)

SUM_TOL = 1e-12


class CatalogError(ValueError):
    """Invalid catalog parameters or data."""


def _check_distribution_rows(rows, name):
    if not np.all(np.isfinite(rows)) or np.any(rows < 0):
        raise CatalogError("%s must be finite and non-negative" % name)
    sums = rows.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > SUM_TOL):
        raise CatalogError("%s rows must sum to 1, got %s" % (name, sums))


class ItemCatalog(object):
    """Items with categories, per-context popularity and popularity groups.

    *popularity* is an ``(n_contexts, n_items)`` table whose rows are
    probability vectors. *group_of* may be ``None`` until
    :func:`assign_popularity_groups` has been run.
    """

    def __init__(self, popularity, category_of, n_categories=None, group_of=None):
        popularity = np.array(popularity, dtype=np.float64)
        if popularity.ndim == 1:
            popularity = popularity[np.newaxis, :]
        if popularity.ndim != 2 or popularity.shape[1] < 1:
            raise CatalogError("popularity must be a (contexts, items) table")
        _check_distribution_rows(popularity, "popularity")

        category_of = np.array(category_of, dtype=np.int64)
        if category_of.shape != (popularity.shape[1], ):
            raise CatalogError("category_of must have one entry per item")
        if np.any(category_of < 0):
            raise CatalogError("category ids must be non-negative")
        if n_categories is None:
            n_categories = int(category_of.max()) + 1
        if np.any(category_of >= n_categories):
            raise CatalogError("category id out of range 0..%d" % (n_categories - 1))

        if group_of is not None:
            group_of = np.array(group_of, dtype=np.int64)
            if group_of.shape != category_of.shape or np.any(group_of < 0):
                raise CatalogError("group_of must hold one group id per item")

        popularity.flags.writeable = False
        category_of.flags.writeable = False
        if group_of is not None:
            group_of.flags.writeable = False
        self.popularity = popularity
        self.category_of = category_of
        self.n_categories = int(n_categories)
        self.group_of = group_of

    @property
    def n_items(self):
        """Number of items."""
        return self.popularity.shape[1]

    @property
    def n_contexts(self):
        """Number of contexts."""
        return self.popularity.shape[0]

    @property
    def n_groups(self):
        """Number of popularity groups, 0 when unassigned."""
        if self.group_of is None:
            return 0
        return int(self.group_of.max()) + 1

    def popularity_of(self, context):
        """Return ``p_D(.|context)``."""
        if not 0 <= context < self.n_contexts:
            raise CatalogError("context %d out of range" % context)
        return self.popularity[context]

    def mean_popularity(self, contexts=None):
        """Average popularity over *contexts* (all contexts by default)."""
        if contexts is None:
            return self.popularity.mean(axis=0)
        return self.popularity[np.asarray(contexts)].mean(axis=0)

    def group_masses(self):
        """Popularity mass of each group, from the mean popularity."""
        if self.group_of is None:
            raise CatalogError("popularity groups are not assigned")
        return np.bincount(self.group_of, weights=self.mean_popularity(),
                           minlength=self.n_groups)

    def to_dict(self):
        """Return a JSON-ready representation."""
        return {"n_items": self.n_items,
                "n_categories": self.n_categories,
                "n_contexts": self.n_contexts,
                "category_of": self.category_of.tolist(),
                "popularity": self.popularity.tolist(),
                "group_of": None if self.group_of is None else self.group_of.tolist()}

    @classmethod
    def from_dict(cls, data):
        """Rebuild a catalog from :meth:`to_dict` output."""
        try:
            catalog = cls(data["popularity"], data["category_of"],
                          n_categories=data["n_categories"],
                          group_of=data.get("group_of"))
        except KeyError as err:
            raise CatalogError("catalog document misses %s" % err)
        if catalog.n_items != data.get("n_items", catalog.n_items):
            raise CatalogError("n_items does not match the popularity table")
        return catalog

    def save(self, filename):
        """Write the catalog to *filename* as JSON."""
        with open(filename, 'w') as fid:
            json.dump(self.to_dict(), fid)
        LOGGER.debug("Catalog written to %s", filename)

    @classmethod
    def load(cls, filename):
        """Read a catalog written by :meth:`save`."""
        with open(filename, 'r') as fid:
            return cls.from_dict(json.load(fid))

    def __eq__(self, other):
        if not isinstance(other, ItemCatalog):
            return NotImplemented
        groups_equal = ((self.group_of is None and other.group_of is None) or
                        (self.group_of is not None and other.group_of is not None and
                         np.array_equal(self.group_of, other.group_of)))
        return (self.n_categories == other.n_categories and groups_equal and
                np.array_equal(self.popularity, other.popularity) and
                np.array_equal(self.category_of, other.category_of))

    def __repr__(self):
        return "ItemCatalog(n_items=%d, n_categories=%d, n_contexts=%d, n_groups=%d)" % (
            self.n_items, self.n_categories, self.n_contexts, self.n_groups)


def zipf_weights(n_items, zipf_exponent):
    """Normalized Zipf law ``k**-s / H`` for ranks ``k = 1..n_items``."""
    ranks = np.arange(1, n_items + 1, dtype=np.float64)
    weights = ranks ** -float(zipf_exponent)
    return weights / weights.sum()


def build_catalog(n_items=100, n_categories=10, n_contexts=1, zipf_exponent=1.2,
                  seed=0, correlate_categories=False):
    """Synthesize a catalog with Zipf popularity.

    Each context gets its own seeded permutation of the Zipf law. Categories
    are dealt round-robin and shuffled, so they are independent of
    popularity, unless *correlate_categories* is set: then categories are
    contiguous blocks of the popularity ranking in context 0.
    """
    if n_items < 2:
        raise CatalogError("n_items must be at least 2, got %d" % n_items)
    if n_categories < 1 or n_contexts < 1:
        raise CatalogError("n_categories and n_contexts must be positive")
    # s = 0 is the uniform law
    if not np.isfinite(zipf_exponent) or zipf_exponent < 0:
        raise CatalogError("zipf_exponent must be non-negative, got %r" % zipf_exponent)

    rng = np.random.default_rng(seed)
    weights = zipf_weights(n_items, zipf_exponent)
    popularity = np.empty((n_contexts, n_items))
    for context in range(n_contexts):
        popularity[context] = weights[rng.permutation(n_items)]
    popularity /= popularity.sum(axis=1, keepdims=True)

    if correlate_categories:
        by_rank = np.argsort(-popularity[0], kind='stable')
        category_of = np.empty(n_items, dtype=np.int64)
        category_of[by_rank] = np.arange(n_items) * n_categories // n_items
    else:
        category_of = rng.permutation(np.arange(n_items) % n_categories)

    LOGGER.debug("Built catalog: %d items, %d categories, %d contexts, s=%g",
                 n_items, n_categories, n_contexts, zipf_exponent)
    return ItemCatalog(popularity, category_of, n_categories=n_categories)


def assign_popularity_groups(catalog, n_groups=5):
    """Split items into *n_groups* equal-count popularity quantiles.

    Items are ordered by mean popularity ascending, ties by item id. The
    remainder of ``n_items / n_groups`` goes to the most popular groups, so
    group 0 holds the least popular items.
    """
    if n_groups < 2:
        raise CatalogError("n_groups must be at least 2")
    if n_groups > catalog.n_items:
        raise CatalogError("cannot split %d items into %d groups" % (catalog.n_items, n_groups))

    key = catalog.mean_popularity()
    order = np.lexsort((np.arange(catalog.n_items), key))
    sizes = np.full(n_groups, catalog.n_items // n_groups)
    remainder = catalog.n_items % n_groups
    if remainder:
        sizes[n_groups - remainder:] += 1

    group_of = np.empty(catalog.n_items, dtype=np.int64)
    group_of[order] = np.repeat(np.arange(n_groups), sizes)
    return ItemCatalog(catalog.popularity, catalog.category_of,
                       n_categories=catalog.n_categories, group_of=group_of)


class InteractionSet(object):
    """Logged positive interactions ``(context, item)``."""

    def __init__(self, contexts, items, n_contexts, n_items):
        contexts = np.array(contexts, dtype=np.int64).ravel()
        items = np.array(items, dtype=np.int64).ravel()
        if contexts.shape != items.shape:
            raise CatalogError("contexts and items must have the same length")
        if np.any(contexts < 0) or np.any(contexts >= n_contexts):
            raise CatalogError("context id out of range")
        if np.any(items < 0) or np.any(items >= n_items):
            raise CatalogError("item id out of range")
        contexts.flags.writeable = False
        items.flags.writeable = False
        self.contexts = contexts
        self.items = items
        self.n_contexts = int(n_contexts)
        self.n_items = int(n_items)

    def __len__(self):
        return len(self.items)

    @property
    def records(self):
        """List of ``(context, item)`` tuples."""
        return list(zip(self.contexts.tolist(), self.items.tolist()))

    @property
    def counts(self):
        """Per-context item counts, shape ``(n_contexts, n_items)``."""
        flat = np.bincount(self.contexts * self.n_items + self.items,
                           minlength=self.n_contexts * self.n_items)
        return flat.reshape(self.n_contexts, self.n_items)

    def subsample(self, fraction, rng):
        """Return a random subset of ``floor(fraction * len)`` records (at least one).

        Record order is preserved. ``fraction == 1`` returns ``self``.
        """
        if not 0 < fraction <= 1:
            raise CatalogError("fraction must be in (0, 1], got %r" % fraction)
        if fraction == 1:
            return self
        n_keep = max(1, int(np.floor(fraction * len(self))))
        keep = np.sort(rng.choice(len(self), size=n_keep, replace=False))
        return InteractionSet(self.contexts[keep], self.items[keep],
                              self.n_contexts, self.n_items)

    def category_distribution(self, catalog):
        """Category distribution of the logged items."""
        if len(self) == 0:
            raise CatalogError("no interactions")
        counts = np.bincount(catalog.category_of[self.items], minlength=catalog.n_categories)
        return counts / counts.sum()

    def __eq__(self, other):
        if not isinstance(other, InteractionSet):
            return NotImplemented
        return (self.n_contexts == other.n_contexts and self.n_items == other.n_items and
                np.array_equal(self.contexts, other.contexts) and
                np.array_equal(self.items, other.items))


def sample_interactions(catalog, n_samples, seed):
    """Draw *n_samples* i.i.d. positives: uniform context, then ``y ~ p_D(.|x)``."""
    if n_samples < 1:
        raise CatalogError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    contexts = rng.integers(0, catalog.n_contexts, size=n_samples)
    uniforms = rng.random(n_samples)
    cdf = np.cumsum(catalog.popularity, axis=1)
    items = np.empty(n_samples, dtype=np.int64)
    for context in range(catalog.n_contexts):
        mask = contexts == context
        items[mask] = np.searchsorted(cdf[context], uniforms[mask] * cdf[context, -1],
                                      side='right')
    np.minimum(items, catalog.n_items - 1, out=items)
    return InteractionSet(contexts, items, catalog.n_contexts, catalog.n_items)


def empirical_distribution(interactions, catalog, context):
    """Normalized item counts of *context*."""
    if not 0 <= context < catalog.n_contexts:
        raise CatalogError("context %d out of range" % context)
    counts = interactions.counts[context].astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise CatalogError("no interactions recorded for context %d" % context)
    return counts / total
