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

"""Accuracy, diversity, concentration and fairness metrics of a policy.

Every frequency tie is broken by ascending item id. One evaluation is a
:class:`MetricsReport`, written to CSV as one row under the header::

    arm,iteration,phase,hr,ndcg,div_ratio,or_ratio,mgu,group_share_0,...,group_share_<G-1>,tv_to_popularity
"""

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

LOGGER = logging.getLogger(__name__)

DECODERS = ('sample', 'greedy')


class MetricsError(ValueError):
    """Invalid metric inputs."""


class RecommendationLog(object):
    """One recommendation per evaluated positive.

    Arrays: ``contexts``, ``recommended``, ``truth`` and ``rank`` (1-based
    full-ranking position of the ground-truth item).
    """

    def __init__(self, contexts, recommended, truth, rank, n_items=None):
        self.contexts = np.asarray(contexts, dtype=np.int64)
        self.recommended = np.asarray(recommended, dtype=np.int64)
        self.truth = np.asarray(truth, dtype=np.int64)
        self.rank = np.asarray(rank, dtype=np.int64)
        lengths = {arr.shape for arr in (self.contexts, self.recommended, self.truth, self.rank)}
        if len(lengths) != 1:
            raise MetricsError("log columns differ in length")
        if np.any(self.rank < 1) or (n_items is not None and np.any(self.rank > n_items)):
            raise MetricsError("ground-truth ranks must lie in 1..n_items")

    def __len__(self):
        return len(self.recommended)

    @property
    def entries(self):
        """``(context, recommended, truth, rank)`` tuples."""
        return list(zip(self.contexts.tolist(), self.recommended.tolist(),
                        self.truth.tolist(), self.rank.tolist()))


def _nonempty(log):
    if len(log) == 0:
        raise MetricsError("empty recommendation log")


def full_ranks(policy, context):
    """1-based rank of every item, probability descending, ties by item id."""
    row = policy.logits[context]
    order = np.lexsort((np.arange(policy.n_items), -row))
    ranks = np.empty(policy.n_items, dtype=np.int64)
    ranks[order] = np.arange(1, policy.n_items + 1)
    return ranks


def build_recommendation_log(policy, interactions, decode='sample', rng=None, temperature=1.0):
    """Recommend one item per held-out positive in *interactions*.

    ``decode='greedy'`` always recommends the rank-1 item; ``'sample'``
    draws from the tempered softmax with *rng*, which mirrors generative
    recommendation where the model emits one item per request.
    """
    if decode not in DECODERS:
        raise MetricsError("unknown decoding %r" % decode)
    if len(interactions) == 0:
        raise MetricsError("no interactions to evaluate")
    if not temperature > 0:
        raise MetricsError("temperature must be positive")
    if decode == 'sample' and rng is None:
        raise MetricsError("sampling decoding needs a random generator")

    contexts = interactions.contexts
    truth = interactions.items
    rank = np.empty(len(truth), dtype=np.int64)
    recommended = np.empty(len(truth), dtype=np.int64)
    for context in np.unique(contexts):
        mask = contexts == context
        ranks = full_ranks(policy, context)
        rank[mask] = ranks[truth[mask]]
        if decode == 'greedy':
            recommended[mask] = np.argmin(ranks)
    if decode == 'sample':
        cdf = np.cumsum(softmax(policy.logits / temperature, axis=1), axis=1)
        uniforms = rng.random(len(truth))
        for context in np.unique(contexts):
            mask = contexts == context
            picks = np.searchsorted(cdf[context], uniforms[mask] * cdf[context, -1], side='right')
            recommended[mask] = np.minimum(picks, policy.n_items - 1)
    return RecommendationLog(contexts, recommended, truth, rank, policy.n_items)


def hr_ndcg_at_k(log, k):
    """Mean hit rate and NDCG at *k* for a single relevant item per entry."""
    _nonempty(log)
    if k < 1:
        raise MetricsError("k must be positive")
    hits = log.rank <= k
    gains = np.where(hits, 1.0 / np.log2(log.rank + 1.0), 0.0)
    return float(hits.mean()), float(gains.mean())


def div_ratio(log):
    """Unique recommended items over the number of recommendations."""
    _nonempty(log)
    return len(np.unique(log.recommended)) / len(log)


def or_ratio(log, top_m=3):
    """Share of recommendations taken by the *top_m* most frequent items."""
    _nonempty(log)
    if top_m < 1:
        raise MetricsError("top_m must be positive")
    items, counts = np.unique(log.recommended, return_counts=True)
    order = np.lexsort((items, -counts))
    return int(counts[order[:top_m]].sum()) / len(log)


def group_share(log, catalog):
    """Fraction of recommendations falling in each popularity group."""
    _nonempty(log)
    if catalog.group_of is None:
        raise MetricsError("catalog has no popularity groups")
    counts = np.bincount(catalog.group_of[log.recommended], minlength=catalog.n_groups)
    return counts / len(log)


def category_distribution(items, catalog):
    """Category distribution of a sequence of item ids."""
    items = np.asarray(items, dtype=np.int64)
    if items.size == 0:
        raise MetricsError("no items")
    counts = np.bincount(catalog.category_of[items], minlength=catalog.n_categories)
    return counts / items.size


def group_unfairness(rec_category_dist, hist_category_dist):
    """Per-category absolute gap and its mean over categories."""
    rec = np.asarray(rec_category_dist, dtype=np.float64)
    hist = np.asarray(hist_category_dist, dtype=np.float64)
    if rec.shape != hist.shape or rec.ndim != 1:
        raise MetricsError("category distributions differ in length: %s vs %s" % (rec.shape, hist.shape))
    gaps = np.abs(rec - hist)
    return gaps, float(gaps.mean())


def total_variation(p, q):
    """Half the L1 distance."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise MetricsError("distributions differ in length: %s vs %s" % (p.shape, q.shape))
    return 0.5 * float(np.abs(p - q).sum())


def recommendation_distribution(policy, contexts, temperature=1.0):
    """Expected item distribution of sampled recommendations over *contexts*."""
    contexts = np.asarray(contexts, dtype=np.int64)
    return softmax(policy.logits / temperature, axis=1)[contexts].mean(axis=0)


def expected_group_share(policy, catalog, contexts=None, temperature=1.0):
    """Noise-free group shares: group masses of :func:`recommendation_distribution`."""
    if catalog.group_of is None:
        raise MetricsError("catalog has no popularity groups")
    if contexts is None:
        contexts = np.arange(catalog.n_contexts)
    dist = recommendation_distribution(policy, contexts, temperature)
    return np.bincount(catalog.group_of, weights=dist, minlength=catalog.n_groups)


def tv_to_popularity(policy, catalog, contexts, temperature=1.0):
    """TV between the expected recommendation distribution and ``p_D`` on *contexts*."""
    return total_variation(recommendation_distribution(policy, contexts, temperature),
                           catalog.mean_popularity(contexts))


@dataclass
class MetricsReport:
    """All metrics of one policy snapshot."""

    hr_at_k: float
    ndcg_at_k: float
    div_ratio: float
    or_ratio: float
    mgu: float
    gu_per_category: np.ndarray
    group_share: np.ndarray
    tv_to_popularity: float
    expected_group_share: np.ndarray = None
    iteration: int = 0
    phase: str = 'init'
    arm: str = ''

    def csv_row(self, arm=None):
        arm = self.arm if arm is None else arm
        return ([arm, self.iteration, self.phase, self.hr_at_k, self.ndcg_at_k, self.div_ratio,
                 self.or_ratio, self.mgu] + [float(share) for share in self.group_share] +
                [self.tv_to_popularity])

    def to_dict(self):
        data = {"arm": self.arm, "iteration": self.iteration, "phase": self.phase,
                "hr": self.hr_at_k, "ndcg": self.ndcg_at_k, "div_ratio": self.div_ratio,
                "or_ratio": self.or_ratio, "mgu": self.mgu,
                "gu_per_category": np.asarray(self.gu_per_category).tolist(),
                "group_share": np.asarray(self.group_share).tolist(),
                "tv_to_popularity": self.tv_to_popularity}
        if self.expected_group_share is not None:
            data["expected_group_share"] = np.asarray(self.expected_group_share).tolist()
        return data


def metrics_header(n_groups):
    """The fixed CSV header for *n_groups* popularity groups."""
    return (['arm', 'iteration', 'phase', 'hr', 'ndcg', 'div_ratio', 'or_ratio', 'mgu'] +
            ['group_share_%d' % group for group in range(n_groups)] + ['tv_to_popularity'])


def write_metrics_csv(filename, reports, arm=None):
    """Write *reports* as rows of :func:`metrics_header`."""
    if not reports:
        raise MetricsError("no metrics to write")
    n_groups = len(reports[0].group_share)
    with open(filename, 'w', newline='') as fid:
        writer = csv.writer(fid, lineterminator='\n')
        writer.writerow(metrics_header(n_groups))
        for report in reports:
            writer.writerow(report.csv_row(arm))


def read_metrics_csv(filename):
    """Read a metrics CSV back as a list of dicts with typed values."""
    with open(filename, 'r', newline='') as fid:
        reader = csv.DictReader(fid)
        header = reader.fieldnames or []
        n_groups = sum(1 for name in header if name.startswith('group_share_'))
        if header != metrics_header(n_groups):
            raise MetricsError("%s does not carry the metrics header" % filename)
        rows = []
        for row in reader:
            typed = {'arm': row['arm'], 'iteration': int(row['iteration']), 'phase': row['phase']}
            for name in header[3:]:
                typed[name] = float(row[name])
            rows.append(typed)
    return rows


def evaluate_policy(policy, catalog, eval_interactions, history, k=5, top_m=3, decode='sample',
                    rng=None, temperature=1.0, iteration=0, phase='init', arm=''):
    """Evaluate *policy* on held-out positives; *history* supplies the category baseline."""
    log = build_recommendation_log(policy, eval_interactions, decode=decode, rng=rng,
                                   temperature=temperature)
    hr, ndcg = hr_ndcg_at_k(log, k)
    gu, mgu = group_unfairness(category_distribution(log.recommended, catalog),
                               history.category_distribution(catalog))
    contexts = eval_interactions.contexts
    report = MetricsReport(hr_at_k=hr, ndcg_at_k=ndcg, div_ratio=div_ratio(log),
                           or_ratio=or_ratio(log, top_m), mgu=mgu, gu_per_category=gu,
                           group_share=group_share(log, catalog),
                           tv_to_popularity=tv_to_popularity(policy, catalog, contexts, temperature),
                           expected_group_share=expected_group_share(policy, catalog, contexts, temperature),
                           iteration=iteration, phase=phase, arm=arm)
    LOGGER.debug("Iteration %d %s: hr %.4f ndcg %.4f top-group share %.4f", iteration, phase,
                 hr, ndcg, report.group_share[-1])
    return report
