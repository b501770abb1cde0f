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

"""Experiment presets, orchestration, reports and the ``prefsim`` command line.

An experiment directory looks like::

    <output_dir>/
        config.json            the validated experiment
        catalog.json           ItemCatalog.to_dict() of the world
        metrics.csv            per arm/iteration/phase means over replications
        summary.json           the same means, with vectors, per arm
        arms/<arm>/rep_<r>/    config.json, checkpoints/, metrics.csv
        verification.json      (verify experiments only)
        report.csv, report.json  (after ``prefsim report``)

Presets are read from ``$PYPREFSIM_CONFIG_PATH/presets.yaml``, falling back to
the file shipped in the package.
"""

import argparse
import concurrent.futures
import csv
import json
import logging
import os
import shutil
import sys
import tempfile
import zlib
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import yaml

from pyprefsim import child_rng
from pyprefsim.catalog import CatalogError, assign_popularity_groups, build_catalog, sample_interactions
from pyprefsim.logger import debug_on, logging_on
from pyprefsim.metrics import (DECODERS, MetricsError, MetricsReport, evaluate_policy, read_metrics_csv,
                               write_metrics_csv)
from pyprefsim.policy import Policy
from pyprefsim.theory import OPTIMIZER_METHODS, OptimizerConfig, verify_closed_forms
from pyprefsim.training import (PHASES, ConfigError, DivergenceError, TrainConfig, sprec_run,
                                train_dpo_baseline, train_sft_baseline)

LOGGER = logging.getLogger(__name__)

PKG_CONFIG_DIR = os.path.join(os.path.realpath(os.path.dirname(__file__)), 'etc')
PRESETS_FILENAME = 'presets.yaml'

EXPERIMENT_KINDS = ('train', 'verify')
ARM_KINDS = ('sft_only', 'dpo', 'sprec')
BASELINE_ARM = 'sft_only'
SWEEPS = {'beta': 'beta-sweep', 'rho': 'rho-sweep', 'nneg': 'nneg-sweep'}
TOP_LEVEL_KEYS = ('name', 'kind', 'replications', 'master_seed', 'output_dir')
VERIFY_DEFAULTS = {'n_instances': 5, 'n_items': 20, 'betas': [0.1, 0.5, 1.0, 2.0], 'seed': 0,
                   'tv_tol': 1e-3, 'reward_items': 10, 'reward_tol': 1e-4, 'method': 'lbfgs'}

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DIVERGED = 2
EXIT_VERIFY_FAILED = 3


class ReportError(RuntimeError):
    """An experiment directory is missing inputs or has a different schema."""


@dataclass(frozen=True)
class CatalogParams:
    n_items: int = 100
    n_categories: int = 10
    n_contexts: int = 1
    zipf_exponent: float = 1.2
    n_groups: int = 5
    seed: int = 0
    correlate_categories: bool = False


@dataclass(frozen=True)
class DataParams:
    n_train: int = 4096
    n_eval: int = 512

    def __post_init__(self):
        for name in ('n_train', 'n_eval'):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError("data.%s: must be a positive integer, got %r" % (name, getattr(self, name)))


@dataclass(frozen=True)
class EvalParams:
    k: int = 5
    top_m: int = 3
    decode: str = 'sample'
    temperature: float = 1.0

    def __post_init__(self):
        if self.decode not in DECODERS:
            raise ConfigError("eval.decode: must be one of %s, got %r" % (DECODERS, self.decode))
        for name in ('k', 'top_m'):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                raise ConfigError("eval.%s: must be a positive integer, got %r" % (name, getattr(self, name)))
        if not self.temperature > 0:
            raise ConfigError("eval.temperature: must be positive, got %r" % self.temperature)


@dataclass(frozen=True)
class ArmSpec:
    """One arm: a training kind plus TrainConfig overrides."""

    name: str
    kind: str
    overrides: dict = field(default_factory=dict)

    def config(self, base):
        return replace(base, **self.overrides)


SECTIONS = {'catalog': CatalogParams, 'data': DataParams, 'eval': EvalParams, 'train': TrainConfig}


def _section(cls, name, values):
    values = values or {}
    if not isinstance(values, dict):
        raise ConfigError("%s: expected a mapping, got %r" % (name, values))
    known = [item.name for item in fields(cls)]
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError("%s.%s: unknown field" % (name, unknown[0]))
    return cls(**values)


@dataclass
class ExperimentSpec:
    """A validated experiment: world, data, evaluation, training and arms."""

    name: str
    kind: str = 'train'
    catalog: CatalogParams = field(default_factory=CatalogParams)
    data: DataParams = field(default_factory=DataParams)
    eval: EvalParams = field(default_factory=EvalParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    arms: list = field(default_factory=list)
    replications: int = 1
    master_seed: int = 0
    output_dir: str = None
    verify: dict = field(default_factory=lambda: dict(VERIFY_DEFAULTS))

    @classmethod
    def from_dict(cls, data, name=None):
        """Validate a raw (preset) mapping; errors name the offending field."""
        data = dict(data)
        unknown = sorted(set(data) - set(TOP_LEVEL_KEYS) - set(SECTIONS) - {'arms', 'verify', 'sweep'})
        if unknown:
            raise ConfigError("%s: unknown field" % unknown[0])
        kind = data.get('kind', 'train')
        if kind not in EXPERIMENT_KINDS:
            raise ConfigError("kind: must be one of %s, got %r" % (EXPERIMENT_KINDS, kind))
        sections = {key: _section(section_cls, key, data.get(key)) for key, section_cls in SECTIONS.items()}
        _check_catalog(sections['catalog'])

        replications = data.get('replications', 1)
        if not isinstance(replications, int) or replications < 1:
            raise ConfigError("replications: must be a positive integer, got %r" % (replications, ))
        master_seed = data.get('master_seed', 0)
        if not isinstance(master_seed, int) or master_seed < 0:
            raise ConfigError("master_seed: must be a non-negative integer, got %r" % (master_seed, ))

        verify = dict(VERIFY_DEFAULTS)
        unknown = sorted(set(data.get('verify') or {}) - set(VERIFY_DEFAULTS))
        if unknown:
            raise ConfigError("verify.%s: unknown field" % unknown[0])
        verify.update(data.get('verify') or {})
        if verify['method'] not in OPTIMIZER_METHODS:
            raise ConfigError("verify.method: must be one of %s" % (OPTIMIZER_METHODS, ))

        arms = [_arm(index, raw, sections['train']) for index, raw in enumerate(data.get('arms') or [])]
        arms += _sweep_arms(data.get('sweep'), sections['train'])
        names = [arm.name for arm in arms]
        for index, arm_name in enumerate(names):
            if arm_name in names[:index]:
                raise ConfigError("arms[%d].name: duplicate arm name %r" % (index, arm_name))
        if kind == 'train' and not arms:
            raise ConfigError("arms: a training experiment needs at least one arm")

        return cls(name=data.get('name', name or 'experiment'), kind=kind, arms=arms,
                   replications=replications, master_seed=master_seed,
                   output_dir=data.get('output_dir'), verify=verify, **sections)

    def to_dict(self):
        """JSON-ready form; the output directory is left out so reruns compare equal."""
        data = {'name': self.name, 'kind': self.kind, 'replications': self.replications,
                'master_seed': self.master_seed, 'arms': [asdict(arm) for arm in self.arms]}
        for key in SECTIONS:
            data[key] = asdict(getattr(self, key))
        if self.kind == 'verify':
            data['verify'] = self.verify
        return data


def _check_catalog(params):
    if not isinstance(params.n_items, int) or params.n_items < 2:
        raise ConfigError("catalog.n_items: must be an integer >= 2, got %r" % (params.n_items, ))
    if not isinstance(params.n_groups, int) or not 2 <= params.n_groups <= params.n_items:
        raise ConfigError("catalog.n_groups: must be in 2..n_items, got %r" % (params.n_groups, ))
    for name in ('n_categories', 'n_contexts'):
        if not isinstance(getattr(params, name), int) or getattr(params, name) < 1:
            raise ConfigError("catalog.%s: must be a positive integer" % name)
    if not isinstance(params.zipf_exponent, (int, float)) or params.zipf_exponent < 0:
        raise ConfigError("catalog.zipf_exponent: must be non-negative, got %r" % (params.zipf_exponent, ))


def _arm(index, raw, base, path=None):
    path = path or "arms[%d]" % index
    if not isinstance(raw, dict):
        raise ConfigError("%s: expected a mapping" % path)
    unknown = sorted(set(raw) - {'name', 'kind', 'overrides'})
    if unknown:
        raise ConfigError("%s.%s: unknown field" % (path, unknown[0]))
    if not raw.get('name'):
        raise ConfigError("%s.name: missing" % path)
    kind = raw.get('kind', 'sprec')
    if kind not in ARM_KINDS:
        raise ConfigError("%s.kind: must be one of %s, got %r" % (path, ARM_KINDS, kind))
    overrides = dict(raw.get('overrides') or {})
    unknown = sorted(set(overrides) - set(TrainConfig.field_names()))
    if unknown:
        raise ConfigError("%s.overrides.%s: unknown training field" % (path, unknown[0]))
    arm = ArmSpec(str(raw['name']), kind, overrides)
    try:
        arm.config(base)
    except ConfigError as err:
        raise ConfigError("%s.overrides: %s" % (path, err))
    return arm


def _sweep_arms(sweep, base):
    if not sweep:
        return []
    if not isinstance(sweep, dict) or 'param' not in sweep or 'values' not in sweep:
        raise ConfigError("sweep: needs 'param' and 'values'")
    param = sweep['param']
    if param not in TrainConfig.field_names():
        raise ConfigError("sweep.param: unknown training field %r" % (param, ))
    values = sweep['values']
    if not isinstance(values, list) or not values:
        raise ConfigError("sweep.values: expected a non-empty list")
    template = dict(sweep.get('arm') or {})
    arms = []
    for index, value in enumerate(values):
        overrides = dict(template.get('overrides') or {})
        overrides[param] = value
        raw = {'name': '%s_%s' % (param, value), 'kind': template.get('kind', 'sprec'), 'overrides': overrides}
        arms.append(_arm(index, raw, base, path="sweep.values[%d]" % index))
    return arms


def _get_config_path():
    """Directory holding presets.yaml."""
    config_path = os.getenv('PYPREFSIM_CONFIG_PATH', PKG_CONFIG_DIR)
    LOGGER.debug("Path to the prefsim configuration (where presets.yaml is found): %s", config_path)
    return config_path


def get_presets_filepath():
    """Return the presets file, preferring the user configuration directory."""
    filepath = os.path.join(_get_config_path(), PRESETS_FILENAME)
    if not os.path.isfile(filepath):
        LOGGER.warning("No %s in %s, using the packaged presets", PRESETS_FILENAME, _get_config_path())
        filepath = os.path.join(PKG_CONFIG_DIR, PRESETS_FILENAME)
    return filepath


def read_presets(filename=None):
    """All presets as raw mappings."""
    with open(filename or get_presets_filepath(), 'r') as fid:
        presets = yaml.load(fid, Loader=yaml.SafeLoader)
    if not isinstance(presets, dict):
        raise ConfigError("presets file must hold a mapping of experiments")
    return presets


def _parse_value(text):
    value = yaml.safe_load(text)
    if isinstance(value, str):
        # YAML 1.1 reads 1e-3 as a string
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _flatten(mapping):
    """Nested section mappings as dotted keys, one level deep."""
    flat = {}
    for key, value in mapping.items():
        if isinstance(value, dict) and (key in SECTIONS or key in ('verify', 'sweep')):
            flat.update(("%s.%s" % (key, name), item) for name, item in value.items())
        else:
            flat[key] = value
    return flat


def read_flat_config(filename):
    """Read a flat configuration file: YAML, or ``key=value`` lines."""
    with open(filename, 'r') as fid:
        text = fid.read()
    if filename.endswith(('.yaml', '.yml')):
        data = yaml.load(text, Loader=yaml.SafeLoader) or {}
        if not isinstance(data, dict):
            raise ConfigError("%s: expected a mapping" % filename)
        return _flatten(data)
    settings = {}
    for number, line in enumerate(text.splitlines(), 1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError("%s:%d: expected key=value, got %r" % (filename, number, line))
        key, value = line.split('=', 1)
        settings[key.strip()] = _parse_value(value.strip())
    return settings


def parse_set_flags(flags):
    """``["train.beta=0.3", ...]`` as a mapping."""
    settings = {}
    for flag in flags or []:
        if '=' not in flag:
            raise ConfigError("--set expects key=value, got %r" % flag)
        key, value = flag.split('=', 1)
        settings[key.strip()] = _parse_value(value.strip())
    return settings


def _resolve_key(key):
    if '.' in key:
        section, name = key.split('.', 1)
        if section not in SECTIONS and section not in ('verify', 'sweep'):
            raise ConfigError("%s: unknown section %r" % (key, section))
        return section, name
    if key in TOP_LEVEL_KEYS:
        return None, key
    owners = [section for section, cls in SECTIONS.items() if key in [item.name for item in fields(cls)]]
    if key in VERIFY_DEFAULTS:
        owners.append('verify')
    if not owners:
        raise ConfigError("%s: unknown setting" % key)
    if len(owners) > 1:
        raise ConfigError("%s: ambiguous, use one of %s" % (key, ", ".join("%s.%s" % (o, key) for o in owners)))
    return owners[0], key


def apply_overrides(raw, overrides):
    """Return a copy of the raw experiment mapping with dotted or bare *overrides* set."""
    result = {key: dict(value) if isinstance(value, dict) else value for key, value in raw.items()}
    for key, value in overrides.items():
        section, name = _resolve_key(key)
        if section is None:
            result[name] = value
        else:
            result.setdefault(section, {})
            result[section] = dict(result[section] or {})
            result[section][name] = value
    return result


def load_experiment(preset=None, config_file=None, set_flags=None, presets_file=None, output_dir=None,
                    arms=None):
    """Build an :class:`ExperimentSpec` from a preset, a config file and ``--set`` flags (flags win).

    *arms*, if given, replaces the arm list before validation.
    """
    raw = {}
    if preset is not None:
        presets = read_presets(presets_file)
        if preset not in presets:
            raise ConfigError("preset: unknown experiment %r (known: %s)" % (preset, ", ".join(sorted(presets))))
        raw = presets[preset]
    overrides = {}
    if config_file is not None:
        overrides.update(read_flat_config(config_file))
    overrides.update(parse_set_flags(set_flags))
    raw = apply_overrides(raw, overrides)
    if output_dir is not None:
        raw['output_dir'] = output_dir
    if arms is not None:
        raw['arms'] = arms
        raw.pop('sweep', None)
    return ExperimentSpec.from_dict(raw, name=preset)


def build_world(spec):
    """Catalog with popularity groups."""
    params = spec.catalog
    try:
        catalog = build_catalog(params.n_items, params.n_categories, params.n_contexts,
                                params.zipf_exponent, params.seed, params.correlate_categories)
        return assign_popularity_groups(catalog, params.n_groups)
    except CatalogError as err:
        raise ConfigError("catalog: %s" % err)


def _replication_data(spec, catalog, replication):
    seed_seq = np.random.SeedSequence(spec.master_seed, spawn_key=(0, replication))
    train_set = sample_interactions(catalog, spec.data.n_train, child_rng(seed_seq, 0))
    eval_set = sample_interactions(catalog, spec.data.n_eval, child_rng(seed_seq, 1))
    return train_set, eval_set


def arm_seed_sequence(master_seed, arm_name, replication):
    """Independent stream of one arm replication, keyed by a stable hash of the arm name."""
    return np.random.SeedSequence(master_seed, spawn_key=(zlib.crc32(arm_name.encode()), replication))


def _run_arm(job):
    """Train one arm replication and save it; returns its metric dicts."""
    spec, arm, replication, catalog, rep_dir = job
    train_set, eval_set = _replication_data(spec, catalog, replication)
    config = arm.config(spec.train)
    seed_seq = arm_seed_sequence(spec.master_seed, arm.name, replication)

    def evaluator(policy, iteration, phase):
        rng = child_rng(seed_seq, iteration, 2 + PHASES.index(phase))
        return evaluate_policy(policy, catalog, eval_set, train_set, k=spec.eval.k, top_m=spec.eval.top_m,
                               decode=spec.eval.decode, rng=rng, temperature=spec.eval.temperature,
                               iteration=iteration, phase=phase, arm=arm.name)

    LOGGER.info("Running arm %s, replication %d", arm.name, replication)
    init = Policy.uniform(catalog.n_contexts, catalog.n_items)
    if arm.kind == 'sft_only':
        trajectory = train_sft_baseline(init, train_set, config, evaluator, seed_seq)
    elif arm.kind == 'dpo':
        trajectory = train_dpo_baseline(init, train_set, config, evaluator, seed_seq)
    else:
        trajectory = sprec_run(init, train_set, config, evaluator, seed_seq)
    trajectory.save(rep_dir, arm.name)
    return [report.to_dict() for report in trajectory.metrics]


def _worker_count(workers=None):
    if workers is None:
        try:
            workers = int(os.getenv('PYPREFSIM_WORKERS', '1'))
        except ValueError:
            raise ConfigError("PYPREFSIM_WORKERS: expected an integer, got %r" % os.getenv('PYPREFSIM_WORKERS'))
    return max(1, workers)


def _mean_report(arm, rows):
    """Average the metric dicts of one (iteration, phase) over replications."""
    def mean(key):
        return np.mean([row[key] for row in rows], axis=0)

    expected = None
    if rows[0].get('expected_group_share') is not None:
        expected = mean('expected_group_share')
    return MetricsReport(hr_at_k=float(mean('hr')), ndcg_at_k=float(mean('ndcg')),
                         div_ratio=float(mean('div_ratio')), or_ratio=float(mean('or_ratio')),
                         mgu=float(mean('mgu')), gu_per_category=mean('gu_per_category'),
                         group_share=mean('group_share'), tv_to_popularity=float(mean('tv_to_popularity')),
                         expected_group_share=expected, iteration=rows[0]['iteration'],
                         phase=rows[0]['phase'], arm=arm)


def _run_training(spec, workdir, workers):
    catalog = build_world(spec)
    catalog.save(os.path.join(workdir, 'catalog.json'))
    jobs = []
    for arm in spec.arms:
        for replication in range(spec.replications):
            rep_dir = os.path.join(workdir, 'arms', arm.name, 'rep_%d' % replication)
            jobs.append((spec, arm, replication, catalog, rep_dir))

    workers = _worker_count(workers)
    if workers == 1:
        results = [_run_arm(job) for job in jobs]
    else:
        LOGGER.info("Dispatching %d arm replications to %d workers", len(jobs), workers)
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(_run_arm, jobs))

    summary = {'experiment': spec.name, 'replications': spec.replications, 'arms': {}}
    means = []
    for index, arm in enumerate(spec.arms):
        per_rep = results[index * spec.replications:(index + 1) * spec.replications]
        arm_means = [_mean_report(arm.name, [rep[step] for rep in per_rep]) for step in range(len(per_rep[0]))]
        means.extend(arm_means)
        summary['arms'][arm.name] = {'kind': arm.kind, 'overrides': arm.overrides,
                                     'phases': [report.to_dict() for report in arm_means]}
    write_metrics_csv(os.path.join(workdir, 'metrics.csv'), means)
    with open(os.path.join(workdir, 'summary.json'), 'w') as fid:
        json.dump(summary, fid, indent=2, sort_keys=True)
    return EXIT_OK


def _run_verification(spec, workdir):
    params = dict(spec.verify)
    opt_cfg = OptimizerConfig(method=params.pop('method'))
    report = verify_closed_forms(opt_cfg=opt_cfg, **params)
    with open(os.path.join(workdir, 'verification.json'), 'w') as fid:
        json.dump(report, fid, indent=2, sort_keys=True)
    return EXIT_OK if report['passed'] else EXIT_VERIFY_FAILED


def run_experiment(spec, workers=None, overwrite=False):
    """Run *spec* and write its directory; returns the exit status.

    Everything is written into a scratch directory next to ``output_dir`` and
    moved in place at the end, so a failed run leaves nothing behind.
    """
    if not spec.output_dir:
        raise ConfigError("output_dir: missing")
    output_dir = os.path.abspath(spec.output_dir)
    if os.path.exists(output_dir) and os.listdir(output_dir) and not overwrite:
        raise ConfigError("output_dir: %s exists and is not empty" % output_dir)
    parent = os.path.dirname(output_dir)
    os.makedirs(parent, exist_ok=True)
    workdir = tempfile.mkdtemp(prefix='.%s-' % os.path.basename(output_dir), dir=parent)
    try:
        with open(os.path.join(workdir, 'config.json'), 'w') as fid:
            json.dump(spec.to_dict(), fid, indent=2, sort_keys=True)
        if spec.kind == 'verify':
            status = _run_verification(spec, workdir)
        else:
            status = _run_training(spec, workdir, workers)
        if os.path.exists(output_dir):
            shutil.rmtree(output_dir)
        os.replace(workdir, output_dir)
    except BaseException:
        shutil.rmtree(workdir, ignore_errors=True)
        raise
    LOGGER.info("Experiment %s written to %s", spec.name, output_dir)
    return status


def emit_report(output_dir):
    """Write report.csv (long format, deltas against the SFT-only arm) and report.json."""
    metrics_file = os.path.join(output_dir, 'metrics.csv')
    summary_file = os.path.join(output_dir, 'summary.json')
    for filename in (metrics_file, summary_file):
        if not os.path.isfile(filename):
            raise ReportError("missing input: %s" % filename)
    try:
        rows = read_metrics_csv(metrics_file)
    except MetricsError as err:
        raise ReportError(str(err))
    if not rows:
        raise ReportError("no metric rows in %s" % metrics_file)
    with open(summary_file, 'r') as fid:
        summary = json.load(fid)
    if sorted(summary.get('arms', {})) != sorted({row['arm'] for row in rows}):
        raise ReportError("arms in %s and %s differ" % (summary_file, metrics_file))

    metric_names = [name for name in rows[0] if name not in ('arm', 'iteration', 'phase')]
    baseline_rows = [row for row in rows if row['arm'] == BASELINE_ARM]
    baseline = baseline_rows[-1] if baseline_rows else None
    if baseline is None:
        LOGGER.warning("No %s arm, deltas are left empty", BASELINE_ARM)

    report = {'baseline': BASELINE_ARM if baseline else None, 'arms': {}}
    csv_file = os.path.join(output_dir, 'report.csv')
    with open(csv_file, 'w', newline='') as fid:
        writer = csv.writer(fid, lineterminator='\n')
        writer.writerow(['arm', 'iteration', 'phase', 'metric', 'value', 'delta_vs_sft_only'])
        for row in rows:
            entry = {'iteration': row['iteration'], 'phase': row['phase'], 'metrics': {}, 'deltas': {}}
            for name in metric_names:
                delta = row[name] - baseline[name] if baseline else ''
                writer.writerow([row['arm'], row['iteration'], row['phase'], name, row[name], delta])
                entry['metrics'][name] = row[name]
                entry['deltas'][name] = delta if baseline else None
            report['arms'].setdefault(row['arm'], []).append(entry)
    json_file = os.path.join(output_dir, 'report.json')
    with open(json_file, 'w') as fid:
        json.dump(report, fid, indent=2, sort_keys=True)
    LOGGER.info("Report written to %s and %s", csv_file, json_file)
    return csv_file, json_file


def _synth(args):
    spec = load_experiment(args.preset, args.config, args.set)
    catalog = build_world(spec)
    catalog.save(args.output)
    LOGGER.info("Catalog with %d items written to %s, group masses %s",
                catalog.n_items, args.output, np.round(catalog.group_masses(), 4).tolist())
    return EXIT_OK


def _train(args):
    arms = None if args.preset else [{'name': args.kind, 'kind': args.kind}]
    spec = load_experiment(args.preset, args.config, args.set, output_dir=args.output, arms=arms)
    if args.arm:
        selected = [arm for arm in spec.arms if arm.name == args.arm]
        if not selected:
            raise ConfigError("arm: %r is not an arm of the experiment" % args.arm)
        spec.arms = selected
    return run_experiment(spec, overwrite=args.overwrite)


def _verify(args):
    spec = load_experiment(args.preset, args.config, args.set, output_dir=args.output)
    status = run_experiment(spec, overwrite=args.overwrite)
    if status == EXIT_VERIFY_FAILED:
        LOGGER.error("Closed-form verification failed, see %s",
                     os.path.join(spec.output_dir, 'verification.json'))
    return status


def _sweep(args):
    set_flags = list(args.set or [])
    if args.values:
        set_flags.append('sweep.values=[%s]' % args.values)
    spec = load_experiment(SWEEPS[args.grid], args.config, set_flags, output_dir=args.output)
    return run_experiment(spec, overwrite=args.overwrite)


def _run(args):
    spec = load_experiment(args.preset, args.config, args.set, output_dir=args.output)
    return run_experiment(spec, overwrite=args.overwrite)


def _report(args):
    emit_report(args.directory)
    return EXIT_OK


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="Log progress (-v) or debugging details (-vv)")
    common.add_argument("-c", "--config", default=None,
                        help="Flat configuration file, YAML or key=value lines")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override one setting, e.g. train.beta=0.3 (wins over --config)")

    output = argparse.ArgumentParser(add_help=False)
    output.add_argument("-o", "--output", required=True, help="Experiment directory to create")
    output.add_argument("--overwrite", action="store_true", help="Replace an existing output directory")

    parser = argparse.ArgumentParser(prog='prefsim',
                                     description='Preference-optimization simulations on tabular recommenders.')
    subparsers = parser.add_subparsers(dest='command', required=True)

    synth = subparsers.add_parser('synth', parents=[common], help="Write a synthetic catalog")
    synth.add_argument("-p", "--preset", default='fig1')
    synth.add_argument("-o", "--output", required=True, help="Catalog JSON file")
    synth.set_defaults(func=_synth)

    train = subparsers.add_parser('train', parents=[common, output], help="Train a single arm")
    train.add_argument("-p", "--preset", default=None)
    train.add_argument("--arm", default=None, help="Arm of the preset to run")
    train.add_argument("--kind", choices=ARM_KINDS, default='sprec', help="Arm kind without a preset")
    train.set_defaults(func=_train)

    verify = subparsers.add_parser('verify', parents=[common, output], help="Check the closed forms")
    verify.add_argument("-p", "--preset", default='verify-theorem')
    verify.set_defaults(func=_verify)

    sweep = subparsers.add_parser('sweep', parents=[common, output], help="Run a parameter grid")
    sweep.add_argument("grid", choices=sorted(SWEEPS))
    sweep.add_argument("--values", default=None, help="Comma separated grid values")
    sweep.set_defaults(func=_sweep)

    run = subparsers.add_parser('run', parents=[common, output], help="Run a preset experiment")
    run.add_argument("preset")
    run.set_defaults(func=_run)

    report = subparsers.add_parser('report', parents=[common], help="Consolidate an experiment directory")
    report.add_argument("directory")
    report.set_defaults(func=_report)
    return parser


def main(argv=None):
    """Entry point of the ``prefsim`` command; returns the exit status."""
    args = _parser().parse_args(argv)
    if args.verbose > 1:
        debug_on()
    elif args.verbose:
        logging_on(logging.INFO)
    try:
        return args.func(args)
    except DivergenceError as err:
        LOGGER.error("Training diverged: %s", err)
        return EXIT_DIVERGED
    except (ValueError, ReportError) as err:
        LOGGER.error("%s", err)
        return EXIT_INVALID


if __name__ == '__main__':
    sys.exit(main())
