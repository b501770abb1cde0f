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

"""Closed-form DPO and Bradley-Terry optima and the numerical checks behind them.

For chosen items drawn from ``p`` and rejected items drawn from ``q`` the
exact DPO objective is minimized by::

    pi*(y) = ref(y) * (p(y) / q(y)) ** (1 / beta) / Z

and the Bradley-Terry reward objective ``sum p(w) q(l) log sigma(r_w - r_l)``
is maximized by ``r*(y) = log p(y) - log q(y)`` up to a constant. The
optimizers here reach the same points by brute-force minimization over
unconstrained logits (or rewards), which is how the closed forms are
verified.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import expit, log_expit, logsumexp
from scipy.stats import entropy

from pyprefsim.catalog import zipf_weights
from pyprefsim.losses import exact_weighted_dpo_loss
from pyprefsim.policy import Policy

LOGGER = logging.getLogger(__name__)

REWARD_FLOOR = -40.0
OPTIMIZER_METHODS = ('lbfgs', 'gd')


class TheoryError(ValueError):
    """Inputs for which a closed form is undefined."""


class ConvergenceError(RuntimeError):
    """An optimizer stopped before reaching its gradient tolerance."""

    def __init__(self, message, grad_norm=None, n_iter=None):
        super().__init__(message)
        self.grad_norm = grad_norm
        self.n_iter = n_iter


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings of the verification optimizers.

    ``method='gd'`` is plain gradient descent starting at *lr*, halving the
    step whenever the loss goes up. ``method='lbfgs'`` hands the problem to
    L-BFGS-B with *tol* as its projected-gradient tolerance.
    """

    method: str = 'lbfgs'
    lr: float = 0.5
    max_iter: int = 200000
    tol: float = 1e-8

    def __post_init__(self):
        if self.method not in OPTIMIZER_METHODS:
            raise TheoryError("unknown optimizer method %r" % self.method)
        if not self.lr > 0 or not self.tol > 0 or self.max_iter < 1:
            raise TheoryError("lr, tol and max_iter must be positive")


@dataclass
class ClosedFormSolution:
    """Optimal policy and centered reward of one context."""

    policy_star: np.ndarray
    reward_star: np.ndarray
    beta: float


def _nonnegative(vec, name):
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1 or not np.all(np.isfinite(vec)) or np.any(vec < 0) or vec.sum() <= 0:
        raise TheoryError("%s must be a non-negative vector with positive mass" % name)
    return vec


def _log_reference(ref, context, n_items):
    if isinstance(ref, Policy):
        log_ref = ref.log_probs(context)
    else:
        ref = _nonnegative(ref, "ref")
        if np.any(ref == 0):
            raise TheoryError("reference distribution must be strictly positive")
        log_ref = np.log(ref / ref.sum())
    if log_ref.shape != (n_items, ):
        raise TheoryError("reference has %d items, expected %d" % (log_ref.size, n_items))
    return log_ref


def closed_form_optimal_policy(ref, p, q, beta, context=0):
    """Return ``pi*`` for reference *ref* (a :class:`Policy` or a vector).

    *p* and *q* need not be normalized; only their ratio matters. Items
    without chosen mass get zero probability.
    """
    p = _nonnegative(p, "p")
    q = _nonnegative(q, "q")
    if p.shape != q.shape:
        raise TheoryError("p and q differ in length")
    if not beta > 0:
        raise TheoryError("beta must be positive, got %r" % beta)
    if np.any((q == 0) & (p > 0)):
        raise TheoryError("p/q is undefined where q vanishes and p does not")
    log_ref = _log_reference(ref, context, p.size)

    support = p > 0
    logits = np.full(p.size, -np.inf)
    logits[support] = log_ref[support] + (np.log(p[support]) - np.log(q[support])) / beta
    return np.exp(logits - logsumexp(logits))


def closed_form_optimal_reward(p, q):
    """Centered ``log p - log q``."""
    p = _nonnegative(p, "p")
    q = _nonnegative(q, "q")
    if p.shape != q.shape:
        raise TheoryError("p and q differ in length")
    if np.any(p == 0) or np.any(q == 0):
        raise TheoryError("the reward optimum needs strictly positive p and q")
    reward = np.log(p) - np.log(q)
    return reward - reward.mean()


def closed_form_solution(ref, p, q, beta, context=0):
    """Both closed forms bundled in a :class:`ClosedFormSolution`."""
    return ClosedFormSolution(policy_star=closed_form_optimal_policy(ref, p, q, beta, context),
                              reward_star=closed_form_optimal_reward(p, q),
                              beta=beta)


def bt_reward_objective(reward, p, q):
    """Exact Bradley-Terry log-likelihood and its gradient (to be maximized)."""
    reward = np.asarray(reward, dtype=np.float64)
    gap = reward[:, np.newaxis] - reward[np.newaxis, :]
    pair_weight = p[:, np.newaxis] * q[np.newaxis, :]
    value = np.sum(pair_weight * log_expit(gap))
    slack = pair_weight * expit(-gap)
    grad = slack.sum(axis=1) - slack.sum(axis=0)
    return float(value), grad


def _gradient_descent(fun, x0, opt_cfg, lower=None):
    """Minimize with a halving step; returns (x, loss, grad, n_iter).

    With *lower* every step is projected back onto ``x >= lower``.
    """
    x = np.array(x0, dtype=np.float64)
    lr = opt_cfg.lr
    loss, grad = fun(x)
    for n_iter in range(opt_cfg.max_iter):
        if _projected_grad_norm(x, grad, lower) < opt_cfg.tol:
            return x, loss, grad, n_iter
        candidate = x - lr * grad
        if lower is not None:
            candidate = np.maximum(candidate, lower)
        new_loss, new_grad = fun(candidate)
        if new_loss > loss:
            lr /= 2
            if lr < 1e-300:
                break
            continue
        x, loss, grad = candidate, new_loss, new_grad
    return x, loss, grad, opt_cfg.max_iter


def _minimize(fun, x0, opt_cfg, lower=None):
    if opt_cfg.method == 'gd':
        return _gradient_descent(fun, x0, opt_cfg, lower)
    bounds = None if lower is None else [(lower, None)] * len(x0)
    res = optimize.minimize(fun, x0, jac=True, method='L-BFGS-B', bounds=bounds,
                            options={'gtol': opt_cfg.tol, 'ftol': 0.0,
                                     'maxiter': opt_cfg.max_iter, 'maxls': 50})
    LOGGER.debug("L-BFGS-B finished after %d iterations: %s", res.nit, res.message)
    return res.x, res.fun, res.jac, res.nit


def _projected_grad_norm(x, grad, lower):
    grad = np.array(grad)
    if lower is not None:
        # at the lower bound only descent directions that leave it count
        grad[(x <= lower) & (grad > 0)] = 0.0
    return float(np.max(np.abs(grad)))


def _report(name, grad_norm, n_iter, opt_cfg, disp):
    converged = grad_norm < opt_cfg.tol
    if not converged:
        msg = "%s did not converge: gradient norm %.3g after %d iterations" % (name, grad_norm, n_iter)
        if disp:
            raise ConvergenceError(msg, grad_norm=grad_norm, n_iter=n_iter)
        LOGGER.warning(msg)
    return converged


def exact_dpo_optimize(ref, p, q, beta, context=0, opt_cfg=None, full_output=False, disp=False):
    """Minimize the exact DPO objective over the logits of one context.

    Starts from uniform logits and returns a one-context :class:`Policy`.
    With *full_output* an info dict (loss, grad_norm, n_iter, converged) is
    returned as well. With *disp* a missed tolerance raises
    :class:`ConvergenceError` instead of logging a warning.
    """
    opt_cfg = opt_cfg or OptimizerConfig()
    p = _nonnegative(p, "p")
    q = _nonnegative(q, "q")
    if np.any((q == 0) & (p > 0)):
        raise TheoryError("p/q is undefined where q vanishes and p does not")
    p = p / p.sum()
    q = q / q.sum()
    ref_policy = Policy(_log_reference(ref, context, p.size))

    def fun(logits):
        res = exact_weighted_dpo_loss(Policy(logits), ref_policy, p, q, 1.0, beta, 0)
        return res.value, res.grad[0]

    logits, loss, grad, n_iter = _minimize(fun, np.zeros(p.size), opt_cfg)
    grad_norm = _projected_grad_norm(logits, grad, None)
    converged = _report("exact_dpo_optimize", grad_norm, n_iter, opt_cfg, disp)
    policy = Policy(logits).centered()
    if full_output:
        return policy, {"loss": float(loss), "grad_norm": grad_norm,
                        "n_iter": int(n_iter), "converged": bool(converged)}
    return policy


def exact_bt_reward_optimize(p, q, opt_cfg=None, full_output=False, disp=False):
    """Maximize the exact Bradley-Terry objective over per-item rewards.

    Items never chosen (``p == 0``) have an optimum at minus infinity; they
    are held at :data:`REWARD_FLOOR` and flagged in the ``floored`` entry of
    the info dict. The result is centered over the remaining items.
    """
    opt_cfg = opt_cfg or OptimizerConfig()
    p = _nonnegative(p, "p")
    q = _nonnegative(q, "q")
    if p.shape != q.shape:
        raise TheoryError("p and q differ in length")
    if np.any(q == 0):
        raise TheoryError("the reward objective needs strictly positive q")
    p = p / p.sum()
    q = q / q.sum()

    def fun(reward):
        value, grad = bt_reward_objective(reward, p, q)
        return -value, -grad

    reward, loss, grad, n_iter = _minimize(fun, np.zeros(p.size), opt_cfg, lower=REWARD_FLOOR)
    grad_norm = _projected_grad_norm(reward, grad, REWARD_FLOOR)
    converged = _report("exact_bt_reward_optimize", grad_norm, n_iter, opt_cfg, disp)

    floored = p == 0
    if np.any(floored):
        LOGGER.warning("%d items without chosen mass held at the reward floor %g",
                       floored.sum(), REWARD_FLOOR)
    centered = reward - reward[~floored].mean()
    centered[floored] = REWARD_FLOOR
    if full_output:
        return centered, {"loss": float(loss), "grad_norm": grad_norm, "n_iter": int(n_iter),
                          "converged": bool(converged), "floored": floored}
    return centered


def beta_sharpening_curve(ref, p, q, betas, context=0):
    """``(beta, top-1 mass, entropy)`` of the closed-form policy per *beta*."""
    betas = [float(beta) for beta in betas]
    if any(beta <= 0 for beta in betas):
        raise TheoryError("betas must be positive")
    if any(later > earlier for earlier, later in zip(betas, betas[1:])):
        raise TheoryError("betas must be sorted in descending order")
    curve = []
    for beta in betas:
        star = closed_form_optimal_policy(ref, p, q, beta, context)
        curve.append((beta, float(star.max()), float(entropy(star))))
    return curve


def _tv(first, second):
    return 0.5 * float(np.abs(first - second).sum())


def verify_closed_forms(n_instances=5, n_items=20, betas=(0.1, 0.5, 1.0, 2.0), seed=0,
                        opt_cfg=None, tv_tol=1e-3, reward_items=10, reward_tol=1e-4,
                        collapse_popularity=None, collapse_betas=(2.0, 1.0, 0.5, 0.1, 0.01)):
    """Check both closed forms against the optimizers on random instances.

    Chosen distributions are Dirichlet draws, negatives are uniform and the
    reference alternates between uniform and random. The collapse check runs
    the sharpening curve on *collapse_popularity* (a default Zipf law when
    not given). Returns a JSON-ready report with a global ``passed`` flag.
    """
    opt_cfg = opt_cfg or OptimizerConfig()
    rng = np.random.default_rng(seed)
    uniform = np.full(n_items, 1.0 / n_items)

    dpo_rows = []
    for instance in range(n_instances):
        p = rng.dirichlet(np.ones(n_items))
        ref = uniform if instance % 2 == 0 else rng.dirichlet(np.ones(n_items))
        for beta in betas:
            trained, info = exact_dpo_optimize(ref, p, uniform, beta, opt_cfg=opt_cfg, full_output=True)
            tv = _tv(trained.probs(0), closed_form_optimal_policy(ref, p, uniform, beta))
            dpo_rows.append({"instance": instance, "beta": float(beta),
                             "reference": "uniform" if instance % 2 == 0 else "random",
                             "tv": tv, "grad_norm": info["grad_norm"], "n_iter": info["n_iter"],
                             "passed": tv < tv_tol})
            LOGGER.debug("DPO instance %d, beta %g: TV %.3g", instance, beta, tv)

    reward_rows = []
    for instance in range(n_instances):
        p = rng.dirichlet(np.ones(reward_items))
        q = rng.dirichlet(np.ones(reward_items))
        reward, info = exact_bt_reward_optimize(p, q, opt_cfg=opt_cfg, full_output=True)
        error = float(np.max(np.abs(reward - closed_form_optimal_reward(p, q))))
        reward_rows.append({"instance": instance, "max_abs_error": error,
                            "grad_norm": info["grad_norm"], "passed": error < reward_tol})

    if collapse_popularity is None:
        collapse_popularity = zipf_weights(100, 1.2)
    collapse_popularity = np.asarray(collapse_popularity, dtype=np.float64)
    flat = np.full(collapse_popularity.size, 1.0 / collapse_popularity.size)
    curve = beta_sharpening_curve(flat, collapse_popularity, flat, collapse_betas)
    top1 = [mass for _, mass, _ in curve]
    monotone = all(later >= earlier for earlier, later in zip(top1, top1[1:]))
    collapse = {"curve": [{"beta": b, "top1_mass": m, "entropy": h} for b, m, h in curve],
                "monotone": monotone, "final_top1_mass": top1[-1],
                "passed": bool(monotone and top1[-1] > 0.999)}

    passed = (all(row["passed"] for row in dpo_rows) and
              all(row["passed"] for row in reward_rows) and collapse["passed"])
    LOGGER.info("Closed-form verification %s: max DPO TV %.3g, max reward error %.3g",
                "passed" if passed else "FAILED",
                max(row["tv"] for row in dpo_rows), max(row["max_abs_error"] for row in reward_rows))
    return {"dpo": dpo_rows, "reward": reward_rows, "collapse": collapse, "passed": bool(passed)}
