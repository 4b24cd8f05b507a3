#   Copyright 2021 The hbcsim Authors.
#
#   Licensed under the Apache License, Version 2.0 (the "License"); you may
#   not use this file except in compliance with the License. You may obtain
#   a copy of the License at
#
#        http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS, WITHOUT
#   WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied. See the
#   License for the specific language governing permissions and limitations
#   under the License.
#
"""Gaussian-process Bayesian optimization over the unit box.

The objective is maximized. Parameters live in ``[0, 1]^d``;
:class:`ParamBox` maps them to exoskeleton gains.
"""
import csv
import logging

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize, special

from hbcsim.exceptions import ConditioningError
from hbcsim.exo import ExoParams

LOG = logging.getLogger(__name__ + ".bayesopt")

MAX_JITTER = 1e-4


@dataclass(frozen=True)
class GpConfig(object):
    """Squared-exponential kernel and acquisition settings

    :param lengthscale: Kernel lengthscale, scalar or one per dimension
    :param signal_variance: Prior variance ``s^2``
    :param noise_variance: Observation noise ``sigma^2``
    :param jitter: Initial diagonal jitter of the Cholesky solves
    :param starts: Local refinements per acquisition
    :param refine_steps: L-BFGS-B iterations per refinement
    :param candidates: Random points screened before refinement
    """
    lengthscale: object = 0.2
    signal_variance: float = 1.0
    noise_variance: float = 0.01
    jitter: float = 1e-8
    starts: int = 64
    refine_steps: int = 100
    candidates: int = 2048

    def validate(self):
        errors = []
        if np.any(np.asarray(self.lengthscale, dtype=float) <= 0):
            errors.append('lengthscale must be > 0')
        if self.signal_variance <= 0 or self.noise_variance <= 0:
            errors.append('kernel variances must be > 0')
        if self.jitter <= 0:
            errors.append('jitter must be > 0')
        if self.starts < 1 or self.refine_steps < 1:
            errors.append('starts and refine_steps must be >= 1')
        return errors


@dataclass
class GpDataset(object):
    """Observed ``(x, y)`` pairs, ``x`` in the unit box

    A failed evaluation is stored as ``nan`` and fitted as the worst
    observed value.
    """
    dim: int
    points: list = field(default_factory=list)
    values: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    def add(self, x, y):
        x = np.asarray(x, dtype=float).reshape(self.dim)
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("Point {} lies outside the unit box".format(x))
        self.points.append(x)
        self.values.append(float(y))

    @property
    def x(self):
        return np.array(self.points, dtype=float).reshape(-1, self.dim)

    @property
    def y(self):
        y = np.array(self.values, dtype=float)
        finite = np.isfinite(y)
        if not finite.all():
            y[~finite] = y[finite].min() if finite.any() else 0.0
        return y

    def standardized(self):
        """Copy with values shifted and scaled to zero mean, unit variance"""
        y = self.y
        scale = y.std() if y.size > 1 and y.std() > 0 else 1.0
        centered = (y - y.mean()) / scale if y.size else y
        return GpDataset(dim=self.dim, points=list(self.points),
                         values=list(centered))


def kernel(a, b, cfg):
    """Squared-exponential covariance between two point sets"""
    ell = np.asarray(cfg.lengthscale, dtype=float)
    diff = (np.asarray(a)[:, None, :] - np.asarray(b)[None, :, :]) / ell
    return cfg.signal_variance * np.exp(-0.5 * np.sum(diff ** 2, axis=-1))


def _cholesky(gram, cfg):
    jitter = cfg.jitter
    eye = np.eye(len(gram))
    while jitter <= MAX_JITTER * (1 + 1e-9):
        try:
            return linalg.cho_factor(gram + jitter * eye, lower=True)
        except linalg.LinAlgError:
            LOG.debug("Cholesky failed with jitter {:.0e}".format(jitter))
            jitter *= 10.0
    raise ConditioningError(
        "Gram matrix of {} points is not positive definite after jitter "
        "{:.0e} (condition number {:.3e})".format(
            len(gram), MAX_JITTER, np.linalg.cond(gram)))


def _merge_duplicates(x, y):
    """Fold repeated points into one observation carrying their mean value"""
    if len(x) < 2:
        return x, y
    unique, inverse = np.unique(x, axis=0, return_inverse=True)
    if len(unique) == len(x):
        return x, y
    inverse = np.asarray(inverse).reshape(-1)
    counts = np.bincount(inverse, minlength=len(unique))
    sums = np.bincount(inverse, weights=y, minlength=len(unique))
    return unique, sums / counts


class GpPosterior(object):
    """Exact GP posterior of a dataset, factorized once

    Repeated evaluations of one point are fitted as a single observation
    of their mean value.
    """

    def __init__(self, dataset, cfg):
        self.cfg = cfg
        self.x, self.y = _merge_duplicates(dataset.x, dataset.y)
        self.ell2 = np.asarray(cfg.lengthscale, dtype=float) ** 2
        if len(self.x):
            gram = kernel(self.x, self.x, cfg) + \
                cfg.noise_variance * np.eye(len(self.x))
            self.factor = _cholesky(gram, cfg)
            self.alpha = linalg.cho_solve(self.factor, self.y)
        else:
            self.factor = None

    def predict(self, points):
        """Predictive mean and std of the latent objective at ``points``"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        prior_var = np.full(len(points), self.cfg.signal_variance)
        if self.factor is None:
            return np.zeros(len(points)), np.sqrt(prior_var)
        k_n = kernel(points, self.x, self.cfg)
        mean = k_n @ self.alpha
        v = linalg.solve_triangular(self.factor[0], k_n.T, lower=True)
        var = prior_var - np.sum(v ** 2, axis=0)
        return mean, np.sqrt(np.maximum(var, 0.0))

    def predict_with_gradient(self, point):
        """Mean, std and their gradients at a single point ``(d,)``"""
        point = np.asarray(point, dtype=float)
        dim = point.shape[0]
        if self.factor is None:
            return (0.0, float(np.sqrt(self.cfg.signal_variance)),
                    np.zeros(dim), np.zeros(dim))
        k_n = kernel(point[None, :], self.x, self.cfg)[0]
        d_k = -k_n[:, None] * (point - self.x) / self.ell2
        mean = float(k_n @ self.alpha)
        d_mean = d_k.T @ self.alpha
        v = linalg.solve_triangular(self.factor[0], k_n, lower=True)
        var = self.cfg.signal_variance - float(v @ v)
        std = float(np.sqrt(max(var, 0.0)))
        if std < 1e-12:
            return mean, std, d_mean, np.zeros(dim)
        d_var = -2.0 * d_k.T @ linalg.cho_solve(self.factor, k_n)
        return mean, std, d_mean, d_var / (2.0 * std)


def gp_posterior(dataset, cfg, x):
    """Posterior mean and standard deviation at ``x``

    :param dataset: The observations
    :type dataset: :class:`GpDataset`
    :param cfg: Kernel settings
    :type cfg: :class:`GpConfig`
    :param x: One point ``(d,)`` or several ``(m, d)``
    :return: ``(mean, std)``, scalars for a single point
    :raises: a :class:`ConditioningError` when the Gram matrix stays
             indefinite
    """
    mean, std = GpPosterior(dataset, cfg).predict(x)
    if np.ndim(x) == 1:
        return float(mean[0]), float(std[0])
    return mean, std


def _norm_pdf(z):
    return np.exp(-0.5 * z ** 2) / np.sqrt(2.0 * np.pi)


def expected_improvement(mean, std, f_best):
    """``E[max(f - f_best, 0)]`` for ``f ~ N(mean, std^2)``"""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    gap = mean - f_best
    positive = std > 0
    safe = np.where(positive, std, 1.0)
    z = gap / safe
    ei = gap * special.ndtr(z) + safe * _norm_pdf(z)
    return np.where(positive, np.maximum(ei, 0.0), np.maximum(gap, 0.0))


def _negative_ei(point, posterior, f_best):
    """Negated EI at one point and its gradient, for L-BFGS-B"""
    mean, std, d_mean, d_std = posterior.predict_with_gradient(point)
    gap = mean - f_best
    if std <= 0:
        if gap > 0:
            return -gap, -d_mean
        return 0.0, np.zeros_like(d_mean)
    z = gap / std
    cdf, pdf = float(special.ndtr(z)), float(_norm_pdf(z))
    ei = gap * cdf + std * pdf
    return -max(ei, 0.0), -(cdf * d_mean + pdf * d_std)


def acquire_next(dataset, cfg, rng):
    """Point of the unit box maximizing the expected improvement

    A random screen picks ``cfg.starts`` starting points that are refined
    with L-BFGS-B on the analytic EI gradient.

    :param rng: A ``numpy.random.Generator``
    :rtype: ``numpy.ndarray``
    """
    data = dataset.standardized()
    posterior = GpPosterior(data, cfg)
    f_best = float(data.y.max()) if len(data) else 0.0

    candidates = rng.random((max(cfg.candidates, cfg.starts), dataset.dim))
    scores = expected_improvement(*posterior.predict(candidates), f_best)
    order = np.argsort(-scores, kind='stable')[:cfg.starts]
    best_x = candidates[order[0]]
    best_score = scores[order[0]]
    bounds = [(0.0, 1.0)] * dataset.dim
    for start in candidates[order]:
        result = optimize.minimize(
            _negative_ei, start, args=(posterior, f_best), jac=True,
            method='L-BFGS-B', bounds=bounds,
            options={'maxiter': cfg.refine_steps})
        score = -float(result.fun)
        if np.isfinite(score) and score > best_score:
            best_x, best_score = np.clip(result.x, 0.0, 1.0), score
    return np.array(best_x, dtype=float)


class ParamBox(object):
    """Bounds of the optimized exoskeleton parameters

    The damping of the postural term follows ``k_dt = 0.1 * k_pt``.
    """
    NAMES = ('k_pe', 'k_de', 'k_pt', 'w')
    DEFAULT_BOUNDS = {'k_pe': (0.0, 400.0), 'k_de': (0.0, 40.0),
                      'k_pt': (0.0, 400.0), 'w': (0.0, 1.0)}

    def __init__(self, bounds=None):
        bounds = dict(self.DEFAULT_BOUNDS, **(bounds or {}))
        self.lower = np.array([float(bounds[n][0]) for n in self.NAMES])
        self.upper = np.array([float(bounds[n][1]) for n in self.NAMES])
        if np.any(self.upper <= self.lower):
            raise ValueError("Parameter bounds must satisfy lower < upper")

    @property
    def dim(self):
        return len(self.NAMES)

    def to_values(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return self.lower + x * (self.upper - self.lower)

    def to_params(self, x, tau_max=ExoParams.tau_max):
        k_pe, k_de, k_pt, w = self.to_values(x)
        return ExoParams(k_pe=float(k_pe), k_de=float(k_de),
                         k_pt=float(k_pt), k_dt=0.1 * float(k_pt),
                         w=float(w), tau_max=tau_max)

    def to_unit(self, params):
        values = np.array([getattr(params, n) for n in self.NAMES])
        return np.clip((values - self.lower) / (self.upper - self.lower),
                       0.0, 1.0)


class BoHistory(object):
    """Per-iteration record of a BO run

    ``y`` holds the raw objective value, ``nan`` for a failed evaluation,
    as :class:`GpDataset` stores it. The GP fits such a point as the worst
    observed value while ``best_so_far`` skips it.
    """

    FIELDS = ('iteration', 'x', 'y', 'best_so_far')

    def __init__(self):
        self.rows = []

    def __len__(self):
        return len(self.rows)

    def add(self, x, y):
        finite = [r['y'] for r in self.rows if np.isfinite(r['y'])]
        if np.isfinite(y):
            finite.append(y)
        self.rows.append({'iteration': len(self.rows),
                          'x': [float(v) for v in x],
                          'y': float(y),
                          'best_so_far': max(finite) if finite else
                          float('nan')})

    @property
    def best_so_far(self):
        return [r['best_so_far'] for r in self.rows]

    def write_csv(self, path, box=None):
        """Write the history, with physical parameter columns when
        ``box`` is given
        """
        with open(path, 'w', newline='') as csv_file:
            writer = csv.writer(csv_file)
            header = ['iteration', 'x', 'y', 'best_so_far']
            if box is not None:
                header += list(box.NAMES)
            writer.writerow(header)
            for row in self.rows:
                line = [row['iteration'],
                        ' '.join('{:.6f}'.format(v) for v in row['x']),
                        row['y'], row['best_so_far']]
                if box is not None:
                    line += list(box.to_values(row['x']))
                writer.writerow(line)
        return path


def bo_optimize(objective, budget, cfg, seed, dim=1):
    """Sequential GP-EI maximization of ``objective`` over ``[0, 1]^dim``

    The first point is drawn uniformly, the following ones maximize EI. A
    raising objective is recorded as the worst observed value.

    :param objective: Callable taking a unit-box point, returning a float
    :param budget: Number of objective evaluations
    :return: The best observed point and the :class:`BoHistory`
    :rtype: ``tuple``
    """
    if budget < 1:
        raise ValueError("The optimization budget must be >= 1")
    rng = np.random.default_rng(seed)
    data = GpDataset(dim=dim)
    history = BoHistory()
    for iteration in range(budget):
        x = rng.random(dim) if not len(data) else acquire_next(data, cfg, rng)
        try:
            y = float(objective(x))
        except Exception as e:
            LOG.warning("Objective failed at {}: {}".format(x, e))
            y = float('nan')
        data.add(x, y)
        history.add(x, y)
        LOG.debug("BO iteration {}: y={:.5f} best={:.5f}".format(
            iteration, y, history.best_so_far[-1]))
    finite = [i for i, r in enumerate(history.rows) if np.isfinite(r['y'])]
    best = (max(finite, key=lambda i: history.rows[i]['y'])
            if finite else 0)
    return np.array(history.rows[best]['x']), history
