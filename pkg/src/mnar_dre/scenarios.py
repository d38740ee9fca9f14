"""Synthetic data generators for the shipped experiment scenarios.

Every scenario's class distributions are Gaussian mixtures, which gives three
exact tools used throughout the experiments:

* sampling (component draw + Cholesky transform),
* the analytic log density ratio for oracle classifiers,
* the exact population fit objective via the Gaussian MGF
  E[exp(theta'Z)] = sum_k w_k exp(theta'mu_k + theta'Sigma_k theta / 2),
  from which the population-optimal parameter is computed by convex
  minimization rather than plug-in simulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .model import (
    Dataset,
    FeatureMap,
    HalfspaceIndicator,
    LogisticScalar,
    MissingnessFunction,
)

SCENARIO_NAMES = (
    "gauss5d",
    "mixture2d",
    "mixture2d-logistic",
    "nb-rho",
    "diff-var",
    "vary-misspec",
)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """A finite Gaussian mixture with exact pdf/MGF helpers."""

    weights: np.ndarray
    means: np.ndarray  # (k, d)
    covs: np.ndarray  # (k, d, d)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        c = np.asarray(self.covs, dtype=float)
        if c.ndim == 2:
            c = c[None, :, :]
        if not np.isclose(w.sum(), 1.0):
            raise ValueError("mixture weights must sum to 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covs", c)
        object.__setattr__(self, "_chols", np.linalg.cholesky(c))
        object.__setattr__(self, "_inv_covs", np.linalg.inv(c))
        sign, logdet = np.linalg.slogdet(c)
        if np.any(sign <= 0):
            raise ValueError("covariances must be positive definite")
        object.__setattr__(self, "_logdets", logdet)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(self.weights.size, size=n, p=self.weights)
        eps = rng.standard_normal((n, self.dim))
        out = np.empty((n, self.dim))
        for k in range(self.weights.size):
            mask = comp == k
            out[mask] = self.means[k] + eps[mask] @ self._chols[k].T
        return out

    def log_pdf(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        parts = np.empty((z.shape[0], self.weights.size))
        for k in range(self.weights.size):
            diff = z - self.means[k]
            quad = np.einsum("ij,jk,ik->i", diff, self._inv_covs[k], diff)
            parts[:, k] = (
                np.log(self.weights[k])
                - 0.5 * (quad + self._logdets[k] + self.dim * np.log(2.0 * np.pi))
            )
        return logsumexp(parts, axis=1)

    def mean(self) -> np.ndarray:
        return self.weights @ self.means

    def log_mgf_and_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """log E[exp(theta'Z)] and its gradient, exactly."""
        exps = np.array(
            [
                th_mu + 0.5 * theta @ cov @ theta
                for th_mu, cov in zip(self.means @ theta, self.covs)
            ]
        )
        a = np.log(self.weights) + exps
        m = a.max()
        e = np.exp(a - m)
        total = e.sum()
        grads = self.means + self.covs @ theta  # (k, d)
        return float(m + np.log(total)), (e @ grads) / total


@dataclass(frozen=True, eq=False)
class Scenario:
    """A pair of class distributions plus the induced missingness pattern."""

    name: str
    class1: GaussianMixture
    class0: GaussianMixture
    induced_phi: MissingnessFunction  # applied to the corrupted class
    rho: float = 0.0

    @property
    def dim(self) -> int:
        return self.class1.dim

    def feature_map(self) -> FeatureMap:
        return FeatureMap.identity(self.dim)

    def true_log_ratio(self, z: np.ndarray) -> np.ndarray:
        return self.class1.log_pdf(z) - self.class0.log_pdf(z)

    def phi_pair(self, corrupt_class: int = 1):
        """(phi1, phi0) with the induced pattern on the chosen class."""
        none = MissingnessFunction.none(self.dim)
        if corrupt_class == 1:
            return self.induced_phi, none
        return none, self.induced_phi


def _eye_mixture(weights, means, cov_list) -> GaussianMixture:
    return GaussianMixture(
        weights=np.asarray(weights, dtype=float),
        means=np.asarray(means, dtype=float),
        covs=np.asarray(cov_list, dtype=float),
    )


def make_scenario(name: str, rho: float = 0.0) -> Scenario:
    """Construct one of the named synthetic scenarios.

    * gauss5d            5-dim equal-covariance Gaussians, correctly specified
                         for identity features; one class loses whole points
                         at rate 0.5 above the hyperplane 1'z > 0.
    * mixture2d          2-dim Gaussian mixtures; class 1 loses whole points
                         at rate 0.9 where z2 > 2 (misspecified for identity
                         features).
    * mixture2d-logistic mixture2d with per-coordinate logistic missingness
                         (standardized per-dimension form), the variant used
                         to exercise missingness learning.
    * nb-rho             correlated 2-dim Gaussians (correlation rho) with
                         opposite per-coordinate halfspace missingness, for
                         the factorized-model stress test.
    * diff-var           unequal covariances, misspecified under identity
                         features.
    * vary-misspec       class 1 a two-component mixture with weight rho on
                         the far component; rho tunes the misspecification.
    """
    I2 = np.eye(2)
    if name == "gauss5d":
        d = 5
        return Scenario(
            name=name,
            class1=_eye_mixture([1.0], [np.full(d, 0.1)], [np.eye(d)]),
            class0=_eye_mixture([1.0], [np.zeros(d)], [np.eye(d)]),
            induced_phi=MissingnessFunction.whole_point(
                HalfspaceIndicator(direction=np.ones(d), level=0.0, p=0.5)
            ),
        )
    if name in ("mixture2d", "mixture2d-logistic"):
        class1 = _eye_mixture(
            [0.5, 0.5], [[0.0, 0.0], [-1.0, 4.0]], [I2, I2]
        )
        class0 = _eye_mixture(
            [0.5, 0.5], [[1.0, 0.0], [0.0, 4.0]], [I2, I2]
        )
        if name == "mixture2d":
            phi = MissingnessFunction.whole_point(
                HalfspaceIndicator(direction=np.array([0.0, 1.0]), level=2.0, p=0.9)
            )
        else:
            # Standardized per-dimension logistic: phi_j(z) rises with
            # (z - mu_j)/sigma_j, so roughly half of each column goes missing.
            mu = class1.mean()
            var = class1.weights @ (
                np.array([np.diag(c) for c in class1.covs])
                + (class1.means - mu) ** 2
            )
            sigma = np.sqrt(var)
            phi = MissingnessFunction.per_coordinate(
                [
                    LogisticScalar(a0=-mu[j] / sigma[j], a1=1.0 / sigma[j], tau=-1)
                    for j in range(2)
                ]
            )
        return Scenario(name=name, class1=class1, class0=class0, induced_phi=phi)
    if name == "nb-rho":
        if not -1.0 < rho < 1.0:
            raise ValueError("correlation must lie in (-1, 1)")
        cov = np.array([[1.0, rho], [rho, 1.0]])
        return Scenario(
            name=name,
            class1=_eye_mixture([1.0], [[0.0, 0.0]], [cov]),
            class0=_eye_mixture([1.0], [[1.0, 2.0]], [cov]),
            induced_phi=MissingnessFunction.per_coordinate(
                [
                    HalfspaceIndicator(direction=np.array([1.0]), level=0.0, p=0.8),
                    HalfspaceIndicator(direction=np.array([-1.0]), level=0.0, p=0.8),
                ]
            ),
            rho=rho,
        )
    if name == "diff-var":
        return Scenario(
            name=name,
            class1=_eye_mixture([1.0], [[0.0, 0.0]], [I2]),
            class0=_eye_mixture([1.0], [[1.0, 1.0]], [np.diag([1.0, 2.0])]),
            induced_phi=MissingnessFunction.whole_point(
                HalfspaceIndicator(direction=np.array([1.0, 0.0]), level=0.0, p=0.8)
            ),
        )
    if name == "vary-misspec":
        if not 0.0 <= rho <= 0.5:
            raise ValueError("misspecification weight must lie in [0, 0.5]")
        return Scenario(
            name=name,
            class1=_eye_mixture(
                [1.0 - rho, rho], [[0.0, 0.0], [2.0, 0.0]], [I2, I2]
            )
            if rho > 0.0
            else _eye_mixture([1.0], [[0.0, 0.0]], [I2]),
            class0=_eye_mixture([1.0], [[1.0, 0.0]], [I2]),
            induced_phi=MissingnessFunction.whole_point(
                HalfspaceIndicator(direction=np.array([1.0, 0.0]), level=0.0, p=0.8)
            ),
            rho=rho,
        )
    raise ValueError(f"unknown scenario {name!r}; choose from {SCENARIO_NAMES}")


@dataclass(frozen=True, eq=False)
class SyntheticDraw:
    """One replication's data: latent, corrupted, and the missingness truth."""

    latent1: Dataset
    latent0: Dataset
    corrupted1: Dataset
    corrupted0: Dataset
    phi1: MissingnessFunction
    phi0: MissingnessFunction
    true_log_ratio: Callable[[np.ndarray], np.ndarray]


def generate(
    scenario: Scenario,
    n: int,
    seed: int | np.random.SeedSequence | np.random.Generator,
    corrupt_class: int = 1,
) -> SyntheticDraw:
    """Draw n points per class and corrupt the chosen class; deterministic per seed."""
    if corrupt_class not in (0, 1):
        raise ValueError("corrupt_class must be 0 or 1")
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else np.random.default_rng(seed)
    )
    z1 = scenario.class1.sample(n, rng)
    z0 = scenario.class0.sample(n, rng)
    phi1, phi0 = scenario.phi_pair(corrupt_class)
    x1 = phi1.corrupt(z1, rng) if corrupt_class == 1 else z1
    x0 = phi0.corrupt(z0, rng) if corrupt_class == 0 else z0
    return SyntheticDraw(
        latent1=Dataset(z1, 1),
        latent0=Dataset(z0, 0),
        corrupted1=Dataset(x1, 1),
        corrupted0=Dataset(x0, 0),
        phi1=phi1,
        phi0=phi0,
        true_log_ratio=scenario.true_log_ratio,
    )


# ---------------------------------------------------------------------------
# Population-optimal parameter oracle
# ---------------------------------------------------------------------------


def population_objective(
    scenario: Scenario, theta: np.ndarray
) -> tuple[float, np.ndarray]:
    """Exact population fit objective -E[theta'Z^1] + log E[exp(theta'Z^0)].

    Identity features only (all shipped scenarios fit with f(z) = z).
    """
    theta = np.asarray(theta, dtype=float)
    mean1 = scenario.class1.mean()
    log_mgf, grad_mgf = scenario.class0.log_mgf_and_grad(theta)
    return float(-theta @ mean1 + log_mgf), grad_mgf - mean1


def population_theta(scenario: Scenario, tol: float = 1e-12) -> np.ndarray:
    """Population-optimal parameter by convex minimization of the exact objective.

    This is the target the estimators are measured against in the distance
    experiments; it exists in closed form only for equal-covariance Gaussian
    pairs, so it is always computed numerically here.
    """
    res = minimize(
        lambda t: population_objective(scenario, t),
        np.zeros(scenario.dim),
        jac=True,
        method="L-BFGS-B",
        options={"gtol": tol, "ftol": 0.0, "maxiter": 10_000},
    )
    return np.asarray(res.x, dtype=float)


def population_theta_plugin(
    scenario: Scenario,
    n_draws: int = 1_000_000,
    seed: int = 0,
    restarts: int = 3,
) -> np.ndarray:
    """Plug-in variant of the oracle: exact expectations replaced by a large
    simulated sample.  Retained as an independent cross-check of
    ``population_theta``; agreement is Monte Carlo limited (~n_draws^-1/2).
    """
    rng = np.random.default_rng(seed)
    z1 = scenario.class1.sample(n_draws, rng)
    z0 = scenario.class0.sample(n_draws, rng)
    mean1 = z1.mean(axis=0)

    def value_and_grad(theta):
        s = z0 @ theta
        m = s.max()
        e = np.exp(s - m)
        total = e.sum()
        loss = -theta @ mean1 + m + np.log(total / n_draws)
        grad = -mean1 + (e @ z0) / total
        return float(loss), grad

    best = None
    for k in range(restarts):
        x0 = np.zeros(scenario.dim) if k == 0 else rng.normal(scale=0.5, size=scenario.dim)
        res = minimize(
            value_and_grad, x0, jac=True, method="L-BFGS-B",
            options={"gtol": 1e-10, "maxiter": 10_000},
        )
        if best is None or res.fun < best.fun:
            best = res
    return np.asarray(best.x, dtype=float)
