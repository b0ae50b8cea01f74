"""Shared helpers: seeded problem generators and finite-difference oracles."""

from __future__ import annotations

import numpy as np
import pytest

from adaridge import Dataset, Hyper, PosteriorState, log_joint_posterior, standardize


def toeplitz_design(n, beta, sigma, rng, rho=0.5):
    """Gaussian design with correlation rho^|j-k| and linear response."""

    beta = np.asarray(beta, dtype=float)
    p = len(beta)
    idx = np.arange(p)
    cov = rho ** np.abs(np.subtract.outer(idx, idx))
    chol = np.linalg.cholesky(cov)
    x = rng.standard_normal((n, p)) @ chol.T
    y = x @ beta + sigma * rng.standard_normal(n)
    return x, y


def random_instance(seed, n_range=(40, 150), p_range=(3, 8)):
    """A standardized random sparse-regression instance."""

    rng = np.random.default_rng(seed)
    n = int(rng.integers(*n_range))
    p = int(rng.integers(p_range[0], p_range[1] + 1))
    beta = np.zeros(p)
    k = int(rng.integers(1, max(2, p // 2 + 1)))
    beta[rng.choice(p, size=k, replace=False)] = rng.uniform(1.0, 5.0, size=k)
    sigma = float(rng.uniform(0.5, 3.0))
    x, y = toeplitz_design(n, beta, sigma, rng)
    data, std = standardize(x, y)
    return data, std, beta


def fd_gradient(f, theta, h=1e-6):
    theta = np.asarray(theta, dtype=float)
    g = np.zeros_like(theta)
    for i in range(len(theta)):
        step = h * (1.0 + abs(theta[i]))
        up, dn = theta.copy(), theta.copy()
        up[i] += step
        dn[i] -= step
        g[i] = (f(up) - f(dn)) / (2.0 * step)
    return g


# Step near eps**(1/4): the roundoff floor of a second difference is
# ~eps |f| / h^2, so steps much below ~3e-4 cannot resolve 1e-5 accuracy.
def fd_hessian(f, theta, h=3e-4):
    theta = np.asarray(theta, dtype=float)
    m = len(theta)
    steps = h * (1.0 + np.abs(theta))
    out = np.zeros((m, m))
    for i in range(m):
        for j in range(i, m):
            hi, hj = steps[i], steps[j]
            if i == j:
                up, dn = theta.copy(), theta.copy()
                up[i] += hi
                dn[i] -= hi
                out[i, i] = (f(up) - 2.0 * f(theta) + f(dn)) / hi**2
            else:
                pp, pm, mp, mm = (theta.copy() for _ in range(4))
                pp[i] += hi; pp[j] += hj
                pm[i] += hi; pm[j] -= hj
                mp[i] -= hi; mp[j] += hj
                mm[i] -= hi; mm[j] -= hj
                out[i, j] = out[j, i] = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * hi * hj)
    return out


def log_joint_of_theta(data: Dataset, h: Hyper):
    """Joint log density as a function of the flat vector
    (beta, sigma2, v_inv) for finite-difference checks."""

    p = data.p

    def f(theta):
        state = PosteriorState(
            beta=theta[:p],
            sigma2=float(theta[p]),
            v_inv=theta[p + 1:],
            active=np.ones(p, dtype=bool),
        )
        return log_joint_posterior(state, data, h)

    return f


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
