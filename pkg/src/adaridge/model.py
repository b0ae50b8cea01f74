"""Core domain types, the standardization protocol, and the joint
log-posterior evaluator.

The hierarchical model is a Gaussian linear likelihood with a conjugate
normal prior on the coefficients, a Jeffreys prior on the noise variance,
and independent gamma priors (shape ``eta + 1``, rate ``mu``) on the
per-coefficient prior precisions.  Everything downstream (solvers,
evidence, experiments) works on data standardized so predictor columns
have unit 2-norm and the response has zero mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    InfinitePrecision,
    NonFiniteInput,
    NonPositiveSigma2,
    ZeroNormColumn,
)

# Machine epsilon of the working float type; the default inverse-scale of
# the precision prior.  Must stay far below prune_tol for pruning to fire.
MACHINE_EPS = float(np.finfo(np.float64).eps)

__all__ = [
    "MACHINE_EPS",
    "Dataset",
    "Standardization",
    "Hyper",
    "FitOptions",
    "PosteriorState",
    "ModeFit",
    "standardize",
    "destandardize_beta",
    "log_joint_posterior",
    "restrict_to_active",
]


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d design matrix, got ndim={arr.ndim}")
    return arr


def _as_vector(y) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got ndim={arr.ndim}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """A design matrix and response, either raw or standardized.

    Attributes
    ----------
    x : ndarray, shape (n, p)
    y : ndarray, shape (n,)
    """

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = _as_matrix(self.x)
        y = _as_vector(self.y)
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"x has {x.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise DimensionMismatch("need at least one row and one column")
        if not np.isfinite(x).all():
            raise NonFiniteInput("design matrix contains non-finite entries")
        if not np.isfinite(y).all():
            raise NonFiniteInput("response contains non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class Standardization:
    """Record of the scaling applied by :func:`standardize`.

    ``column_norms[j]`` is the original 2-norm of predictor ``j`` and
    ``y_mean`` the original response mean; together they map fitted
    coefficients back to the raw scale.
    """

    column_norms: np.ndarray
    y_mean: float

    def __post_init__(self):
        norms = _as_vector(self.column_norms)
        if (norms <= 0).any() or not np.isfinite(norms).all():
            raise ZeroNormColumn(int(np.argmin(norms)))
        object.__setattr__(self, "column_norms", norms)
        object.__setattr__(self, "y_mean", float(self.y_mean))

    @classmethod
    def identity(cls, p: int) -> "Standardization":
        return cls(np.ones(p), 0.0)


@dataclass(frozen=True)
class Hyper:
    """Shrinkage hyper-parameters: shape ``eta`` and inverse scale ``mu``
    of the gamma prior on the precisions.

    The joint-mode solver family requires ``eta > -1`` (prior propriety);
    the EM solver additionally admits ``eta >= -3/2``, so that is the
    loosest bound enforced here.  ``mu`` defaults to machine epsilon: any
    strictly positive value keeps the posterior proper while being
    numerically indistinguishable from the zero limit in the updates.
    """

    eta: float
    mu: float = MACHINE_EPS

    def __post_init__(self):
        if not (self.eta >= -1.5):
            raise ValueError(f"eta must be >= -1.5, got {self.eta}")
        if not (self.mu > 0):
            raise ValueError(f"mu must be > 0, got {self.mu}")
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "mu", float(self.mu))


@dataclass(frozen=True)
class FitOptions:
    """Iteration controls shared by all solvers.

    ``mu`` optionally overrides ``Hyper.mu`` inside the solver updates;
    leave it ``None`` to use the hyper-parameter's own value.
    """

    max_iter: int = 500
    conv_tol: float = 1e-8
    prune_tol: float = 1e-8
    mu: float | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (self.conv_tol > 0 and self.prune_tol > 0):
            raise ValueError("tolerances must be strictly positive")
        if self.mu is not None and not (self.mu > 0):
            raise ValueError("mu override must be strictly positive")

    def solver_mu(self, h: Hyper) -> float:
        return h.mu if self.mu is None else float(self.mu)


@dataclass(frozen=True)
class PosteriorState:
    """Posterior-mode state on the standardized scale.

    ``v_inv[j] = +inf`` encodes a pruned coordinate; pruned coordinates
    have ``beta[j] == 0`` exactly and ``active[j]`` False.
    """

    beta: np.ndarray
    sigma2: float
    v_inv: np.ndarray
    active: np.ndarray

    def __post_init__(self):
        beta = _as_vector(self.beta)
        v_inv = _as_vector(self.v_inv)
        active = np.asarray(self.active, dtype=bool)
        if not (len(beta) == len(v_inv) == len(active)):
            raise DimensionMismatch("beta, v_inv and active must share length")
        if not (self.sigma2 > 0):
            raise NonPositiveSigma2(f"sigma2 must be > 0, got {self.sigma2}")
        if (v_inv < 0).any():
            raise ValueError("prior precisions must be non-negative")
        finite = np.isfinite(v_inv)
        if not (finite == active).all():
            raise ValueError("active[j] must hold exactly when v_inv[j] is finite")
        if (beta[~active] != 0).any():
            raise ValueError("pruned coordinates must have beta exactly 0")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "v_inv", v_inv)
        object.__setattr__(self, "active", active)


@dataclass(frozen=True)
class ModeFit:
    """Result of a joint-mode fit (direct or reweighted-ridge path).

    ``log_joint_trace[i]`` is the joint log density on the surviving
    submodel after iteration ``i+1``; ``active_count_trace[i]`` records
    how many coordinates were live then.  Trace values are comparable
    only between iterations with the same live count, since pruning
    changes the density's dimension.
    """

    state: PosteriorState
    iterations: int
    converged: bool
    log_joint_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    active_count_trace: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    standardization: Standardization | None = None


def standardize(raw_x, raw_y) -> tuple[Dataset, Standardization]:
    """Scale predictor columns to unit 2-norm and center the response.

    Returns the standardized :class:`Dataset` together with the
    :class:`Standardization` that undoes the transform.  No intercept
    column is ever added; centering the response plays that role.

    Raises
    ------
    ZeroNormColumn
        If some column of ``raw_x`` has zero norm.
    DimensionMismatch, NonFiniteInput
        On malformed input.
    """

    x = _as_matrix(raw_x)
    y = _as_vector(raw_y)
    if x.shape[0] != y.shape[0]:
        raise DimensionMismatch(
            f"x has {x.shape[0]} rows but y has {y.shape[0]} entries"
        )
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise NonFiniteInput("raw data contains non-finite entries")
    norms = np.linalg.norm(x, axis=0)
    zero = np.where(norms == 0)[0]
    if zero.size:
        raise ZeroNormColumn(int(zero[0]))
    y_mean = float(y.mean())
    data = Dataset(x / norms, y - y_mean)
    return data, Standardization(norms, y_mean)


def destandardize_beta(beta_std, s: Standardization) -> np.ndarray:
    """Map coefficients from the standardized scale back to the raw
    predictor scale (the intercept is ``s.y_mean`` by construction)."""

    beta = _as_vector(beta_std)
    if len(beta) != len(s.column_norms):
        raise DimensionMismatch(
            f"beta has length {len(beta)}, standardization has {len(s.column_norms)}"
        )
    return beta / s.column_norms


def restrict_to_active(state: PosteriorState, data: Dataset) -> tuple[PosteriorState, Dataset]:
    """Drop pruned coordinates from a state and its dataset, yielding the
    reduced model on which densities and curvatures are evaluated."""

    mask = state.active
    if mask.all():
        return state, data
    reduced = PosteriorState(
        beta=state.beta[mask],
        sigma2=state.sigma2,
        v_inv=state.v_inv[mask],
        active=np.ones(int(mask.sum()), dtype=bool),
    )
    return reduced, Dataset(data.x[:, mask], data.y)


def log_joint_posterior(state: PosteriorState, data: Dataset, h: Hyper) -> float:
    """Log of the unnormalized joint posterior density, all constants kept.

    Evaluates, on the (already reduced) model::

        log N(y; X beta, sigma2 I) + log N(beta; 0, sigma2 V)
        + log(1/sigma2) + sum_j log Gamma(v_inv_j; eta + 1, mu)

    The eta- and mu-dependent normalization (``(eta+1) log mu`` and
    ``-log Gamma(eta+1)`` per coordinate) is included because evidence
    values are compared across eta.  All precisions must be finite:
    callers evaluate pruned models through :func:`restrict_to_active`.
    """

    if state.sigma2 <= 0:
        raise NonPositiveSigma2(str(state.sigma2))
    if not np.isfinite(state.v_inv).all():
        raise InfinitePrecision("restrict to the active set before evaluating")
    if len(state.beta) != data.p:
        raise DimensionMismatch(
            f"state has {len(state.beta)} coordinates, data has {data.p} columns"
        )
    n, p = data.n, data.p
    s2 = state.sigma2
    r = data.y - data.x @ state.beta
    quad = float(r @ r + state.beta @ (state.v_inv * state.beta))
    lj = -(n + p) / 2.0 * math.log(2.0 * math.pi * s2) - math.log(s2) - quad / (2.0 * s2)
    if p:
        # eta = -1/2 makes the exponent on each precision vanish; guard the
        # 0 * log(0) corner so the OLS boundary evaluates finitely.
        if h.eta != -0.5:
            lj += float((h.eta + 0.5) * np.sum(np.log(state.v_inv)))
        lj += float(-h.mu * np.sum(state.v_inv))
        lj += p * ((h.eta + 1.0) * math.log(h.mu) - math.lgamma(h.eta + 1.0))
    return lj
