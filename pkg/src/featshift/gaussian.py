"""Multivariate Gaussian density model.

Provides the fitted joint model used by the model-based shift statistics:
log-density, score (gradient of log-density with respect to the input),
sampling, and closed-form univariate conditionals p(x_j | x_{-j}).

The score of a Gaussian is a single matrix-vector product,

    psi(x) = -Sigma^{-1} (x - mu),

and component j equals the partial derivative of the log conditional
density log p(x_j | x_{-j}) at the same point. Both facts are exploited
heavily by the estimators: one evaluation yields all d per-feature
statistics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import InsufficientDataError, InvalidDataError, ShapeError

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class ConditionalGaussian:
    """Univariate conditional law p(x_j | x_{-j}) of a joint Gaussian."""

    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0.0:
            raise InvalidDataError(f"conditional variance must be > 0, got {self.variance}")


@dataclass(frozen=True)
class GaussianModel:
    """Fitted multivariate Gaussian.

    Attributes
    ----------
    mean : ndarray, shape (d,)
        Column means of the training data.
    covariance : ndarray, shape (d, d)
        Sample covariance (denominator n-1) plus the ridge actually used.
    precision : ndarray, shape (d, d)
        Cached inverse of ``covariance``.
    chol : ndarray, shape (d, d)
        Cached lower-triangular Cholesky factor of ``covariance``.
    ridge : float
        Diagonal regularization that was added to reach positive
        definiteness.
    """

    mean: np.ndarray
    covariance: np.ndarray
    precision: np.ndarray
    chol: np.ndarray
    ridge: float = 0.0

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def _check_point(model: GaussianModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dim:
        raise ShapeError(f"point has dimension {x.shape[-1]}, model has {model.dim}")
    return x


def fit_gaussian(data: np.ndarray, ridge: float = 0.0) -> GaussianModel:
    """Fit a multivariate Gaussian by moment matching.

    Parameters
    ----------
    data : ndarray, shape (n, d)
        Training rows; all entries must be finite and n >= 2.
    ridge : float, optional
        Initial diagonal regularization added to the sample covariance.
        If the regularized covariance is not positive definite the ridge
        is escalated by decades starting at 1e-6 until the Cholesky
        factorization succeeds.

    Returns
    -------
    GaussianModel
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ShapeError(f"expected an (n, d) matrix, got shape {data.shape}")
    n, d = data.shape
    if n < 2:
        raise InsufficientDataError(f"need at least 2 rows to fit a covariance, got {n}")
    if not np.isfinite(data).all():
        raise InvalidDataError("training data contains non-finite entries")
    if ridge < 0:
        raise InvalidDataError(f"ridge must be >= 0, got {ridge}")

    mean = data.mean(axis=0)
    base = np.cov(data, rowvar=False).reshape(d, d)
    base = 0.5 * (base + base.T)

    eye = np.eye(d)
    r = float(ridge)
    while True:
        cov = base + r * eye if r > 0.0 else base
        try:
            chol = np.linalg.cholesky(cov)
            break
        except np.linalg.LinAlgError:
            r = 1e-6 if r < 1e-6 else 10.0 * r
            if r > 1e6:
                raise InvalidDataError("covariance cannot be regularized to positive definite")

    precision = sla.cho_solve((chol, True), eye)
    precision = 0.5 * (precision + precision.T)
    return GaussianModel(mean=mean, covariance=cov, precision=precision, chol=chol, ridge=r)


def gaussian_log_density(model: GaussianModel, x: np.ndarray) -> float | np.ndarray:
    """Log-density at ``x``; accepts a single point or a batch of rows."""
    x = _check_point(model, x)
    single = x.ndim == 1
    pts = np.atleast_2d(x) - model.mean
    # solve L w = (x - mu)^T, quadratic form = ||w||^2
    w = sla.solve_triangular(model.chol, pts.T, lower=True)
    quad = np.einsum("ij,ij->j", w, w)
    logdet = 2.0 * np.log(np.diag(model.chol)).sum()
    out = -0.5 * (quad + logdet + model.dim * _LOG_2PI)
    return float(out[0]) if single else out


def gaussian_score(model: GaussianModel, x: np.ndarray) -> np.ndarray:
    """Score psi(x) = -Sigma^{-1}(x - mu), for a point or a batch of rows.

    All d components come out of one matrix-vector product; the per-test
    speed of the score-based statistic rests on this.
    """
    x = _check_point(model, x)
    return -(x - model.mean) @ model.precision


def gaussian_conditional(model: GaussianModel, j: int, x_rest: np.ndarray) -> ConditionalGaussian:
    """Closed-form conditional p(x_j | x_{-j} = x_rest).

    Uses the precision-matrix identity: with Omega = Sigma^{-1},

        var  = 1 / Omega_jj,
        mean = mu_j - Omega_{j,-j} (x_rest - mu_{-j}) / Omega_jj,

    which is algebraically identical to the Schur-complement form
    mu_j + Sigma_{j,-j} Sigma_{-j,-j}^{-1} (x_rest - mu_{-j}).
    """
    d = model.dim
    if not 0 <= j < d:
        raise ShapeError(f"feature index {j} out of range for d={d}")
    x_rest = np.asarray(x_rest, dtype=float)
    if x_rest.shape != (d - 1,):
        raise ShapeError(f"x_rest must have shape ({d - 1},), got {x_rest.shape}")

    rest = np.concatenate([np.arange(j), np.arange(j + 1, d)])
    omega_jj = model.precision[j, j]
    cross = model.precision[j, rest]
    mean = model.mean[j] - cross @ (x_rest - model.mean[rest]) / omega_jj
    return ConditionalGaussian(mean=float(mean), variance=float(1.0 / omega_jj))


def gaussian_conditional_moments(model: GaussianModel, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Conditional means and variances for every feature at every row.

    For row x and feature j the conditional mean of x_j given the other
    coordinates of x is ``x_j - (Omega (x - mu))_j / Omega_jj``; a single
    matrix product therefore yields the full (m, d) array of means.

    Returns
    -------
    means : ndarray, shape (m, d)
    variances : ndarray, shape (d,)
    """
    pts = np.atleast_2d(_check_point(model, points))
    diag = np.diag(model.precision)
    t = (pts - model.mean) @ model.precision
    return pts - t / diag, 1.0 / diag


def sample_gaussian(model: GaussianModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` rows mu + L z with z standard normal; deterministic under seed."""
    if n < 1:
        raise InvalidDataError(f"sample size must be >= 1, got {n}")
    z = rng.standard_normal((n, model.dim))
    return model.mean + z @ model.chol.T
