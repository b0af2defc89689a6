"""Multivariate-Gaussian utilities: sigma points, confidence regions, sampling."""

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from filterpy.kalman import MerweScaledSigmaPoints
from loguru import logger
from scipy.linalg import LinAlgError, cholesky, eigh
from scipy.optimize import bisect
from scipy.special import gammainc

JITTER_LADDER = (0.0, 1e-12, 1e-9, 1e-6)
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-10

# Standard scaled-UT constants
ALPHA_UT = 1e-3
BETA_UT = 2.0
KAPPA_UT = 0.0


class SingularCovarianceError(ValueError):
    """Covariance could not be factorized even after maximal jitter."""


class InvalidCovarianceError(ValueError):
    """Covariance is not symmetric positive semidefinite."""


def symmetrize(cov: np.ndarray) -> np.ndarray:
    """Return (cov + covᵀ) / 2."""
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class Gaussian:
    """Mean and covariance of a multivariate normal."""

    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def validate(self) -> None:
        """Check symmetry and positive semidefiniteness.

        Raises:
            InvalidCovarianceError: If either invariant fails
        """
        if self.cov.shape != (self.dim, self.dim):
            raise InvalidCovarianceError(f"cov shape {self.cov.shape} != ({self.dim}, {self.dim})")
        if np.max(np.abs(self.cov - self.cov.T), initial=0.0) > SYMMETRY_TOL:
            raise InvalidCovarianceError("covariance is not symmetric")
        if np.min(eigh(symmetrize(self.cov), eigvals_only=True)) < -PSD_TOL:
            raise InvalidCovarianceError("covariance has a negative eigenvalue")


@dataclass(frozen=True)
class SigmaPointSet:
    """2p+1 sigma points with their mean/covariance weights."""

    points: np.ndarray
    weights_mean: np.ndarray
    weights_cov: np.ndarray
    alpha_ut: float = ALPHA_UT
    beta_ut: float = BETA_UT
    kappa_ut: float = KAPPA_UT


@dataclass(frozen=True)
class Ellipsoid:
    """Confidence region: center, orthonormal axes (columns) and semi-axis lengths."""

    center: np.ndarray
    axes: np.ndarray
    semi_axis_lengths: np.ndarray

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        """Mahalanobis-form membership test with a small tolerance."""
        coords = self.axes.T @ (np.asarray(x) - self.center)
        degenerate = self.semi_axis_lengths <= 0.0
        if np.any(np.abs(coords[degenerate]) > tol):
            return False
        scaled = coords[~degenerate] / self.semi_axis_lengths[~degenerate]
        return float(np.sum(scaled**2)) <= 1.0 + tol


def cholesky_lower(cov: np.ndarray, scale: float = 1.0) -> np.ndarray:
    """Lower Cholesky factor of cov, escalating diagonal jitter on failure.

    Args:
        cov: Square covariance matrix
        scale: Multiplier applied to each jitter rung

    Returns:
        Lower-triangular L with L Lᵀ ≈ cov

    Raises:
        SingularCovarianceError: If every rung of the jitter ladder fails
    """
    cov = symmetrize(np.asarray(cov, dtype=float))
    if not np.any(cov):
        return np.zeros_like(cov)

    eye = np.eye(cov.shape[0])
    for jitter in JITTER_LADDER:
        try:
            factor = cholesky(cov + jitter * scale * eye, lower=True)
        except LinAlgError:
            continue
        if jitter > 0.0:
            logger.debug(f"Cholesky needed jitter {jitter:g}")
        return factor

    raise SingularCovarianceError(
        f"Cholesky failed after jitter {JITTER_LADDER[-1]:g} (dim {cov.shape[0]})"
    )


@lru_cache(maxsize=256)
def chi2_quantile(dof: int, confidence: float) -> float:
    """Inverse CDF of the chi-squared distribution.

    Bisection on the regularized lower incomplete gamma P(dof/2, q/2).

    Args:
        dof: Degrees of freedom, 1..64
        confidence: Target probability in (0, 1)

    Returns:
        q with CDF(q) = confidence

    Raises:
        ValueError: If confidence or dof is out of range
    """
    if not 0.0 < confidence < 1.0:
        raise ValueError(f"confidence must lie in (0, 1), got {confidence}")
    if not 1 <= dof <= 64:
        raise ValueError(f"dof must lie in [1, 64], got {dof}")

    def residual(q: float) -> float:
        return gammainc(dof / 2.0, q / 2.0) - confidence

    upper = float(max(dof, 1))
    while residual(upper) < 0.0:
        upper *= 2.0

    rtol = 4 * np.finfo(float).eps
    return float(bisect(residual, 0.0, upper, xtol=1e-13, rtol=rtol, maxiter=500))


def sigma_points(
    g: Gaussian,
    alpha_ut: float = ALPHA_UT,
    beta_ut: float = BETA_UT,
    kappa_ut: float = KAPPA_UT,
) -> SigmaPointSet:
    """Scaled sigma points (van der Merwe weights) for a Gaussian.

    Raises:
        SingularCovarianceError: If the covariance cannot be factorized
    """
    n = g.dim
    lambda_plus_n = alpha_ut**2 * (n + kappa_ut)

    def upper_sqrt(scaled_cov: np.ndarray) -> np.ndarray:
        # filterpy adds the rows of the factor
        return cholesky_lower(scaled_cov, scale=lambda_plus_n).T

    merwe = MerweScaledSigmaPoints(
        n, alpha=alpha_ut, beta=beta_ut, kappa=kappa_ut, sqrt_method=upper_sqrt
    )
    points = merwe.sigma_points(np.asarray(g.mean, dtype=float), symmetrize(g.cov))
    return SigmaPointSet(
        points=points,
        weights_mean=np.asarray(merwe.Wm),
        weights_cov=np.asarray(merwe.Wc),
        alpha_ut=alpha_ut,
        beta_ut=beta_ut,
        kappa_ut=kappa_ut,
    )


def unscented_transform(
    s: SigmaPointSet,
    f: Callable[[np.ndarray], np.ndarray],
    noise_cov: Optional[np.ndarray] = None,
) -> Gaussian:
    """Push sigma points through f and recombine.

    Args:
        s: Sigma point set
        f: Map applied to the stacked (2p+1, p) points, returning (2p+1, q)
        noise_cov: Optional additive covariance

    Returns:
        Gaussian with symmetrized covariance

    Raises:
        ValueError: If f does not return one row per sigma point
    """
    transformed = np.asarray(f(s.points), dtype=float)
    if transformed.ndim == 1:
        transformed = transformed[:, None]
    if transformed.ndim != 2 or transformed.shape[0] != s.points.shape[0]:
        raise ValueError(
            f"f must return shape ({s.points.shape[0]}, q), got {transformed.shape}"
        )

    mean = transformed[0] + s.weights_mean[1:] @ (transformed[1:] - transformed[0])
    cov = sigma_cross_covariance(s, transformed, transformed)
    if noise_cov is not None:
        cov = cov + noise_cov
    return Gaussian(mean=mean, cov=symmetrize(cov))


def sigma_cross_covariance(s: SigmaPointSet, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Weighted cross covariance of two sigma-point images, shapes (2p+1, m) and (2p+1, q).

    Built from deviations to the centre image: the large negative centre weight
    folds into (beta - alpha²) times the outer product of the weighted mean
    deviations, so every remaining weight is positive and the result is PSD
    up to rounding.
    """
    weights = s.weights_cov[1:]
    da = a[1:] - a[0]
    db = b[1:] - b[0]
    shift_a = weights @ da
    shift_b = weights @ db
    centre = s.beta_ut - s.alpha_ut**2
    return (da * weights[:, None]).T @ db + centre * np.outer(shift_a, shift_b)


def project_psd(cov: np.ndarray) -> np.ndarray:
    """Symmetrize and clip negative eigenvalues at zero."""
    cov = symmetrize(np.asarray(cov, dtype=float))
    eigvals, eigvecs = eigh(cov)
    if eigvals[0] >= 0.0:
        return cov
    if eigvals[0] < -PSD_TOL * max(1.0, eigvals[-1]):
        logger.debug(f"Clipped covariance eigenvalue {eigvals[0]:.3e}")
    return symmetrize((eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T)


def confidence_ellipsoid(g: Gaussian, alpha: float) -> Ellipsoid:
    """Ellipsoid holding the Gaussian with probability 1 - alpha.

    Raises:
        InvalidCovarianceError: On an eigenvalue below -1e-10
    """
    eigvals, eigvecs = eigh(symmetrize(g.cov))
    if np.min(eigvals) < -PSD_TOL:
        raise InvalidCovarianceError(f"negative eigenvalue {np.min(eigvals):.3e}")
    q = chi2_quantile(g.dim, 1.0 - alpha)
    semi = np.sqrt(np.clip(eigvals, 0.0, None) * q)
    return Ellipsoid(center=np.asarray(g.mean, dtype=float), axes=eigvecs, semi_axis_lengths=semi)


def sample_in_ellipsoid(e: Ellipsoid, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples inside an ellipsoid, shape (n, p)."""
    p = e.dim
    directions = rng.standard_normal((n, p))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.random(n) ** (1.0 / p)
    ball = directions * radii[:, None]
    return e.center + (ball * e.semi_axis_lengths) @ e.axes.T


def sample_mvn(g: Gaussian, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Draw mean + L z with z standard normal.

    Args:
        g: Source Gaussian
        rng: Generator owned by the caller
        size: None for a single vector, otherwise number of rows

    Raises:
        SingularCovarianceError: As in cholesky_lower
    """
    factor = cholesky_lower(g.cov)
    if size is None:
        return g.mean + factor @ rng.standard_normal(g.dim)
    return g.mean + rng.standard_normal((size, g.dim)) @ factor.T
