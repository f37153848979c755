"""Exact boundary values for the unit disk with a centered circular inclusion.

For conductivity 1 outside and 1 + rho inside a centered disk of radius R,
and flux data given by a cosine series, the boundary trace of the solution
has a closed form.  It serves as ground truth for solver validation and as
the exact forward map in posterior-comparison runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_SERIES_TERMS = 64


@dataclass(frozen=True)
class CenteredInclusionProblem:
    """Centered inclusion of radius ``R`` in (0, 1] with contrast ``rho`` > -1.

    ``flux_coeffs[n-1]`` is the coefficient of cos(n*theta) in the boundary
    flux.  ``rho = 0`` is treated as the vanishing-contrast limit.
    """

    rho: float
    R: float
    flux_coeffs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if not (0.0 < self.R <= 1.0):
            raise ValueError(f"inclusion radius must be in (0, 1], got {self.R}")
        if self.rho <= -1.0:
            raise ValueError(f"contrast must exceed -1, got {self.rho}")
        if len(self.flux_coeffs) > MAX_SERIES_TERMS:
            raise ValueError(f"at most {MAX_SERIES_TERMS} series terms supported")


def _mode_gain(rho: float, R: float, n: int) -> float:
    """(alpha - R^(2n)) / (alpha + R^(2n)) with alpha = 1 + 2/rho; 1 in the rho=0 limit."""
    if rho == 0.0:
        return 1.0
    alpha = 1.0 + 2.0 / rho
    x = R ** (2 * n)
    return (alpha - x) / (alpha + x)


def exact_boundary_series(problem: CenteredInclusionProblem, theta) -> np.ndarray | float:
    """Boundary solution value(s) at angle(s) ``theta`` from the cosine series.

    Exact (up to rounding) whenever only finitely many flux coefficients are
    nonzero, which covers all uses here.
    """
    th = np.asarray(theta, dtype=float)
    out = np.zeros_like(th)
    for i, fn in enumerate(np.asarray(problem.flux_coeffs, dtype=float)):
        if fn == 0.0:
            continue
        n = i + 1
        out = out + _mode_gain(problem.rho, problem.R, n) * (fn / n) * np.cos(n * th)
    return out if out.shape else float(out)


def exact_boundary_cos4(rho: float, R: float, theta) -> np.ndarray | float:
    """Closed form for flux cos(4*theta): gain/4 * cos(4*theta) with the n=4 gain."""
    if not (0.0 < R <= 1.0):
        raise ValueError(f"inclusion radius must be in (0, 1], got {R}")
    th = np.asarray(theta, dtype=float)
    out = 0.25 * _mode_gain(rho, R, 4) * np.cos(4.0 * th)
    return out if out.shape else float(out)


def cosine_coefficients(f_samples: np.ndarray, n_terms: int) -> np.ndarray:
    """Cosine coefficients f_1..f_N of uniformly sampled data on [0, 2*pi).

    Uses the periodic trapezoid rule, which is exact for trigonometric
    polynomials below the Nyquist limit; requires at least 4*N samples.
    """
    f = np.asarray(f_samples, dtype=float)
    m = len(f)
    if m < 4 * n_terms:
        raise ValueError(f"need at least {4 * n_terms} samples for {n_terms} coefficients")
    theta = 2.0 * np.pi * np.arange(m) / m
    ns = np.arange(1, n_terms + 1)
    return (2.0 / m) * (np.cos(np.outer(ns, theta)) @ f)
