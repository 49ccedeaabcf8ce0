"""Distributions of angles and inner products between random unit vectors.

Closed forms for the angle density f_n(theta) = C_n * sin^(n-2)(theta) on
[0, pi] and the inner-product density f_P(delta) = C_P * (1 - delta^2)^((P-3)/2)
on [-1, 1], with C_n = Gamma(n/2) / (Gamma((n-1)/2) * sqrt(pi)). All Gamma
ratios are evaluated in log space so the formulas stay finite for large
dimension. A seeded sampler and Monte-Carlo validator accompany the closed
forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, OutOfDomain

SIMPSON_TOL = 1e-9


def sphere_surface_area(n: int) -> float:
    """Surface area of the unit sphere in n dimensions: 2 pi^(n/2) / Gamma(n/2)."""
    if n < 1:
        raise InvalidConfig(f"dimension must be >= 1, got {n}")
    return math.exp(math.log(2.0) + (n / 2.0) * math.log(math.pi) - math.lgamma(n / 2.0))


def _log_const(n: int) -> float:
    return math.lgamma(n / 2.0) - math.lgamma((n - 1) / 2.0) - 0.5 * math.log(math.pi)


def angle_pdf(n: int, theta: float) -> float:
    """Density of the angle between two uniform random unit vectors in n dims."""
    if n < 2:
        raise InvalidConfig(f"dimension must be >= 2, got {n}")
    if not 0.0 <= theta <= math.pi:
        raise OutOfDomain(f"theta={theta} outside [0, pi]")
    if n == 2:
        return 1.0 / math.pi
    s = math.sin(theta)
    if s <= 0.0:
        return 0.0
    return math.exp(_log_const(n) + (n - 2) * math.log(s))


def inner_product_pdf(p: int, delta: float) -> float:
    """Density of the inner product of two uniform random unit vectors in p dims.

    For p=2 the density diverges at |delta|=1; +inf is returned there.
    """
    if p < 2:
        raise InvalidConfig(f"dimension must be >= 2, got {p}")
    if abs(delta) > 1.0:
        raise OutOfDomain(f"delta={delta} outside [-1, 1]")
    exponent = (p - 3) / 2.0
    if abs(delta) == 1.0:
        if exponent < 0.0:
            return math.inf
        if exponent == 0.0:
            return math.exp(_log_const(p))
        return 0.0
    return math.exp(_log_const(p) + exponent * math.log1p(-delta * delta))


def adaptive_simpson(f, a: float, b: float, tol: float = SIMPSON_TOL, max_depth: int = 48) -> float:
    """Adaptive Simpson quadrature with absolute tolerance."""
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fb, m, fm, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fb, m, fm, whole, tol, depth):
    lm, rm = 0.5 * (a + m), 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15.0 * tol:
        return left + right + (left + right - whole) / 15.0
    return _simpson_rec(f, a, m, fa, fm, lm, flm, left, tol / 2.0, depth - 1) + _simpson_rec(
        f, m, b, fm, fb, rm, frm, right, tol / 2.0, depth - 1
    )


def angle_cdf(n: int, theta: float) -> float:
    """P(angle <= theta), by quadrature of angle_pdf from 0 to theta."""
    if n < 2:
        raise InvalidConfig(f"dimension must be >= 2, got {n}")
    if not 0.0 <= theta <= math.pi:
        raise OutOfDomain(f"theta={theta} outside [0, pi]")
    if theta == 0.0:
        return 0.0
    val = adaptive_simpson(lambda t: angle_pdf(n, t), 0.0, theta)
    return min(max(val, 0.0), 1.0)


def inner_product_mass(p: int, lo: float, hi: float) -> float:
    """Integral of inner_product_pdf over [lo, hi].

    Evaluated through the substitution delta = cos(theta), whose integrand is
    the smooth angle density; this keeps the p=2 endpoint singularity
    integrable without special casing.
    """
    if not -1.0 <= lo <= hi <= 1.0:
        raise OutOfDomain(f"interval [{lo}, {hi}] not inside [-1, 1]")
    return adaptive_simpson(lambda t: angle_pdf(p, t), math.acos(hi), math.acos(lo))


def abs_tail_probability(p: int, delta: float) -> float:
    """P(|inner product| >= delta) for two random unit vectors in p dims."""
    if not 0.0 <= delta <= 1.0:
        raise OutOfDomain(f"delta={delta} outside [0, 1]")
    return inner_product_mass(p, delta, 1.0) + inner_product_mass(p, -1.0, -delta)


def sample_unit_vector(p: int, rng: np.random.Generator) -> np.ndarray:
    """One draw from the uniform distribution on the unit sphere in p dims."""
    if p < 1:
        raise InvalidConfig(f"dimension must be >= 1, got {p}")
    while True:
        v = rng.standard_normal(p)
        norm = np.linalg.norm(v)
        if norm >= 1e-12:
            return v / norm


def sample_inner_products(p: int, count: int, rng: np.random.Generator, chunk: int = 100_000) -> np.ndarray:
    """Inner products of `count` independent pairs of uniform unit vectors."""
    out = np.empty(count)
    done = 0
    while done < count:
        k = min(chunk, count - done)
        u = rng.standard_normal((k, p))
        v = rng.standard_normal((k, p))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        out[done : done + k] = np.einsum("ij,ij->i", u, v)
        done += k
    return out


@dataclass(frozen=True)
class HistogramReport:
    """Empirical vs analytic density over equal-width bins on [-1, 1]."""

    dim: int
    draws: int
    bin_edges: np.ndarray
    empirical: np.ndarray
    analytic: np.ndarray

    @property
    def max_abs_deviation(self) -> float:
        return float(np.abs(self.empirical - self.analytic).max())


def mc_validate_pdf(p: int, draws: int, bins: int, rng: np.random.Generator) -> HistogramReport:
    """Histogram of sampled inner products against the closed-form density."""
    if draws < 10_000:
        raise InvalidConfig(f"need at least 10000 draws, got {draws}")
    if bins < 1:
        raise InvalidConfig(f"need at least 1 bin, got {bins}")
    deltas = sample_inner_products(p, draws, rng)
    edges = np.linspace(-1.0, 1.0, bins + 1)
    counts, _ = np.histogram(deltas, bins=edges)
    width = 2.0 / bins
    empirical = counts / (draws * width)
    # Bin-averaged density, so the comparison carries no discretization bias.
    analytic = np.array(
        [inner_product_mass(p, lo, hi) / width for lo, hi in zip(edges[:-1], edges[1:])]
    )
    return HistogramReport(p, draws, edges, empirical, analytic)
