"""Objective functions with gradients and structural constants.

An objective L is described by its value and gradient maps together with the
constants the switching logic relies on: the quadratic-growth constant alpha
(L(z1) - L* >= alpha |z1 - z1*|^2), the gradient Lipschitz constant M, and
optionally the strong-convexity modulus mu.

The minimizer and minimum value are stored on the spec, but they are
measurement-only metadata: flows and supervisor predicates must go through
``ObjectiveSpec.algorithm_view()``, which exposes only eval/grad and the
constants.  The algorithms run without knowing where the minimizer is.

States of dimension 1 are represented by plain floats, higher dimensions by
1-D numpy arrays.  All builtin objectives accept either representation for
their dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

Vec = Union[float, np.ndarray]


class InvalidParameterError(ValueError):
    """A constructor or operation received an out-of-contract parameter."""


def sqnorm(v: Vec) -> float:
    """Squared Euclidean norm of a float or 1-D array."""
    if isinstance(v, np.ndarray):
        return float(np.dot(v, v))
    return v * v


def vnorm(v: Vec) -> float:
    """Euclidean norm of a float or 1-D array."""
    if isinstance(v, np.ndarray):
        return float(np.sqrt(np.dot(v, v)))
    return abs(v)


def as_vec(value, dim: int) -> Vec:
    """Coerce a scalar or sequence to the internal state representation."""
    if dim == 1:
        if isinstance(value, np.ndarray):
            return float(value.reshape(()) if value.ndim == 0 else value[0])
        if isinstance(value, (list, tuple)):
            return float(value[0])
        return float(value)
    arr = np.asarray(value, dtype=float)
    if arr.shape == ():
        raise InvalidParameterError(f"expected a vector of dimension {dim}, got a scalar")
    if arr.shape != (dim,):
        raise InvalidParameterError(f"expected a vector of dimension {dim}, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class AlgorithmView:
    """The part of an objective visible to flows and supervisor predicates.

    Deliberately omits the minimizer and the minimum value.
    """

    dim: int
    eval: Callable[[Vec], float]
    grad: Callable[[Vec], Vec]
    alpha: float
    lipschitz_m: float
    mu: Optional[float] = None


@dataclass(frozen=True)
class ObjectiveSpec:
    """A differentiable convex objective with known structural constants."""

    dim: int
    eval: Callable[[Vec], float]
    grad: Callable[[Vec], Vec]
    minimizer: Vec
    min_value: float
    alpha: float
    lipschitz_m: float
    mu: Optional[float] = None
    name: str = "custom"

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise InvalidParameterError("dim must be a positive integer")
        if self.alpha <= 0:
            raise InvalidParameterError("alpha must be positive")
        if self.lipschitz_m <= 0:
            raise InvalidParameterError("lipschitz_m must be positive")
        if self.mu is not None and self.mu <= 0:
            raise InvalidParameterError("mu must be positive when given")

    def algorithm_view(self) -> AlgorithmView:
        return AlgorithmView(
            dim=self.dim,
            eval=self.eval,
            grad=self.grad,
            alpha=self.alpha,
            lipschitz_m=self.lipschitz_m,
            mu=self.mu,
        )

    def gap(self, z1: Vec) -> float:
        """Suboptimality gap L(z1) - L*. Measurement-only."""
        return self.eval(z1) - self.min_value

    def dist_to_min(self, z1: Vec) -> float:
        """Distance |z1 - z1*|. Measurement-only."""
        if isinstance(z1, np.ndarray):
            return vnorm(z1 - self.minimizer)
        return abs(z1 - self.minimizer)


def make_scalar_quadratic(a: float) -> ObjectiveSpec:
    """L(z1) = a z1^2 on the real line: alpha = a, M = mu = 2a, minimizer 0."""
    if a <= 0:
        raise InvalidParameterError("coefficient a must be positive")

    def ev(z1: float) -> float:
        return a * z1 * z1

    two_a = 2.0 * a

    def gr(z1: float) -> float:
        return two_a * z1

    return ObjectiveSpec(
        dim=1,
        eval=ev,
        grad=gr,
        minimizer=0.0,
        min_value=0.0,
        alpha=a,
        lipschitz_m=2.0 * a,
        mu=2.0 * a,
        name=f"scalar_quadratic(a={a})",
    )


def make_diagonal_quadratic(coefficients) -> ObjectiveSpec:
    """L(z1) = sum_i a_i z1_i^2 with all a_i > 0."""
    coeffs = np.asarray(coefficients, dtype=float)
    if coeffs.ndim != 1 or coeffs.size < 1:
        raise InvalidParameterError("coefficients must be a nonempty 1-D sequence")
    if np.any(coeffs <= 0):
        raise InvalidParameterError("all coefficients must be positive")
    n = coeffs.size
    if n == 1:
        return make_scalar_quadratic(float(coeffs[0]))

    def ev(z1: np.ndarray) -> float:
        return float(np.dot(coeffs, z1 * z1))

    two_coeffs = 2.0 * coeffs

    def gr(z1: np.ndarray) -> np.ndarray:
        return two_coeffs * z1

    a_min = float(coeffs.min())
    a_max = float(coeffs.max())
    return ObjectiveSpec(
        dim=n,
        eval=ev,
        grad=gr,
        minimizer=np.zeros(n),
        min_value=0.0,
        alpha=a_min,
        lipschitz_m=2.0 * a_max,
        mu=2.0 * a_min,
        name=f"diagonal_quadratic({coeffs.tolist()})",
    )


def make_shifted_quadratic(coefficients, center, offset: float = 0.0) -> ObjectiveSpec:
    """L(z1) = sum_i a_i (z1_i - c_i)^2 + offset; minimizer at the center."""
    coeffs = np.asarray(coefficients, dtype=float)
    if coeffs.ndim != 1 or coeffs.size < 1:
        raise InvalidParameterError("coefficients must be a nonempty 1-D sequence")
    if np.any(coeffs <= 0):
        raise InvalidParameterError("all coefficients must be positive")
    n = coeffs.size
    ctr = as_vec(center, n)
    off = float(offset)

    if n == 1:
        a = float(coeffs[0])
        c = float(ctr)

        def ev1(z1: float) -> float:
            d = z1 - c
            return a * d * d + off

        def gr1(z1: float) -> float:
            return 2.0 * a * (z1 - c)

        return ObjectiveSpec(
            dim=1,
            eval=ev1,
            grad=gr1,
            minimizer=c,
            min_value=off,
            alpha=a,
            lipschitz_m=2.0 * a,
            mu=2.0 * a,
            name=f"shifted_quadratic(a={a}, center={c}, offset={off})",
        )

    def ev(z1: np.ndarray) -> float:
        d = z1 - ctr
        return float(np.dot(coeffs, d * d)) + off

    two_coeffs = 2.0 * coeffs

    def gr(z1: np.ndarray) -> np.ndarray:
        return two_coeffs * (z1 - ctr)

    a_min = float(coeffs.min())
    a_max = float(coeffs.max())
    return ObjectiveSpec(
        dim=n,
        eval=ev,
        grad=gr,
        minimizer=ctr,
        min_value=off,
        alpha=a_min,
        lipschitz_m=2.0 * a_max,
        mu=2.0 * a_min,
        name="shifted_quadratic",
    )


_BUILTINS = {
    "scalar_quadratic": make_scalar_quadratic,
    "diagonal_quadratic": make_diagonal_quadratic,
    "shifted_quadratic": make_shifted_quadratic,
}


def make_objective(name: str, **params) -> ObjectiveSpec:
    """Build a builtin objective by name (config-file entry point)."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise InvalidParameterError(
            f"unknown objective {name!r}; available: {sorted(_BUILTINS)}"
        ) from None
    return factory(**params)


def check_gradient_fd(obj: ObjectiveSpec, z1: Vec, h: float) -> float:
    """Max abs component error of grad against a central finite difference."""
    if h <= 0:
        raise InvalidParameterError("finite-difference step h must be positive")
    g = obj.grad(z1)
    if obj.dim == 1:
        fd = (obj.eval(z1 + h) - obj.eval(z1 - h)) / (2.0 * h)
        return abs(fd - g)
    z1 = np.asarray(z1, dtype=float)
    err = 0.0
    for i in range(obj.dim):
        e = np.zeros(obj.dim)
        e[i] = h
        fd = (obj.eval(z1 + e) - obj.eval(z1 - e)) / (2.0 * h)
        err = max(err, abs(fd - g[i]))
    return err


def suboptimality_radius(obj: ObjectiveSpec, grad_norm: float) -> float:
    """Radius bound: |grad L(z1)| <= grad_norm implies |z1 - z1*| <= result.

    Follows from quadratic growth: |z1 - z1*| <= |grad L(z1)| / alpha.
    """
    if grad_norm < 0:
        raise InvalidParameterError("grad_norm must be nonnegative")
    return grad_norm / obj.alpha


def sampled_structure_report(
    obj: ObjectiveSpec, n_samples: int = 1000, box_radius: float = 100.0, seed: int = 0
) -> dict:
    """Sampled verification of quadratic growth and gradient Lipschitz bounds.

    Returns a dict with the worst observed violations (negative slack means a
    violation beyond the 1e-9 tolerance).
    """
    rng = np.random.default_rng(seed)
    n = obj.dim
    zstar = obj.minimizer

    worst_growth = np.inf
    worst_lip = np.inf
    for _ in range(n_samples):
        u_arr = rng.uniform(-box_radius, box_radius, size=n)
        w_arr = rng.uniform(-box_radius, box_radius, size=n)
        if n == 1:
            u = zstar + float(u_arr[0])
            w = zstar + float(w_arr[0])
            dist_sq = (u - zstar) ** 2
            grad_gap = abs(obj.grad(u) - obj.grad(w))
            uw = abs(u - w)
        else:
            u = zstar + u_arr
            w = zstar + w_arr
            dist_sq = sqnorm(u - zstar)
            grad_gap = vnorm(obj.grad(u) - obj.grad(w))
            uw = vnorm(u - w)
        worst_growth = min(
            worst_growth, obj.eval(u) - obj.min_value - obj.alpha * dist_sq
        )
        worst_lip = min(worst_lip, obj.lipschitz_m * uw - grad_gap)

    return {
        "quadratic_growth_slack": worst_growth,
        "lipschitz_slack": worst_lip,
        "quadratic_growth_ok": worst_growth >= -1e-9,
        "lipschitz_ok": worst_lip >= -1e-9,
    }
