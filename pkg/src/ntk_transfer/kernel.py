"""Infinite-width NTK of a fully connected ReLU network as a dot-product kernel."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, partial
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, KernelDomainError

DOMAIN_TOL = 1e-12
NORM_TOL = 1e-9


@dataclass(frozen=True)
class KernelParams:
    """Architecture of the network whose NTK we evaluate.

    ``depth`` counts affine layers, so ``depth=1`` is a linear model.
    """

    depth: int = 3
    sigma_w_sq: float = 2.0
    sigma_b_sq: float = 0.0
    input_dim: int = 10

    def __post_init__(self):
        if int(self.depth) != self.depth or self.depth < 1:
            raise ConfigError(f"depth must be a positive integer, got {self.depth!r}")
        if not self.sigma_w_sq > 0:
            raise ConfigError(f"sigma_w_sq must be positive, got {self.sigma_w_sq!r}")
        if not self.sigma_b_sq >= 0:
            raise ConfigError(f"sigma_b_sq must be non-negative, got {self.sigma_b_sq!r}")
        if int(self.input_dim) != self.input_dim or self.input_dim < 2:
            raise ConfigError(f"input_dim must be an integer >= 2, got {self.input_dim!r}")


def _check_domain(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(np.abs(z) > 1.0 + DOMAIN_TOL) or np.any(np.isnan(z)):
        raise KernelDomainError("kernel argument outside [-1, 1]")
    return np.clip(z, -1.0, 1.0)


def _relu_ntk(params: KernelParams, z: np.ndarray) -> np.ndarray:
    sw, sb = params.sigma_w_sq, params.sigma_b_sq
    z = np.asarray(z, dtype=float)
    shape = z.shape
    sigma = sw * z.reshape(-1) + sb
    sigma_one = sw + sb
    theta = sigma.copy()
    for _ in range(params.depth - 1):
        if sigma_one <= 0:
            raise ConfigError("zero diagonal variance in NTK recursion")
        c = np.clip(sigma / sigma_one, -1.0, 1.0)
        angle = np.arccos(c)
        np.subtract(np.pi, angle, out=angle)
        # sigma <- sw * sigma_one * (sqrt(1 - c^2) + angle * c) / (2 pi) + sb
        sigma = np.multiply(c, c)
        np.subtract(1.0, sigma, out=sigma)
        np.sqrt(sigma, out=sigma)
        c *= angle
        sigma += c
        sigma *= sw * sigma_one / (2 * np.pi)
        sigma += sb
        # theta <- sigma + theta * sigma_dot, sigma_dot = sw * angle / (2 pi)
        angle *= sw / (2 * np.pi)
        theta = theta * angle
        theta += sigma
        # at c = 1 the arc-cosine map returns sigma_one exactly
        sigma_one = sw * sigma_one / 2 + sb
    return theta.reshape(shape)


@dataclass(frozen=True)
class DotProductKernel:
    """A kernel ``Theta(x, x') = fn(x . x')`` on the unit sphere.

    ``fn`` must accept arrays with entries in [-1, 1]. ``params`` is set for the
    ReLU NTK and ``None`` for ad-hoc kernels (e.g. in tests).
    """

    fn: Callable[[np.ndarray], np.ndarray]
    params: Optional[KernelParams] = None
    name: str = "custom"

    def __call__(self, z):
        z = _check_domain(z)
        out = self.fn(z)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def trace(self) -> float:
        """Kernel value on the diagonal, ``Theta(1)``."""
        return float(self.fn(np.asarray(1.0)))

    def shifted(self, c: float) -> "DotProductKernel":
        """The kernel ``Theta(z) - c``; with ``c = eta_0`` this drops the constant mode."""
        return DotProductKernel(_Shifted(self.fn, float(c)), self.params, name=f"{self.name}-shift")

    def gram(self, X, Y=None) -> np.ndarray:
        X = _as_unit_rows(X, "X")
        Y = X if Y is None else _as_unit_rows(Y, "Y")
        if X.shape[1] != Y.shape[1]:
            raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
        z = np.clip(X @ Y.T, -1.0, 1.0)
        return self.fn(z)


@dataclass(frozen=True)
class _Shifted:
    fn: Callable
    c: float

    def __call__(self, z):
        return self.fn(z) - self.c


def _as_unit_rows(X, name) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    norms = np.linalg.norm(X, axis=1)
    if np.any(np.abs(norms - 1.0) > NORM_TOL):
        raise ValueError(f"rows of {name} must have unit norm (max deviation "
                         f"{np.max(np.abs(norms - 1.0)):.3g})")
    return X


@lru_cache(maxsize=64)
def relu_ntk(params: KernelParams) -> DotProductKernel:
    return DotProductKernel(partial(_relu_ntk, params), params, name="relu_ntk")


def ntk_eval(params: KernelParams, z) -> float | np.ndarray:
    """Evaluate the ReLU NTK at dot product ``z``."""
    return relu_ntk(params)(z)


def gram_matrix(params: KernelParams, X, Y=None) -> np.ndarray:
    return relu_ntk(params).gram(X, Y)
