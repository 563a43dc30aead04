"""Monte Carlo simulation of sequential ridge-less kernel regression.

Targets use the dual representation ``f(x) = sum_j alpha_j Theta(x'_j, x)``
over random anchors ``x'_j``; with i.i.d. ``alpha_j ~ N(0, 1/P')`` this matches
the Gaussian coefficient ensemble for large ``P'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lu_factor, lu_solve

from .errors import ConditioningError
from .kernel import DotProductKernel

JITTER_REL = 1e-10
JITTER_MAX_REL = 1e-6
INTERP_RTOL = 1e-6
CHUNK_ELEMS = 2_000_000   # cap on Gram entries held at once when evaluating expansions


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_inputs(N: int, D: int, seed=None) -> np.ndarray:
    """``N`` i.i.d. Gaussian points in R^D projected onto the unit sphere."""
    if N < 1 or D < 2:
        raise ValueError(f"need N >= 1 and D >= 2, got N={N}, D={D}")
    X = _rng(seed).standard_normal((N, D))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    return X


def kernel_matvec(kernel: DotProductKernel, X, Y, coef) -> np.ndarray:
    """``Theta(X, Y) @ coef`` computed in row blocks to bound memory."""
    X = np.atleast_2d(X)
    step = max(1, CHUNK_ELEMS // max(1, len(Y)))
    if len(X) <= step:
        return kernel.gram(X, Y) @ coef
    coef = np.asarray(coef)
    out = np.empty((len(X),) + coef.shape[1:])
    for i in range(0, len(X), step):
        out[i:i + step] = kernel.gram(X[i:i + step], Y) @ coef
    return out


@dataclass(frozen=True)
class TargetFunction:
    kernel: DotProductKernel
    anchors: np.ndarray
    alpha: np.ndarray

    def __call__(self, X) -> np.ndarray:
        return kernel_matvec(self.kernel, X, self.anchors, self.alpha)


def pair_coefficients(z1, z2, rho: float):
    """Map two independent standard normal vectors onto a correlated pair."""
    P = len(z1)
    a = z1 / np.sqrt(P)
    b = (rho * z1 + np.sqrt(max(0.0, 1.0 - rho * rho)) * z2) / np.sqrt(P)
    return a, b


def sample_target_pair(kernel: DotProductKernel, D: int, rho: float, P_prime: int = 10_000,
                       seed=None) -> Tuple[TargetFunction, TargetFunction]:
    """Two targets on shared anchors whose coefficients have correlation ``rho``."""
    if P_prime < 1:
        raise ValueError("need at least one anchor")
    if abs(rho) > 1:
        raise ValueError(f"similarity must lie in [-1, 1], got {rho}")
    rng = _rng(seed)
    anchors = sample_inputs(P_prime, D, rng)
    z = rng.standard_normal((2, P_prime))
    a, b = pair_coefficients(z[0], z[1], rho)
    return TargetFunction(kernel, anchors, a), TargetFunction(kernel, anchors, b)


@dataclass(frozen=True)
class TaskData:
    X: np.ndarray
    y: np.ndarray


def make_task(target: TargetFunction, N: int, sigma_sq: float = 0.0, seed=None) -> TaskData:
    rng = _rng(seed)
    X = sample_inputs(N, target.anchors.shape[1], rng)
    y = target(X)
    if sigma_sq > 0:
        y = y + np.sqrt(sigma_sq) * rng.standard_normal(N)
    return TaskData(X, y)


@dataclass
class Predictor:
    """Sum of kernel expansions ``sum_s Theta(x, X_s) c_s`` over stored stages."""

    kernel: DotProductKernel
    stages: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    jitters: List[float] = field(default_factory=list)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        out = np.zeros(len(X))
        for Xs, cs in self.stages:
            out += kernel_matvec(self.kernel, X, Xs, cs)
        return out


def _factor(K: np.ndarray):
    """Cholesky of ``K + lam I`` with the smallest jitter from the escalation ladder."""
    n = len(K)
    scale = np.trace(K) / n
    lam = JITTER_REL * scale
    while lam <= JITTER_MAX_REL * scale * (1 + 1e-9):
        try:
            return cho_factor(K + lam * np.eye(n), lower=True), lam
        except LinAlgError:
            lam *= 10
    raise ConditioningError(f"Gram matrix of size {n} not positive definite even with jitter "
                            f"{JITTER_MAX_REL:g} * trace/N")


def _check_interpolation(K, coef, target, lam):
    resid = K @ coef - target
    scale = np.linalg.norm(target)
    if scale > 0 and np.linalg.norm(resid) > INTERP_RTOL * scale:
        raise ConditioningError(
            f"stage does not interpolate its labels (relative residual "
            f"{np.linalg.norm(resid) / scale:.2e}, jitter {lam:.2e})")


def _solve_stage(kernel, X, target):
    K = kernel.gram(X)
    fac, lam = _factor(K)
    coef = cho_solve(fac, target)
    _check_interpolation(K, coef, target, lam)
    return coef, lam


def fit_krr(kernel: DotProductKernel, task: TaskData) -> Predictor:
    """Ridge-less kernel regression from a zero initial function."""
    coef, lam = _solve_stage(kernel, task.X, task.y)
    return Predictor(kernel, [(task.X, coef)], [lam])


def fit_sequential(kernel: DotProductKernel, tasks: Sequence[TaskData]) -> Predictor:
    """Train task by task; each stage interpolates the residual of the previous model."""
    if not tasks:
        raise ValueError("need at least one task")
    for pred in iter_sequential(kernel, tasks):
        pass
    return pred


def block_system(kernel: DotProductKernel, tasks: Sequence[TaskData]):
    """Assemble the lower block-triangular matrix (upper blocks zeroed) and stacked labels."""
    sizes = [len(t.y) for t in tasks]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    Z = np.zeros((offsets[-1], offsets[-1]))
    jitters = []
    for i, ti in enumerate(tasks):
        rows = slice(offsets[i], offsets[i + 1])
        for j in range(i):
            Z[rows, offsets[j]:offsets[j + 1]] = kernel.gram(ti.X, tasks[j].X)
        K = kernel.gram(ti.X)
        _, lam = _factor(K)
        Z[rows, rows] = K + lam * np.eye(sizes[i])
        jitters.append(lam)
    return Z, np.concatenate([t.y for t in tasks]), offsets, jitters


def fit_block(kernel: DotProductKernel, tasks: Sequence[TaskData]) -> Predictor:
    """Solve the block-triangular system by forward block substitution (LU per block)."""
    if not tasks:
        raise ValueError("need at least one task")
    Z, y, off, jitters = block_system(kernel, tasks)
    coefs = []
    for i in range(len(tasks)):
        rows = slice(off[i], off[i + 1])
        rhs = y[rows] - Z[rows, :off[i]] @ np.concatenate(coefs) if i else y[rows]
        try:
            coefs.append(lu_solve(lu_factor(Z[rows, rows]), rhs))
        except (LinAlgError, ValueError) as exc:
            raise ConditioningError(f"block {i} is singular: {exc}") from exc
    return Predictor(kernel, [(t.X, c) for t, c in zip(tasks, coefs)], jitters)


def model_average(p_a: Predictor, p_b: Predictor) -> Predictor:
    if p_a.kernel != p_b.kernel:
        raise ValueError("cannot average predictors built on different kernels")
    stages = [(X, 0.5 * c) for X, c in p_a.stages + p_b.stages]
    return Predictor(p_a.kernel, stages, p_a.jitters + p_b.jitters)


def mc_stats(truth, pred) -> Tuple[float, float]:
    sq = (np.asarray(truth) - np.asarray(pred)) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(len(sq)))


def estimate_error(predictor, target, n_test: int = 4000, seed=None) -> Tuple[float, float]:
    """Monte Carlo estimate of the mean squared error over the sphere, with its standard error."""
    if n_test < 2:
        raise ValueError("need at least two test points")
    D = target.anchors.shape[1]
    X = sample_inputs(n_test, D, seed)
    return mc_stats(target(X), predictor(X))


def iter_sequential(kernel: DotProductKernel, tasks: Sequence[TaskData]):
    """Yield the running predictor after each task of a sequential fit."""
    pred = Predictor(kernel)
    for task in tasks:
        coef, lam = _solve_stage(kernel, task.X, task.y - pred(task.X))
        pred = Predictor(kernel, pred.stages + [(task.X, coef)], pred.jitters + [lam])
        yield pred
