"""Closed-form learning curves for sequential ridge-less kernel regression.

Every sum over eigenmodes is carried out level by level, weighting each level by
its multiplicity. Target coefficients enter only through their per-level second
moments: ``aa = <wA^2>``, ``bb = <wB^2>``, ``ab = <wA wB>``. The default is the
Gaussian ensemble ``aa = bb = eta``, ``ab = rho * eta``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ModeDeficitError
from .spectral import Spectrum

KAPPA_RTOL = 1e-12


@dataclass(frozen=True)
class SelfConsistency:
    """Solution of the kappa equation for one sample size."""

    N: float
    kappa: float
    gamma: float
    q: np.ndarray
    q_tilde: np.ndarray
    spectrum: Spectrum

    @property
    def noise_gain(self) -> float:
        """``N / ((1 - gamma) kappa^2)``, the coefficient of the rank-one term."""
        return self.N / ((1.0 - self.gamma) * self.kappa ** 2)

    def residual(self) -> float:
        s = self.spectrum
        return float(np.dot(s.mult, s.eta / (self.kappa + self.N * s.eta)) - 1.0)


def _g(spec: Spectrum, N: float, kappa: float) -> float:
    return float(np.dot(spec.mult, spec.eta / (kappa + N * spec.eta))) - 1.0


def solve_kappa(spec: Spectrum, N: float) -> SelfConsistency:
    """Solve ``sum_k m_k eta_k / (kappa + N eta_k) = 1`` for ``kappa > 0`` by bisection."""
    if N <= 0:
        raise ValueError(f"sample size must be positive, got {N}")
    if spec.n_modes <= N:
        raise ModeDeficitError(
            f"N={N:g} is not below the number of non-zero modes ({spec.n_modes:g}); "
            "add spectral levels or reduce N")
    lo, hi = 1e-16 * float(spec.eta.max()), spec.trace
    if _g(spec, N, lo) <= 0:
        raise ModeDeficitError(f"N={N:g} is too close to the mode count for a positive kappa")
    # g is strictly decreasing in kappa; bisect on a log scale
    while hi / lo - 1.0 > 0.1 * KAPPA_RTOL:
        mid = math.sqrt(lo * hi)
        if mid <= lo or mid >= hi:
            break
        if _g(spec, N, mid) > 0:
            lo = mid
        else:
            hi = mid
    kappa = math.sqrt(lo * hi)
    denom = kappa + N * spec.eta
    q = kappa / denom
    gamma = float(np.dot(spec.mult, N * spec.eta ** 2 / denom ** 2))
    return SelfConsistency(float(N), kappa, gamma, q, spec.eta * q ** 2, spec)


def _ensemble(spec: Spectrum, rho: float, moments):
    if moments is not None:
        aa, bb, ab = (np.broadcast_to(np.asarray(m, float), spec.eta.shape) for m in moments)
        return aa, bb, ab
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"similarity must lie in [-1, 1], got {rho}")
    return spec.eta, spec.eta, rho * spec.eta


@dataclass(frozen=True)
class TargetEnsemble:
    """Pair of target functions, either random (ensemble) or explicit.

    With explicit per-level coefficients every mode of level ``k`` carries
    ``wbar[k]``; ``rho`` is then ignored.
    """

    rho: float = 1.0
    sigma_sq: float = 0.0
    wbar_a: Optional[Sequence[float]] = None
    wbar_b: Optional[Sequence[float]] = None

    def moments(self, spec: Spectrum):
        if self.wbar_a is None and self.wbar_b is None:
            return _ensemble(spec, self.rho, None)
        a = np.asarray(self.wbar_a if self.wbar_a is not None else self.wbar_b, float)
        b = np.asarray(self.wbar_b if self.wbar_b is not None else self.wbar_a, float)
        if a.shape != spec.eta.shape or b.shape != spec.eta.shape:
            raise ValueError("explicit coefficients must be level-aligned with the spectrum")
        return a * a, b * b, a * b


def _transfer_cost(sc: SelfConsistency, phi, aa, au, uu, sigma_sq: float) -> float:
    """Transfer cost in second-moment form: <(w_hat - u)^2> weighted by phi."""
    s = sc.spectrum
    inner = float(np.dot(s.mult, s.eta * aa * sc.q ** 2)) + sigma_sq
    per_level = ((aa - 2 * au + uu) - 2 * (aa - au) * sc.q
                 + (aa + sc.noise_gain * s.eta * inner) * sc.q ** 2)
    return float(np.dot(s.mult, phi * per_level))


def transfer_cost(sc: SelfConsistency, wbar, u, phi, sigma_sq: float = 0.0) -> float:
    """Average of ``sum_i phi_i (w*_i - u_i)^2`` over the training set of one task.

    ``w*`` is the regressor's coefficient vector after training on target
    ``wbar``; all arguments are per-level arrays aligned with the spectrum.
    """
    s = sc.spectrum
    wbar, u, phi = (np.asarray(v, dtype=float) for v in (wbar, u, phi))
    if not (wbar.shape == u.shape == phi.shape == s.eta.shape):
        raise ValueError("wbar, u and phi must be level-aligned with the spectrum")
    return _transfer_cost(sc, phi, wbar * wbar, wbar * u, u * u, sigma_sq)


def e_single(spec: Spectrum, N: float, sigma_sq: float = 0.0, wbar_sq=None) -> float:
    """Generalization error after training on a single task of size N."""
    sc = solve_kappa(spec, N)
    return _e_single(sc, spec.eta if wbar_sq is None else np.asarray(wbar_sq, float), sigma_sq)


def _e_single(sc: SelfConsistency, wbar_sq, sigma_sq: float) -> float:
    s = sc.spectrum
    bias = float(np.dot(s.mult, s.eta * wbar_sq * sc.q ** 2))
    return (bias + sc.gamma * sigma_sq) / (1.0 - sc.gamma)


def _pair_noise(sa: SelfConsistency, sb: SelfConsistency, sigma_sq: float) -> float:
    if sigma_sq == 0:
        return 0.0
    s = sa.spectrum
    cross = float(np.dot(s.mult, s.eta ** 2 * sa.q ** 2 * sb.q ** 2))
    return sigma_sq * (sa.noise_gain * cross / (1.0 - sb.gamma) + sb.gamma / (1.0 - sb.gamma))


def e_transfer(spec: Spectrum, N_A: float, N_B: float, rho: float = 1.0,
               sigma_sq: float = 0.0, moments=None) -> float:
    """Error on target B after training on A then on B."""
    sa, sb = solve_kappa(spec, N_A), solve_kappa(spec, N_B)
    aa, bb, ab = _ensemble(spec, rho, moments)
    phi = spec.eta * sb.q ** 2 / (1.0 - sb.gamma)
    if moments is None:
        e_b = spec.eta * phi
        weight = 2 * (1 - rho) * (1 - sa.q) + sa.q ** 2 / (1 - sa.gamma)
        bias = float(np.dot(spec.mult, weight * e_b))
    else:
        bias = _transfer_cost(sa, phi, aa, ab, bb, 0.0)
    return bias + _pair_noise(sa, sb, sigma_sq)


def e_backward(spec: Spectrum, N_A: float, N_B: float, rho: float = 1.0,
               sigma_sq: float = 0.0, moments=None) -> float:
    """Error on target A after training on A then on B.

    When both targets coincide this is the forward error by definition, and the
    forward expression is returned so the two agree bit for bit.
    """
    aa, bb, ab = _ensemble(spec, rho, moments)
    if np.array_equal(aa, ab) and np.array_equal(bb, ab):
        return e_transfer(spec, N_A, N_B, rho, sigma_sq, moments)
    return _backward_general(spec, N_A, N_B, aa, bb, ab, sigma_sq)


def _backward_general(spec: Spectrum, N_A, N_B, aa, bb, ab, sigma_sq: float) -> float:
    sa, sb = solve_kappa(spec, N_A), solve_kappa(spec, N_B)
    eta, qa, qb, gb = spec.eta, sa.q, sb.q, sb.gamma
    diff = aa - 2 * ab + bb
    shift = qb - (1.0 - gb)
    inner = float(np.dot(spec.mult, eta * aa * qa ** 2))
    per_level = (gb * diff
                 + (diff * shift ** 2 - 2 * (aa - ab) * shift * qa * qb
                    + (aa + sa.noise_gain * eta * inner) * qa ** 2 * qb ** 2) / (1.0 - gb))
    return float(np.dot(spec.mult, eta * per_level)) + _pair_noise(sa, sb, sigma_sq)


def e_average(spec: Spectrum, N_A: float, N_B: float, rho: float = 1.0,
              sigma_sq: float = 0.0, moments=None) -> float:
    """Error on target B of the mean of two independently trained predictors."""
    if sigma_sq != 0:
        raise ValueError("model-average formula is only available for noiseless labels")
    sa, sb = solve_kappa(spec, N_A), solve_kappa(spec, N_B)
    aa, bb, ab = _ensemble(spec, rho, moments)
    ca, cb = 1.0 - sa.q, 1.0 + sb.q
    cross = ca ** 2 * aa - 2 * ca * cb * ab + cb ** 2 * bb
    head = 0.25 * float(np.dot(spec.mult, spec.eta * cross))
    return head + 0.25 * (sa.gamma * _e_single(sa, aa, 0.0) + sb.gamma * _e_single(sb, bb, 0.0))


def critical_similarity(spec: Spectrum, N_A: float) -> float:
    """Similarity below which forward transfer is negative for every N_B."""
    root = math.sqrt(solve_kappa(spec, N_A).gamma)
    return root / (1.0 + root)


def asymptotic_ratios(spec: Spectrum, N_A: float, N_B: float, rho: float) -> dict:
    """Reference values for the three limiting error ratios."""
    ga, gb = solve_kappa(spec, N_A).gamma, solve_kappa(spec, N_B).gamma
    return {
        "forward_ratio": 2.0 * (1.0 - rho),
        "self_negative_ratio": 1.0 / (1.0 - ga),
        "self_forgetting_ratio": 1.0 / (1.0 - gb),
    }


@dataclass(frozen=True)
class LearningCurve:
    sizes: tuple
    errors: np.ndarray   # errors[n-1] is the error after n tasks
    noise: np.ndarray    # coefficient of sigma^2 in each error


def learning_curve(spec: Spectrum, sizes: Sequence[float], sigma_sq: float = 0.0,
                   wbar_sq=None) -> LearningCurve:
    """Errors after each of K sequential tasks sharing one target.

    For the error after ``n`` tasks the weight vector starts from the last task
    and is propagated backwards through the earlier ones.
    """
    sizes = tuple(sizes)
    if not sizes:
        raise ValueError("need at least one task")
    cache = {N: solve_kappa(spec, N) for N in set(sizes)}
    m = spec.eta if wbar_sq is None else np.asarray(wbar_sq, float)
    mult, eta = spec.mult, spec.eta
    errors, noise = [], []
    for n in range(1, len(sizes) + 1):
        last = cache[sizes[n - 1]]
        phi = eta * last.q ** 2 / (1.0 - last.gamma)
        r = last.gamma / (1.0 - last.gamma)
        for t in range(n - 2, -1, -1):
            sc = cache[sizes[t]]
            pulled = sc.noise_gain * float(np.dot(mult, eta * phi * sc.q ** 2))
            phi = phi * sc.q ** 2 + pulled * eta * sc.q ** 2
            r += pulled
        errors.append(float(np.dot(mult, phi * m)) + r * sigma_sq)
        noise.append(r)
    return LearningCurve(sizes, np.array(errors), np.array(noise))


def q_norm_bound(spec: Spectrum, N: float) -> float:
    """Row-sum bound ``max_k (1 + N eta_k / kappa) q_k^2`` on the task-transfer matrix."""
    sc = solve_kappa(spec, N)
    pos = spec.eta > 0
    return float(np.max((1.0 + N * spec.eta[pos] / sc.kappa) * sc.q[pos] ** 2))


def q_spectral_radius(spec: Spectrum, N: float) -> float:
    """Largest eigenvalue of ``diag(q^2) + c q~ q~^T`` on the positive-eigenvalue modes.

    Modes with ``eta = 0`` decouple with eigenvalue 1 and never reach the error.
    """
    sc = solve_kappa(spec, N)
    pos = spec.eta > 0
    q2, qt, w = sc.q[pos] ** 2, sc.q_tilde[pos], spec.mult[pos]
    c = sc.noise_gain
    lo = float(q2.max())
    hi = lo + c * float(np.dot(w, qt ** 2))

    def secular(lam):
        return 1.0 - c * float(np.dot(w, qt ** 2 / (lam - q2)))

    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if secular(mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class CurvePoint:
    label: str
    N_A: float
    N_B: float
    n: int
    rho: float
    sigma_sq: float
    value: float


CURVE_FIELDS = ("label", "N_A", "N_B", "n", "rho", "sigma_sq", "value")


def curve_points_csv(points: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CURVE_FIELDS, lineterminator="\n")
    w.writeheader()
    for p in points:
        row = asdict(p)
        row["value"] = repr(float(p.value))
        w.writerow(row)
    return buf.getvalue()
