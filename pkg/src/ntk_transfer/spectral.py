"""Mercer spectrum of a dot-product kernel on the sphere S^{d-1}.

Eigenvalues are obtained by projecting the kernel onto Gegenbauer polynomials
with a Gauss-Gegenbauer rule. Polynomials are normalized so that ``P_k(1) = 1``,
in which case

    Theta(z) = sum_k eta_k N(d, k) P_k(z)

and ``eta_k`` is the eigenvalue of each of the ``N(d, k)`` degenerate spherical
harmonics of degree ``k`` (with respect to the uniform probability measure).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from scipy.linalg import LinAlgError, eigh_tridiagonal
from scipy.special import gammaln

from .errors import ConfigError, NumericalError, SpectralResolutionError

NEGATIVE_CLIP = 1e-10
TRACE_TOL = 0.05


def degeneracy(d: int, k: int) -> int:
    """Number of degree-``k`` spherical harmonics on S^{d-1}."""
    if d < 2 or k < 0:
        raise ValueError(f"need d >= 2 and k >= 0, got d={d}, k={k}")
    if k == 0:
        return 1
    return (2 * k + d - 2) * math.comb(k + d - 2, k) // (k + d - 2)


def measure_mass(d: int) -> float:
    """Total mass of (1 - z^2)^((d-3)/2) on [-1, 1]."""
    return math.exp(0.5 * math.log(math.pi) + gammaln((d - 1) / 2) - gammaln(d / 2))


@dataclass(frozen=True)
class QuadratureRule:
    d: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return len(self.nodes)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def build_quadrature(d: int, r: int) -> QuadratureRule:
    """Gauss rule for the weight ``(1 - z^2)^((d-3)/2)`` via Golub-Welsch."""
    if d < 2 or r < 2:
        raise ConfigError(f"quadrature needs d >= 2 and r >= 2, got d={d}, r={r}")
    lam = (d - 2) / 2
    k = np.arange(1, r, dtype=float)
    # monic Gegenbauer recurrence: p_{k+1} = z p_k - b_k p_{k-1}
    with np.errstate(invalid="ignore", divide="ignore"):
        b = k * (k + 2 * lam - 1) / (4 * (k + lam) * (k + lam - 1))
    if d == 2:
        b[0] = 0.5  # Chebyshev first kind
    offdiag = np.sqrt(b)
    try:
        nodes, vecs = eigh_tridiagonal(np.zeros(r), offdiag)
    except LinAlgError as exc:
        raise ConfigError(f"quadrature eigen-solve failed for r={r}: {exc}") from exc
    weights = measure_mass(d) * vecs[0] ** 2
    # the rule is symmetric; enforce it exactly
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    return QuadratureRule(d, nodes, weights)


def gegenbauer_table(d: int, k_max: int, z) -> np.ndarray:
    """Rows ``P_0 .. P_{k_max}`` evaluated at ``z``, normalized to ``P_k(1) = 1``."""
    z = np.asarray(z, dtype=float)
    out = np.empty((k_max + 1,) + z.shape)
    out[0] = 1.0
    if k_max >= 1:
        out[1] = z
    for k in range(2, k_max + 1):
        out[k] = ((2 * k + d - 4) * z * out[k - 1] - (k - 1) * out[k - 2]) / (k + d - 3)
    return out


@dataclass(frozen=True)
class Spectrum:
    """Kernel eigenvalues grouped into degenerate levels.

    ``mult`` is stored as float so that astronomically large degeneracies in
    high dimension stay representable. ``d`` is ``None`` for synthetic spectra
    that do not come from a sphere.
    """

    eta: np.ndarray
    mult: np.ndarray
    k: np.ndarray = field(default=None)
    d: Optional[int] = None

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        mult = np.asarray(self.mult, dtype=float)
        k = np.arange(len(eta)) if self.k is None else np.asarray(self.k, dtype=int)
        if eta.ndim != 1 or eta.shape != mult.shape or eta.shape != k.shape:
            raise ValueError("eta, mult and k must be 1-d arrays of equal length")
        if np.any(mult <= 0) or np.any(~np.isfinite(eta)):
            raise ValueError("multiplicities must be positive and eigenvalues finite")
        if np.any(eta < 0):
            raise ValueError("eigenvalues must be non-negative")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "mult", mult)
        object.__setattr__(self, "k", k)

    @classmethod
    def from_levels(cls, levels: Iterable[tuple[float, float]], d=None) -> "Spectrum":
        levels = list(levels)
        return cls(np.array([e for e, _ in levels], float),
                   np.array([m for _, m in levels], float), d=d)

    @property
    def k_max(self) -> int:
        return int(self.k.max())

    @property
    def trace(self) -> float:
        return float(np.dot(self.mult, self.eta))

    @property
    def n_modes(self) -> float:
        """Number of modes with a strictly positive eigenvalue."""
        return float(self.mult[self.eta > 0].sum())

    def reconstruct(self, z) -> np.ndarray:
        if self.d is None:
            raise ValueError("reconstruction needs the sphere dimension")
        P = gegenbauer_table(self.d, self.k_max, z)
        coef = np.zeros(self.k_max + 1)
        coef[self.k] = self.mult * self.eta
        return np.tensordot(coef, P, axes=1)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "eta", "mult"])
        for k, e, m in zip(self.k, self.eta, self.mult):
            w.writerow([int(k), repr(float(e)), _format_mult(self, int(k), m)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, d=None) -> "Spectrum":
        text = Path(source).read_text() if not isinstance(source, io.StringIO) else source.getvalue()
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows or set(rows[0]) != {"k", "eta", "mult"}:
            raise ValueError("spectrum CSV must have header k,eta,mult")
        return cls(np.array([float(r["eta"]) for r in rows]),
                   np.array([float(r["mult"]) for r in rows]),
                   np.array([int(r["k"]) for r in rows]), d=d)


def _format_mult(spec: Spectrum, k: int, m: float) -> str:
    if spec.d is not None:
        return str(degeneracy(spec.d, k))
    return str(int(m)) if float(m).is_integer() else repr(float(m))


def decompose(kernel, d: int, k_max: int = 100, rule: Optional[QuadratureRule] = None,
              zero_constant: bool = True, trace_tol: float = TRACE_TOL) -> Spectrum:
    """Project ``kernel`` onto Gegenbauer levels ``0..k_max``.

    Each eigenvalue is a ratio of two quadratures with the same rule, so no
    normalization constants enter. The trace is checked against ``Theta(1)``
    before the constant level is zeroed.
    """
    if rule is None:
        rule = build_quadrature(d, max(1000, 4 * k_max))
    if rule.d != d:
        raise ConfigError(f"quadrature built for d={rule.d}, spectrum requested for d={d}")
    if rule.order < max(4 * k_max, 64):
        raise ConfigError(f"quadrature order {rule.order} too small for k_max={k_max}; "
                          f"need r >= {max(4 * k_max, 64)}")
    theta = np.asarray(kernel(rule.nodes), dtype=float)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("kernel is not finite on the quadrature nodes")
    P = gegenbauer_table(d, k_max, rule.nodes)
    num = P @ (rule.weights * theta)
    den = (P * P) @ rule.weights
    mult = np.array([float(degeneracy(d, k)) for k in range(k_max + 1)])
    eta = num / den / mult

    floor = -NEGATIVE_CLIP * max(eta.max(), 0.0)
    if np.any(eta < floor):
        bad = int(np.argmin(eta))
        raise SpectralResolutionError(
            f"eigenvalue at level {bad} is {eta[bad]:.3g}, below the clipping floor; "
            "increase the quadrature order r or lower k_max")
    eta = np.maximum(eta, 0.0)

    total, target = float(np.dot(mult, eta)), float(kernel(1.0))
    if abs(total - target) > trace_tol * abs(target):
        raise SpectralResolutionError(
            f"truncated trace {total:.6g} differs from Theta(1)={target:.6g} by more than "
            f"{trace_tol:.0%}; increase k_max (and r accordingly)")
    if zero_constant:
        eta = eta.copy()
        eta[0] = 0.0
    return Spectrum(eta, mult, np.arange(k_max + 1), d=d)


def constant_level(kernel, rule: QuadratureRule) -> float:
    """Eigenvalue of the constant mode, i.e. the sphere average of ``Theta(x . x')``."""
    return rule.integrate(np.asarray(kernel(rule.nodes), float)) / float(rule.weights.sum())


def reconstruction_error(spectrum: Spectrum, kernel, z) -> float:
    """Max abs reconstruction error at ``z``, relative to ``Theta(1)``."""
    recon = spectrum.reconstruct(z)
    return float(np.max(np.abs(recon - kernel(z))) / abs(kernel(1.0)))
