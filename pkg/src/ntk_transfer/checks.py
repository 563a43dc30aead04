"""Acceptance checks shared by the ``check`` subcommand and the test suite.

Each ``check_*`` function returns a :class:`CheckResult`; none of them raise on
a failed comparison, only on genuine numerical or configuration errors.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np

from . import theory as T
from .config import Config, ExperimentSettings, SpectrumSettings
from .experiment import run_experiment
from .kernel import DotProductKernel, KernelParams, relu_ntk
from .simulator import TaskData, fit_block, fit_sequential, sample_inputs
from .spectral import (NEGATIVE_CLIP, Spectrum, build_quadrature, decompose, degeneracy,
                       measure_mass)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def flat_spectrum() -> Spectrum:
    """Ten modes of eigenvalue one; every quantity has a closed form at N=5."""
    return Spectrum.from_levels([(1.0, 10)])


def random_spectrum(rng: np.random.Generator) -> Spectrum:
    """Log-uniform levels over four decades with sphere degeneracies."""
    d = int(rng.choice([5, 10, 20]))
    n_levels = int(rng.integers(3, 31))
    eta = 10.0 ** rng.uniform(-4, 0, n_levels)
    mult = [float(degeneracy(d, k)) for k in range(1, n_levels + 1)]
    return Spectrum(eta, np.array(mult))


def random_size(rng: np.random.Generator, spec: Spectrum, cap: float = 1e5) -> int:
    """A sample size well below the mode count (log-uniform)."""
    top = min(0.8 * spec.n_modes, cap)
    return max(1, int(round(10 ** rng.uniform(0, math.log10(top)))))


def relu_spectrum(D: int, k_max: int, r: int = 1000, depth: int = 3) -> Spectrum:
    params = KernelParams(depth=depth, input_dim=D)
    return decompose(relu_ntk(params), D, k_max, build_quadrature(D, r))


# criterion 1
def check_flat_closed_forms(tol: float = 1e-9) -> CheckResult:
    spec = flat_spectrum()
    sc = T.solve_kappa(spec, 5)
    got = {
        "kappa": sc.kappa,
        "gamma": sc.gamma,
        "E1": T.e_single(spec, 5),
        "E_AB(1)": T.e_transfer(spec, 5, 5, 1.0),
        "E_ave": T.e_average(spec, 5, 5, 1.0),
        "E3": float(T.learning_curve(spec, [5, 5, 5]).errors[2]),
    }
    want = {"kappa": 5.0, "gamma": 0.5, "E1": 5.0, "E_AB(1)": 2.5, "E_ave": 3.75, "E3": 1.25}
    errs = {k: abs(got[k] - want[k]) for k in want}
    back = T.e_backward(spec, 5, 5, 1.0)
    ok = max(errs.values()) <= tol and back == got["E_AB(1)"]
    detail = ", ".join(f"{k}={got[k]:.12g}" for k in want)
    return CheckResult("1 flat-spectrum closed forms", ok,
                       f"{detail}; back(1)-fwd(1)={back - got['E_AB(1)']:.3g}")


# criterion 2
def check_average_chain(n_spectra: int = 200, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(n_spectra):
        spec = random_spectrum(rng)
        N = random_size(rng, spec)
        seq = T.e_transfer(spec, N, N, 1.0)
        ave = T.e_average(spec, N, N, 1.0)
        single = T.e_single(spec, N)
        if not seq < ave < single:
            bad += 1
    return CheckResult("2 sequential < average < single chain", bad == 0,
                       f"{bad} violations on {n_spectra} random spectra")


# criterion 3
def check_monotone_curves(n_spectra: int = 200, K: int = 10, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    not_decreasing, over = 0, 0
    worst = 0.0
    for _ in range(n_spectra):
        spec = random_spectrum(rng)
        N = random_size(rng, spec)
        errs = T.learning_curve(spec, [N] * K).errors
        if not np.all(np.diff(errs) < 0):
            not_decreasing += 1
        bound = T.q_norm_bound(spec, N)
        worst = max(worst, bound)
        if bound > 1.0:
            over += 1
    ok = not_decreasing == 0 and over == 0
    return CheckResult("3 monotone K-task learning curve", ok,
                       f"{not_decreasing} non-decreasing curves, {over} norm bounds > 1 "
                       f"(largest {worst:.6f}) on {n_spectra} spectra, K={K}")


# criterion 4
def check_block_equivalence(n_instances: int = 50, N: int = 30, n_tasks: int = 3,
                            D: int = 10, n_test: int = 100, seed: int = 2,
                            tol: float = 1e-6) -> CheckResult:
    kernel = relu_ntk(KernelParams(input_dim=D))
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        tasks = [TaskData(sample_inputs(N, D, rng), rng.standard_normal(N))
                 for _ in range(n_tasks)]
        X = sample_inputs(n_test, D, rng)
        diff = np.abs(fit_sequential(kernel, tasks)(X) - fit_block(kernel, tasks)(X))
        worst = max(worst, float(diff.max()))
    return CheckResult("4 sequential == block-triangular solve", worst <= tol,
                       f"max |difference| {worst:.3g} over {n_instances} instances (tol {tol:g})")


def _crossing(rhos, values, level) -> float:
    """Smallest similarity above which ``values`` stay below ``level`` (linear interpolation)."""
    rhos, values = np.asarray(rhos, float), np.asarray(values, float) - np.asarray(level, float)
    above = np.nonzero(values > 0)[0]
    if len(above) == 0:
        return float(rhos[0])
    i = above[-1]
    if i == len(rhos) - 1:
        return float("inf")
    return float(rhos[i] + (rhos[i + 1] - rhos[i]) * values[i] / (values[i] - values[i + 1]))


def similarity_sweep_config(trials: int = 50, seed: int = 11) -> Config:
    return Config(KernelParams(depth=3, sigma_w_sq=2.0, sigma_b_sq=0.0, input_dim=10),
                  "relu_ntk", SpectrumSettings(k_max=100, r=1000),
                  ExperimentSettings(protocol=("single", "sequential", "average"),
                                     N_A=(100,), N_B=(100,), rho=(0.0, 0.25, 0.5, 0.75, 1.0),
                                     sigma_sq=(0.0,), trials=trials, n_test=4000,
                                     P_prime=10_000, seed=seed))


# criterion 5
def check_similarity_sweep(cfg: Optional[Config] = None, threads: int = 1,
                           rel_tol: float = 0.15, n_se: float = 3.0) -> CheckResult:
    cfg = cfg or similarity_sweep_config()
    rows = run_experiment(cfg, threads=threads)
    compared = {"sequential", "sequential_back", "average", "single_B"}
    misses, worst = [], 0.0
    for r in rows:
        if r.protocol not in compared:
            continue
        gap = abs(r.mc_mean - r.theory_value)
        worst = max(worst, gap / r.theory_value)
        if gap > max(rel_tol * r.theory_value, n_se * r.mc_stderr):
            misses.append(f"{r.protocol}@{r.rho:g}")

    def series(label, field):
        pick = sorted((r.rho, getattr(r, field)) for r in rows if r.protocol == label)
        return [p[0] for p in pick], [p[1] for p in pick]

    out = {}
    for field in ("mc_mean", "theory_value"):
        rho, fwd = series("sequential", field)
        _, back = series("sequential_back", field)
        _, e_a = series("single_A", field)
        _, e_b = series("single_B", field)
        out[field] = (_crossing(rho, fwd, e_b), _crossing(rho, back, e_a))
    order_ok = all(f < b for f, b in out.values())
    ok = not misses and order_ok
    mc_f, mc_b = out["mc_mean"]
    th_f, th_b = out["theory_value"]
    return CheckResult("5 similarity sweep: theory vs Monte Carlo", ok,
                       f"{len(misses)} misses {misses}, worst relative gap {worst:.3f}; "
                       f"forward/backward crossings MC {mc_f:.3f}/{mc_b:.3f}, "
                       f"theory {th_f:.3f}/{th_b:.3f}")


# criterion 6
def check_forward_asymptote(spec: Optional[Spectrum] = None, N_A: float = 1e4,
                            N_B: float = 100, tol: float = 0.1) -> CheckResult:
    spec = spec or relu_spectrum(10, 100)
    e_b = T.e_single(spec, N_B)
    worst = 0.0
    for rho in np.linspace(0.0, 1.0, 11):
        ratio = T.e_transfer(spec, N_A, N_B, rho) / e_b
        ref = T.asymptotic_ratios(spec, N_A, N_B, rho)["forward_ratio"]
        worst = max(worst, abs(ratio - ref))
    return CheckResult("6 large-N_A forward ratio ~ 2(1-rho)", worst <= tol,
                       f"max |ratio - 2(1-rho)| = {worst:.4f} (tol {tol:g})")


# criterion 7
def check_sandwich(spec: Optional[Spectrum] = None, small: float = 100, large: float = 1e4,
                   tol: float = 0.1) -> CheckResult:
    spec = spec or relu_spectrum(10, 100)
    parts, ok = [], True
    # first task small: ratio to E_B against 1/(1-gamma_A)
    r17 = T.e_transfer(spec, small, large, 1.0) / T.e_single(spec, large)
    u17 = T.asymptotic_ratios(spec, small, large, 1.0)["self_negative_ratio"]
    # second task small: ratio to E_A against 1/(1-gamma_B)
    r20 = T.e_transfer(spec, large, small, 1.0) / T.e_single(spec, large)
    u20 = T.asymptotic_ratios(spec, large, small, 1.0)["self_forgetting_ratio"]
    for name, r, u in (("N_A small", r17, u17), ("N_B small", r20, u20)):
        inside = 1.0 < r <= u * (1 + 1e-12)
        close = (u - r) <= tol * u
        ok &= inside and close
        parts.append(f"{name}: ratio {r:.4f} in (1, {u:.4f}], gap {(u - r) / u:.3f}")
    return CheckResult("7 self-transfer sandwich", ok, "; ".join(parts))


def forgetting_config(trials: int = 50, seed: int = 12) -> Config:
    return Config(KernelParams(depth=3, sigma_w_sq=2.0, sigma_b_sq=0.0, input_dim=20),
                  "relu_ntk", SpectrumSettings(k_max=60, r=1000),
                  ExperimentSettings(protocol=("single", "sequential"), N_A=(2000,),
                                     N_B=(100,), rho=(1.0,), sigma_sq=(0.0,), trials=trials,
                                     n_test=4000, P_prime=10_000, seed=seed))


# criterion 8
def check_self_forgetting(cfg: Optional[Config] = None, threads: int = 1) -> CheckResult:
    cfg = cfg or forgetting_config()
    rows = {r.protocol: r for r in run_experiment(cfg, threads=threads)}
    a, ab, b = rows["single_A"], rows["sequential"], rows["single_B"]
    ordered = a.mc_mean < ab.mc_mean < b.mc_mean
    separated = a.mc_q75 < ab.mc_q25 and ab.mc_q75 < b.mc_q25
    return CheckResult(
        "8 self-knowledge forgetting ordering", ordered and separated,
        f"E_A {a.mc_mean:.4g} [{a.mc_q25:.3g}, {a.mc_q75:.3g}] < "
        f"E_AB {ab.mc_mean:.4g} [{ab.mc_q25:.3g}, {ab.mc_q75:.3g}] < "
        f"E_B {b.mc_mean:.4g} [{b.mc_q25:.3g}, {b.mc_q75:.3g}]; "
        f"theory E_AB/E_A = {ab.theory_value / a.theory_value:.4f}, "
        f"MC E_AB/E_A = {ab.mc_mean / a.mc_mean:.4f}")


# criterion 9
def check_multiple_descent(spec: Optional[Spectrum] = None, N_B: float = 1e4,
                           sigma_sq: float = 1e-5, n_grid: int = 200) -> CheckResult:
    """The noisy sweep over N_A rises somewhere the noiseless sweep keeps falling."""
    spec = spec or relu_spectrum(100, 22)
    grid = np.unique(np.round(np.logspace(1, 6, n_grid)))
    noisy = np.array([T.e_transfer(spec, n, N_B, 1.0, sigma_sq) for n in grid])
    clean = np.array([T.e_transfer(spec, n, N_B, 1.0, 0.0) for n in grid])
    rises = (np.diff(noisy) > 0) & (np.diff(clean) < 0)
    where = grid[:-1][rises]
    span = f"N_A in [{where.min():.0f}, {where.max():.0f}]" if len(where) else "none"
    return CheckResult("9 noise-induced multiple descent", bool(rises.any()),
                       f"{int(rises.sum())} noise-only rises over {len(grid)} sizes ({span})")


# criterion 10
def check_spectral_pipeline() -> CheckResult:
    parts, ok = [], True
    linear = DotProductKernel(lambda z: np.asarray(z, float).copy(), name="linear")
    spec = decompose(linear, 3, 20, build_quadrature(3, 128))
    resid = float(np.max(np.abs(np.delete(spec.eta, 1))))
    err1 = abs(spec.eta[1] - 1.0 / 3.0)
    ok &= err1 <= 1e-10 and resid <= 1e-10
    parts.append(f"linear d=3: |eta_1-1/3|={err1:.2g}, other levels <= {resid:.2g}")

    kernel = relu_ntk(KernelParams(input_dim=10))
    full = decompose(kernel, 10, 100, build_quadrature(10, 1000), zero_constant=False)
    gap = abs(full.trace - kernel.trace) / kernel.trace
    ok &= gap <= 0.05
    parts.append(f"ReLU NTK d=10 trace gap {gap:.2e}")

    worst = 0.0
    for d in (2, 3, 4, 5, 10, 20, 50, 100):
        rule = build_quadrature(d, 200)
        worst = max(worst, abs(rule.weights.sum() - measure_mass(d)) / measure_mass(d))
    ok &= worst <= 1e-10
    parts.append(f"weight sums rel err <= {worst:.2g}")
    return CheckResult("10 spectral pipeline", ok, "; ".join(parts))


FAST_CHECKS: List[Callable[[], CheckResult]] = [
    check_flat_closed_forms, check_average_chain, check_monotone_curves,
    check_block_equivalence, check_forward_asymptote, check_sandwich,
    check_multiple_descent, check_spectral_pipeline,
]
MC_CHECKS: List[Callable[..., CheckResult]] = [check_similarity_sweep, check_self_forgetting]


def run_checks(fast: bool = False, threads: int = 1) -> List[CheckResult]:
    results = [fn() for fn in FAST_CHECKS]
    if not fast:
        results += [fn(threads=threads) for fn in MC_CHECKS]
    return sorted(results, key=lambda r: int(r.name.split()[0]))


# spectrum files

def validate_spectrum_file(path, d: Optional[int] = None) -> List[CheckResult]:
    """Named invariants of a spectrum CSV. ``d`` enables the degeneracy check."""
    results = []

    def add(name, ok, detail=""):
        results.append(CheckResult(name, bool(ok), detail or ("ok" if ok else "violated")))

    try:
        text = Path(path).read_text()
    except OSError as exc:
        add("readable", False, str(exc))
        return results
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    header_ok = bool(rows) and [c.strip() for c in rows[0]] == ["k", "eta", "mult"]
    add("header", header_ok, "expected k,eta,mult")
    if not header_ok:
        return results
    try:
        k = np.array([int(r[0]) for r in rows[1:]])
        eta = np.array([float(r[1]) for r in rows[1:]])
        mult = np.array([float(r[2]) for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        add("parsable", False, str(exc))
        return results
    add("non-empty", len(k) > 0)
    if len(k) == 0:
        return results
    add("finite", np.all(np.isfinite(eta)) and np.all(np.isfinite(mult)))
    add("levels-contiguous", np.array_equal(k, np.arange(len(k))),
        "levels must run 0, 1, 2, ... without gaps")
    floor = -NEGATIVE_CLIP * max(float(np.nanmax(eta)), 0.0)
    add("eta-nonnegative", np.all(eta >= floor),
        f"min eta {np.nanmin(eta):.3g}")
    add("mult-positive-integer", np.all(mult > 0) and np.all(mult == np.round(mult)))
    if d is not None:
        expect = np.array([float(degeneracy(d, int(kk))) for kk in k])
        add("mult-degeneracy", np.array_equal(mult, expect), f"compared with N({d}, k)")
    add("constant-level-zero", eta[0] == 0.0, f"eta_0 = {float(eta[0])!r}")
    return results

