"""Experiment driver: Monte Carlo trials joined with the matching theory values."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import astuple, dataclass, fields
from typing import Dict, List, Optional

import numpy as np

from . import theory
from .config import Config
from .kernel import DotProductKernel, relu_ntk
from .simulator import (TaskData, fit_block, fit_krr, fit_sequential, iter_sequential,
                        kernel_matvec, mc_stats, model_average, sample_inputs)
from .spectral import Spectrum, build_quadrature, constant_level, decompose


def _linear(z):
    return np.asarray(z, dtype=float).copy()


def build_kernel(cfg: Config) -> DotProductKernel:
    if cfg.kernel_kind == "linear":
        return DotProductKernel(_linear, cfg.kernel, name="linear")
    return relu_ntk(cfg.kernel)


def simulation_kernel(cfg: Config) -> DotProductKernel:
    """Kernel used for both targets and regression in the Monte Carlo runs.

    The theory sets the constant-mode eigenvalue to zero; with
    ``constant_mode = drop`` the simulated kernel does the same by subtracting
    its sphere average.
    """
    kernel = build_kernel(cfg)
    if cfg.experiment.constant_mode == "keep":
        return kernel
    rule = build_quadrature(cfg.kernel.input_dim, cfg.spectrum.r)
    return kernel.shifted(constant_level(kernel, rule))


def build_spectrum(cfg: Config, zero_constant: bool = True) -> Spectrum:
    if cfg.spectrum.file:
        return Spectrum.from_csv(cfg.spectrum.file)
    d = cfg.kernel.input_dim
    rule = build_quadrature(d, cfg.spectrum.r)
    return decompose(build_kernel(cfg), d, cfg.spectrum.k_max, rule, zero_constant=zero_constant)


@dataclass(frozen=True)
class CurveRow:
    protocol: str
    n_task: int
    N_A: int
    N_B: int
    rho: float
    sigma_sq: float
    mc_mean: float
    mc_q25: float
    mc_q75: float
    mc_stderr: float
    theory_value: float


REPORT_FIELDS = tuple(f.name for f in fields(CurveRow))


def rows_to_csv(rows: List[CurveRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_FIELDS)
    for row in rows:
        w.writerow([v if isinstance(v, (str, int)) else repr(float(v)) for v in astuple(row)])
    return buf.getvalue()


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial])


class _TrialWorld:
    """Anchors, test points and the two basis targets shared by one trial."""

    def __init__(self, kernel, cfg: Config, trial: int):
        e = cfg.experiment
        D = cfg.kernel.input_dim
        self.kernel = kernel
        self.rng = trial_rng(e.seed, trial)
        self.anchors = sample_inputs(e.P_prime, D, self.rng)
        self.z = self.rng.standard_normal((e.P_prime, 2)) / math.sqrt(e.P_prime)
        self.X_test = sample_inputs(e.n_test, D, self.rng)
        self.test_basis = self.basis(self.X_test)
        self.D = D

    def basis(self, X):
        # values of the two independent basis targets at X
        return kernel_matvec(self.kernel, X, self.anchors, self.z)

    def draw(self, N):
        X = sample_inputs(N, self.D, self.rng)
        return X, self.basis(X), self.rng.standard_normal(N)


def _mix(rho):
    return np.array([rho, math.sqrt(max(0.0, 1.0 - rho * rho))])


_A = np.array([1.0, 0.0])


def _pair_trial(kernel, cfg: Config, trial: int) -> Dict[tuple, float]:
    e = cfg.experiment
    world = _TrialWorld(kernel, cfg, trial)
    XA_all, bA_all, eA_all = world.draw(max(a for a, _ in e.size_pairs))
    XB_all, bB_all, eB_all = world.draw(max(b for _, b in e.size_pairs))
    out = {}
    for N_A, N_B in e.size_pairs:
        for s2 in e.sigma_sq:
            sd = math.sqrt(s2)
            for rho in e.rho:
                mix = _mix(rho)
                task_a = TaskData(XA_all[:N_A], bA_all[:N_A] @ _A + sd * eA_all[:N_A])
                task_b = TaskData(XB_all[:N_B], bB_all[:N_B] @ mix + sd * eB_all[:N_B])
                truth_a, truth_b = world.test_basis @ _A, world.test_basis @ mix
                key = (N_A, N_B, rho, s2)
                X = world.X_test
                need_single = {"single", "average"} & set(e.protocol)
                if need_single:
                    f_a, f_b = fit_krr(kernel, task_a), fit_krr(kernel, task_b)
                if "single" in e.protocol:
                    out[key + ("single_A", 1)] = mc_stats(truth_a, f_a(X))[0]
                    out[key + ("single_B", 1)] = mc_stats(truth_b, f_b(X))[0]
                if "sequential" in e.protocol:
                    pred = fit_sequential(kernel, [task_a, task_b])(X)
                    out[key + ("sequential", 2)] = mc_stats(truth_b, pred)[0]
                    out[key + ("sequential_back", 2)] = mc_stats(truth_a, pred)[0]
                if "average" in e.protocol:
                    out[key + ("average", 2)] = mc_stats(truth_b, model_average(f_a, f_b)(X))[0]
                if "block" in e.protocol:
                    pred = fit_block(kernel, [task_a, task_b])(X)
                    out[key + ("block", 2)] = mc_stats(truth_b, pred)[0]
                    out[key + ("block_back", 2)] = mc_stats(truth_a, pred)[0]
    return out


def _curve_trial(kernel, cfg: Config, trial: int) -> Dict[tuple, float]:
    e = cfg.experiment
    world = _TrialWorld(kernel, cfg, trial)
    truth = world.test_basis @ _A
    out = {}
    for sizes in e.N_list:
        draws = [world.draw(N) for N in sizes]
        for s2 in e.sigma_sq:
            sd = math.sqrt(s2)
            tasks = [TaskData(X, b @ _A + sd * eps) for X, b, eps in draws]
            key = (sizes[0], 1.0, s2, tuple(sizes))
            if "sequential" in e.protocol:
                for n, pred in enumerate(iter_sequential(kernel, tasks), start=1):
                    out[key + ("sequential", n)] = mc_stats(truth, pred(world.X_test))[0]
            if "block" in e.protocol:
                for n in range(1, len(tasks) + 1):
                    pred = fit_block(kernel, tasks[:n])
                    out[key + ("block", n)] = mc_stats(truth, pred(world.X_test))[0]
    return out


def _pair_theory(spec, label, N_A, N_B, rho, s2):
    if label == "single_A":
        return theory.e_single(spec, N_A, s2)
    if label == "single_B":
        return theory.e_single(spec, N_B, s2)
    if label in ("sequential", "block"):
        return theory.e_transfer(spec, N_A, N_B, rho, s2)
    if label in ("sequential_back", "block_back"):
        return theory.e_backward(spec, N_A, N_B, rho, s2)
    if label == "average":
        return theory.e_average(spec, N_A, N_B, rho) if s2 == 0 else float("nan")
    raise KeyError(label)


def _summarize(values) -> tuple:
    v = np.asarray(values, dtype=float)
    stderr = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    q25, q75 = np.percentile(v, [25, 75])
    return float(v.mean()), float(q25), float(q75), stderr


def run_experiment(cfg: Config, threads: int = 1, spectrum: Optional[Spectrum] = None,
                   kernel: Optional[DotProductKernel] = None) -> List[CurveRow]:
    """Run every trial of ``cfg`` and aggregate one row per (grid point, protocol)."""
    e = cfg.experiment
    kernel = kernel or simulation_kernel(cfg)
    spectrum = spectrum if spectrum is not None else build_spectrum(cfg)
    trial_fn = _curve_trial if e.N_list else _pair_trial
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(lambda t: trial_fn(kernel, cfg, t), range(e.trials)))

    rows = []
    curves = {}
    for key in results[0]:
        mean, q25, q75, se = _summarize([r[key] for r in results])
        if e.N_list:
            first, rho, s2, sizes, label, n = key
            if (sizes, s2) not in curves:
                curves[sizes, s2] = theory.learning_curve(spectrum, sizes, s2).errors
            th = float(curves[sizes, s2][n - 1])
            rows.append(CurveRow(label, n, first, sizes[n - 1], rho, s2, mean, q25, q75, se, th))
        else:
            N_A, N_B, rho, s2, label, n = key
            th = _pair_theory(spectrum, label, N_A, N_B, rho, s2)
            rows.append(CurveRow(label, n, N_A, N_B, rho, s2, mean, q25, q75, se, th))
    return rows
