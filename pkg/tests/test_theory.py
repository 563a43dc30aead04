import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ntk_transfer import theory as T
from ntk_transfer.checks import random_size, random_spectrum
from ntk_transfer.errors import ModeDeficitError
from ntk_transfer.spectral import Spectrum
from oracles import kappa_brentq, per_mode, transfer_matrix

seeds = st.integers(0, 2 ** 32 - 1)


def spectrum_and_size(seed):
    rng = np.random.default_rng(seed)
    spec = random_spectrum(rng)
    return spec, random_size(rng, spec), rng


# self-consistency

def test_flat_kappa(flat):
    sc = T.solve_kappa(flat, 5)
    assert sc.kappa == pytest.approx(5.0, rel=1e-12)
    assert sc.gamma == pytest.approx(0.5, rel=1e-12)
    assert sc.q == pytest.approx([0.5]) and sc.q_tilde == pytest.approx([0.25])
    assert sc.noise_gain == pytest.approx(0.4)


def test_two_level_kappa():
    spec = Spectrum.from_levels([(1.0, 1), (0.1, 9)])
    sc = T.solve_kappa(spec, 5)
    ref = kappa_brentq(spec.eta, spec.mult, 5)
    assert sc.kappa == pytest.approx(ref, rel=1e-11)
    assert sc.kappa == pytest.approx(0.5958, abs=5e-4)
    g = np.dot(spec.mult, 5 * spec.eta ** 2 / (ref + 5 * spec.eta) ** 2)
    assert sc.gamma == pytest.approx(g, rel=1e-10)


def test_kappa_decreasing(flat):
    ks = [T.solve_kappa(flat, n).kappa for n in (1, 2, 5, 8, 9.5)]
    assert np.all(np.diff(ks) < 0)
    assert ks[0] == pytest.approx(9.0)


@settings(max_examples=150, deadline=None)
@given(seeds)
def test_self_consistency_properties(seed):
    spec, N, _ = spectrum_and_size(seed)
    sc = T.solve_kappa(spec, N)
    assert abs(sc.residual()) <= 1e-10
    assert sc.kappa == pytest.approx(kappa_brentq(spec.eta, spec.mult, N), rel=1e-9)
    assert 0 < sc.gamma < 1
    assert np.all((sc.q > 0) & (sc.q <= 1))
    larger = N + 0.5 * (0.99 * spec.n_modes - N)
    if larger > N:
        assert T.solve_kappa(spec, larger).kappa < sc.kappa


def test_zero_levels_have_unit_q():
    spec = Spectrum.from_levels([(0.0, 1), (1.0, 3), (0.2, 5)])
    sc = T.solve_kappa(spec, 2)
    assert sc.q[0] == 1.0 and np.all(sc.q[1:] < 1)


def test_mode_deficit(flat):
    with pytest.raises(ModeDeficitError, match="modes"):
        T.solve_kappa(flat, 10)
    with pytest.raises(ModeDeficitError):
        T.e_transfer(flat, 5, 12)
    with pytest.raises(ValueError):
        T.solve_kappa(flat, 0)


# single task and the transfer cost

def test_single_task_values(flat):
    assert T.e_single(flat, 5) == pytest.approx(5.0, rel=1e-12)
    assert T.e_single(flat, 5, sigma_sq=1.0) == pytest.approx(6.0, rel=1e-12)
    assert T.e_single(flat, 5, wbar_sq=[0.0]) == 0.0


def test_transfer_cost_examples(flat):
    sc = T.solve_kappa(flat, 5)
    one, zero = np.ones(1), np.zeros(1)
    assert T.transfer_cost(sc, one, zero, one) == pytest.approx(5.0, rel=1e-12)
    assert T.transfer_cost(sc, one, zero, zero) == 0.0
    with pytest.raises(ValueError):
        T.transfer_cost(sc, np.ones(2), zero, one)


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(0.0, 1.0))
def test_transfer_cost_reduces_to_single(seed, s2):
    spec, N, rng = spectrum_and_size(seed)
    w = rng.standard_normal(len(spec.eta)) * np.sqrt(spec.eta)
    sc = T.solve_kappa(spec, N)
    got = T.transfer_cost(sc, w, w, spec.eta, s2)
    assert got == pytest.approx(T.e_single(spec, N, s2, wbar_sq=w * w), rel=1e-10)


# two tasks

def test_flat_two_task_values(flat):
    assert T.e_transfer(flat, 5, 5, 1.0) == pytest.approx(2.5, rel=1e-12)
    assert T.e_transfer(flat, 5, 5, 0.0) == pytest.approx(7.5, rel=1e-12)
    assert T.e_backward(flat, 5, 5, 0.0) == pytest.approx(12.5, rel=1e-12)
    assert T.e_average(flat, 5, 5, 1.0) == pytest.approx(3.75, rel=1e-12)
    assert T.critical_similarity(flat, 5) == pytest.approx(math.sqrt(0.5) / (1 + math.sqrt(0.5)))


def test_transfer_vanishes_for_huge_first_task(relu10):
    e = [T.e_transfer(relu10, n, 100, 1.0) for n in (1e3, 1e5, 1e7)]
    assert e[0] > e[1] > e[2] and e[2] < 1e-3 * T.e_single(relu10, 100)


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(0.0, 1e-2))
def test_affine_in_rho_and_backward_identity(seed, s2):
    spec, N_A, rng = spectrum_and_size(seed)
    N_B = random_size(rng, spec)
    for fn in (T.e_transfer, T.e_backward, lambda *a: T.e_average(*a[:4])):
        v0, v5, v1 = (fn(spec, N_A, N_B, r, s2) for r in (0.0, 0.5, 1.0))
        assert v5 == pytest.approx(0.5 * (v0 + v1), rel=1e-10)
    fwd = T.e_transfer(spec, N_A, N_B, 1.0, s2)
    assert T.e_backward(spec, N_A, N_B, 1.0, s2) == fwd
    # the general backward expression agrees with the forward one at rho = 1
    e = spec.eta
    assert T._backward_general(spec, N_A, N_B, e, e, e, s2) == pytest.approx(fwd, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(-1.0, 1.0), st.floats(0.0, 1e-2))
def test_transfer_cost_route_matches_closed_form(seed, rho, s2):
    spec, N_A, rng = spectrum_and_size(seed)
    N_B = random_size(rng, spec)
    moments = (spec.eta, spec.eta, rho * spec.eta)
    closed = T.e_transfer(spec, N_A, N_B, rho, s2)
    general = T.e_transfer(spec, N_A, N_B, sigma_sq=s2, moments=moments)
    assert general == pytest.approx(closed, rel=1e-10, abs=1e-15)


def test_explicit_targets_agree_with_moments(relu10):
    rng = np.random.default_rng(0)
    a = rng.standard_normal(len(relu10.eta)) * np.sqrt(relu10.eta)
    b = rng.standard_normal(len(relu10.eta)) * np.sqrt(relu10.eta)
    ens = T.TargetEnsemble(wbar_a=a, wbar_b=b)
    mom = ens.moments(relu10)
    assert np.allclose(mom[2], a * b)
    got = T.e_backward(relu10, 100, 200, moments=mom)
    assert got > 0
    assert T.e_average(relu10, 50, 50, moments=(0 * a, 0 * a, 0 * a)) == 0.0
    default = T.TargetEnsemble(rho=0.3).moments(relu10)
    assert np.allclose(default[2], 0.3 * relu10.eta)


def test_average_equal_sizes(relu10):
    sc = T.solve_kappa(relu10, 100)
    e_b = T.e_single(relu10, 100)
    assert T.e_average(relu10, 100, 100, 1.0) == pytest.approx((1 - sc.gamma / 2) * e_b, rel=1e-12)
    with pytest.raises(ValueError):
        T.e_average(relu10, 100, 100, 1.0, sigma_sq=0.1)


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_jensen_bound_and_negative_transfer_region(seed):
    spec, N_A, rng = spectrum_and_size(seed)
    N_B = random_size(rng, spec)
    sa = T.solve_kappa(spec, N_A)
    e_b = T.e_single(spec, N_B)
    assert T.e_transfer(spec, N_A, N_B, 1.0) / e_b <= 1 / (1 - sa.gamma) * (1 + 1e-12)
    rho_star = T.critical_similarity(spec, N_A)
    assert 0 < rho_star < 0.5
    assert T.e_transfer(spec, N_A, N_B, 0.999 * rho_star) > e_b


def test_asymptotic_ratios(flat):
    r = T.asymptotic_ratios(flat, 5, 5, 0.75)
    assert r == pytest.approx({"forward_ratio": 0.5, "self_negative_ratio": 2.0,
                               "self_forgetting_ratio": 2.0})


# many tasks

def test_flat_learning_curve(flat):
    curve = T.learning_curve(flat, [5, 5, 5])
    assert curve.errors == pytest.approx([5.0, 2.5, 1.25], rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(seeds, st.floats(0.0, 1e-2))
def test_learning_curve_reductions(seed, s2):
    spec, N_A, rng = spectrum_and_size(seed)
    N_B = random_size(rng, spec)
    c1 = T.learning_curve(spec, [N_A], s2)
    assert c1.errors[0] == pytest.approx(T.e_single(spec, N_A, s2), rel=1e-12)
    c2 = T.learning_curve(spec, [N_A, N_B], s2)
    assert c2.errors[1] == pytest.approx(T.e_transfer(spec, N_A, N_B, 1.0, s2), rel=1e-12)


def small_integer_spectrum(rng):
    n = int(rng.integers(2, 6))
    eta = 10.0 ** rng.uniform(-3, 0, n)
    mult = rng.integers(1, 8, n).astype(float)
    return Spectrum(eta, mult)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_equal_size_curve_matches_dense_matrix_powers(seed):
    rng = np.random.default_rng(seed)
    spec = small_integer_spectrum(rng)
    N = float(rng.uniform(0.5, 0.9 * spec.n_modes))
    sc = T.solve_kappa(spec, N)
    eta = per_mode(spec.eta, spec.mult)
    Q = transfer_matrix(eta, N, sc.kappa, sc.gamma)
    qt = eta * (sc.kappa / (sc.kappa + N * eta)) ** 2
    errs = T.learning_curve(spec, [N] * 6).errors
    for n in range(1, 6):
        dense = qt @ np.linalg.matrix_power(Q, n - 1) @ qt / (1 - sc.gamma) ** 2
        assert errs[n] == pytest.approx(dense, rel=1e-10)
    radius = np.max(np.abs(np.linalg.eigvals(Q)))
    assert T.q_spectral_radius(spec, N) == pytest.approx(radius, rel=1e-9)
    assert T.q_spectral_radius(spec, N) <= T.q_norm_bound(spec, N) * (1 + 1e-12) <= 1 + 1e-12


@settings(max_examples=100, deadline=None)
@given(seeds)
def test_monotone_decrease_without_noise(seed):
    spec, N, _ = spectrum_and_size(seed)
    errs = T.learning_curve(spec, [N] * 10).errors
    assert np.all(np.diff(errs) < 0)


def test_noise_term_converges(relu10):
    # the noise coefficient grows by ever smaller, summable steps
    curve = T.learning_curve(relu10, [100] * 1000, sigma_sq=1e-3)
    steps = np.diff(curve.noise)
    assert np.all(curve.noise > 0) and np.all(steps > 0)
    assert np.all(np.diff(steps) <= 0)
    assert steps[-1] < 1e-3 * steps[0]
    assert curve.noise[-1] < 1.0


def test_unequal_sizes_forgetting(relu10):
    errs = T.learning_curve(relu10, [4000] + [100] * 5).errors
    assert errs[1] > errs[0]


def test_forgetting_onset(relu20):
    # with N_B=100 on the D=20 ReLU NTK the self-transfer ratio crosses 1
    # between N_A=2500 and N_A=3000 and approaches 1/(1 - gamma_B) from below
    ratio = {N: T.e_transfer(relu20, N, 100, 1.0) / T.e_single(relu20, N)
             for N in (2000, 2500, 3000, 8000, 100_000)}
    assert ratio[2000] < ratio[2500] < 1 < ratio[3000] < ratio[8000] < ratio[100_000]
    upper = 1 / (1 - T.solve_kappa(relu20, 100).gamma)
    assert ratio[100_000] <= upper


def test_curve_csv():
    pts = [T.CurvePoint("E1", 5, 5, 1, 1.0, 0.0, 5.0),
           T.CurvePoint("E_AB", 5, 7, 2, 0.5, 0.1, 1 / 3)]
    text = T.curve_points_csv(pts)
    lines = text.splitlines()
    assert lines[0] == "label,N_A,N_B,n,rho,sigma_sq,value"
    assert lines[2].endswith(repr(1 / 3))
