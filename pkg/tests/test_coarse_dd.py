import io

import numpy as np
import pytest

from preeq_access.coarse_dd import (amp_factor_update, amp_variable_update, coarse_detect, em_update, init_state,
                                    posterior_step)
from preeq_access.errors import NumericalDivergence
from preeq_access.oracles import exhaustive_posterior_means
from preeq_access.sysmodel import generate_spreading_codes, make_constellation
from conftest import cn

QPSK = make_constellation(4)


def _state(M=6, K=4, T=3, rng=None):
    rng = rng or np.random.default_rng(0)
    Y = cn(rng, M, T)
    S = generate_spreading_codes(rng, "UnitModulusRandomPhase", M, K).S
    return init_state(Y, K, 4, 0.2), Y, S


def test_factor_update_zero_variance():
    st, Y, S = _state()
    st.v[:] = 0
    st.xhat = cn(np.random.default_rng(1), 4, 3)
    st.Z = Y.copy()
    V, Z = amp_factor_update(st, Y, S)
    assert np.all(V == 0) and np.allclose(Z, S @ st.xhat)


def test_factor_update_constant_variance():
    st, Y, S = _state()
    st.v[:] = 0.7
    V, _ = amp_factor_update(st, Y, S)
    assert np.allclose(V, 4 * 0.7)


def test_first_iteration_has_no_onsager_term():
    st, Y, S = _state()
    st.xhat = cn(np.random.default_rng(2), 4, 3)
    V, Z = amp_factor_update(st, Y, S)
    assert np.allclose(Z, S @ st.xhat)


def test_variable_update_examples():
    st, Y, S = _state()
    st.V[:] = 0
    st.sigma2_t[:] = 1
    st.Z = Y.copy()
    C, D = amp_variable_update(st, Y, S)
    assert np.allclose(D, 1 / 6) and np.allclose(C, st.xhat)

    st = init_state(np.array([[2.0 + 1j]]), 1, 4, 0.5)
    st.V[:] = 0
    st.sigma2_t[:] = 0.3
    st.Z = np.array([[0.5 + 0j]])
    st.xhat = np.array([[0.1 + 0j]])
    C, D = amp_variable_update(st, np.array([[2.0 + 1j]]), np.ones((1, 1)))
    assert np.allclose(D, 0.3) and np.allclose(C, 0.1 + (2.0 + 1j - 0.5))


def test_posterior_gamma_zero():
    pi, xi, xhat, v = posterior_step(np.array([[0.3 + 0.2j]]), np.array([[0.5]]), np.array([[0.0]]), QPSK)
    assert pi[0, 0] == 0 and xhat[0, 0] == 0 and v[0, 0] == 0


def test_posterior_concentrated():
    a2 = QPSK.points[1]
    pi, xi, xhat, v = posterior_step(np.array([[a2]]), np.array([[1e-6]]), np.array([[1.0]]), QPSK)
    assert abs(xhat[0, 0] - a2) < 1e-9 and v[0, 0] < 1e-9


def test_posterior_symmetric():
    pi, xi, xhat, v = posterior_step(np.array([[0j]]), np.array([[0.7]]), np.array([[0.5]]), QPSK)
    assert np.allclose(xi, 0.25) and abs(xhat[0, 0]) < 1e-12
    # at C = 0 every symbol is equally far, so the slab likelihood is exp(-1/D)
    assert np.isclose(pi[0, 0], np.exp(-1 / 0.7) / (1 + np.exp(-1 / 0.7)))


def test_posterior_large_inputs_stay_finite():
    C = np.array([[1e3 + 1e3j, -50.0]])
    D = np.array([[1e-12, 1e-12]])
    pi, xi, xhat, v = posterior_step(C, D, np.array([[0.1, 0.1]]), QPSK)
    assert np.all(np.isfinite(xhat)) and np.all((pi >= 0) & (pi <= 1))


def test_posterior_matches_enumeration():
    rng = np.random.default_rng(4)
    C = cn(rng, 5, 3)
    D = rng.uniform(0.1, 1, (5, 3))
    pi, xi, xhat, v = posterior_step(C, D, np.full((5, 3), 0.3), QPSK)
    alphabet = np.concatenate([[0], QPSK.points])
    prior = np.concatenate([[0.7], np.full(4, 0.3 / 4)])
    w = prior * np.exp(-np.abs(C[..., None] - alphabet) ** 2 / D[..., None])
    w /= w.sum(axis=-1, keepdims=True)
    assert np.allclose(xhat, w @ alphabet)
    assert np.allclose(pi, 1 - w[..., 0])


def test_em_update_examples():
    st, Y, S = _state()
    st.pi = np.tile(np.array([[0.2], [0.9], [0.5], [0.0]]), (1, 3))
    gamma, _ = em_update(st, Y)
    assert np.allclose(gamma[:3], st.pi[:3])
    st.Z = Y.copy()
    st.V[:] = 0
    _, s2 = em_update(st, Y)
    assert np.all(s2 <= 1e-14)


def test_single_user_noiseless():
    rng = np.random.default_rng(5)
    S = generate_spreading_codes(rng, "UnitModulusRandomPhase", 32, 1).S
    x = QPSK.points[0]
    res = coarse_detect(S * x, S, QPSK, sparsity_init=0.5)
    assert abs(res.Xhat[0, 0] - x) < 1e-6 and abs(res.pi[0, 0] - 1) < 1e-6
    assert res.active_set_hat.tolist() == [0]


def test_no_active_users():
    rng = np.random.default_rng(6)
    empty = 0
    for _ in range(100):
        S = generate_spreading_codes(rng, "ComplexGaussian", 32, 16).S
        Y = np.sqrt(0.01) * cn(rng, 32, 4)
        empty += coarse_detect(Y, S, QPSK).Ka_hat == 0
    assert empty >= 95


def test_em_noise_learning_synthetic():
    rng = np.random.default_rng(7)
    M, K, Ka, T, s2 = 64, 100, 10, 16, 0.1
    hits = 0
    for _ in range(100):
        S = generate_spreading_codes(rng, "ComplexGaussian", M, K).S
        X = np.zeros((K, T), complex)
        X[rng.choice(K, Ka, replace=False)] = QPSK.points[rng.integers(0, 4, (Ka, T))]
        Y = S @ X + np.sqrt(s2) * cn(rng, M, T)
        res = coarse_detect(Y, S, QPSK, sparsity_init=Ka / K)
        hits += 0.5 <= np.mean(res.sigma2_t) / s2 <= 2
    assert hits >= 80


def test_against_exhaustive_oracle():
    rng = np.random.default_rng(8)
    devs = []
    for _ in range(20):
        S = generate_spreading_codes(rng, "ComplexGaussian", 8, 4).S
        X = np.zeros((4, 2), complex)
        X[rng.choice(4, 2, replace=False)] = QPSK.points[rng.integers(0, 4, (2, 2))]
        Y = S @ X + np.sqrt(10 ** -1.5) * cn(rng, 8, 2)
        res = coarse_detect(Y, S, QPSK, sparsity_init=0.5)
        devs.append(np.mean(np.abs(res.Xhat - exhaustive_posterior_means(Y, S, QPSK.points, 0.5, 10 ** -1.5)) ** 2))
    assert np.mean(devs) < 1e-2


def test_invariants_and_phase_equivariance():
    rng = np.random.default_rng(9)
    S = generate_spreading_codes(rng, "ComplexGaussian", 40, 60).S
    X = np.zeros((60, 6), complex)
    X[rng.choice(60, 5, replace=False)] = QPSK.points[rng.integers(0, 4, (5, 6))]
    Y = S @ X + 0.3 * cn(rng, 40, 6)
    res = coarse_detect(Y, S, QPSK)
    assert np.all((res.pi >= 0) & (res.pi <= 1)) and np.all(res.sigma2_t > 0)
    assert np.all(np.abs(res.Xhat) <= 1 + 1e-9)
    assert np.all(np.diff(res.active_set_hat) > 0)
    rot = np.exp(1j * 0.77)
    assert np.array_equal(coarse_detect(Y * rot, S * rot, QPSK).active_set_hat, res.active_set_hat)


def test_trace_rows():
    rng = np.random.default_rng(10)
    S = generate_spreading_codes(rng, "ComplexGaussian", 16, 8).S
    buf = io.StringIO()
    res = coarse_detect(cn(rng, 16, 2), S, QPSK, N_coarse=7, trace=buf)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0].startswith("iteration") and len(lines) == res.iterations + 1


def test_divergence_reported():
    S = np.ones((4, 2))
    Y = np.full((4, 1), np.nan + 0j)
    with pytest.raises(NumericalDivergence) as err, np.errstate(invalid="ignore"):
        coarse_detect(Y, S, QPSK)
    assert err.value.iteration == 1
