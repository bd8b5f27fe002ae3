import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from preeq_access.errors import ConfigError, UnsupportedOrder
from preeq_access.sysmodel import (CodeKind, SystemConfig, dump_config, generate_spreading_codes,
                                   load_config, make_constellation, parse_config)


def test_qpsk_points():
    c = make_constellation(4)
    expected = {(1 + 1j) / np.sqrt(2), (-1 + 1j) / np.sqrt(2), (-1 - 1j) / np.sqrt(2), (1 - 1j) / np.sqrt(2)}
    assert len(c.points) == 4
    for p in c.points:
        assert min(abs(p - e) for e in expected) < 1e-12


def test_bpsk_points():
    assert np.allclose(make_constellation(2).points, [1, -1])


@pytest.mark.parametrize("L", [2, 4, 8])
def test_unit_power_and_gray_bijection(L):
    c = make_constellation(L)
    assert abs(np.mean(np.abs(c.points) ** 2) - 1) < 1e-12
    labels = {tuple(b) for b in c.bit_map}
    assert len(labels) == L
    assert c.bits_per_symbol == int(np.log2(L))


def test_gray_neighbours_differ_by_one_bit():
    c = make_constellation(4)
    for i in range(4):
        j = (i + 1) % 4
        assert np.sum(c.bit_map[i] != c.bit_map[j]) == 1


@pytest.mark.parametrize("L", [3, 6, 16])
def test_unsupported_order(L):
    with pytest.raises(UnsupportedOrder):
        make_constellation(L)


def test_unit_modulus_codes(rng):
    S = generate_spreading_codes(rng, CodeKind.UnitModulusRandomPhase, 2, 1).S
    assert S.shape == (2, 1)
    assert np.allclose(np.abs(S), 1, atol=1e-12)


def test_fourier_rows_unit_modulus_distinct(rng):
    S = generate_spreading_codes(rng, CodeKind.FourierRows, 16, 40).S
    assert np.allclose(np.abs(S), 1, atol=1e-12)
    G = np.abs(S.conj().T @ S) / 16
    np.fill_diagonal(G, 0)
    assert G.max() < 1 - 1e-9


def test_gaussian_code_power():
    S = generate_spreading_codes(np.random.default_rng(7), CodeKind.ComplexGaussian, 10000, 1).S
    assert abs(np.mean(np.abs(S) ** 2) - 1) < 0.05


@pytest.mark.parametrize("kind", list(CodeKind))
def test_codes_deterministic(kind):
    a = generate_spreading_codes(np.random.default_rng(5), kind, 8, 20).S
    b = generate_spreading_codes(np.random.default_rng(5), kind, 8, 20).S
    assert np.array_equal(a, b)


def test_config_defaults():
    c = SystemConfig()
    assert (c.N, c.K, c.Ka, c.L, c.h0, c.tx_power_dbm) == (128, 500, 50, 4, 0.2, 7.0)
    d = SystemConfig.desk()
    assert (d.N, d.M, d.K, d.Ka, d.T) == (32, 40, 100, 10, 16)


@pytest.mark.parametrize("bad", [dict(Ka=600), dict(eta=0), dict(eta=129), dict(L=3), dict(h0=0.0),
                                 dict(rho_damp=1.0), dict(N=0), dict(dist_min_km=2.0)])
def test_config_invariants(bad):
    with pytest.raises(ConfigError):
        SystemConfig(**bad)


def test_config_round_trip(tmp_path):
    c = SystemConfig.desk(seed=99, code_kind=CodeKind.FourierRows)
    path = tmp_path / "c.cfg"
    path.write_text(dump_config(c))
    assert load_config(path) == c


def test_parse_config_comments_and_unknown_key():
    c = parse_config("# comment\nN = 16  # trailing\n\nsnr_db = none\n")
    assert c.N == 16 and c.snr_db is None
    with pytest.raises(ConfigError):
        parse_config("bogus = 1\n")
    with pytest.raises(ConfigError):
        parse_config("N = 1.5\n")
    with pytest.raises(ConfigError):
        parse_config("N 16\n")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 64), st.integers(1, 128), st.integers(0, 2**32 - 1))
def test_unit_modulus_property(M, K, seed):
    S = generate_spreading_codes(np.random.default_rng(seed), "UnitModulusRandomPhase", M, K).S
    assert S.shape == (M, K)
    assert np.allclose(np.abs(S), 1, atol=1e-12)
