import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsma_isac.config import ConfigError, SystemConfig
from rsma_isac.quantization import (
    DEFAULT_LOSS_TABLE, QuantModel, apply_aqnm, load_loss_table, quant_gain, quant_noise_cov, tx_covariance,
)


def rand_psd(rng, n, rank=None):
    rank = n if rank is None else rank
    a = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return a @ a.conj().T


class TestGain:
    @pytest.mark.parametrize("b,expected", [(6, 0.99933577), (8, 0.99995849)])
    def test_formula_branch(self, b, expected):
        assert quant_gain(b) == pytest.approx(expected, abs=5e-9)
        assert quant_gain(b) == pytest.approx(1 - math.pi * math.sqrt(3) / 2 * 4.0**-b, rel=1e-15)

    def test_high_resolution_limit(self):
        assert quant_gain(30) > 1 - 1e-15

    def test_table_branch(self):
        assert DEFAULT_LOSS_TABLE == {1: 0.3634, 2: 0.1175, 3: 0.03454, 4: 0.009497, 5: 0.002499}
        assert quant_gain(2) == pytest.approx(0.8825)

    def test_monotone(self):
        g = [quant_gain(b) for b in range(1, 20)]
        assert all(b > a for a, b in zip(g, g[1:]))
        assert all(0 < x < 1 for x in g)

    def test_bad_bits(self):
        with pytest.raises(ConfigError):
            quant_gain(0)

    def test_custom_table(self, tmp_path):
        p = tmp_path / "loss.txt"
        p.write_text("# b loss\n1 0.4\n2 0.2\n")
        assert load_loss_table(p) == {1: 0.4, 2: 0.2}
        p.write_text("1 0.1\n2 0.2\n")
        with pytest.raises(ConfigError):
            load_loss_table(p)
        p.write_text("1\n")
        with pytest.raises(ConfigError, match="line 1"):
            load_loss_table(p)


class TestNoiseCov:
    def test_infinite_resolution(self):
        r = rand_psd(np.random.default_rng(0), 4)
        assert np.abs(quant_noise_cov(np.eye(4), r)).max() < 1e-12

    def test_scalar_delta(self):
        d = 0.8825
        np.testing.assert_allclose(quant_noise_cov(d * np.eye(3), np.eye(3)), d * (1 - d) * np.eye(3))

    @given(st.integers(0, 10_000))
    def test_linear(self, seed):
        rng = np.random.default_rng(seed)
        D = np.diag(rng.uniform(0.5, 0.99, 4))
        a, b = rand_psd(rng, 4), rand_psd(rng, 4)
        np.testing.assert_allclose(quant_noise_cov(D, a + b), quant_noise_cov(D, a) + quant_noise_cov(D, b),
                                   atol=1e-10)

    def test_hermitian(self):
        rng = np.random.default_rng(1)
        S = quant_noise_cov(np.diag([0.6, 0.7, 0.8, 0.9]), rand_psd(rng, 4))
        np.testing.assert_allclose(S, S.conj().T)

    def test_zero_input(self):
        assert np.abs(quant_noise_cov(0.88 * np.eye(4), np.zeros((4, 4)))).max() == 0

    def test_rejects_non_psd(self):
        with pytest.raises(ValueError):
            quant_noise_cov(0.9 * np.eye(2), np.diag([1.0, -1.0]))

    def test_diag_mode(self):
        rng = np.random.default_rng(2)
        r = rand_psd(rng, 3)
        S = quant_noise_cov(0.9 * np.eye(3), r, diag=True)
        np.testing.assert_allclose(S, 0.09 * np.diag(np.diag(r)), atol=1e-12)


class TestTxCovariance:
    def test_identity(self):
        np.testing.assert_allclose(tx_covariance(np.eye(3), np.eye(3)), np.eye(3))

    @settings(max_examples=50)
    @given(st.integers(0, 10_000), st.integers(1, 6))
    def test_psd_and_trace(self, seed, n_streams):
        rng = np.random.default_rng(seed)
        D = np.diag(rng.uniform(0.5, 1.0, 4))
        P = rng.standard_normal((4, n_streams)) + 1j * rng.standard_normal((4, n_streams))
        R = tx_covariance(D, P)
        assert np.linalg.eigvalsh(R).min() >= -1e-12 * max(1.0, np.abs(R).max())
        assert np.trace(R).real == pytest.approx(np.linalg.norm(D @ P) ** 2, rel=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            tx_covariance(np.eye(4), np.ones((3, 2)))


class TestApplyAqnm:
    def test_zero_noise(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 8)) + 0j
        D = 0.9 * np.eye(4)
        np.testing.assert_allclose(apply_aqnm(x, D, np.zeros((4, 4)), rng), D @ x)

    def test_sample_covariance(self):
        rng = np.random.default_rng(5)
        S = quant_noise_cov(0.88 * np.eye(4), rand_psd(rng, 4, rank=2))
        n = 100_000
        eps = apply_aqnm(np.zeros((4, n), complex), 0.88 * np.eye(4), S, np.random.default_rng(9))
        emp = eps @ eps.conj().T / n
        assert np.linalg.norm(emp - S) / np.linalg.norm(S) < 0.02

    def test_deterministic(self):
        S = 0.1 * np.eye(2)
        a = apply_aqnm(np.ones(2, complex), np.eye(2), S, np.random.default_rng(4))
        b = apply_aqnm(np.ones(2, complex), np.eye(2), S, np.random.default_rng(4))
        assert np.array_equal(a, b)

    def test_not_factorizable(self):
        with pytest.raises(ValueError):
            apply_aqnm(np.ones(2, complex), np.eye(2), np.diag([1.0, -1.0]), np.random.default_rng(0))


def test_model_from_config():
    m = QuantModel.from_config(SystemConfig(bits=3))
    np.testing.assert_allclose(m.delta, (1 - 0.03454) * np.eye(4))
    m = QuantModel.from_config(SystemConfig(chain_bits=(1, 2, 6, 8)))
    assert list(m.deltas) == [quant_gain(b) for b in (1, 2, 6, 8)]
    with pytest.raises(ConfigError):
        QuantModel(bits=(0, 2))
