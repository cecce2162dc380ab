import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rsma_isac.channel import radar_scene
from rsma_isac.config import SystemConfig
from rsma_isac.precoders import VectorPrecoders
from rsma_isac.radarpipe import (
    RangeDopplerMap, RangeError, detect_peak, echo_delay, gen_frame, peak_bins, qpsk, range_doppler_map,
    sense_once, synth_echo, truth_bins,
)

CFG = SystemConfig(c=3e8)
N_T = 4


def beam_precoders(K=2, scale=1.0, seed=0):
    """Common, private and radar vectors pointed near broadside."""
    rng = np.random.default_rng(seed)
    cols = scale * (np.ones((N_T, K + 2)) + 0.1 * (rng.standard_normal((N_T, K + 2))
                                                     + 1j * rng.standard_normal((N_T, K + 2))))
    return VectorPrecoders(pc=cols[:, 0], priv=cols[:, 1:K + 1], pr=cols[:, K + 1])


def scene(**kw):
    return dataclasses.replace(radar_scene(CFG), **kw)


class TestFrame:
    def test_identity_quantizer_is_exact(self):
        vp = beam_precoders()
        f = gen_frame(vp, np.eye(N_T), np.random.default_rng(0), 64)
        # Delta = I gives Sigma = 0, so x_q = P s
        np.testing.assert_allclose(f.x_q, f.P @ f.symbols, atol=1e-12)
        np.testing.assert_allclose(f.x, f.x_q, atol=1e-12)

    def test_stream_energy(self):
        f = gen_frame(beam_precoders(), 0.88 * np.eye(N_T), np.random.default_rng(1), 1024)
        energy = np.mean(np.abs(f.symbols) ** 2, axis=1)
        assert np.all(np.abs(energy - 1) <= 0.05)

    def test_deterministic(self):
        a = gen_frame(beam_precoders(), 0.88 * np.eye(N_T), np.random.default_rng(5), 128, radar_seed=9)
        b = gen_frame(beam_precoders(), 0.88 * np.eye(N_T), np.random.default_rng(5), 128, radar_seed=9)
        np.testing.assert_array_equal(a.x_q, b.x_q)

    def test_radar_stream_fixed_by_seed(self):
        a = gen_frame(beam_precoders(), np.eye(N_T), np.random.default_rng(1), 64, radar_seed=3)
        b = gen_frame(beam_precoders(), np.eye(N_T), np.random.default_rng(2), 64, radar_seed=3)
        np.testing.assert_array_equal(a.radar_symbols, b.radar_symbols)
        assert not np.array_equal(a.symbols[0], b.symbols[0])

    def test_quantization_noise_covariance(self):
        d = 0.8825
        vp = beam_precoders()
        P = np.hstack([vp.pc[:, None], vp.priv, vp.pr[:, None]])
        f = gen_frame(vp, d * np.eye(N_T), np.random.default_rng(4), 200_000)
        noise = f.x_q - d * f.x
        emp = noise @ noise.conj().T / f.length
        target = d * (1 - d) * (P @ P.conj().T)
        assert np.linalg.norm(emp - target) <= 0.02 * np.linalg.norm(target)

    def test_qpsk_unit_modulus(self):
        s = qpsk(np.random.default_rng(0), 100)
        np.testing.assert_allclose(np.abs(s), 1.0)

    def test_bad_length(self):
        with pytest.raises(ValueError):
            gen_frame(beam_precoders(), np.eye(N_T), np.random.default_rng(0), 0)


class TestEcho:
    def test_delay_at_default_range(self):
        assert echo_delay(2000.0, 1 / 25e6, c=3e8) == 333

    def test_zero_alpha_is_noise(self):
        f = gen_frame(beam_precoders(), np.eye(N_T), np.random.default_rng(0), 1024)
        sc = scene(alpha=0j, sigma_r2=2.0)
        z = synth_echo(f, sc, np.random.default_rng(1), c=3e8)
        assert np.mean(np.abs(z) ** 2) == pytest.approx(2.0, rel=0.05)

    def test_static_target_has_no_phase_ramp(self):
        f = gen_frame(beam_precoders(), np.eye(N_T), np.random.default_rng(0), 1024)
        sc = scene(f_d=0.0, sigma_r2=1e-300)
        z = synth_echo(f, sc, np.random.default_rng(1), c=3e8)
        n_d = echo_delay(sc.r, sc.T, 3e8)
        from rsma_isac.channel import steering

        a = steering(N_T, 0.5, sc.theta)
        b = steering(4, 0.5, sc.theta)
        expected = sc.alpha * np.outer(b, a @ f.x_q[:, :f.length - n_d])
        np.testing.assert_allclose(z[:, n_d:], expected, rtol=1e-9, atol=1e-30)
        assert np.all(np.abs(z[:, :n_d]) < 1e-140)

    def test_out_of_range(self):
        f = gen_frame(beam_precoders(), np.eye(N_T), np.random.default_rng(0), 128)
        with pytest.raises(RangeError, match="unambiguous range"):
            synth_echo(f, scene(), np.random.default_rng(1), c=3e8)


def noiseless_map(seed=0, **kw):
    sc = scene(sigma_r2=1e-300, **kw)
    f = gen_frame(beam_precoders(), np.eye(N_T), np.random.default_rng(seed), sc.L, radar_seed=seed)
    z = synth_echo(f, sc, np.random.default_rng(seed + 1), c=3e8)
    return range_doppler_map(z, f.x_q, sc.theta, sc.T, CFG.f_c, c=3e8), sc


class TestMap:
    def test_noiseless_peak_exact(self):
        rd, sc = noiseless_map()
        assert peak_bins(rd) == truth_bins(rd, sc, 3e8)

    def test_axes_and_magnitudes(self):
        rd, _ = noiseless_map()
        assert np.all(rd.magnitude >= 0)
        assert np.all(np.diff(rd.range_axis) > 0)
        assert np.all(np.diff(rd.velocity_axis) > 0)
        assert rd.magnitude.shape == (CFG.n_symbols, 64)

    def test_zero_echo_is_flat(self):
        f = gen_frame(beam_precoders(), np.eye(N_T), np.random.default_rng(0), 1024)
        rd = range_doppler_map(np.zeros((4, 1024), complex), f.x_q, 0.0, 4e-8, 20e9)
        assert detect_peak(rd)[2] <= rd.noise_floor()

    def test_global_phase_invariance(self):
        sc = scene()
        f = gen_frame(beam_precoders(), np.eye(N_T), np.random.default_rng(2), sc.L)
        z = synth_echo(f, sc, np.random.default_rng(3), c=3e8)
        a = range_doppler_map(z, f.x_q, sc.theta, sc.T, CFG.f_c, c=3e8)
        b = range_doppler_map(z * np.exp(1j * 1.234), f.x_q, sc.theta, sc.T, CFG.f_c, c=3e8)
        np.testing.assert_allclose(a.magnitude, b.magnitude, rtol=1e-10, atol=1e-30)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            range_doppler_map(np.zeros((4, 64)), np.zeros((4, 128)), 0.0, 4e-8, 20e9)

    def test_radar_only_reference(self):
        sc = scene(sigma_r2=1e-300)
        rd, hit, truth = sense_once(beam_precoders(), np.eye(N_T), sc, seed=0, c=3e8, radar_only=True)
        assert hit

    def test_export(self, tmp_path):
        rd, _ = noiseless_map()
        rd.to_csv(tmp_path / "m.csv")
        rows = np.loadtxt(tmp_path / "m.csv", delimiter=",", skiprows=1)
        assert rows.shape == (rd.magnitude.shape[0], rd.magnitude.shape[1] + 1)
        np.testing.assert_allclose(rows[:, 0], rd.range_axis)
        rec = json.loads(rd.peak_json(tmp_path / "p.json"))
        assert rec["range_m"] == pytest.approx(detect_peak(rd)[0])


def make_map(mag):
    mag = np.asarray(mag, float)
    return RangeDopplerMap(magnitude=mag, range_axis=np.arange(mag.shape[0]) * 6.0,
                           velocity_axis=np.linspace(-1, 1, mag.shape[1]), doppler_axis=np.arange(mag.shape[1]))


class TestPeak:
    @given(st.integers(0, 9), st.integers(0, 7), st.floats(0.1, 1e3))
    def test_single_cell(self, i, j, v):
        mag = np.zeros((10, 8))
        mag[i, j] = v
        r, vel, val = detect_peak(make_map(mag))
        assert (r, val) == (6.0 * i, v)
        assert vel == pytest.approx(np.linspace(-1, 1, 8)[j])

    def test_tie_goes_to_lower_range(self):
        mag = np.zeros((10, 8))
        mag[7, 1] = mag[3, 5] = 2.0
        assert detect_peak(make_map(mag))[0] == 18.0

    def test_injected_peak(self):
        rd, sc = noiseless_map()
        mag = np.zeros_like(rd.magnitude)
        tr = truth_bins(rd, sc, 3e8)
        mag[tr] = 1.0
        rd.magnitude = mag
        assert peak_bins(rd) == (333, tr[1])

    def test_empty(self):
        with pytest.raises(ValueError):
            detect_peak(make_map(np.zeros((0, 4))))


def test_hit_rate_and_noise_doubling():
    # 40 dB radar SNR; peak location statistics should not move when noise doubles
    vp = beam_precoders()
    sc = scene()
    delta = 0.8825 * np.eye(N_T)
    base = [sense_once(vp, delta, sc, seed=s, c=3e8)[1] for s in range(30)]
    loud = [sense_once(vp, delta, dataclasses.replace(sc, sigma_r2=2 * sc.sigma_r2), seed=s, c=3e8)[1]
            for s in range(30)]
    assert np.mean(base) >= 0.95
    assert np.mean(loud) >= 0.95
