"""Pulse-Doppler check of a precoder design: frames, echoes, range-Doppler maps."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import RadarScene, steering
from .precoders import VectorPrecoders
from .quantization import apply_aqnm, quant_noise_cov


class RangeError(ValueError):
    """Target delay does not fit inside the frame."""


def qpsk(rng: np.random.Generator, shape) -> np.ndarray:
    bits = rng.integers(0, 2, size=(2,) + tuple(np.atleast_1d(shape)))
    return ((2 * bits[0] - 1) + 1j * (2 * bits[1] - 1)) / math.sqrt(2)


@dataclass
class Frame:
    symbols: np.ndarray  # (K + 2, L): common, private 1..K, radar
    x: np.ndarray  # (Nt, L) before quantization
    x_q: np.ndarray  # (Nt, L) after AQNM
    P: np.ndarray  # (Nt, K + 2)

    @property
    def radar_symbols(self) -> np.ndarray:
        return self.symbols[-1]

    @property
    def length(self) -> int:
        return self.x_q.shape[1]


def _full_matrix(precoders: VectorPrecoders) -> np.ndarray:
    pr = precoders.pr if precoders.pr is not None else np.zeros(precoders.n_t, complex)
    return np.hstack([precoders.pc[:, None], precoders.priv, pr[:, None]])


def gen_frame(precoders: VectorPrecoders, delta: np.ndarray, rng: np.random.Generator, L: int,
              radar_seed: int | None = None, diag: bool = False) -> Frame:
    """x = P s with unit-energy QPSK streams, then x_q = Delta x + quantization noise.

    The radar stream comes from its own generator (``radar_seed``) so that it
    is a fixed, known sequence; otherwise it is drawn from ``rng``.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    P = _full_matrix(precoders)
    n_streams = P.shape[1]
    s = qpsk(rng, (n_streams, L))
    if radar_seed is not None:
        s[-1] = qpsk(np.random.default_rng(radar_seed), L)
    x = P @ s
    D = np.asarray(delta)
    sigma = quant_noise_cov(D, P @ P.conj().T, diag=diag, check=False)
    x_q = apply_aqnm(x, D, sigma, rng) if np.any(sigma) else D @ x
    return Frame(symbols=s, x=x, x_q=x_q, P=P)


def echo_delay(r: float, T: float, c: float = 2.998e8) -> int:
    return int(round(2 * r / (c * T)))


def synth_echo(frame: Frame, scene: RadarScene, rng: np.random.Generator, n_r: int = 4,
               omega: float = 0.5, c: float = 2.998e8) -> np.ndarray:
    """z[l] = alpha e^{j 2 pi f_d l T} b a^T x_q[l - n_d] + n[l], shape (n_r, L)."""
    L = frame.length
    n_d = echo_delay(scene.r, scene.T, c)
    if n_d >= L:
        raise RangeError(f"target beyond unambiguous range (delay {n_d} >= frame length {L})")
    n_t = frame.x_q.shape[0]
    A = np.outer(steering(n_r, omega, scene.theta), steering(n_t, omega, scene.theta))
    delayed = np.zeros_like(frame.x_q)
    delayed[:, n_d:] = frame.x_q[:, :L - n_d]
    ell = np.arange(L)
    z = scene.alpha * np.exp(1j * 2 * np.pi * scene.f_d * ell * scene.T) * (A @ delayed)
    noise = (rng.standard_normal(z.shape) + 1j * rng.standard_normal(z.shape)) * math.sqrt(scene.sigma_r2 / 2)
    return z + noise


@dataclass
class RangeDopplerMap:
    magnitude: np.ndarray  # (range bins, Doppler bins)
    range_axis: np.ndarray  # m
    velocity_axis: np.ndarray  # m/s
    doppler_axis: np.ndarray  # Hz

    def peak(self):
        return detect_peak(self)

    def noise_floor(self) -> float:
        return float(np.median(self.magnitude))

    def to_csv(self, path: str | Path) -> None:
        """One row per range bin: range_m followed by one column per velocity bin."""
        header = "range_m," + ",".join(f"v_{v:.6g}" for v in self.velocity_axis)
        rows = np.column_stack([self.range_axis, self.magnitude])
        np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt="%.10g")

    def peak_json(self, path: str | Path | None = None) -> str:
        r, v, val = self.peak()
        text = json.dumps({"range_m": r, "velocity_mps": v, "value": val})
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def range_doppler_map(echo: np.ndarray, reference_tx: np.ndarray, theta_hat: float, T: float,
                      f_c: float, n_pulses: int = 64, omega: float = 0.5, c: float = 2.998e8,
                      max_delay: int | None = None, radar_only: np.ndarray | None = None) -> RangeDopplerMap:
    """Beamform, correlate with the known transmit reference per delay, DFT across pulses.

    ``reference_tx`` is the (Nt, L) transmitted sequence; ``radar_only``
    optionally replaces it by the radar stream contribution alone.
    """
    echo = np.asarray(echo)
    ref_tx = np.asarray(reference_tx if radar_only is None else radar_only)
    if echo.shape[1] != ref_tx.shape[1]:
        raise ValueError("echo and reference lengths differ")
    n_r, L = echo.shape
    n_t = ref_tx.shape[0]
    if L % n_pulses:
        raise ValueError(f"frame length {L} is not a multiple of n_pulses={n_pulses}")
    M = L // n_pulses
    b = steering(n_r, omega, theta_hat)
    y = b.conj() @ echo / np.linalg.norm(b)
    ref = steering(n_t, omega, theta_hat) @ ref_tx
    n_delay = L if max_delay is None else min(max_delay + 1, L)
    # lag products y[l] conj(ref[l - d]) for every candidate delay d
    idx = np.arange(L)[None, :] - np.arange(n_delay)[:, None]
    shifted = np.where(idx >= 0, ref[np.clip(idx, 0, None)], 0.0)
    prod = y[None, :] * shifted.conj()
    slow = prod.reshape(n_delay, n_pulses, M).sum(axis=2)
    spec = np.fft.fftshift(np.fft.fft(slow, axis=1), axes=1)
    f_axis = np.fft.fftshift(np.fft.fftfreq(n_pulses, d=M * T))
    return RangeDopplerMap(
        magnitude=np.abs(spec),
        range_axis=np.arange(n_delay) * c * T / 2,
        velocity_axis=f_axis * c / (2 * f_c),
        doppler_axis=f_axis,
    )


def detect_peak(rd: RangeDopplerMap):
    """(range m, velocity m/s, value) of the largest cell; ties go to the lowest range bin."""
    mag = rd.magnitude
    if mag.size == 0:
        raise ValueError("empty map")
    i, j = np.unravel_index(int(np.argmax(mag)), mag.shape)
    return float(rd.range_axis[i]), float(rd.velocity_axis[j]), float(mag[i, j])


def peak_bins(rd: RangeDopplerMap) -> tuple[int, int]:
    return tuple(int(v) for v in np.unravel_index(int(np.argmax(rd.magnitude)), rd.magnitude.shape))


def truth_bins(rd: RangeDopplerMap, scene: RadarScene, c: float = 2.998e8) -> tuple[int, int]:
    """Range bin of the integer echo delay and the Doppler bin nearest to f_d."""
    return echo_delay(scene.r, scene.T, c), int(np.argmin(np.abs(rd.doppler_axis - scene.f_d)))


def sense_once(precoders: VectorPrecoders, delta: np.ndarray, scene: RadarScene, seed: int,
               n_r: int = 4, omega: float = 0.5, f_c: float = 20e9, c: float = 2.998e8,
               n_pulses: int = 64, radar_only: bool = False, diag: bool = False):
    """Frame, echo and map for one seed; returns (map, hit within +-1 bin, truth bins)."""
    rng = np.random.default_rng(seed)
    frame = gen_frame(precoders, delta, rng, scene.L, radar_seed=seed, diag=diag)
    z = synth_echo(frame, scene, rng, n_r=n_r, omega=omega, c=c)
    ref_r = None
    if radar_only:
        ref_r = np.asarray(delta) @ np.outer(frame.P[:, -1], frame.radar_symbols)
    rd = range_doppler_map(z, frame.x_q, scene.theta, scene.T, f_c, n_pulses=n_pulses, omega=omega, c=c,
                           radar_only=ref_r)
    pk = peak_bins(rd)
    tr = truth_bins(rd, scene, c)
    hit = abs(pk[0] - tr[0]) <= 1 and min(abs(pk[1] - tr[1]), n_pulses - abs(pk[1] - tr[1])) <= 1
    return rd, hit, tr
