"""Additive quantization noise model for low-resolution DACs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .config import ConfigError

_PSD_TOL = 1e-9


def load_loss_table(path: str | Path | None = None) -> dict[int, float]:
    """Read a ``bits loss`` table; defaults to the bundled file."""
    if path is None:
        text = resources.files("rsma_isac.data").joinpath("aqnm_loss.txt").read_text()
    else:
        text = Path(path).read_text()
    table: dict[int, float] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"loss table line {lineno}: expected 'bits loss', got {line!r}")
        b, loss = int(parts[0]), float(parts[1])
        if not 0.0 < loss < 1.0:
            raise ConfigError(f"loss table line {lineno}: loss must be in (0, 1)")
        table[b] = loss
    bits = sorted(table)
    if any(table[b2] > table[b1] for b1, b2 in zip(bits, bits[1:])):
        raise ConfigError("quantization loss must be non-increasing in bits")
    return table


DEFAULT_LOSS_TABLE = load_loss_table()


def quant_gain(b: int, loss_table: dict[int, float] | None = None) -> float:
    """Linear gain delta of a b-bit DAC."""
    if b < 1:
        raise ConfigError(f"bits must be >= 1, got {b}")
    table = DEFAULT_LOSS_TABLE if loss_table is None else loss_table
    if b <= 5 and b in table:
        return 1.0 - table[b]
    return 1.0 - math.pi * math.sqrt(3) / 2 * 2.0 ** (-2 * b)


def _check_psd(m: np.ndarray, what: str) -> None:
    if m.size and np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -_PSD_TOL * max(1.0, np.abs(m).max()):
        raise ValueError(f"{what} is not positive semidefinite")


def quant_noise_cov(delta: np.ndarray, r_x: np.ndarray, diag: bool = False, check: bool = True) -> np.ndarray:
    """Quantization-noise covariance Delta (I - Delta) E[x x^H].

    With ``diag=True`` only the diagonal of E[x x^H] is kept.
    """
    r_x = np.asarray(r_x)
    if check:
        _check_psd(r_x, "r_x")
    d = np.diag(delta) if np.ndim(delta) == 2 else np.asarray(delta)
    src = np.diag(np.diag(r_x)) if diag else r_x
    sigma = (d * (1 - d))[:, None] * src
    return (sigma + sigma.conj().T) / 2


def tx_covariance(delta: np.ndarray, p: np.ndarray) -> np.ndarray:
    """R_q = Delta P P^H Delta^H."""
    D = np.asarray(delta)
    p = np.asarray(p)
    if p.shape[0] != D.shape[0]:
        raise ValueError(f"precoder has {p.shape[0]} rows, Delta is {D.shape[0]}x{D.shape[0]}")
    dp = D @ p
    r = dp @ dp.conj().T
    return (r + r.conj().T) / 2


def psd_factor(sigma: np.ndarray) -> np.ndarray:
    """F with F F^H = sigma, tolerant of rank deficiency."""
    w, v = np.linalg.eigh((sigma + sigma.conj().T) / 2)
    if w.size and w.min() < -_PSD_TOL * max(1.0, np.abs(w).max()):
        raise ValueError("covariance is not factorizable (negative eigenvalue)")
    return v * np.sqrt(np.clip(w, 0.0, None))


def apply_aqnm(x: np.ndarray, delta: np.ndarray, sigma: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """x_q = Delta x + eps, eps ~ CN(0, sigma); ``x`` may be (Nt,) or (Nt, L)."""
    x = np.asarray(x)
    F = psd_factor(sigma)
    shape = x.shape
    cols = 1 if x.ndim == 1 else shape[1]
    w = (rng.standard_normal((F.shape[1], cols)) + 1j * rng.standard_normal((F.shape[1], cols))) / np.sqrt(2)
    eps = F @ w
    out = np.asarray(delta) @ x.reshape(shape[0], cols) + eps
    return out.reshape(shape)


@dataclass
class QuantModel:
    bits: tuple[int, ...]
    loss_table: dict[int, float] = field(default_factory=lambda: dict(DEFAULT_LOSS_TABLE))
    diag: bool = False

    def __post_init__(self):
        self.bits = tuple(int(b) for b in self.bits)
        if min(self.bits) < 1:
            raise ConfigError("bits must be >= 1")

    @classmethod
    def from_config(cls, cfg) -> "QuantModel":
        return cls(bits=cfg.bits_per_chain, diag=cfg.aqnm_diag)

    @property
    def deltas(self) -> np.ndarray:
        return np.array([quant_gain(b, self.loss_table) for b in self.bits])

    @property
    def delta(self) -> np.ndarray:
        return np.diag(self.deltas)

    def noise_cov(self, r_x: np.ndarray, check: bool = True) -> np.ndarray:
        return quant_noise_cov(self.delta, r_x, diag=self.diag, check=check)
