"""System parameters for the quantized RSMA ISAC-LEO scenario.

All defaults reproduce the reference simulation environment (4x4 ULA,
five users, 20 GHz Ka-band LEO at 600 km, 2-bit DACs).

Power bookkeeping: precoder powers are expressed in *normalized units* in
which the user noise power is one (``sigma2 = 1``).  One normalized unit
corresponds to ``power_unit_w`` watts (1 mW by default), so a transmit SNR
of 20 dB is the same budget as 20 dBm.  The RF-chain model is in watts and
the conversion happens only in :func:`rsma_isac.metrics.p_chain`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum


class ConfigError(ValueError):
    """Raised for inconsistent or out-of-range configuration values."""


class RadarSicMode(str, Enum):
    """How users treat the radar sequence.

    ``SIC_RADAR``: radar stream present and cancelled at the users (psi = 0).
    ``NO_SIC``: radar stream present and treated as interference (psi = 1).
    ``NO_RADAR``: no radar stream at all.
    """

    SIC_RADAR = "sic_radar"
    NO_SIC = "no_sic"
    NO_RADAR = "no_radar"

    @property
    def psi(self) -> float:
        return 1.0 if self is RadarSicMode.NO_SIC else 0.0

    @property
    def has_radar(self) -> bool:
        return self is not RadarSicMode.NO_RADAR


def db2lin(x):
    return 10.0 ** (x / 10.0)


def lin2db(x):
    return 10.0 * math.log10(x)


@dataclass
class SystemConfig:
    # arrays / users
    n_t: int = 4
    n_r: int = 4
    n_users: int = 5
    omega: float = 0.5  # element spacing in wavelengths

    # budgets
    snr_db: float = 20.0  # transmit SNR P_t / sigma_k^2
    power_unit_w: float = 1e-3  # watts per normalized power unit
    sigma2: float = 1.0
    snr_radar_db: float = 40.0

    # carrier / link
    f_c: float = 20e9
    bandwidth: float = 25e6
    c: float = 2.998e8
    d_sat: float = 600e3
    theta_3db_deg: float = 0.4
    g_u_dbi: float = 17.0
    g_max_dbi: float = 52.0
    beam_spacing_3db: float = 1.0  # beam-centre spacing in units of theta_3db
    boltzmann: float = 1.38e-23
    t_sys: float = 517.0
    rain_mu: float = -2.6
    rain_sigma2: float = 1.63
    rain_conventional: bool = False

    # target
    theta_deg: float = 0.0
    target_range: float = 2000.0
    target_velocity: float = 10.0
    rcs: float = 1.0
    n_symbols: int = 1024  # L, symbols per CPI

    # DAC / RF chain
    bits: int = 2
    chain_bits: tuple[int, ...] | None = None  # per-chain override
    aqnm_diag: bool = False
    p_lp: float = 14e-3
    p_m: float = 0.3e-3
    p_lo: float = 22.5e-3
    p_h: float = 3e-3
    kappa: float = 0.27
    f_s: float | None = None  # DAC sampling rate, defaults to bandwidth

    # constraints
    r_th: float = 1.0
    rho: float = 1e-2
    count_radar_power: bool = True  # False reproduces the psi-weighted budget

    # algorithm
    xi: float = 0.5e-2
    eps: float = 1e-3
    t_max: int = 100
    solver_tol: float = 1e-7
    rank_tol: float = 1e-2
    stop_rule: str = "objective"  # "objective": inner objective change; "lambda": EE change
    penalize_radar: bool = False  # True adds the radar rank-one term regardless of psi

    seed: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_t < 1 or self.n_r < 1 or self.n_users < 1:
            raise ConfigError("n_t, n_r and n_users must be >= 1")
        if not 0.0 < self.kappa <= 1.0:
            raise ConfigError(f"kappa must lie in (0, 1], got {self.kappa}")
        if self.theta_3db_deg <= 0:
            raise ConfigError("theta_3db_deg must be positive")
        if self.bits < 1:
            raise ConfigError("bits must be >= 1")
        if self.chain_bits is not None:
            if len(self.chain_bits) != self.n_t:
                raise ConfigError("chain_bits needs one entry per transmit chain")
            if min(self.chain_bits) < 1:
                raise ConfigError("chain_bits entries must be >= 1")
        if self.sigma2 <= 0 or self.rho <= 0 or self.power_unit_w <= 0:
            raise ConfigError("sigma2, rho and power_unit_w must be positive")
        if self.target_range <= 0:
            raise ConfigError("target_range must be positive")
        if self.n_symbols < 1:
            raise ConfigError("n_symbols must be >= 1")
        if self.stop_rule not in ("objective", "lambda"):
            raise ConfigError(f"stop_rule must be 'objective' or 'lambda', got {self.stop_rule!r}")
        if self.xi < 0 or self.eps <= 0 or self.t_max < 1:
            raise ConfigError("need xi >= 0, eps > 0 and t_max >= 1")

    # derived quantities
    @property
    def p_t(self) -> float:
        """Transmit power budget in normalized units."""
        return db2lin(self.snr_db) * self.sigma2

    @property
    def snr_radar(self) -> float:
        return db2lin(self.snr_radar_db)

    @property
    def wavelength(self) -> float:
        return self.c / self.f_c

    @property
    def theta(self) -> float:
        return math.radians(self.theta_deg)

    @property
    def sampling_interval(self) -> float:
        return 1.0 / self.bandwidth

    @property
    def dac_rate(self) -> float:
        return self.bandwidth if self.f_s is None else self.f_s

    @property
    def bits_per_chain(self) -> tuple[int, ...]:
        if self.chain_bits is not None:
            return tuple(self.chain_bits)
        return (self.bits,) * self.n_t

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if d["chain_bits"] is not None:
            d["chain_bits"] = list(d["chain_bits"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        d = dict(d)
        if d.get("chain_bits") is not None:
            d["chain_bits"] = tuple(int(b) for b in d["chain_bits"])
        return cls(**d)
