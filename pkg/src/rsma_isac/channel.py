"""LEO downlink user channels and the monostatic radar channel."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, SystemConfig, db2lin

# Ratio defining u for the multibeam pattern.
_U_SCALE = 2.07123
_SERIES_MAX_X = 8.0


def _bessel_series(order: int, x: np.ndarray) -> np.ndarray:
    half = x / 2.0
    term = half**order / math.factorial(order)
    total = term.copy()
    # 40 terms keep the truncation error far below 1e-14 for |x| <= 8
    for m in range(1, 40):
        term = term * (-(half**2)) / (m * (m + order))
        total = total + term
    return total


def _bessel_miller(order: int, x: np.ndarray) -> np.ndarray:
    # Miller's backward recurrence normalized with J0 + 2 sum J_2k = 1.
    ax = np.abs(x)
    start = int(2 * ((int(ax.max()) + 40) // 2))
    j_next = np.zeros_like(ax)
    j_cur = np.full_like(ax, 1e-30)
    norm = np.zeros_like(ax)
    result = np.zeros_like(ax)
    for k in range(start, 0, -1):
        j_prev = (2.0 * k / ax) * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        # j_cur now holds J_{k-1}
        if k - 1 == order:
            result = j_cur.copy()
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm = norm + 2.0 * j_cur
        big = np.abs(j_cur) > 1e250
        if big.any():
            scale = np.where(big, 1e-250, 1.0)
            j_cur, j_next = j_cur * scale, j_next * scale
            norm, result = norm * scale, result * scale
    norm = norm + j_cur
    out = result / norm
    return np.where(x < 0, (-1) ** order * out, out)


def bessel_j(order: int, x):
    """Bessel function of the first kind, orders 1 and 3.

    Power series for |x| <= 8 and Miller's backward recurrence beyond that,
    which keeps the absolute error near machine precision for |x| <= 50.
    """
    if order not in (1, 3):
        raise ValueError(f"only orders 1 and 3 are supported, got {order}")
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("bessel_j requires finite arguments")
    flat = arr.reshape(-1)
    out = np.empty_like(flat)
    small = np.abs(flat) <= _SERIES_MAX_X
    if small.any():
        out[small] = _bessel_series(order, flat[small])
    if (~small).any():
        out[~small] = _bessel_miller(order, flat[~small])
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


def beam_gain(g_max, theta_off, theta_3db):
    """Multibeam radiation pattern, linear gain.

    The u -> 0 singularity is replaced by its analytic limit so that the
    pattern is continuous at the beam centre.
    """
    if theta_3db <= 0:
        raise ConfigError("theta_3db must be positive")
    u = _U_SCALE * np.sin(np.asarray(theta_off, dtype=float)) / math.sin(theta_3db)
    tiny = np.abs(u) < 1e-6
    u_safe = np.where(tiny, 1.0, u)
    j1 = bessel_j(1, u_safe)
    j3 = bessel_j(3, u_safe)
    shape = np.where(tiny, 0.25 + 36.0 / 48.0, j1 / (2 * u_safe) + 36.0 * j3 / u_safe**3)
    g = g_max * shape**2
    return float(g) if np.ndim(g) == 0 else g


def path_coeff(g_u, g_beam, d, lambda_c, noise_norm):
    """Free-space amplitude coefficient including antenna gains.

    ``noise_norm`` is the noise power the channel is normalized by, so that
    ``|b|^2 * p`` is an SNR when ``p`` is in the same power unit.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    if np.any(np.asarray(g_u) <= 0) or np.any(np.asarray(g_beam) < 0) or lambda_c <= 0 or noise_norm <= 0:
        raise ValueError("gains, wavelength and noise normalization must be positive")
    b = np.sqrt(g_u * np.asarray(g_beam)) / (4 * np.pi * (d / lambda_c) * np.sqrt(noise_norm))
    return float(b) if np.ndim(b) == 0 else b


def sample_rain(mu: float, sigma2: float, rng: np.random.Generator, size=None, conventional: bool = False):
    """Rain amplitude coefficient q.

    The natural log of the dB-valued power gain is Gaussian with mean ``mu``
    and variance ``sigma2``.  The default applies the dB value as a gain
    (q = 10^(zeta_dB/40)); ``conventional=True`` treats it as a loss.
    """
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    zeta_db = np.exp(rng.normal(mu, math.sqrt(sigma2), size=size))
    sign = -1.0 if conventional else 1.0
    q = 10.0 ** (sign * zeta_db / 40.0)
    return float(q) if np.ndim(q) == 0 else q


@dataclass
class SatGeometry:
    """User distances (m), per-(user, beam) boresight offsets (rad), altitude (m)."""

    d_k: np.ndarray
    theta_off: np.ndarray  # shape (K, Nt)
    d_sat: float

    def __post_init__(self):
        self.d_k = np.asarray(self.d_k, dtype=float)
        self.theta_off = np.asarray(self.theta_off, dtype=float)
        if self.d_sat <= 0 or np.any(self.d_k < self.d_sat * (1 - 1e-12)):
            raise ConfigError("need d_k >= d_sat > 0")
        if not np.all(np.isfinite(self.theta_off)):
            raise ConfigError("theta_off must be finite")
        if self.theta_off.ndim != 2 or self.theta_off.shape[0] != self.d_k.shape[0]:
            raise ConfigError("theta_off must have shape (K, Nt)")


def default_geometry(cfg: SystemConfig, rng: np.random.Generator) -> SatGeometry:
    """Users dropped uniformly over a row of ``n_t`` beams.

    Beam centres sit ``beam_spacing_3db * theta_3db`` apart (as seen from the
    satellite); each user lands uniformly within the covered angular span.
    """
    th3 = math.radians(cfg.theta_3db_deg)
    spacing = cfg.beam_spacing_3db * th3
    centres = (np.arange(cfg.n_t) - (cfg.n_t - 1) / 2.0) * spacing
    half_span = centres[-1] + spacing / 2.0
    pos = rng.uniform(-half_span, half_span, size=cfg.n_users)
    theta_off = np.abs(pos[:, None] - centres[None, :])
    d_k = cfg.d_sat / np.cos(pos)
    return SatGeometry(d_k=d_k, theta_off=theta_off, d_sat=cfg.d_sat)


@dataclass
class ChannelSet:
    """User channels H (Nt x K) and the sensing-scene parameters."""

    H: np.ndarray
    scene: "RadarScene"
    b: np.ndarray | None = None
    q: np.ndarray | None = None
    phi: np.ndarray | None = None

    @property
    def n_t(self) -> int:
        return self.H.shape[0]

    @property
    def n_users(self) -> int:
        return self.H.shape[1]


def build_user_channels(geom: SatGeometry, cfg: SystemConfig, rng: np.random.Generator,
                        scene: "RadarScene | None" = None) -> ChannelSet:
    K, n_t = geom.theta_off.shape
    if K != cfg.n_users or n_t != cfg.n_t:
        raise ConfigError(f"geometry is {K}x{n_t}, config expects {cfg.n_users}x{cfg.n_t}")
    gains = beam_gain(db2lin(cfg.g_max_dbi), geom.theta_off, math.radians(cfg.theta_3db_deg))
    noise_norm = cfg.boltzmann * cfg.t_sys * cfg.bandwidth / cfg.power_unit_w
    b = path_coeff(db2lin(cfg.g_u_dbi), gains, geom.d_k[:, None], cfg.wavelength, noise_norm)
    q = sample_rain(cfg.rain_mu, cfg.rain_sigma2, rng, size=(K, n_t), conventional=cfg.rain_conventional)
    phi = rng.uniform(0.0, 2 * np.pi, size=(K, n_t))
    H = (b * q * np.exp(1j * phi)).T
    if scene is None:
        scene = radar_scene(cfg)
    return ChannelSet(H=H, scene=scene, b=b.T, q=q.T, phi=phi.T)


def make_channels(cfg: SystemConfig, seed: int | None = None) -> ChannelSet:
    """Pure function of (config, seed)."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    geom = default_geometry(cfg, rng)
    return build_user_channels(geom, cfg, rng)


# ---------------------------------------------------------------- radar side

def steering(n_elems: int, omega: float, theta: float) -> np.ndarray:
    if n_elems < 1:
        raise ValueError("n_elems must be >= 1")
    m = np.arange(n_elems)
    return np.exp(1j * 2 * np.pi * m * omega * np.sin(theta))


def steering_outer(theta: float, n_t: int, n_r: int, omega: float) -> np.ndarray:
    """A(theta) = b(theta) a(theta)^T, shape (n_r, n_t)."""
    return np.outer(steering(n_r, omega, theta), steering(n_t, omega, theta))


def steering_derivative_outer(theta: float, n_t: int, n_r: int, omega: float) -> np.ndarray:
    """dA/dtheta for A = b a^T, shape (n_r, n_t)."""
    A = steering_outer(theta, n_t, n_r, omega)
    rx = np.arange(n_r)[:, None]
    tx = np.arange(n_t)[None, :]
    return 1j * 2 * np.pi * omega * np.cos(theta) * (rx * A + A * tx)


def radar_alpha(lambda_c: float, rcs: float, r: float) -> float:
    if r <= 0:
        raise ValueError("range must be positive")
    return math.sqrt(lambda_c**2 * rcs / ((4 * math.pi) ** 3 * r**4))


def doppler(v: float, f_c: float, c: float = 2.998e8) -> float:
    return 2.0 * v * f_c / c


@dataclass
class RadarScene:
    theta: float
    r: float
    v: float
    rcs: float
    sigma_r2: float
    alpha: complex
    f_d: float
    T: float
    L: int

    def __post_init__(self):
        if self.r <= 0 or self.sigma_r2 <= 0:
            raise ConfigError("radar scene needs r > 0 and sigma_r2 > 0")

    @property
    def snr_per_unit_power(self) -> float:
        """L |alpha|^2 / sigma_r^2."""
        return self.L * abs(self.alpha) ** 2 / self.sigma_r2


def radar_scene(cfg: SystemConfig) -> RadarScene:
    """Target scene whose noise level realizes the configured radar SNR.

    sigma_r^2 is chosen so that P_t L |alpha|^2 / sigma_r^2 equals
    ``cfg.snr_radar``.
    """
    alpha = radar_alpha(cfg.wavelength, cfg.rcs, cfg.target_range)
    L = cfg.n_symbols
    sigma_r2 = cfg.p_t * L * alpha**2 / cfg.snr_radar
    return RadarScene(theta=cfg.theta, r=cfg.target_range, v=cfg.target_velocity, rcs=cfg.rcs,
                      sigma_r2=sigma_r2, alpha=complex(alpha), f_d=doppler(cfg.target_velocity, cfg.f_c, cfg.c),
                      T=cfg.sampling_interval, L=L)
