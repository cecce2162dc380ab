"""Communication rates, power/EE model, and angle-estimation FIM/CRB."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import steering, steering_derivative_outer, steering_outer
from .config import ConfigError, RadarSicMode, SystemConfig
from .precoders import LiftedPrecoders
from .quantization import quant_noise_cov


class UnidentifiableAngleError(ValueError):
    """The CRB denominator vanishes; the angle cannot be estimated."""


# ------------------------------------------------------------ communications

def _quad(h: np.ndarray, delta: np.ndarray, M: np.ndarray) -> float:
    """h^H Delta M Delta h (real for Hermitian M)."""
    v = delta @ h
    return float(np.real(v.conj() @ M @ v))


def _quant_term(h, sigma_q):
    return float(np.real(h.conj() @ sigma_q @ h))


def user_terms(k: int, H: np.ndarray, delta: np.ndarray, sigma_q: np.ndarray,
               lifted: LiftedPrecoders, mode: RadarSicMode, sigma2: float = 1.0):
    """(common signal, private signal, interference-plus-noise seen by the private stream).

    The last value excludes user k's own private stream; the common stream
    sees it plus the private signal.
    """
    h = H[:, k]
    sig_c = _quad(h, delta, lifted.Pc)
    priv = np.array([_quad(h, delta, lifted.Pk[i]) for i in range(lifted.n_users)])
    radar = 0.0
    if mode.has_radar and lifted.Pr is not None:
        radar = mode.psi * _quad(h, delta, lifted.Pr)
    floor = radar + _quant_term(h, sigma_q) + sigma2
    return sig_c, priv[k], priv.sum() - priv[k] + floor


def sinr_common(k, H, delta, sigma_q, lifted, mode, sigma2=1.0) -> float:
    if sigma2 <= 0:
        raise ConfigError("noise power must be positive")
    sig_c, sig_k, rest = user_terms(k, H, delta, sigma_q, lifted, mode, sigma2)
    return sig_c / (rest + sig_k)


def sinr_private(k, H, delta, sigma_q, lifted, mode, sigma2=1.0) -> float:
    if sigma2 <= 0:
        raise ConfigError("noise power must be positive")
    _, sig_k, rest = user_terms(k, H, delta, sigma_q, lifted, mode, sigma2)
    return sig_k / rest


def rates_and_common_cap(gamma_c, gamma_p, c):
    """Per-user rates, the decodable common rate, and its feasibility flag."""
    gamma_c = np.asarray(gamma_c, float)
    gamma_p = np.asarray(gamma_p, float)
    c = np.asarray(c, float)
    r_ck = np.log2(1 + gamma_c)
    r_k = np.log2(1 + gamma_p)
    r_c = float(r_ck.min())
    return {
        "R_ck": r_ck,
        "R_k": r_k,
        "R_c": r_c,
        "common_feasible": bool(c.sum() <= r_c + 1e-9),
        "R_total": c + r_k,
    }


def p_dac(b, f_s):
    """DAC power consumption in watts."""
    if np.any(np.asarray(b) < 1) or f_s <= 0:
        raise ConfigError("need b >= 1 and f_s > 0")
    return 1.5e-5 * 2.0 ** np.asarray(b) + 9e-12 * f_s * np.asarray(b)


def p_rf(cfg: SystemConfig) -> float:
    """Power of one RF chain (W); with mixed resolutions the chain DACs are averaged."""
    dac = float(np.mean(p_dac(np.array(cfg.bits_per_chain), cfg.dac_rate)))
    return 2 * dac + 2 * cfg.p_lp + 2 * cfg.p_m + cfg.p_h + cfg.p_lo / cfg.n_t


def p_tx(k: int, lifted: LiftedPrecoders, delta: np.ndarray) -> float:
    """||Delta p_k||^2 + ||Delta p_c||^2 / K, in normalized power units."""
    d2 = np.real(np.diag(delta)) ** 2
    pk = float(np.real(np.diag(lifted.Pk[k])) @ d2)
    pc = float(np.real(np.diag(lifted.Pc)) @ d2)
    return pk + pc / lifted.n_users


def p_chain(k: int, lifted: LiftedPrecoders, delta: np.ndarray, cfg: SystemConfig,
            power_unit_w: float | None = None) -> float:
    """Per-user consumed power in watts.

    ``power_unit_w`` converts normalized transmit power to watts (defaults
    to ``cfg.power_unit_w``).
    """
    if cfg.kappa <= 0:
        raise ConfigError("kappa must be positive")
    unit = cfg.power_unit_w if power_unit_w is None else power_unit_w
    return p_rf(cfg) + unit * p_tx(k, lifted, delta) / cfg.kappa


def ee_user(rate_total: float, chain_power: float) -> float:
    if chain_power <= 0:
        raise ValueError("chain power must be positive")
    return rate_total / chain_power


@dataclass
class RatePowerBreakdown:
    gamma_c: np.ndarray
    gamma_p: np.ndarray
    R_ck: np.ndarray
    R_k: np.ndarray
    R_c: float
    C: np.ndarray
    R_total: np.ndarray
    P_tx: np.ndarray
    P_chain: np.ndarray
    P_rf: float
    ee: np.ndarray

    @property
    def min_ee(self) -> float:
        return float(self.ee.min())

    @property
    def total_ee(self) -> float:
        return float(self.R_total.sum() / self.P_chain.sum())

    @property
    def sum_rate(self) -> float:
        return float(self.R_total.sum())


def evaluate(cfg: SystemConfig, H: np.ndarray, delta: np.ndarray, lifted: LiftedPrecoders,
             mode: RadarSicMode, c: np.ndarray | None = None, diag_aqnm: bool | None = None,
             rate_scale: float = 1.0) -> RatePowerBreakdown:
    """Exact rates, powers and EE for given (lifted) precoders.

    ``c`` defaults to ``lifted.c``; it is clipped so that the common shares
    never exceed the decodable common rate.  ``rate_scale`` multiplies all
    rates (time-sharing fraction for OMA).
    """
    diag = cfg.aqnm_diag if diag_aqnm is None else diag_aqnm
    sigma_q = quant_noise_cov(delta, lifted.total(), diag=diag, check=False)
    K = lifted.n_users
    gc = np.array([sinr_common(k, H, delta, sigma_q, lifted, mode, cfg.sigma2) for k in range(K)])
    gp = np.array([sinr_private(k, H, delta, sigma_q, lifted, mode, cfg.sigma2) for k in range(K)])
    c = np.clip(np.asarray(lifted.c if c is None else c, float), 0.0, None)
    rr = rates_and_common_cap(gc, gp, c)
    if c.sum() > rr["R_c"] and c.sum() > 0:
        c = c * rr["R_c"] / c.sum()
    r_total = rate_scale * (c + rr["R_k"])
    ptx = np.array([p_tx(k, lifted, delta) for k in range(K)])
    pch = np.array([p_chain(k, lifted, delta, cfg) for k in range(K)])
    return RatePowerBreakdown(
        gamma_c=gc, gamma_p=gp, R_ck=rr["R_ck"] * rate_scale, R_k=rr["R_k"] * rate_scale,
        R_c=rr["R_c"] * rate_scale, C=c * rate_scale, R_total=r_total, P_tx=ptx, P_chain=pch,
        P_rf=p_rf(cfg), ee=r_total / pch,
    )


# -------------------------------------------------------------------- sensing

@dataclass
class SensingMetrics:
    J_tt: float
    J_ta: np.ndarray  # (2,) w.r.t. (Re alpha, Im alpha)
    J_aa: np.ndarray  # (2, 2)

    @property
    def full(self) -> np.ndarray:
        J = np.empty((3, 3))
        J[0, 0] = self.J_tt
        J[0, 1:] = self.J_ta
        J[1:, 0] = self.J_ta
        J[1:, 1:] = self.J_aa
        return J

    def crb_theta(self) -> float:
        schur = self.J_tt - self.J_ta @ np.linalg.solve(self.J_aa, self.J_ta)
        if not schur > 1e-12 * max(abs(self.J_tt), 1e-300):
            raise UnidentifiableAngleError("FIM Schur complement is not positive")
        return 1.0 / schur


def _check_cov(r_q):
    r_q = np.asarray(r_q)
    if np.linalg.eigvalsh((r_q + r_q.conj().T) / 2).min() < -1e-9 * max(1.0, np.abs(r_q).max()):
        raise ValueError("transmit covariance is not positive semidefinite")
    return r_q


def trace_terms(r_q: np.ndarray, theta: float, n_t: int, n_r: int, omega: float = 0.5):
    """(tr(A R A^H), tr(Ad R Ad^H), tr(A R Ad^H)) at angle theta."""
    A = steering_outer(theta, n_t, n_r, omega)
    Ad = steering_derivative_outer(theta, n_t, n_r, omega)
    t_aa = float(np.real(np.trace(A @ r_q @ A.conj().T)))
    t_dd = float(np.real(np.trace(Ad @ r_q @ Ad.conj().T)))
    t_ad = complex(np.trace(A @ r_q @ Ad.conj().T))
    return t_aa, t_dd, t_ad


def fim(theta: float, alpha: complex, r_q: np.ndarray, sigma_r2: float, L: int,
        n_t: int, n_r: int, omega: float = 0.5, check: bool = True) -> SensingMetrics:
    """FIM of (theta, Re alpha, Im alpha) for the echo mean alpha e^{j2 pi f_d l T} A Delta x[l].

    ``r_q`` is the (sample) covariance of Delta x; cross and amplitude terms
    carry 2L/sigma_r^2 while the angle term carries 2L|alpha|^2/sigma_r^2.
    """
    if check:
        r_q = _check_cov(r_q)
    t_aa, t_dd, t_ad = trace_terms(r_q, theta, n_t, n_r, omega)
    g = 2.0 * L / sigma_r2
    w = np.conj(alpha) * t_ad
    J_ta = g * np.array([np.real(w), np.real(1j * w)])
    return SensingMetrics(J_tt=g * abs(alpha) ** 2 * t_dd, J_ta=J_ta, J_aa=g * t_aa * np.eye(2))


def crb_theta(r_q: np.ndarray, theta: float, snr_radar: float, p_t: float,
              n_t: int, n_r: int, omega: float = 0.5, check: bool = True) -> float:
    """Closed-form angle CRB in rad^2.

    ``snr_radar = P_t L |alpha|^2 / sigma_r^2``; the covariance enters
    normalized by the budget ``p_t`` so the value agrees with the FIM route.
    """
    if check:
        r_q = _check_cov(r_q)
    t_aa, t_dd, t_ad = trace_terms(np.asarray(r_q) / p_t, theta, n_t, n_r, omega)
    den = t_dd * t_aa - abs(t_ad) ** 2
    scale = max(t_dd * t_aa, 1e-300)
    if not den > 1e-12 * scale:
        raise UnidentifiableAngleError("CRB denominator is not positive")
    return t_aa / (2.0 * snr_radar * den)


def beampattern(p: np.ndarray, delta: np.ndarray, theta_grid, omega: float = 0.5) -> np.ndarray:
    """|a^T(theta) Delta p|^2 over a grid of angles (rad)."""
    grid = np.atleast_1d(np.asarray(theta_grid, float))
    if grid.size == 0:
        raise ValueError("empty angle grid")
    dp = np.asarray(delta) @ np.asarray(p)
    n_t = dp.shape[0]
    return np.array([abs(steering(n_t, omega, th) @ dp) ** 2 for th in grid])
