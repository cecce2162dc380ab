"""Inner convex problem of the SCA/Dinkelbach loop and its constraint builders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .. import conic
from ..channel import ChannelSet, steering_derivative_outer, steering_outer
from ..config import ConfigError, RadarSicMode, SystemConfig
from ..metrics import p_rf
from ..precoders import LiftedPrecoders, herm
from ..quantization import QuantModel

LN2 = math.log(2.0)


@dataclass
class Instance:
    """Everything fixed during one solve: channels, quantizer, mode, budgets."""

    cfg: SystemConfig
    H: np.ndarray
    delta: np.ndarray
    mode: RadarSicMode
    theta: float
    has_common: bool = True
    r_th: float | None = None
    with_crb: bool = True

    def __post_init__(self):
        if self.r_th is None:
            self.r_th = self.cfg.r_th
        if not np.any(self.H):
            raise ConfigError("all-zero channel")

    @classmethod
    def build(cls, cfg: SystemConfig, channels: ChannelSet, mode: RadarSicMode, **kw) -> "Instance":
        delta = QuantModel.from_config(cfg).delta
        return cls(cfg=cfg, H=channels.H, delta=delta, mode=mode, theta=channels.scene.theta, **kw)

    @property
    def n_t(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]

    @property
    def psi(self) -> float:
        return self.mode.psi

    @property
    def p_t(self) -> float:
        return self.cfg.p_t

    @property
    def d(self) -> np.ndarray:
        return np.real(np.diag(self.delta))

    def sig_coeff(self, k: int) -> np.ndarray:
        """Delta H_k Delta: tr(. X) is the received power of stream X."""
        v = self.delta @ self.H[:, k]
        return np.outer(v, v.conj())

    def quant_coeff(self, k: int) -> np.ndarray:
        """G with Re tr(G R_x) = h_k^H Sigma(R_x) h_k."""
        h = self.H[:, k]
        dq = self.d * (1 - self.d)
        if self.cfg.aqnm_diag:
            return np.diag(dq * np.abs(h) ** 2).astype(complex)
        return np.outer(h, h.conj()) * dq[None, :]

    def radar_power_weight(self) -> float:
        return 1.0 if self.cfg.count_radar_power else self.psi

    def chain_scale(self) -> float:
        return self.cfg.power_unit_w / self.cfg.kappa

    def p_rf(self) -> float:
        return p_rf(self.cfg)


# ------------------------------------------------------------ exact numerics

def _re_inner(G, X):
    return float(np.real(np.sum(G.T * X)))


def interference_terms(inst: Instance, lifted: LiftedPrecoders):
    """Exact (T_c, I, I_minus) per user.

    T_c: everything received incl. the common stream; I: all private
    streams + radar + quantization noise + noise; I_minus: I without user
    k's own private stream.
    """
    K = inst.K
    R = lifted.total()
    T = np.empty(K)
    I = np.empty(K)
    Im = np.empty(K)
    for k in range(K):
        S = inst.sig_coeff(k)
        q = _re_inner(inst.quant_coeff(k), R)
        priv = np.array([_re_inner(S, lifted.Pk[j]) for j in range(K)])
        radar = inst.psi * _re_inner(S, lifted.Pr) if lifted.Pr is not None else 0.0
        base = priv.sum() + radar + q + inst.cfg.sigma2
        I[k] = base
        Im[k] = base - priv[k]
        T[k] = base + (_re_inner(S, lifted.Pc) if inst.has_common else 0.0)
    return T, I, Im


def exact_rates(inst: Instance, lifted: LiftedPrecoders):
    """(R_ck, R_k) in bit/s/Hz from the lifted precoders."""
    T, I, Im = interference_terms(inst, lifted)
    return np.log2(T / I), np.log2(I / Im)


def chain_power(inst: Instance, lifted: LiftedPrecoders) -> np.ndarray:
    d2 = inst.d**2
    pc = float(np.real(np.diag(lifted.Pc)) @ d2) if inst.has_common else 0.0
    pk = np.array([float(np.real(np.diag(lifted.Pk[k])) @ d2) for k in range(inst.K)])
    return inst.p_rf() + inst.chain_scale() * (pk + pc / inst.K)


def crb_coeffs(inst: Instance, theta: float | None = None):
    """Coefficient matrices mapping a stream covariance X to the CRB traces of Delta X Delta."""
    cfg = inst.cfg
    theta = inst.theta if theta is None else theta
    A = steering_outer(theta, inst.n_t, cfg.n_r, cfg.omega)
    Ad = steering_derivative_outer(theta, inst.n_t, cfg.n_r, cfg.omega)
    D = inst.delta
    g_dd = D @ (Ad.conj().T @ Ad) @ D
    g_aa = D @ (A.conj().T @ A) @ D
    g_ad = D @ (Ad.conj().T @ A) @ D  # tr(A R Ad^H) = tr(g_ad X)
    return herm(g_dd), herm(g_aa), g_ad


def crb_lmi_matrix(r_q: np.ndarray, theta: float, snr_radar: float, rho: float, p_t: float,
                   n_t: int, n_r: int, omega: float = 0.5) -> np.ndarray:
    """Numeric value of the 2x2 Schur-complement LMI for a given R_q."""
    A = steering_outer(theta, n_t, n_r, omega)
    Ad = steering_derivative_outer(theta, n_t, n_r, omega)
    t_dd = np.real(np.trace(Ad @ r_q @ Ad.conj().T))
    t_aa = np.real(np.trace(A @ r_q @ A.conj().T))
    t_ad = np.trace(A @ r_q @ Ad.conj().T)
    return np.array([[t_dd - p_t / (2 * rho * snr_radar), t_ad], [np.conj(t_ad), t_aa]])


# ------------------------------------------------------------ slack state

@dataclass
class SlackState:
    """Taylor expansion points of the slack chain plus penalty eigenvectors."""

    tau_c: np.ndarray
    beta_c: np.ndarray
    tau: np.ndarray
    beta: np.ndarray
    eigvecs: dict = field(default_factory=dict)

    @classmethod
    def at(cls, inst: Instance, lifted: LiftedPrecoders) -> "SlackState":
        T, I, Im = interference_terms(inst, lifted)
        if np.any(I <= 0) or np.any(Im <= 0):
            raise ValueError("non-positive interference-plus-noise at expansion point")
        return cls(tau_c=T, beta_c=np.log(I), tau=I, beta=np.log(Im), eigvecs=top_eigvecs(lifted))


def top_eigvecs(lifted: LiftedPrecoders) -> dict:
    out = {}
    for name, M in lifted.matrices().items():
        w, v = np.linalg.eigh(herm(M))
        out[name] = v[:, -1]
    return out


def slack_chain_bounds(inst: Instance, state: SlackState, lifted: LiftedPrecoders):
    """Largest rates the slack/Taylor/SOC chain admits at ``lifted`` (bit/s/Hz).

    Eliminating the slacks gives eta <= ln tau_t + 1 - tau_t / T and
    beta >= beta_t - 1 + I e^{-beta_t}, so the chain allows a rate up to
    (ln tau_t + 1 - tau_t / T - beta_t + 1 - I e^{-beta_t}) / ln 2, with
    (T, I) = (total, interference) for the common stream and
    (interference, interference without own stream) for the private one.
    Returns (common bound per user, private bound per user).
    """
    T, I, Im = interference_terms(inst, lifted)

    def bound(tau_t, beta_t, top, bottom):
        return (np.log(tau_t) + 1 - tau_t / top - beta_t + 1 - bottom * np.exp(-beta_t)) / LN2

    common = bound(state.tau_c, state.beta_c, T, I) if inst.has_common else np.zeros(inst.K)
    return common, bound(state.tau, state.beta, I, Im)


# ------------------------------------------------------------ inner problem

def _coef_vec(G: np.ndarray, n: int) -> np.ndarray:
    """Vector c with c @ vec_F(Z) = Re tr(G X) for the realified Z of X."""
    C = np.zeros((2 * n, 2 * n))
    C[:n, :n] = G.real.T
    C[n:, :n] = -G.imag.T
    return C.ravel(order="F")


class InnerProblem:
    """Decision variables and affine building blocks of one SCA subproblem.

    All lifted variables are stacked into one vector ``x`` so that every
    received-power, power and trace expression is a single constant-matrix
    product.  Quantities that change between outer iterations (Taylor
    points, penalty eigenvectors, lambda) are cvxpy parameters, so the
    problem is compiled once and re-solved with new parameter values.
    """

    def __init__(self, inst: Instance, builder: conic.ConicProblem | None = None):
        self.inst = inst
        self.prob = builder or conic.ConicProblem()
        n = inst.n_t
        K = inst.K
        self.Pk = [self.prob.hermitian(f"P{k + 1}", n) for k in range(K)]
        self.Pc = self.prob.hermitian("Pc", n) if inst.has_common else None
        self.Pr = self.prob.hermitian("Pr", n) if inst.mode.has_radar else None
        self.c = self.prob.scalar("c", K, nonneg=True)
        if not inst.has_common:
            self.prob.add(self.c == 0)
        self.r = self.prob.scalar("r", K)
        self.names = [name for name, _ in self.streams()]
        self.x = cp.hstack([cp.vec(v.Z, order="F") for _, v in self.streams()])
        self.block = 4 * n * n
        self._updaters = []
        T_rows, I_rows, Im_rows = [], [], []
        for k in range(K):
            S, Q = inst.sig_coeff(k), inst.quant_coeff(k)
            base = {name: Q for name in self.names}
            for j in range(K):
                base[f"p{j + 1}"] = S + Q
            if "r" in base:
                base["r"] = inst.psi * S + Q
            minus = dict(base)
            minus[f"p{k + 1}"] = Q
            total = dict(base)
            if "c" in total:
                total["c"] = S + Q
            T_rows.append(self.row(total))
            I_rows.append(self.row(base))
            Im_rows.append(self.row(minus))
        s2 = inst.cfg.sigma2
        self.T = np.array(T_rows) @ self.x + s2
        self.I = np.array(I_rows) @ self.x + s2
        self.I_minus = np.array(Im_rows) @ self.x + s2
        D2 = (inst.delta @ inst.delta).astype(complex)
        pw = {name: D2 for name in self.names}
        if "r" in pw:
            pw["r"] = inst.radar_power_weight() * D2
        self.tx_power = self.row(pw) @ self.x
        ch_rows = []
        for k in range(K):
            m = {f"p{k + 1}": D2}
            if "c" in self.names:
                m["c"] = D2 / K
            ch_rows.append(self.row(m))
        self.chain = inst.p_rf() + inst.chain_scale() * (np.array(ch_rows) @ self.x)

    def streams(self):
        out = [("c", self.Pc)] if self.Pc is not None else []
        out += [(f"p{k + 1}", v) for k, v in enumerate(self.Pk)]
        if self.Pr is not None:
            out.append(("r", self.Pr))
        return out

    def row(self, coeffs: dict) -> np.ndarray:
        """Coefficient row over ``x`` from per-stream matrices G (Re tr(G X) each)."""
        n = self.inst.n_t
        out = np.zeros(self.block * len(self.names))
        for i, name in enumerate(self.names):
            G = coeffs.get(name)
            if G is not None:
                out[i * self.block:(i + 1) * self.block] = _coef_vec(np.asarray(G, complex), n)
        return out

    def uniform_row(self, G: np.ndarray) -> np.ndarray:
        return self.row({name: G for name in self.names})

    def chain_power(self, k: int):
        return self.chain[k]

    def rate_total(self, k: int):
        """Surrogate total rate C_k + r_k (a lower bound on the exact rate)."""
        return self.c[k] + self.r[k]

    def on_update(self, fn) -> None:
        self._updaters.append(fn)

    def update(self, state: "SlackState") -> None:
        """Load the expansion point of the next outer iteration into the parameters."""
        for fn in self._updaters:
            fn(state)

    def extract(self, sol: conic.ConicSolution) -> LiftedPrecoders:
        v = sol.values
        n = self.inst.n_t
        Pc = v["Pc"] if self.Pc is not None else np.zeros((n, n), complex)
        Pk = np.stack([v[f"P{k + 1}"] for k in range(self.inst.K)])
        Pr = v["Pr"] if self.Pr is not None else None
        c = np.clip(np.asarray(v["c"], float), 0.0, None)
        return LiftedPrecoders(Pc=Pc, Pk=Pk, Pr=Pr, c=c, r=np.asarray(v["r"], float))


def build_power_constraint(ip: InnerProblem, p_t: float) -> None:
    if p_t <= 0:
        raise ConfigError("power budget must be positive")
    ip.prob.add(ip.tx_power <= p_t)


def _rate_chain(ip: InnerProblem, tag: str, lhs, upper_total, interference, pick) -> None:
    """eta - beta >= lhs; tau <= upper_total; SOC log bound; tangent exp bound on interference."""
    K = ip.inst.K
    eta = ip.prob.scalar(f"eta_{tag}", K)
    beta = ip.prob.scalar(f"beta_{tag}", K)
    tau = ip.prob.scalar(f"tau_{tag}", K)
    a = cp.Parameter(K, name=f"expb_{tag}", pos=True)  # e^{beta_t}
    b = cp.Parameter(K, name=f"expb1_{tag}")  # e^{beta_t} (1 - beta_t)
    off = cp.Parameter(K, name=f"logtau_{tag}")  # ln tau_t + 1
    s = cp.Parameter(K, name=f"sqtau_{tag}", nonneg=True)  # 2 sqrt(tau_t)
    ip.prob.add(eta - beta >= lhs * LN2)
    ip.prob.add(tau <= upper_total)
    # ||[tau + eta - (ln tau_t + 1), 2 sqrt(tau_t)]|| <= tau - eta + ln tau_t + 1
    ip.prob.add(cp.SOC(tau - eta + off, cp.vstack([tau + eta - off, s]), axis=0))
    ip.prob.add(interference <= cp.multiply(a, beta) + b)
    setattr(ip, f"eta_{tag}", eta)
    setattr(ip, f"beta_{tag}", beta)
    setattr(ip, f"tau_{tag}", tau)

    def update(state):
        tau_t, beta_t = pick(state)
        if np.any(tau_t <= 0) or not np.all(np.isfinite(beta_t)):
            raise ValueError("expansion values must satisfy tau > 0 and finite beta")
        e = np.exp(beta_t)
        a.value = e
        b.value = e * (1 - beta_t)
        off.value = np.log(tau_t) + 1
        s.value = 2 * np.sqrt(tau_t)

    ip.on_update(update)


def build_common_rate_constraints(ip: InnerProblem, state: SlackState | None = None) -> None:
    """Slack/Taylor/SOC inner approximation of R_c,k >= sum_i C_i."""
    if ip.Pc is None:
        return
    _rate_chain(ip, "c", cp.sum(ip.c), ip.T, ip.I, lambda st: (st.tau_c, st.beta_c))
    if state is not None:
        ip.update(state)


def build_private_rate_constraints(ip: InnerProblem, state: SlackState | None = None) -> None:
    """Slack/Taylor/SOC inner approximation of R_k >= r_k."""
    _rate_chain(ip, "p", ip.r, ip.I, ip.I_minus, lambda st: (st.tau, st.beta))
    if state is not None:
        ip.update(state)


def build_qos(ip: InnerProblem, r_th: float, slack=None) -> None:
    lhs = ip.c + ip.r
    if slack is not None:
        lhs = lhs + slack
    ip.prob.add(lhs >= r_th)


def build_crb_lmi(ip: InnerProblem, theta: float, snr_radar: float, rho: float, slack=None) -> None:
    """Schur-complement LMI guaranteeing CRB(theta) <= rho.

    ``slack`` (optional non-negative variable) relaxes the (1,1) entry; used
    only by the feasibility phase.
    """
    if rho <= 0:
        raise ConfigError("rho must be positive")
    g_dd, g_aa, g_ad = crb_coeffs(ip.inst, theta)
    t_dd = ip.uniform_row(g_dd) @ ip.x
    t_aa = ip.uniform_row(g_aa) @ ip.x
    re = ip.uniform_row(g_ad) @ ip.x
    im = ip.uniform_row(-1j * g_ad) @ ip.x  # Im tr(G X) = Re tr(-j G X)
    top = t_dd - ip.inst.p_t / (2 * rho * snr_radar)
    if slack is not None:
        top = top + slack
    ip.prob.add_hermitian_lmi([[(top, 0), (re, im)], [(re, -im), (t_aa, 0)]])


def penalty_expr(ip: InnerProblem, terms=None):
    """Linearized rank-one penalty PF = sum_w w [tr(P) - m^H P m] as a parameterized linear form."""
    coef = cp.Parameter(len(ip.names) * ip.block, name="penalty")
    n = ip.inst.n_t

    def load(t):
        g = {}
        for name in ip.names:
            m = t.eigvecs.get(name)
            w = t.weights.get(name, 1.0)
            if m is None or w == 0:
                continue
            g[name] = w * (np.eye(n) - np.outer(m, m.conj()))
        coef.value = ip.row(g)

    ip.set_penalty = load
    if terms is not None:
        load(terms)
    return coef @ ip.x


def build_base(inst: Instance, state: SlackState | None = None, *, qos_slack=None, crb_slack=None,
               problem: conic.ConicProblem | None = None) -> InnerProblem:
    """Variables plus every constraint shared by all objectives."""
    ip = InnerProblem(inst, problem)
    build_power_constraint(ip, inst.p_t)
    build_common_rate_constraints(ip)
    build_private_rate_constraints(ip)
    build_qos(ip, inst.r_th, slack=qos_slack)
    if inst.with_crb:
        build_crb_lmi(ip, inst.theta, inst.cfg.snr_radar, inst.cfg.rho, slack=crb_slack)
    if state is not None:
        ip.update(state)
    return ip
