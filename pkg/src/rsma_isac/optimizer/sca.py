"""Initialization, SCA surrogate, rank-one penalty, Dinkelbach update and extraction."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..channel import steering
from ..config import ConfigError, RadarSicMode
from ..precoders import LiftedPrecoders, VectorPrecoders, herm
from .problem import Instance, interference_terms

log = logging.getLogger(__name__)


def init_precoders(H: np.ndarray, p_t: float, mode: RadarSicMode, theta: float = 0.0,
                   omega: float = 0.5, has_common: bool = True) -> LiftedPrecoders:
    """Matched-filter private, dominant-singular-vector common, conj steering radar; equal powers."""
    H = np.asarray(H, complex)
    if not np.any(H):
        raise ConfigError("all-zero channel")
    n_t, K = H.shape
    norms = np.linalg.norm(H, axis=0)
    dirs = np.where(norms > 0, H / np.where(norms > 0, norms, 1.0), 0.0)
    for k in np.flatnonzero(norms == 0):
        dirs[0, k] = 1.0
    u, _, _ = np.linalg.svd(H)
    n_streams = K + int(has_common) + int(mode.has_radar)
    share = p_t / n_streams
    pc = math.sqrt(share) * u[:, 0] if has_common else np.zeros(n_t, complex)
    pr = None
    if mode.has_radar:
        pr = math.sqrt(share) * np.conj(steering(n_t, omega, theta)) / math.sqrt(n_t)
    vec = VectorPrecoders(pc=pc, priv=math.sqrt(share) * dirs, pr=pr)
    return vec.lifted()


# ------------------------------------------------------------ SCA surrogate

@dataclass
class RateSurrogate:
    """R~_k(P) = f_k(P) - g~_k(P) around an expansion point.

    f_k = C_k + log2(I_k) and g_k = log2(I_{-k}); g~_k is the tangent of g_k,
    so R~_k <= R_k everywhere with equality at the expansion point.
    """

    k: int
    inst: Instance
    g0: float  # I_{-k} at the expansion point
    grads: dict  # stream name -> d g_k / d X (Hermitian, Re<G, X> convention)

    def g_exact(self, lifted: LiftedPrecoders) -> float:
        return math.log2(interference_terms(self.inst, lifted)[2][self.k])

    def f(self, lifted: LiftedPrecoders) -> float:
        return float(lifted.c[self.k]) + math.log2(interference_terms(self.inst, lifted)[1][self.k])

    def g_tilde(self, lifted: LiftedPrecoders, expansion: LiftedPrecoders) -> float:
        val = math.log2(self.g0)
        new, old = lifted.matrices(), expansion.matrices()
        for name, G in self.grads.items():
            val += float(np.real(np.sum(G.T * (new[name] - old[name]))))
        return val

    def value(self, lifted: LiftedPrecoders, expansion: LiftedPrecoders) -> float:
        return self.f(lifted) - self.g_tilde(lifted, expansion)


def sca_linearize_rate(k: int, expansion: LiftedPrecoders, inst: Instance) -> RateSurrogate:
    """First-order expansion of the concave interference term of user k's total rate.

    The gradient carries the 1/(ln2 * I_{-k}) factor of d log2 and also
    the dependence of the quantization noise on every stream.
    """
    _, _, Im = interference_terms(inst, expansion)
    g0 = float(Im[k])
    if not g0 > 0:
        raise ValueError("non-positive interference-plus-noise at expansion point")
    S = inst.sig_coeff(k)
    Q = herm(inst.quant_coeff(k))
    scale = 1.0 / (math.log(2.0) * g0)
    grads = {}
    for name in expansion.matrices():
        if name == "c":
            G = Q
        elif name == "r":
            G = inst.psi * S + Q
        elif name == f"p{k + 1}":
            G = Q
        else:
            G = S + Q
        grads[name] = scale * G
    return RateSurrogate(k=k, inst=inst, g0=g0, grads=grads)


# ------------------------------------------------------------ rank-one penalty

@dataclass
class PenaltyTerms:
    eigvecs: dict
    weights: dict
    xi: float

    def value(self, lifted: LiftedPrecoders) -> float:
        """PF evaluated at ``lifted`` (without the xi factor)."""
        total = 0.0
        mats = lifted.matrices()
        for name, m in self.eigvecs.items():
            w = self.weights.get(name, 1.0)
            if w == 0 or name not in mats:
                continue
            P = mats[name]
            total += w * float(np.real(np.trace(P) - m.conj() @ P @ m))
        return total


def penalty_terms(prev: LiftedPrecoders, xi: float, mode: RadarSicMode,
                  penalize_radar: bool = False) -> PenaltyTerms:
    """Unit top eigenvectors of the previous iterate; the radar term is weighted by psi."""
    eig = {}
    for name, M in prev.matrices().items():
        _, v = np.linalg.eigh(herm(M))
        eig[name] = v[:, -1] / np.linalg.norm(v[:, -1])
    weights = {name: 1.0 for name in eig}
    if "r" in weights:
        weights["r"] = 1.0 if penalize_radar else mode.psi
    return PenaltyTerms(eigvecs=eig, weights=weights, xi=xi)


# ------------------------------------------------------------ Dinkelbach

def dinkelbach_update(rates, powers, objective: str = "maxmin") -> float:
    """min_k R_k / P_k (max-min) or sum R / sum P (total EE); ties go to the lowest index."""
    rates = np.asarray(rates, float)
    powers = np.asarray(powers, float)
    if np.any(powers <= 0):
        raise ValueError("chain power must be positive")
    if objective == "maxmin":
        ratios = rates / powers
        return float(ratios[int(np.argmin(ratios))])
    if objective == "total":
        return float(rates.sum() / powers.sum())
    raise ValueError(f"unknown objective {objective!r}")


# ------------------------------------------------------------ extraction

@dataclass
class Extraction:
    vectors: VectorPrecoders
    residuals: dict  # name -> tr(P) - chi_max(P)
    relative: dict  # name -> residual / tr(P)
    warnings: list
    active: tuple = ()  # matrices carrying at least ACTIVE_SHARE of the total power

    def active_relative(self) -> dict:
        return {n: self.relative[n] for n in self.active}

    def inactive_relative(self) -> dict:
        return {n: r for n, r in self.relative.items() if n not in self.active}


ACTIVE_SHARE = 1e-3


def extract_rank_one(lifted: LiftedPrecoders, rel_tol: float = 1e-2) -> Extraction:
    """p = sqrt(chi_max) m_max for every matrix, with the rank-one residuals.

    Only active matrices (at least ACTIVE_SHARE of the total trace) raise
    a warning; the others are near-zero solver output whose shape is noise.
    """
    vecs, res, rel, warn, active = {}, {}, {}, [], []
    mats = lifted.matrices()
    total = sum(max(float(np.real(np.trace(M))), 0.0) for M in mats.values())
    for name, M in mats.items():
        w, v = np.linalg.eigh(herm(M))
        lam = max(float(w[-1]), 0.0)
        vecs[name] = math.sqrt(lam) * v[:, -1]
        tr = float(np.real(np.trace(M)))
        res[name] = tr - lam
        rel[name] = res[name] / tr if tr > 1e-12 else 0.0
        if total > 0 and tr >= ACTIVE_SHARE * total:
            active.append(name)
        if name in active and rel[name] > rel_tol:
            msg = f"matrix {name} is not rank one (relative residual {rel[name]:.3g})"
            warn.append(msg)
            log.warning(msg)
    K = lifted.n_users
    priv = np.stack([vecs[f"p{k + 1}"] for k in range(K)], axis=1)
    out = VectorPrecoders(pc=vecs["c"], priv=priv, pr=vecs.get("r"), c=np.array(lifted.c, float))
    return Extraction(vectors=out, residuals=res, relative=rel, warnings=warn, active=tuple(active))
