"""Outer loops: max-min EE, total EE, sum rate, and the SDMA/OMA baselines."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import cvxpy as cp
import numpy as np

from .. import conic
from ..channel import ChannelSet
from ..config import RadarSicMode, SystemConfig
from ..metrics import RatePowerBreakdown, UnidentifiableAngleError, crb_theta, evaluate
from ..precoders import LiftedPrecoders, VectorPrecoders
from .problem import (Instance, SlackState, build_base, chain_power, exact_rates,
                      penalty_expr)
from .sca import dinkelbach_update, extract_rank_one, init_precoders, penalty_terms

log = logging.getLogger(__name__)

OBJECTIVES = ("maxmin", "total", "sumrate")


@dataclass
class IterationRecord:
    iteration: int
    lam: float
    objective: float
    mu: float | None
    pf: float
    min_ee: float
    sum_rate: float
    solve_time: float
    solver_status: str
    primal_residual: float
    inner_gap: float

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in self.__dict__.items()}


@dataclass
class SolveReport:
    scheme: str
    mode: str
    objective_kind: str
    status: str
    iterations: int = 0
    lam: float = 0.0
    lambda_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    history: list = field(default_factory=list)
    lifted: LiftedPrecoders | None = None
    vectors: VectorPrecoders | None = None
    breakdown: RatePowerBreakdown | None = None
    ee: np.ndarray | None = None
    crb: float | None = None
    residuals: dict = field(default_factory=dict)
    rank_residuals: dict = field(default_factory=dict)
    active: tuple = ()
    warnings: list = field(default_factory=list)
    phase1_iterations: int = 0
    message: str = ""
    wall_time: float = 0.0
    slots: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == conic.Status.OPTIMAL.value

    @property
    def min_ee(self) -> float:
        return float(np.min(self.ee)) if self.ee is not None else float("nan")

    @property
    def total_ee(self) -> float:
        return self.breakdown.total_ee if self.breakdown is not None else float("nan")

    @property
    def sum_rate(self) -> float:
        return self.breakdown.sum_rate if self.breakdown is not None else float("nan")

    @property
    def radar_power(self) -> float:
        """||Delta p_r||^2 of the extracted radar precoder (0 when absent)."""
        if self.vectors is None or self.vectors.pr is None:
            return 0.0
        return float(self.residuals.get("radar_power", 0.0))

    def summary(self) -> dict:
        return {
            "scheme": self.scheme, "mode": self.mode, "objective": self.objective_kind,
            "status": self.status, "iterations": self.iterations, "lambda": self.lam,
            "min_ee": self.min_ee, "total_ee": self.total_ee, "sum_rate": self.sum_rate,
            "crb": self.crb, "radar_power": self.radar_power,
            "residuals": self.residuals, "rank_residuals": self.rank_residuals,
        }


# ------------------------------------------------------------ helpers

def _exact_totals(inst: Instance, lifted: LiftedPrecoders):
    """(R_total per user, chain power per user) with C clipped to the decodable common rate."""
    r_ck, r_k = exact_rates(inst, lifted)
    c = np.clip(np.asarray(lifted.c, float), 0.0, None)
    if inst.has_common and c.sum() > r_ck.min() > 0:
        c = c * r_ck.min() / c.sum()
    elif not inst.has_common:
        c = np.zeros_like(c)
    return c + r_k, chain_power(inst, lifted)


def _crb_of(inst: Instance, r_x: np.ndarray) -> float:
    r_q = inst.delta @ r_x @ inst.delta
    try:
        return crb_theta(r_q, inst.theta, inst.cfg.snr_radar, inst.p_t, inst.n_t, inst.cfg.n_r,
                         inst.cfg.omega, check=False)
    except UnidentifiableAngleError:
        return float("inf")


def exact_violations(inst: Instance, lifted: LiftedPrecoders) -> dict:
    """Worst violation of each original constraint (positive = violated)."""
    r_ck, r_k = exact_rates(inst, lifted)
    c = np.asarray(lifted.c, float)
    d2 = inst.d**2
    power = sum(float(np.real(np.diag(M)) @ d2) * (inst.radar_power_weight() if n == "r" else 1.0)
                for n, M in lifted.matrices().items())
    out = {
        "power": power - inst.p_t,
        "qos": float(np.max(inst.r_th - (c + r_k))),
        "common": float(c.sum() - r_ck.min()) if inst.has_common else 0.0,
        "c_nonneg": float(np.max(-c)),
    }
    if inst.with_crb:
        out["crb"] = _crb_of(inst, lifted.total()) - inst.cfg.rho
    return out


def _inner_gap(inst: Instance, ip, sol, lifted: LiftedPrecoders) -> float:
    """How far the surrogate rate variables exceed the exact rates (should be <= 0)."""
    r_ck, r_k = exact_rates(inst, lifted)
    r = np.asarray(sol.values["r"], float)
    gap = float(np.max(r - r_k))
    if inst.has_common:
        gap = max(gap, float(np.sum(sol.values["c"]) - r_ck.min()))
    return gap


def _write_trace(path: Path | None, rec: dict) -> None:
    if path is None:
        return
    with open(path, "a") as fh:
        fh.write(json.dumps(rec) + "\n")


# ------------------------------------------------------------ phase 1

def _phase1(inst: Instance, start: LiftedPrecoders, tol: float, max_iter: int = 30):
    """SCA on slack-relaxed QoS/CRB constraints until both slacks vanish.

    Only searches for a feasible expansion point; the problem itself is
    never relaxed.  Returns (point or None, iterations).
    """
    prob = conic.ConicProblem()
    s_q = prob.scalar("s_qos", nonneg=True)
    s_c = prob.scalar("s_crb", nonneg=True) if inst.with_crb else None
    ip = build_base(inst, qos_slack=s_q, crb_slack=s_c, problem=prob)
    # the crb slack lives in (1,1)-entry units; rescale so both slacks weigh alike
    crb_scale = inst.p_t / (2 * inst.cfg.rho * inst.cfg.snr_radar) if inst.with_crb else 1.0
    prob.minimize(s_q + (s_c / crb_scale if s_c is not None else 0))
    cur = start
    best = math.inf
    for it in range(1, max_iter + 1):
        ip.update(SlackState.at(inst, cur))
        sol = conic.solve(prob, tol)
        if not sol.ok:
            return None, it
        cur = ip.extract(sol)
        viol = exact_violations(inst, cur)
        worst = max(viol["qos"], viol.get("crb", -1.0) / inst.cfg.rho)
        if worst <= 0:
            return cur, it
        if sol.objective > best - 1e-9 and it > 3:
            return None, it
        best = min(best, sol.objective)
    return None, max_iter


def build_objective(ip, kind: str, xi: float):
    """Attach the objective of ``kind``; returns (lambda parameter or None, mu variable or None)."""
    inst = ip.inst
    pf = penalty_expr(ip)
    rates = ip.c + ip.r
    lam = mu = None
    if kind == "maxmin":
        lam = cp.Parameter(nonneg=True, name="lam")
        mu = ip.prob.scalar("mu")
        ip.prob.add(rates - lam * ip.chain >= mu)
        ip.prob.maximize(mu - xi * pf)
    elif kind == "total":
        lam = cp.Parameter(nonneg=True, name="lam")
        ip.prob.maximize(cp.sum(rates) - lam * cp.sum(ip.chain) - xi * pf)
    elif kind == "sumrate":
        ip.prob.maximize(cp.sum(rates) - xi * pf)
    else:
        raise ValueError(f"unknown objective {kind!r}")
    return lam, mu


# ------------------------------------------------------------ main loop

def _run(inst: Instance, kind: str, *, scheme: str, trace_path: Path | None = None,
         max_iter: int | None = None, eps: float | None = None,
         start: LiftedPrecoders | None = None, on_iterate=None) -> SolveReport:
    if kind not in OBJECTIVES:
        raise ValueError(f"unknown objective {kind!r}")
    cfg = inst.cfg
    t0 = time.perf_counter()
    t_max = cfg.t_max if max_iter is None else max_iter
    eps = cfg.eps if eps is None else eps
    penalize_radar = cfg.penalize_radar
    rep = SolveReport(scheme=scheme, mode=inst.mode.value, objective_kind=kind, status="")
    cur = start or init_precoders(inst.H, inst.p_t, inst.mode, inst.theta, cfg.omega, inst.has_common)
    ip = build_base(inst)
    lam_p, mu = build_objective(ip, kind, cfg.xi)
    lam = 0.0
    prev_obj = None
    last_sol = None
    phase1_done = False
    t = 0
    while t < t_max:
        pen = penalty_terms(cur, cfg.xi, inst.mode, penalize_radar)
        ip.update(SlackState.at(inst, cur))
        ip.set_penalty(pen)
        if lam_p is not None:
            lam_p.value = lam
        sol = conic.solve(ip.prob, cfg.solver_tol)
        if sol.status is conic.Status.INFEASIBLE and t == 0 and not phase1_done:
            phase1_done = True
            found, n1 = _phase1(inst, cur, cfg.solver_tol)
            rep.phase1_iterations = n1
            if found is None:
                rep.status = conic.Status.INFEASIBLE.value
                rep.message = "no point meets the QoS and sensing constraints"
                rep.wall_time = time.perf_counter() - t0
                return rep
            cur = found
            continue
        if not sol.ok:
            if t == 0:
                rep.status = sol.status.value
                rep.message = f"inner solve failed at the first iteration ({sol.solver_status})"
                rep.wall_time = time.perf_counter() - t0
                return rep
            rep.message = f"inner solve failed at iteration {t + 1} ({sol.solver_status}); kept last iterate"
            rep.warnings.append(rep.message)
            log.warning(rep.message)
            break
        t += 1
        new = ip.extract(sol)
        r_tot, pch = _exact_totals(inst, new)
        lam_new = dinkelbach_update(r_tot, pch, "maxmin" if kind == "sumrate" else kind)
        obj = float(sol.objective)
        rec = IterationRecord(
            iteration=t, lam=lam_new, objective=obj,
            mu=float(sol.values["mu"]) if mu is not None else None, pf=pen.value(new),
            min_ee=float(np.min(r_tot / pch)), sum_rate=float(r_tot.sum()), solve_time=sol.solve_time,
            solver_status=sol.solver_status, primal_residual=sol.primal_residual,
            inner_gap=_inner_gap(inst, ip, sol, new),
        )
        rep.history.append(rec)
        rep.lambda_trace.append(lam_new)
        rep.objective_trace.append(obj)
        if on_iterate is not None:
            on_iterate(t, cur, new, ip, sol)
        _write_trace(trace_path, {"scheme": scheme, "objective": kind, **rec.to_dict()})
        cur = new
        last_sol = sol
        if kind == "sumrate" or cfg.stop_rule == "objective":
            done = prev_obj is not None and abs(obj - prev_obj) < eps
        else:
            done = abs(lam_new - lam) < eps
        prev_obj = obj
        lam = lam_new
        if done:
            break
    rep.iterations = t
    rep.lam = lam
    if last_sol is None:
        rep.status = conic.Status.NUMERICAL_FAILURE.value
        rep.wall_time = time.perf_counter() - t0
        return rep
    rep.status = conic.Status.OPTIMAL.value
    _finalize(rep, inst, cur)
    rep.wall_time = time.perf_counter() - t0
    return rep


def _finalize(rep: SolveReport, inst: Instance, lifted: LiftedPrecoders, rate_scale: float = 1.0) -> None:
    ext = extract_rank_one(lifted, inst.cfg.rank_tol)
    vec = ext.vectors
    if not inst.has_common:
        vec.pc = np.zeros_like(vec.pc)
    rep.lifted = lifted
    rep.vectors = vec
    rep.rank_residuals = ext.relative
    rep.active = ext.active
    rep.warnings += ext.warnings
    vl = vec.lifted()
    mode = inst.mode
    bd = evaluate(inst.cfg, inst.H, inst.delta, vl, mode, rate_scale=rate_scale)
    rep.breakdown = bd
    rep.ee = bd.ee
    viol = exact_violations(inst, vl)
    if vec.pr is not None:
        viol["radar_power"] = float(np.linalg.norm(inst.delta @ vec.pr) ** 2)
    rep.residuals = viol
    rep.crb = _crb_of(inst, vl.total()) if mode.has_radar or inst.with_crb else None


# ------------------------------------------------------------ public API

def make_instance(cfg: SystemConfig, channels: ChannelSet, mode: RadarSicMode, *,
                  has_common: bool = True, delta: np.ndarray | None = None,
                  with_crb: bool = True, r_th: float | None = None) -> Instance:
    inst = Instance.build(cfg, channels, mode, has_common=has_common, with_crb=with_crb, r_th=r_th)
    if delta is not None:
        inst.delta = np.asarray(delta, float)
    return inst


def solve_maxmin_ee(cfg: SystemConfig, channels: ChannelSet, mode: RadarSicMode = RadarSicMode.SIC_RADAR,
                    *, trace_path=None, instance: Instance | None = None, **kw) -> SolveReport:
    """Max-min energy efficiency via Dinkelbach + SCA with rank-one penalty."""
    inst = instance or make_instance(cfg, channels, mode)
    return _run(inst, "maxmin", scheme="RSMA", trace_path=_path(trace_path), **kw)


def solve_total_ee(cfg: SystemConfig, channels: ChannelSet, mode: RadarSicMode = RadarSicMode.SIC_RADAR,
                   *, trace_path=None, instance: Instance | None = None, **kw) -> SolveReport:
    """Total energy efficiency (sum rate over total consumed power)."""
    inst = instance or make_instance(cfg, channels, mode)
    return _run(inst, "total", scheme="RSMA", trace_path=_path(trace_path), **kw)


def solve_sum_rate(cfg: SystemConfig, channels: ChannelSet, mode: RadarSicMode = RadarSicMode.SIC_RADAR,
                   *, trace_path=None, instance: Instance | None = None, **kw) -> SolveReport:
    """Sum-rate maximization with the same constraint set (pure SCA)."""
    inst = instance or make_instance(cfg, channels, mode)
    return _run(inst, "sumrate", scheme="RSMA", trace_path=_path(trace_path), **kw)


def solve_baseline(cfg: SystemConfig, channels: ChannelSet, scheme: str,
                   mode: RadarSicMode = RadarSicMode.SIC_RADAR, *, objective: str = "total",
                   trace_path=None, **kw) -> SolveReport:
    """SDMA (no common stream) or OMA (one user per orthogonal time slice)."""
    scheme = scheme.upper()
    if scheme == "SDMA":
        inst = make_instance(cfg, channels, mode, has_common=False)
        return _run(inst, objective, scheme="SDMA", trace_path=_path(trace_path), **kw)
    if scheme != "OMA":
        raise ValueError(f"unknown baseline {scheme!r}")
    return _solve_oma(cfg, channels, mode, trace_path=_path(trace_path), **kw)


def _solve_oma(cfg, channels, mode, trace_path=None, **kw) -> SolveReport:
    K = channels.n_users
    t0 = time.perf_counter()
    rep = SolveReport(scheme="OMA", mode=mode.value, objective_kind="maxmin", status="")
    ee = np.zeros(K)
    rates = np.zeros(K)
    pch = np.zeros(K)
    lams = []
    for k in range(K):
        sub = ChannelSet(H=channels.H[:, [k]], scene=channels.scene)
        inst = make_instance(cfg.replace(n_users=1), sub, mode, has_common=False)
        r = _run(inst, "maxmin", scheme="OMA", trace_path=trace_path, **kw)
        rep.slots.append(r)
        if not r.ok:
            rep.status = r.status
            rep.message = f"slot {k + 1}: {r.message}"
            rep.wall_time = time.perf_counter() - t0
            return rep
        # each user is active for 1/K of the time
        rates[k] = r.breakdown.R_total[0] / K
        pch[k] = r.breakdown.P_chain[0]
        ee[k] = rates[k] / pch[k]
        lams.append(r.lam / K)
        rep.iterations = max(rep.iterations, r.iterations)
        rep.warnings += r.warnings
    rep.status = conic.Status.OPTIMAL.value
    rep.ee = ee
    rep.lam = float(min(lams))
    rep.lambda_trace = [rep.lam]
    rep.crb = max(r.crb for r in rep.slots if r.crb is not None) if mode.has_radar else None
    rep.residuals = {key: max(r.residuals.get(key, -math.inf) for r in rep.slots)
                     for key in rep.slots[0].residuals}
    rep.breakdown = RatePowerBreakdown(
        gamma_c=np.zeros(K), gamma_p=np.array([r.breakdown.gamma_p[0] for r in rep.slots]),
        R_ck=np.zeros(K), R_k=rates, R_c=0.0, C=np.zeros(K), R_total=rates,
        P_tx=np.array([r.breakdown.P_tx[0] for r in rep.slots]), P_chain=pch,
        P_rf=rep.slots[0].breakdown.P_rf, ee=ee)
    rep.wall_time = time.perf_counter() - t0
    return rep


def _path(p):
    if p is None:
        return None
    p = Path(p)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p
