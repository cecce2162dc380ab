"""Seeded Monte Carlo runs over a spec: one record per (scheme, sweep value, seed)."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from ..channel import make_channels
from ..config import RadarSicMode, SystemConfig
from ..optimizer import solve_baseline, solve_maxmin_ee, solve_sum_rate, solve_total_ee
from ..precoders import VectorPrecoders
from ..quantization import QuantModel
from ..radarpipe import RangeError, sense_once
from .records import RecordWriter, ResultRecord
from .spec import SCHEMES, ExperimentSpec

log = logging.getLogger(__name__)

WORKERS_ENV = "RSMA_ISAC_WORKERS"
RTH_BISECTION_STEPS = 6


def solve_scheme(scheme: str, cfg: SystemConfig, channels, trace_path=None):
    kind, mode = SCHEMES[scheme]
    mode = RadarSicMode(mode)
    if kind == "maxmin":
        return solve_maxmin_ee(cfg, channels, mode, trace_path=trace_path)
    if kind == "total":
        return solve_total_ee(cfg, channels, mode, trace_path=trace_path)
    if kind == "sumrate":
        return solve_sum_rate(cfg, channels, mode, trace_path=trace_path)
    return solve_baseline(cfg, channels, kind.upper(), mode, trace_path=trace_path)


def _solve_auto_rth(scheme, cfg, channels, trace_path):
    """Bisect R_th downward until the first subproblem is feasible (exploratory runs only)."""
    rep = solve_scheme(scheme, cfg, channels, trace_path)
    if rep.status != "Infeasible":
        return rep, cfg.r_th
    lo, hi, best = 0.0, cfg.r_th, None
    for _ in range(RTH_BISECTION_STEPS):
        mid = (lo + hi) / 2
        trial = solve_scheme(scheme, cfg.replace(r_th=mid), channels, trace_path)
        if trial.ok:
            lo, best = mid, (trial, mid)
        else:
            hi = mid
    if best is None:
        return rep, cfg.r_th
    best[0].message = f"R_th lowered from {cfg.r_th:g} to {best[1]:g}"
    return best


def _vectors(rep):
    """name -> vector for the extracted precoders (OMA: each slot's private vector)."""
    if rep.vectors is not None:
        v = rep.vectors
        out = {"c": v.pc}
        for k in range(v.n_users):
            out[f"p{k + 1}"] = v.priv[:, k]
        if v.pr is not None:
            out["r"] = v.pr
        return out
    out = {}
    for k, slot in enumerate(rep.slots):
        if slot.vectors is not None:
            out[f"p{k + 1}"] = slot.vectors.priv[:, 0]
            if slot.vectors.pr is not None:
                out[f"r{k + 1}"] = slot.vectors.pr
    return out


def _radar_summary(vectors, delta, cfg, channels, n_frames, seed):
    if "r" not in vectors or n_frames <= 0:
        return None
    K = cfg.n_users
    vp = VectorPrecoders(pc=vectors["c"], priv=np.stack([vectors[f"p{k + 1}"] for k in range(K)], axis=1),
                         pr=vectors["r"])
    hits, peaks = 0, []
    try:
        for i in range(n_frames):
            rd, hit, truth = sense_once(vp, delta, channels.scene, seed=seed * 100_003 + i, n_r=cfg.n_r,
                                        omega=cfg.omega, f_c=cfg.f_c, c=cfg.c, diag=cfg.aqnm_diag)
            hits += int(hit)
            peaks.append(float(rd.magnitude.max()))
    except RangeError as exc:
        return {"frames": n_frames, "error": str(exc)}
    return {"frames": n_frames, "hit_rate": hits / n_frames, "mean_peak": float(np.mean(peaks)),
            "truth_bins": list(truth)}


def run_task(args) -> ResultRecord:
    """Pure function of its arguments (up to solver tolerance and wall time)."""
    spec, scheme, value, seed, trace_dir = args
    cfg = spec.config(value, seed)
    channels = make_channels(cfg, seed)
    trace = None
    if trace_dir is not None:
        trace = Path(trace_dir) / f"{scheme}__{spec.axis}_{value}__seed{seed}.jsonl"
        trace.unlink(missing_ok=True)
    kind, mode = SCHEMES[scheme]
    try:
        if spec.auto_rth:
            rep, r_th = _solve_auto_rth(scheme, cfg, channels, trace)
        else:
            rep, r_th = solve_scheme(scheme, cfg, channels, trace), cfg.r_th
    except Exception as exc:  # solver failure is recorded, the run continues
        log.exception("task %s/%s/%s failed", scheme, value, seed)
        return ResultRecord(scheme=scheme, mode=mode, objective=kind, sweep_axis=spec.axis, sweep_value=value,
                            seed=seed, status="Error", message=f"{type(exc).__name__}: {exc}",
                            config=cfg.to_dict(), params=_params(cfg, cfg.r_th))
    rec = ResultRecord(scheme=scheme, mode=mode, objective=kind, sweep_axis=spec.axis, sweep_value=value, seed=seed,
                       status=rep.status, params=_params(cfg, r_th), config=cfg.to_dict(), message=rep.message,
                       iterations=rep.iterations, wall_time=rep.wall_time, lambda_trace=list(rep.lambda_trace),
                       objective_trace=list(rep.objective_trace))
    if not rep.ok:
        return rec
    delta = QuantModel.from_config(cfg).delta
    vecs = _vectors(rep)
    rec.lam = rep.lam
    rec.ee = list(map(float, rep.ee))
    rec.min_ee = rep.min_ee
    rec.total_ee = rep.total_ee
    rec.sum_rate = rep.sum_rate
    rec.crb = rep.crb
    rec.power = {n: float(np.linalg.norm(delta @ v) ** 2) for n, v in vecs.items()}
    rec.precoders = {n: [[float(z.real), float(z.imag)] for z in v] for n, v in vecs.items()}
    rec.radar = _radar_summary(vecs, delta, cfg, channels, spec.radar_frames, seed)
    return rec


def _params(cfg: SystemConfig, r_th: float) -> dict:
    return {"snr_db": cfg.snr_db, "bits": cfg.bits, "rho": cfg.rho, "r_th": r_th}


def n_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def run(spec: ExperimentSpec, seeds=None, trace_dir=None, out=None) -> Path:
    """Run every task of ``spec`` and append records in task order; returns the records path."""
    if seeds is not None:
        spec.seeds = list(seeds)
    out_dir = Path(out or spec.out)
    path = out_dir / f"{spec.name}.jsonl"
    path.unlink(missing_ok=True)
    writer = RecordWriter(path)
    if trace_dir is not None:
        Path(trace_dir).mkdir(parents=True, exist_ok=True)
    tasks = [(spec, s, v, seed, trace_dir) for s, v, seed in spec.tasks()]
    workers = n_workers()
    if workers == 1:
        for t in tasks:
            writer.append(run_task(t))
    else:
        # map yields in submission order, so the file is identical to a serial run
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(run_task, tasks):
                writer.append(rec)
    return path
