"""Figure data as CSV: means and standard errors across seeds.

Column schemas (``*_se`` is the standard error of the mean, empty for n = 1):

ee_vs_snr / ee_vs_bits / ee_vs_rho
    scheme, <axis>, n, n_failed, min_ee_mean, min_ee_se, total_ee_mean,
    total_ee_se, sum_rate_mean, sum_rate_se, crb_mean, crb_se
power_alloc
    scheme, sweep_value, n, common_mean, common_se, private_mean, private_se,
    radar_mean, radar_se (powers ||Delta p||^2 in normalized units; OMA sums its time slots)
beampattern
    scheme, theta_deg, n, gain_mean, gain_se (sum over streams of |a^T Delta p|^2)
range_doppler
    scheme, seed, range_m, velocity_mps, magnitude (one frame per scheme,
    delays up to twice the target delay)
convergence
    scheme, sweep_value, iteration, n, lambda_mean, lambda_se, objective_mean,
    objective_se
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

import numpy as np

from ..channel import radar_scene
from ..config import SystemConfig
from ..metrics import beampattern
from ..precoders import VectorPrecoders
from ..quantization import QuantModel
from ..radarpipe import echo_delay, gen_frame, range_doppler_map, synth_echo
from .records import ResultRecord

FIGURES = ("ee_vs_snr", "ee_vs_bits", "ee_vs_rho", "power_alloc", "beampattern", "range_doppler", "convergence")
SWEEP_FIGURES = {"ee_vs_snr": "snr_db", "ee_vs_bits": "bits", "ee_vs_rho": "rho"}


class FigureError(ValueError):
    """Records cannot produce the requested figure."""


def mean_se(values) -> tuple[float, float | None]:
    x = np.asarray([v for v in values if v is not None and math.isfinite(v)], float)
    if x.size == 0:
        return float("nan"), None
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else None
    return float(x.mean()), se


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return v


def _write(path: Path, header, rows) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def _require(records, attr, figure):
    missing = [f"{r.scheme}/seed{r.seed}" for r in records if not getattr(r, attr)]
    if missing:
        raise FigureError(f"{figure}: records lack '{attr}' ({', '.join(missing[:5])})")


def _groups(records, key):
    out = defaultdict(list)
    for r in records:
        out[key(r)].append(r)
    return out


def _sweep(records, figure):
    axis = SWEEP_FIGURES[figure]
    recs = [r for r in records if r.sweep_axis == axis]
    if not recs:
        raise FigureError(f"{figure}: no records sweep '{axis}'")
    rows = []
    for (scheme, value), grp in sorted(_groups(recs, lambda r: (r.scheme, r.sweep_value)).items()):
        ok = [r for r in grp if r.ok]
        row = [scheme, value, len(ok), len(grp) - len(ok)]
        for attr in ("min_ee", "total_ee", "sum_rate", "crb"):
            row += list(mean_se([getattr(r, attr) for r in ok]))
        rows.append(row)
    header = ["scheme", axis, "n", "n_failed", "min_ee_mean", "min_ee_se", "total_ee_mean", "total_ee_se",
              "sum_rate_mean", "sum_rate_se", "crb_mean", "crb_se"]
    return header, rows


def _power_alloc(records):
    ok = [r for r in records if r.ok]
    _require(ok, "power", "power_alloc")
    rows = []
    for (scheme, value), grp in sorted(_groups(ok, lambda r: (r.scheme, _key(r.sweep_value))).items()):
        common = [r.power.get("c", 0.0) for r in grp]
        private = [sum(v for n, v in r.power.items() if n.startswith("p")) for r in grp]
        radar = [sum(v for n, v in r.power.items() if n.startswith("r")) for r in grp]
        rows.append([scheme, None if value == -math.inf else value, len(grp),
                     *mean_se(common), *mean_se(private), *mean_se(radar)])
    header = ["scheme", "sweep_value", "n", "common_mean", "common_se", "private_mean", "private_se",
              "radar_mean", "radar_se"]
    return header, rows


def _key(v):
    return -math.inf if v is None else v


def _vecs(rec: ResultRecord) -> dict:
    return {n: np.array([complex(re, im) for re, im in v]) for n, v in rec.precoders.items()}


def _beampattern(records, grid_deg):
    ok = [r for r in records if r.ok]
    _require(ok, "precoders", "beampattern")
    _require(ok, "config", "beampattern")
    grid = np.radians(grid_deg)
    rows = []
    for scheme, grp in sorted(_groups(ok, lambda r: r.scheme).items()):
        curves = []
        for r in grp:
            cfg = SystemConfig.from_dict(r.config)
            delta = QuantModel.from_config(cfg).delta
            curves.append(sum(beampattern(v, delta, grid, cfg.omega) for v in _vecs(r).values()))
        curves = np.array(curves)
        for i, th in enumerate(grid_deg):
            rows.append([scheme, float(th), len(grp), *mean_se(curves[:, i])])
    return ["scheme", "theta_deg", "n", "gain_mean", "gain_se"], rows


def _range_doppler(records):
    ok = [r for r in records if r.ok and "r" in r.precoders]
    if not ok:
        raise FigureError("range_doppler: no successful record has a radar precoder")
    _require(ok, "config", "range_doppler")
    rows = []
    for scheme, grp in sorted(_groups(ok, lambda r: r.scheme).items()):
        r = min(grp, key=lambda x: (_key(x.sweep_value), x.seed))
        cfg = SystemConfig.from_dict(r.config)
        v = _vecs(r)
        vp = VectorPrecoders(pc=v["c"], priv=np.stack([v[f"p{k + 1}"] for k in range(cfg.n_users)], axis=1),
                             pr=v["r"])
        delta = QuantModel.from_config(cfg).delta
        scene = radar_scene(cfg)
        rng = np.random.default_rng(r.seed)
        frame = gen_frame(vp, delta, rng, scene.L, radar_seed=r.seed, diag=cfg.aqnm_diag)
        z = synth_echo(frame, scene, rng, n_r=cfg.n_r, omega=cfg.omega, c=cfg.c)
        max_delay = min(scene.L - 1, 2 * echo_delay(scene.r, scene.T, cfg.c))
        rd = range_doppler_map(z, frame.x_q, scene.theta, scene.T, cfg.f_c, omega=cfg.omega, c=cfg.c,
                               max_delay=max_delay)
        for i, rng_m in enumerate(rd.range_axis):
            for j, vel in enumerate(rd.velocity_axis):
                rows.append([scheme, r.seed, float(rng_m), float(vel), float(rd.magnitude[i, j])])
    return ["scheme", "seed", "range_m", "velocity_mps", "magnitude"], rows


def _convergence(records):
    ok = [r for r in records if r.ok]
    _require(ok, "lambda_trace", "convergence")
    rows = []
    for (scheme, value), grp in sorted(_groups(ok, lambda r: (r.scheme, _key(r.sweep_value))).items()):
        n_it = max(len(r.lambda_trace) for r in grp)
        for t in range(n_it):
            lam = [r.lambda_trace[t] for r in grp if t < len(r.lambda_trace)]
            obj = [r.objective_trace[t] for r in grp if t < len(r.objective_trace)]
            rows.append([scheme, None if value == -math.inf else value, t, len(lam), *mean_se(lam), *mean_se(obj)])
    header = ["scheme", "sweep_value", "iteration", "n", "lambda_mean", "lambda_se", "objective_mean",
              "objective_se"]
    return header, rows


def emit_figure_data(records: list[ResultRecord], figure: str, out_dir: str | Path,
                     grid_deg=None) -> Path:
    """Write ``<out_dir>/<figure>.csv``; nothing is written when the records cannot support it."""
    if figure not in FIGURES:
        raise FigureError(f"unknown figure {figure!r}; known: {', '.join(FIGURES)}")
    if not records:
        raise FigureError(f"{figure}: empty record set")
    if figure in SWEEP_FIGURES:
        header, rows = _sweep(records, figure)
    elif figure == "power_alloc":
        header, rows = _power_alloc(records)
    elif figure == "beampattern":
        header, rows = _beampattern(records, np.arange(-90.0, 90.25, 0.5) if grid_deg is None else grid_deg)
    elif figure == "range_doppler":
        header, rows = _range_doppler(records)
    else:
        header, rows = _convergence(records)
    if not rows:
        raise FigureError(f"{figure}: no usable records")
    return _write(Path(out_dir) / f"{figure}.csv", header, rows)
