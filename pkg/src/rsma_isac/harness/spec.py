"""Experiment specification files (TOML)."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import tomli

from ..config import ConfigError, SystemConfig

SWEEP_AXES = {"snr_db": float, "bits": int, "rho": float, "none": None}

# scheme name -> (solver, radar/SIC mode)
SCHEMES = {
    "rsma_sic_radar": ("maxmin", "sic_radar"),
    "rsma_no_sic": ("maxmin", "no_sic"),
    "rsma_no_radar": ("maxmin", "no_radar"),
    "total_ee_sic_radar": ("total", "sic_radar"),
    "total_ee_no_sic": ("total", "no_sic"),
    "total_ee_no_radar": ("total", "no_radar"),
    "sum_rate": ("sumrate", "sic_radar"),
    "sdma": ("sdma", "sic_radar"),
    "oma": ("oma", "sic_radar"),
}


class SpecError(ConfigError):
    """Invalid experiment spec; the message names the field and, if known, its line."""


@dataclass
class ExperimentSpec:
    scenario: dict = field(default_factory=dict)
    axis: str = "none"
    values: list = field(default_factory=lambda: [None])
    schemes: list = field(default_factory=lambda: ["rsma_sic_radar"])
    seeds: list = field(default_factory=lambda: list(range(5)))
    out: str = "results"
    radar_frames: int = 0
    auto_rth: bool = False
    name: str = "experiment"

    def config(self, value=None, seed: int = 0) -> SystemConfig:
        cfg = SystemConfig.from_dict(self.scenario)
        if self.axis != "none":
            cfg = cfg.replace(**{self.axis: SWEEP_AXES[self.axis](value)})
        return cfg.replace(seed=seed)

    def tasks(self):
        """(scheme, sweep value, seed) in deterministic order."""
        return [(s, v, seed) for s in self.schemes for v in self.values for seed in self.seeds]


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.M)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(text: str, key: str, msg: str):
    line = _line_of(text, key.split(".")[-1])
    where = f"{key} (line {line})" if line else key
    raise SpecError(f"{where}: {msg}")


def parse_spec(text: str, source: str = "<spec>") -> ExperimentSpec:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise SpecError(f"{source}: {exc}") from None
    unknown = set(raw) - {"name", "scenario", "sweep", "run"}
    if unknown:
        raise SpecError(f"{source}: unknown section(s) {sorted(unknown)}")
    scenario = dict(raw.get("scenario", {}))
    fields = {f.name for f in dataclasses.fields(SystemConfig)}
    for key in scenario:
        if key not in fields:
            _fail(text, f"scenario.{key}", "unknown scenario field")
    try:
        SystemConfig.from_dict(scenario)
    except (ConfigError, TypeError) as exc:
        raise SpecError(f"{source}: scenario: {exc}") from None

    sweep = raw.get("sweep", {})
    axis = sweep.get("axis", "none")
    if axis not in SWEEP_AXES:
        _fail(text, "sweep.axis", f"must be one of {sorted(SWEEP_AXES)}, got {axis!r}")
    values = sweep.get("values", [None] if axis == "none" else [])
    if axis != "none":
        if not isinstance(values, list) or not values:
            _fail(text, "sweep.values", "needs a nonempty list")
        try:
            values = [SWEEP_AXES[axis](v) for v in values]
        except (TypeError, ValueError):
            _fail(text, "sweep.values", f"entries must be numbers for axis {axis!r}")
    else:
        values = [None]

    run = raw.get("run", {})
    schemes = run.get("schemes", ["rsma_sic_radar"])
    if not isinstance(schemes, list) or not schemes:
        _fail(text, "run.schemes", "needs a nonempty list")
    for s in schemes:
        if s not in SCHEMES:
            _fail(text, "run.schemes", f"unknown scheme {s!r}; known: {sorted(SCHEMES)}")
    seeds = run.get("seeds", 5)
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        _fail(text, "run.seeds", "must be a count or a list of integers")
    if len(set(seeds)) != len(seeds):
        _fail(text, "run.seeds", "seeds must be distinct")
    frames = run.get("radar_frames", 0)
    if not isinstance(frames, int) or frames < 0:
        _fail(text, "run.radar_frames", "must be a non-negative integer")
    return ExperimentSpec(
        scenario=scenario, axis=axis, values=values, schemes=list(schemes), seeds=list(seeds),
        out=str(run.get("out", "results")), radar_frames=frames, auto_rth=bool(run.get("auto_rth", False)),
        name=str(raw.get("name", Path(source).stem)),
    )


def load_spec(path: str | Path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"{path}: {exc.strerror}") from None
    return parse_spec(text, str(path))
