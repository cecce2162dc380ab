"""Result records persisted as schema-versioned JSON lines."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1


def _clean(v):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python numbers."""
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if hasattr(v, "tolist"):
        return _clean(v.tolist())
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


@dataclass
class ResultRecord:
    scheme: str
    mode: str
    objective: str
    sweep_axis: str
    sweep_value: float | int | None
    seed: int
    status: str
    params: dict = field(default_factory=dict)
    lam: float | None = None
    ee: list = field(default_factory=list)
    min_ee: float | None = None
    total_ee: float | None = None
    sum_rate: float | None = None
    crb: float | None = None
    power: dict = field(default_factory=dict)  # precoder name -> ||Delta p||^2
    precoders: dict = field(default_factory=dict)  # name -> [[re, im], ...]
    iterations: int = 0
    lambda_trace: list = field(default_factory=list)
    objective_trace: list = field(default_factory=list)
    config: dict = field(default_factory=dict)  # full scenario config of the run
    wall_time: float = 0.0
    radar: dict | None = None
    message: str = ""
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(_clean(dataclasses.asdict(self)), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        d = json.loads(line)
        ver = d.get("schema_version")
        if ver != SCHEMA_VERSION:
            raise ValueError(f"unsupported record schema version {ver!r}")
        names = {f.name for f in dataclasses.fields(cls)}
        missing = [f.name for f in dataclasses.fields(cls)
                   if f.name not in d and f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
        if missing:
            raise ValueError(f"record is missing field(s) {missing}")
        return cls(**{k: v for k, v in d.items() if k in names})

    @property
    def ok(self) -> bool:
        return self.status == "Optimal"


class RecordWriter:
    """Append-only JSON-lines file; the header line carries the schema version."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists() or self.path.stat().st_size == 0:
            self.path.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "kind": "header"}) + "\n")

    def append(self, rec: ResultRecord) -> None:
        with open(self.path, "a") as fh:
            fh.write(rec.to_json() + "\n")


def read_records(path: str | Path) -> list[ResultRecord]:
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        d = json.loads(line)
        if d.get("kind") == "header":
            if d.get("schema_version") != SCHEMA_VERSION:
                raise ValueError(f"{path}: unsupported schema version {d.get('schema_version')!r}")
            continue
        try:
            out.append(ResultRecord.from_json(line))
        except (ValueError, TypeError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out
