import json
import subprocess
import sys

import pytest

from rsma_isac.harness import emit_figure_data, read_records, run
from rsma_isac.harness.cli import main
from rsma_isac.harness.figures import FIGURES, FigureError, mean_se
from rsma_isac.harness.records import SCHEMA_VERSION, RecordWriter, ResultRecord
from rsma_isac.harness.runner import n_workers, run_task
from rsma_isac.harness.spec import SCHEMES, SpecError, load_spec, parse_spec

SMALL = """
name = "small"
[scenario]
n_t = 2
n_r = 2
n_users = 2
[sweep]
axis = "bits"
values = [2, 4]
[run]
schemes = {schemes}
seeds = {seeds}
radar_frames = 2
"""


def small_spec(schemes='["rsma_sic_radar"]', seeds="[0, 2]"):
    return parse_spec(SMALL.format(schemes=schemes, seeds=seeds), "small.toml")


@pytest.fixture(scope="module")
def records(tmp_path_factory):
    out = tmp_path_factory.mktemp("runs")
    spec = small_spec('["rsma_sic_radar", "sdma", "oma"]')
    path = run(spec, out=out, trace_dir=out / "traces")
    return read_records(path), path, out


# ------------------------------------------------------------ spec

class TestSpec:
    def test_defaults_files_parse(self):
        for name in ("defaults", "ee_vs_snr", "ee_vs_bits", "ee_vs_rho", "objectives"):
            spec = load_spec(f"specs/{name}.toml")
            assert spec.tasks()

    def test_bits_sweep(self):
        assert load_spec("specs/ee_vs_bits.toml").values == [2, 4, 8]

    def test_defaults_mirror_scenario(self):
        cfg = load_spec("specs/defaults.toml").config(None, 0)
        assert (cfg.n_t, cfg.n_r, cfg.n_users, cfg.n_symbols) == (4, 4, 5, 1024)
        assert cfg.rho == 1e-2 and cfg.r_th == 1.0 and cfg.kappa == 0.27

    def test_task_order(self):
        spec = small_spec('["rsma_sic_radar", "sdma"]', "2")
        assert spec.tasks()[:3] == [("rsma_sic_radar", 2, 0), ("rsma_sic_radar", 2, 1), ("rsma_sic_radar", 4, 0)]
        assert spec.config(4, 1).bits == 4 and spec.config(4, 1).seed == 1

    @pytest.mark.parametrize("text,field", [
        ('[scenario]\nn_tx = 3\n', "scenario.n_tx (line 2)"),
        ('[sweep]\naxis = "power"\n', "sweep.axis (line 2)"),
        ('[sweep]\naxis = "rho"\nvalues = []\n', "sweep.values (line 3)"),
        ('[run]\nschemes = ["noma"]\n', "run.schemes (line 2)"),
        ('[run]\nseeds = [1, 1]\n', "run.seeds (line 2)"),
        ('[run]\nradar_frames = -1\n', "run.radar_frames (line 2)"),
        ('[extra]\nx = 1\n', "unknown section"),
    ])
    def test_diagnostics(self, text, field):
        with pytest.raises(SpecError, match=field.replace("(", r"\(").replace(")", r"\)")):
            parse_spec(text, "bad.toml")

    def test_invalid_scenario_value(self):
        with pytest.raises(SpecError, match="scenario"):
            parse_spec("[scenario]\nn_users = 0\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(SpecError):
            load_spec(tmp_path / "none.toml")

    def test_all_schemes_known(self):
        for kind, mode in SCHEMES.values():
            assert kind in {"maxmin", "total", "sumrate", "sdma", "oma"}


# ------------------------------------------------------------ records

class TestRecords:
    def test_round_trip(self):
        rec = ResultRecord(scheme="sdma", mode="sic_radar", objective="sdma", sweep_axis="rho", sweep_value=0.01,
                           seed=3, status="Optimal", ee=[1.0, 2.5], crb=float("nan"), power={"c": 0.0},
                           precoders={"p1": [[1.0, -0.5]]}, lambda_trace=[0.1, 0.2])
        back = ResultRecord.from_json(rec.to_json())
        assert back.crb is None
        back.crb = rec.crb
        assert back.to_json() == rec.to_json()

    def test_version_check(self):
        d = json.loads(ResultRecord(scheme="a", mode="b", objective="c", sweep_axis="none", sweep_value=None,
                                    seed=0, status="Optimal").to_json())
        d["schema_version"] = SCHEMA_VERSION + 1
        with pytest.raises(ValueError, match="schema version"):
            ResultRecord.from_json(json.dumps(d))

    def test_missing_field(self):
        with pytest.raises(ValueError, match="missing"):
            ResultRecord.from_json(json.dumps({"schema_version": SCHEMA_VERSION, "scheme": "x"}))

    def test_writer_header_and_append(self, tmp_path):
        w = RecordWriter(tmp_path / "r.jsonl")
        rec = ResultRecord(scheme="a", mode="b", objective="c", sweep_axis="none", sweep_value=None, seed=0,
                           status="Infeasible")
        w.append(rec)
        w.append(rec)
        lines = (tmp_path / "r.jsonl").read_text().splitlines()
        assert json.loads(lines[0]) == {"schema_version": SCHEMA_VERSION, "kind": "header"}
        assert len(read_records(tmp_path / "r.jsonl")) == 2

    def test_corrupt_line_diagnostic(self, tmp_path):
        p = tmp_path / "r.jsonl"
        p.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "kind": "header"}) + "\n"
                     + json.dumps({"schema_version": SCHEMA_VERSION}) + "\n")
        with pytest.raises(ValueError, match=":2:"):
            read_records(p)


# ------------------------------------------------------------ runs

class TestRun:
    def test_one_scheme_two_seeds(self, tmp_path):
        recs = read_records(run(small_spec(), out=tmp_path))
        assert len([r for r in recs if r.sweep_value == 2]) == 2

    def test_record_count_and_order(self, records):
        recs, _, _ = records
        assert [(r.scheme, r.sweep_value, r.seed) for r in recs] == small_spec(
            '["rsma_sic_radar", "sdma", "oma"]').tasks()

    def test_records_carry_results(self, records):
        recs, _, _ = records
        for r in recs:
            assert r.status in {"Optimal", "Infeasible", "NumericalFailure", "Error"}
            assert r.params["bits"] == r.sweep_value
            if r.ok:
                assert r.min_ee == pytest.approx(min(r.ee))
                assert r.iterations == len(r.lambda_trace) or r.scheme == "oma"
                assert set(r.power) == set(r.precoders)
        ok = [r for r in recs if r.ok and r.scheme == "rsma_sic_radar"]
        assert ok and all(r.radar["frames"] == 2 for r in ok)

    def test_rerun_identical(self, records, tmp_path):
        recs, _, _ = records
        again = read_records(run(small_spec('["rsma_sic_radar", "sdma", "oma"]'), out=tmp_path))
        for a, b in zip(recs, again):
            da, db = json.loads(a.to_json()), json.loads(b.to_json())
            da.pop("wall_time"), db.pop("wall_time")
            assert da == db

    def test_traces_written(self, records):
        _, _, out = records
        traces = sorted((out / "traces").glob("*.jsonl"))
        assert traces
        rows = [json.loads(line) for line in traces[0].read_text().splitlines()]
        assert rows[0]["iteration"] == 1

    def test_failure_becomes_record(self, monkeypatch):
        from rsma_isac.harness import runner

        def boom(*a, **k):
            raise RuntimeError("solver exploded")

        monkeypatch.setattr(runner, "solve_scheme", boom)
        rec = run_task((small_spec(), "sdma", 2, 0, None))
        assert rec.status == "Error" and "exploded" in rec.message

    def test_parallel_matches_serial(self, records, tmp_path, monkeypatch):
        recs, _, _ = records
        monkeypatch.setenv("RSMA_ISAC_WORKERS", "2")
        spec = small_spec('["rsma_sic_radar", "sdma", "oma"]')
        par = read_records(run(spec, out=tmp_path))
        for a, b in zip(recs, par):
            assert (a.scheme, a.seed, a.status, a.iterations) == (b.scheme, b.seed, b.status, b.iterations)
            if a.ok:
                assert a.min_ee == pytest.approx(b.min_ee, rel=1e-6)

    def test_bad_worker_env(self, monkeypatch):
        monkeypatch.setenv("RSMA_ISAC_WORKERS", "many")
        with pytest.raises(ValueError):
            n_workers()


# ------------------------------------------------------------ figures

class TestFigures:
    def test_mean_se(self):
        m, se = mean_se([1.0, 3.0, None, float("nan")])
        assert m == 2.0 and se == pytest.approx(1.0)
        assert mean_se([4.0]) == (4.0, None)

    def test_bits_figure(self, records, tmp_path):
        recs, _, _ = records
        path = emit_figure_data(recs, "ee_vs_bits", tmp_path)
        rows = path.read_text().splitlines()
        assert rows[0].startswith("scheme,bits,n,n_failed,min_ee_mean")
        assert len(rows) == 1 + 3 * 2

    def test_convergence_one_row_per_iteration(self, records, tmp_path):
        recs, _, _ = records
        path = emit_figure_data(recs, "convergence", tmp_path)
        lines = path.read_text().splitlines()[1:]
        ok = [r for r in recs if r.ok and r.scheme == "rsma_sic_radar" and r.sweep_value == 2]
        expect = max(len(r.lambda_trace) for r in ok)
        got = [ln for ln in lines if ln.startswith("rsma_sic_radar,2,")]
        assert len(got) == expect

    @pytest.mark.parametrize("figure", [f for f in FIGURES if f not in ("ee_vs_snr", "ee_vs_rho")])
    def test_emits(self, records, tmp_path, figure):
        recs, _, _ = records
        assert emit_figure_data(recs, figure, tmp_path).exists()

    def test_wrong_axis(self, records, tmp_path):
        recs, _, _ = records
        with pytest.raises(FigureError, match="snr_db"):
            emit_figure_data(recs, "ee_vs_snr", tmp_path)
        assert not (tmp_path / "ee_vs_snr.csv").exists()

    def test_empty_records(self, tmp_path):
        with pytest.raises(FigureError, match="empty"):
            emit_figure_data([], "ee_vs_bits", tmp_path)
        assert not list(tmp_path.iterdir())

    def test_missing_columns(self, records, tmp_path):
        recs, _, _ = records
        stripped = [ResultRecord.from_json(r.to_json()) for r in recs]
        for r in stripped:
            r.precoders = {}
        with pytest.raises(FigureError, match="precoders"):
            emit_figure_data(stripped, "beampattern", tmp_path)


# ------------------------------------------------------------ CLI

class TestCli:
    def test_bad_spec_exit_code(self, tmp_path, capsys):
        p = tmp_path / "bad.toml"
        p.write_text('[run]\nschemes = ["nope"]\n')
        assert main(["run", str(p)]) == 2
        assert "run.schemes (line 2)" in capsys.readouterr().err

    def test_run_and_emit(self, tmp_path):
        p = tmp_path / "s.toml"
        p.write_text(SMALL.format(schemes='["sdma"]', seeds="[0]"))
        out = subprocess.run([sys.executable, "-m", "rsma_isac.harness", "run", str(p), "--seeds", "0,2",
                              "--out", str(tmp_path)], capture_output=True, text=True, check=True)
        records_path = out.stdout.strip()
        recs = read_records(records_path)
        assert sorted({r.seed for r in recs}) == [0, 2]
        assert main(["emit", "ee_vs_bits", records_path, "--out", str(tmp_path)]) == 0
        assert (tmp_path / "ee_vs_bits.csv").exists()

    def test_emit_missing_file(self, tmp_path, capsys):
        assert main(["emit", "ee_vs_bits", str(tmp_path / "none.jsonl")]) == 2
        assert capsys.readouterr().err.startswith("error:")
