import csv
import re
from pathlib import Path
from dataclasses import replace

import numpy as np
import pytest

from mmcompress import cli, runner
from mmcompress.config import ConfigError, ExperimentConfig, load, loads, parse_ints
from mmcompress.nn import Schedule, stream
from mmcompress.plots import emit_plots
from mmcompress.results import (
    CellResult,
    SweepResult,
    aggregate,
    emit_csv,
    load_csv,
    read_aggregate_rows,
)
from mmcompress.synthetic import SyntheticSpec

TINY = Schedule(batches=30, batch_size=64)


def _stub_metrics(cell):
    r = stream(cell.seed)
    return {"r_m": float(r.uniform()), "r_e": float(r.uniform())}


@pytest.fixture
def stubbed(monkeypatch):
    calls = []

    def fake(cell):
        calls.append(cell.key)
        return _stub_metrics(cell)

    monkeypatch.setattr(runner, "run_synthetic_cell", fake)
    return calls


def _cfg(**kw):
    base = dict(name="exp", kind="synthetic_je", sweep=tuple(range(1, 31)), repetitions=3,
                seed=5, schedule=TINY, eval_batches=50)
    base.update(kw)
    return ExperimentConfig(**base)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- results ---------------------------------------------------------------------

def test_empty_sweep_writes_header_only(tmp_path):
    path = emit_csv(SweepResult(), tmp_path / "r.csv")
    assert path.read_text() == "experiment,d_z,rep,metric,value,std,status\n"
    assert load_csv(path) == SweepResult()


def test_aggregate_single_rep_std_zero():
    a = aggregate(np.array([0.3]))
    assert (a.mean, a.std, a.n) == (0.3, 0.0, 1)
    b = aggregate(np.array([1.0, 2.0, 4.0]))
    assert b.std == pytest.approx(np.sqrt(((1 - 7 / 3) ** 2 + (2 - 7 / 3) ** 2
                                           + (4 - 7 / 3) ** 2) / 2))


def test_csv_round_trip_is_exact(tmp_path):
    res = SweepResult(experiments=["a", "b"])
    r = stream(0)
    for exp in ("a", "b"):
        for d_z in (1, 3):
            for rep in range(2):
                res.add(CellResult(exp, d_z, rep, {"x": float(r.uniform()) / 3,
                                                   "y": float("nan") if rep else 1e-300}))
    res.add(CellResult("b", 5, 0, {}, status="error: boom, with comma"))
    emit_csv(res, tmp_path / "r.csv")
    back = load_csv(tmp_path / "r.csv")
    assert back == res
    assert back.failed[0].status == "error: boom, with comma"


def test_row_counts_and_aggregates(tmp_path, stubbed):
    cfg = _cfg()
    runner.run_sweep(cfg, tmp_path)
    rows = _rows(tmp_path / "results.csv")
    cell_rows = [r for r in rows if r["rep"] != "all"]
    agg_rows = [r for r in rows if r["rep"] == "all"]
    per_metric = lambda rs, m: [r for r in rs if r["metric"] == m]  # noqa: E731
    for m in ("r_m", "r_e"):
        assert len(per_metric(cell_rows, m)) == 90
        assert len(per_metric(agg_rows, m)) == 30
    # aggregates against an independent recomputation from the cell rows
    for a in agg_rows:
        vals = [float(r["value"]) for r in cell_rows
                if r["d_z"] == a["d_z"] and r["metric"] == a["metric"]]
        assert float(a["value"]) == pytest.approx(np.mean(vals), rel=1e-12)
        assert float(a["std"]) == pytest.approx(np.std(vals, ddof=1), rel=1e-12)


def test_failed_cell_is_recorded_and_sweep_continues(tmp_path, monkeypatch):
    def flaky(cell):
        if cell.d_z == 2 and cell.rep == 1:
            raise RuntimeError("diverged")
        return _stub_metrics(cell)

    monkeypatch.setattr(runner, "run_synthetic_cell", flaky)
    res = runner.run_sweep(_cfg(sweep=(1, 2, 3)), tmp_path)
    assert [c.key for c in res.failed] == [("exp", 2, 1)]
    rows = _rows(tmp_path / "results.csv")
    err = [r for r in rows if r["metric"] == "error"]
    assert len(err) == 1 and err[0]["status"].startswith("error: RuntimeError: diverged")
    # the aggregate at d_z = 2 uses the two surviving repetitions
    agg = read_aggregate_rows(tmp_path / "results.csv")
    vals = [c.metrics["r_m"] for c in res.cells if c.d_z == 2 and c.ok]
    assert agg[("exp", 2, "r_m")][0] == pytest.approx(np.mean(vals))


# -- determinism and resume ------------------------------------------------------------

def test_seeds_do_not_depend_on_order_or_workers(tmp_path, stubbed):
    cfg = _cfg(sweep=(1, 2, 3, 4))
    a = runner.run_sweep(cfg, tmp_path / "a")
    b = runner.run_sweep(replace(cfg, sweep=(4, 3, 2, 1)), tmp_path / "b", jobs=2)
    strip = lambda r: sorted((c.key, c.metrics["r_m"]) for c in r.cells)  # noqa: E731
    assert strip(a) == strip(b)
    seeds = {runner.Cell(cfg, d, rep).seed for d in cfg.sweep for rep in range(3)}
    assert len(seeds) == 12


def test_resume_recomputes_only_missing_cell(tmp_path):
    runner.clear_cache()
    cfg = _cfg(sweep=(1, 3), repetitions=2)
    first = runner.run_sweep(cfg, tmp_path)
    path = tmp_path / "results.csv"
    lines = path.read_text().splitlines(keepends=True)
    drop = [i for i, line in enumerate(lines) if line.startswith("exp,3,1,")]
    path.write_text("".join(line for i, line in enumerate(lines) if i not in drop))
    runner.clear_cache()  # the recomputed cell must not lean on memoized state

    calls = []
    real = runner.run_synthetic_cell

    def spy(cell):
        calls.append(cell.key)
        return real(cell)

    runner.run_synthetic_cell, saved = spy, real
    try:
        second = runner.run_sweep(cfg, tmp_path, resume=True)
    finally:
        runner.run_synthetic_cell = saved
    assert calls == [("exp", 3, 1)]
    old = {c.key: c for c in first.cells}
    for c in second.cells:
        for m, v in c.metrics.items():
            if m != "seconds":
                assert v == old[c.key].metrics[m], (c.key, m)


def test_real_cell_reports_readouts():
    runner.clear_cache()
    res = runner.run_cell(runner.Cell(_cfg(), 4, 0))
    assert res.ok, res.status
    for m in ("r_m", "r_e", "r_e0", "r_e1", "r_m_se", "loss_initial", "seconds"):
        assert m in res.metrics
    assert 0 < res.metrics["r_m"] < 1.5


# -- plots -----------------------------------------------------------------------

def _points(svg, metric):
    pat = re.compile(rf'class="point" data-metric="{metric}" data-d_z="([^"]+)" '
                     r'data-mean="([^"]+)" data-std="([^"]+)"')
    return {int(d): (float(m), float(s)) for d, m, s in pat.findall(svg)}


def test_plot_points_equal_csv_aggregates(tmp_path, stubbed):
    cfg = _cfg(sweep=(1, 5, 12, 20))
    runner.run_sweep(cfg, tmp_path)
    (svg_path,) = emit_plots(load_csv(tmp_path / "results.csv"), tmp_path / "plots",
                             {"exp": cfg})
    svg = svg_path.read_text()
    agg = read_aggregate_rows(tmp_path / "results.csv")
    for m in ("r_m", "r_e"):
        pts = _points(svg, m)
        assert sorted(pts) == [1, 5, 12, 20]
        for d_z, (mean, std) in pts.items():
            assert (mean, std) == agg[("exp", d_z, m)]
    assert re.search(r'data-d_min="12"', svg)
    assert cfg.synthetic.d_min == 12


def test_single_point_plot(tmp_path):
    res = SweepResult(experiments=["one"])
    res.add(CellResult("one", 3, 0, {"r_m": 0.4, "r_e": 0.6}))
    (path,) = emit_plots(res, tmp_path)
    svg = path.read_text()
    assert _points(svg, "r_m") == {3: (0.4, 0.0)}
    assert "nan" not in svg.lower()


def test_robot_plots_include_vision_panel(tmp_path):
    res = SweepResult(experiments=["arm"])
    metrics = {f"{s}_{a}": 0.5 for s in ("pos", "vel", "ee") for a in ("l", "r")}
    metrics.update(vision_left=0.05, vision_right=0.01, chance_left=0.07, chance_right=0.07)
    res.add(CellResult("arm", 8, 0, metrics))
    paths = emit_plots(res, tmp_path)
    assert [p.name for p in paths] == ["arm.svg", "arm_vision.svg"]
    assert 'stroke-dasharray="2,3"' in paths[0].read_text()


# -- config ---------------------------------------------------------------------------

CONFIG_TEXT = """
[experiment]
name = grid
kind = synthetic_cm
sweep = 1..3, 8
repetitions = 2
seed = 11
grid = d_e: 4, 10

[schedule]
batches = 100
eval_batches = 60

[synthetic]
d_m = 2
n = 3
"""


def test_config_parsing_and_grid():
    cfg = loads(CONFIG_TEXT)
    assert cfg.sweep == (1, 2, 3, 8) and cfg.repetitions == 2 and cfg.seed == 11
    assert cfg.schedule.batches == 100 and cfg.eval_batches == 60
    assert cfg.synthetic == SyntheticSpec(d_m=2, n=3)
    subs = cfg.expand()
    assert [c.name for c in subs] == ["grid_d_e=4", "grid_d_e=10"]
    assert [c.synthetic.d_e for c in subs] == [4, 10]
    assert subs[1].synthetic.d_min == 2 + 3 * 10
    assert parse_ints("1..30") == tuple(range(1, 31))


def test_robot_config_sections():
    cfg = loads("[experiment]\nkind = robot_aes_cm\n[arm]\ndataset_size = 200\n"
                "links = 0.07, 0.07, 0.07\n[network]\nchannels = 8, 16\n")
    assert cfg.is_robot and cfg.option == "aes" and cfg.architecture == "cm"
    assert cfg.dataset_size == 200 and cfg.arm.links == (0.07, 0.07, 0.07)
    assert cfg.network.channels == (8, 16)


@pytest.mark.parametrize("text", [
    "[schedule]\nbatches = 3\n",
    "[experiment]\nkind = nonsense\n",
    "[experiment]\nsweep = 0..3\n",
    "[experiment]\ncolour = blue\n",
    "[experiment]\n[synthetic]\nd_q = 1\n",
    "[experiment]\n[schedule]\neval_batches = 10\n",
    "[experiment]\nkind = robot_default_je\n[arm]\nheight = 30\n",
    "[experiment]\nkind = robot_default_je\n[arm]\nlinks = 0.3, 0.3, 0.3\n",
    "[experiment]\n[synthetic]\nd_m = 0\nd_e = 0\n",
    "[experiment]\nkind = robot_default_je\n[arm]\ndataset_size = 105\n",
    "[experiment]\n[network]\n[plotting]\ncolour = red\n",
    "not a config",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        loads(text)


# -- command line -----------------------------------------------------------------------

def _write_config(tmp_path, body=""):
    path = tmp_path / "exp.cfg"
    path.write_text("[experiment]\nname = cli\nkind = synthetic_je\nsweep = 2, 4\n"
                    "repetitions = 1\n[schedule]\nbatches = 20\neval_batches = 50\n" + body)
    return path


def test_cli_run_plot_report(tmp_path, stubbed, capsys):
    cfg = _write_config(tmp_path)
    out = tmp_path / "out"
    assert cli.main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "results.csv").exists() and (out / "plots" / "cli.svg").exists()
    assert cli.main(["report", "--csv", str(out / "results.csv")]) == 0
    assert "cli" in capsys.readouterr().out
    assert cli.main(["plot", "--config", str(cfg), "--out", str(out),
                     "--plots", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "cli.svg").exists()


def test_cli_exit_codes(tmp_path, monkeypatch):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[experiment]\nkind = nope\n")
    assert cli.main(["run", "--config", str(bad)]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert cli.main(["report", "--csv", str(tmp_path / "missing.csv")]) == 2

    def boom(cell):
        raise FloatingPointError("nan loss")

    monkeypatch.setattr(runner, "run_synthetic_cell", boom)
    assert cli.main(["run", "--config", str(_write_config(tmp_path)),
                     "--out", str(tmp_path / "o")]) == 1
    assert cli.main(["report", "--csv", str(tmp_path / "o" / "results.csv")]) == 1


def test_cli_probe_exit_code(tmp_path, monkeypatch):
    from mmcompress import probes

    scores = {"proprio:pos_r": 0.0, "proprio:vel_r": 0.0, "proprio:ee_r": 0.0,
              "vision:pos_l": 0.1, "vision:ee_l": 0.1, "vision:pos_r": 0.5, "both:vel_l": 1.0}
    monkeypatch.setattr(probes, "probe_information_contract",
                        lambda *a, **k: probes.ProbeResult(dict(scores)))
    cfg = tmp_path / "arm.cfg"
    cfg.write_text("[experiment]\nkind = robot_default_je\n[arm]\ndataset_size = 100\n")
    assert cli.main(["probe", "--config", str(cfg)]) == 0
    scores["both:vel_l"] = 0.5
    assert cli.main(["probe", "--config", str(cfg)]) == 1


def test_cli_gen_data(tmp_path):
    cfg = tmp_path / "arm.cfg"
    cfg.write_text("[experiment]\nkind = robot_default_je\n[arm]\ndataset_size = 100\n")
    assert cli.main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "a"),
                     "--frames", "3"]) == 0
    assert (tmp_path / "a" / "arm_dataset.bin").exists()
    assert len(list((tmp_path / "a" / "frames").glob("*.pgm"))) == 3
    assert cli.main(["gen-data", "--config", str(_write_config(tmp_path)),
                     "--out", str(tmp_path / "s"), "--batches", "2"]) == 0
    assert (tmp_path / "s" / "synthetic.bin").exists()


def test_robot_cell_through_runner_uses_disk_cache(tmp_path):
    from mmcompress.architectures import RobotNetConfig

    cfg = ExperimentConfig(name="arm", kind="robot_aes_cm", sweep=(2,), repetitions=1, seed=3,
                           schedule=Schedule(batches=5, batch_size=16), dataset_size=200,
                           network=RobotNetConfig(channels=(2, 4), hidden=16))
    runner.clear_cache()
    first = runner.run_sweep(cfg, tmp_path / "a")
    assert not first.failed, first.failed
    cached = sorted(p.name.split("_")[0] for p in (tmp_path / "a" / "cache").glob("*.bin"))
    assert cached == ["aes", "robot"]
    assert (tmp_path / "a" / "maps" / "arm_dz2_rep0.pgm").exists()
    # a fresh process state reloads the cached networks instead of retraining
    runner.clear_cache()
    calls = []
    real = runner.train_aes_pre
    runner.train_aes_pre = lambda *a, **k: calls.append(1) or real(*a, **k)
    try:
        second = runner.run_sweep(cfg, tmp_path / "a", csv_name="again.csv")
    finally:
        runner.train_aes_pre = real
    assert calls == []
    a, b = first.cells[0].metrics, second.cells[0].metrics
    assert {k: v for k, v in a.items() if k != "seconds"} == {
        k: v for k, v in b.items() if k != "seconds"}
    for m in ("pos_l", "vel_l", "ee_l", "pos_r", "vel_r", "ee_r", "vision_left",
              "chance_left", "loss_final"):
        assert m in a


@pytest.mark.parametrize("path", sorted((Path(__file__).resolve().parents[1] / "configs").glob("*.ini")),
                         ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    cfg = load(path)
    assert cfg.name and cfg.sweep and cfg.repetitions == 3


def test_network_autoencoder_batches_parse():
    cfg = loads("[experiment]\nname = r\nkind = robot_aes_je\nsweep = 1\n"
                "[network]\nautoencoder_batches = 10000\nchannels = 8, 16\n")
    assert cfg.network.autoencoder_batches == 10000 and cfg.network.channels == (8, 16)
    with pytest.raises(ConfigError):
        loads("[experiment]\nname = r\nkind = robot_aes_je\nsweep = 1\n"
              "[network]\nautoencoder_batches = -5\n")
