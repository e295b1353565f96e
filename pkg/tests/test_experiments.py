import csv
import json

import numpy as np
import pytest

from rsma_ris_swipt.cli import main
from rsma_ris_swipt.experiments import (SweepSpec, default_weight_grid, pareto_frontier, run_convergence_trace,
                                        run_rate_energy_sweep, run_rate_region_sweep, summarize_rows,
                                        verify_solutions)
from rsma_ris_swipt.scenario import ScenarioConfig


def _strip_runtime(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row.pop("runtime_s")
    return rows


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec("fig9")
    with pytest.raises(ValueError):
        SweepSpec("rate_energy", eth_grid=())
    with pytest.raises(ValueError):
        SweepSpec("rate_energy", realizations=0)
    with pytest.raises(ValueError):
        SweepSpec("rate_energy", weight_grid=((1.0,),))
    with pytest.raises(ValueError):
        SweepSpec("convergence", realizations=3)
    with pytest.raises(ValueError):
        SweepSpec("rate_region", config=ScenarioConfig(num_irs=3))
    assert SweepSpec("rate-energy").experiment == "rate_energy"


def test_default_weight_grid():
    grid = default_weight_grid(13)
    assert (1.0, 1.0) in grid
    assert len(grid) == 25
    assert all((b, a) in grid for a, b in grid)
    assert min(b for a, b in grid if a == 1.0) == pytest.approx(1e-3)


def test_pareto_frontier():
    pts = [(1, 1), (2, 0.5), (0.5, 2), (0.9, 0.9), (2, 0.4)]
    assert pareto_frontier(pts) == [(0.5, 2.0), (1.0, 1.0), (2.0, 0.5)]
    assert pareto_frontier([]) == []


def test_rate_energy_outputs_and_determinism(tmp_path):
    kw = dict(eth_grid=(0.0, 20e-6), strategies=("RSMA+RIS", "SDMA"), realizations=2, seed=3)
    a = SweepSpec("rate_energy", output=tmp_path / "a", **kw)
    rows = run_rate_energy_sweep(a)
    assert len(rows) == 2 * 2 * 2
    assert all(r.converged and r.feasible for r in rows)
    names = {p.name for p in (tmp_path / "a").iterdir()}
    assert {"results.csv", "summary.json", "manifest.json", "solutions.jsonl", "trace_RSMA_RIS.csv",
            "trace_SDMA.csv"} <= names
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 3 and len(manifest["config_hash"]) == 64
    assert verify_solutions(a) == []

    b = SweepSpec("rate_energy", output=tmp_path / "b", **kw)
    run_rate_energy_sweep(b)
    assert _strip_runtime(tmp_path / "a" / "results.csv") == _strip_runtime(tmp_path / "b" / "results.csv")

    c = SweepSpec("rate_energy", output=tmp_path / "c", workers=2, **kw)
    run_rate_energy_sweep(c)
    assert _strip_runtime(tmp_path / "a" / "results.csv") == _strip_runtime(tmp_path / "c" / "results.csv")


def test_summary_counts_failures():
    spec = SweepSpec("rate_energy", eth_grid=(0.0,), strategies=("SDMA",), realizations=3)
    rows = run_rate_energy_sweep(spec)
    rows[0].converged = False
    cell = summarize_rows(rows, 2)["cells"][0]
    assert cell["runs"] == 3 and cell["converged"] == 2 and cell["not_converged"] == 1
    assert cell["wsr_mean"] == pytest.approx(np.mean([r.wsr for r in rows[1:]]))


def test_unreachable_threshold_is_recorded_not_raised():
    cfg = ScenarioConfig(tx_power=1e-6)
    spec = SweepSpec("rate_energy", eth_grid=(1.0,), strategies=("SDMA",), realizations=1, config=cfg)
    rows = run_rate_energy_sweep(spec)
    assert rows[0].status == "infeasible" and not rows[0].converged


def test_rate_region_frontier_and_dominance():
    grid = default_weight_grid(3)
    spec = SweepSpec("rate_region", eth_grid=(20e-6,), weight_grid=grid, strategies=("RSMA+RIS", "SDMA"),
                     realizations=2)
    rows = run_rate_region_sweep(spec)
    summary = summarize_rows(rows, 2)
    front = summary["frontiers"]
    equal = [c for c in summary["cells"] if c["strategy"] == "SDMA" and c["u1"] == c["u2"]][0]
    assert any(a >= equal["rate_1_mean"] - 1e-9 and b >= equal["rate_2_mean"] - 1e-9 for a, b in front["SDMA"])
    by_key = {(r.u1, r.u2, r.realization, r.strategy): r.wsr for r in rows}
    for (u1, u2, real, strat), value in by_key.items():
        if strat == "SDMA":
            assert by_key[(u1, u2, real, "RSMA+RIS")] >= value - 1e-6


def test_exchange_symmetry_of_rate_region():
    cfg = ScenarioConfig(ir_region=((20.0, 0.0), 0.0))
    spec = SweepSpec("rate_region", eth_grid=(0.0,), weight_grid=((1.0, 0.1), (0.1, 1.0)), strategies=("SDMA",),
                     realizations=30, config=cfg)
    rows = run_rate_region_sweep(spec)
    r1 = np.array([r.rates[0] for r in rows if r.u2 == 0.1])
    r2 = np.array([r.rates[1] for r in rows if r.u1 == 0.1])
    err = np.sqrt(r1.var(ddof=1) / r1.size + r2.var(ddof=1) / r2.size)
    assert abs(r1.mean() - r2.mean()) <= 3 * err


def test_convergence_traces():
    spec = SweepSpec("convergence", eth_grid=(20e-6,), realizations=1)
    traces = run_convergence_trace(spec)
    assert set(traces) == {"RSMA+RIS", "RSMA", "SDMA+RIS", "SDMA", "NOMA+RIS", "NOMA"}
    for name, trace in traces.items():
        assert all(b >= a - 1e-6 for a, b in zip(trace, trace[1:]))
        assert len(trace) - 1 <= 30
        if "RIS" not in name:
            assert len(trace) == 2


def test_cli_sweep(tmp_path, capsys):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("power: {tx_power_dbw: 10}\nseed: 4\n")
    code = main(["sweep", "--experiment", "rate-energy", "--config", str(cfg), "--strategies", "SDMA,RSMA",
                 "--eth-grid", "0,20", "--realizations", "1", "--out", str(tmp_path / "out")])
    assert code == 0
    out = capsys.readouterr().out
    assert '"feasibility_failures": 0' in out
    rows = list(csv.DictReader(open(tmp_path / "out" / "results.csv")))
    assert [r["strategy"] for r in rows] == ["SDMA", "RSMA", "SDMA", "RSMA"]
    assert json.loads((tmp_path / "out" / "manifest.json").read_text())["seed"] == 4


def test_cli_overrides_and_errors(tmp_path, capsys):
    code = main(["sweep", "--experiment", "convergence", "--set", "power.tx_power_dbm=40", "--strategies", "SDMA",
                 "--out", str(tmp_path / "conv")])
    assert code == 0
    manifest = json.loads((tmp_path / "conv" / "manifest.json").read_text())
    assert manifest["config"]["tx_power"] == pytest.approx(10.0)
    assert main(["sweep", "--experiment", "rate-energy", "--set", "power.bogus=1", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["sweep", "--experiment", "fig9", "--out", str(tmp_path)])
