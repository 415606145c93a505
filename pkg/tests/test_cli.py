import csv
import io
import json
import math

import numpy as np
import pytest

from shrinkpca import (
    ConditioningError, GuardViolation, InputError, NoGapError, ShrinkPcaError, StepSizeError,
    ToleranceError, pm_iterations,
)
from shrinkpca import cli
from shrinkpca.cli import RunConfig, bench, main, render, render_bench, run
from shrinkpca.ingest import (
    ParseError, ingest, parse_csv, parse_libsvm, parse_spectrum, parse_synthetic, synthesize,
)

GEOM = "plant d=50 n=500 spectrum=geometric(0.9,0.5,50) seed=0"
SMALL = "plant d=6 n=60 spectrum=values(0.6,0.3,0.1) seed=1"


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_libsvm_unit_row(tmp_path):
    X = ingest(write(tmp_path, "a.svm", "1 1:0.6 2:0.8\n"))
    np.testing.assert_array_equal(X.csr.toarray(), [[0.6, 0.8]])
    assert X.scale == 1.0


def test_libsvm_scaled_row(tmp_path):
    X = ingest(write(tmp_path, "b.svm", "0 3:5.0\n"))
    np.testing.assert_array_equal(X.csr.toarray(), [[0.0, 0.0, 1.0]])
    assert X.scale == 5.0
    np.testing.assert_array_equal(X.dense_covariance(original_units=True), np.diag([0, 0, 25.0]))


def test_libsvm_decreasing_indices():
    with pytest.raises(ParseError, match="line 1") as info:
        parse_libsvm(["1 2:1 1:1"])
    assert info.value.line == 1


def test_libsvm_details():
    m = parse_libsvm(["# header", "", "3:1 5:2  # trailing", "-1\t1:0 2:4"])
    assert m.shape == (2, 5)
    np.testing.assert_array_equal(m.toarray(), [[0, 0, 1, 0, 2], [0, 4, 0, 0, 0]])
    assert parse_libsvm(["1 1:1"], dim=4).shape == (1, 4)
    bad = [["1 0:1"], ["1 1:x"], ["1 1"], ["1 1:nan"], []]
    for lines in bad:
        with pytest.raises(ParseError):
            parse_libsvm(lines)
    with pytest.raises(ParseError, match="line 2"):
        parse_libsvm(["1 1:1", "1 2:1 2:3"])
    with pytest.raises(ParseError):
        parse_libsvm(["1 5:1"], dim=3)


def test_csv_parsing(tmp_path):
    a = parse_csv(["x,y", "3,4", "", "0,1"])
    np.testing.assert_array_equal(a, [[3, 4], [0, 1]])
    with pytest.raises(ParseError, match="line 3"):
        parse_csv(["1,2", "3,4", "5"])
    with pytest.raises(ParseError, match="line 2"):
        parse_csv(["1,2", "a,b"])
    X = ingest(write(tmp_path, "c.csv", "3,4\n0,1\n"), "csv")
    assert X.scale == 5.0


def test_ingest_errors(tmp_path):
    with pytest.raises(InputError):
        ingest(str(tmp_path / "missing.svm"))
    with pytest.raises(InputError):
        ingest(write(tmp_path, "x", "1 1:1\n"), "arff")


def test_synthetic_language():
    src = parse_synthetic("plant d=5 n=20 spectrum=geometric(0.8,0.2,3) seed=4")
    np.testing.assert_allclose(src["spectrum"], [0.8, 0.2, 0.05])
    assert src["seed"] == 4
    np.testing.assert_allclose(parse_spectrum("linear(0.9,0.1,5)"), [0.9, 0.7, 0.5, 0.3, 0.1])
    np.testing.assert_array_equal(parse_spectrum("values(0.5,0.2)"), [0.5, 0.2])
    for bad in ["plant d=5 n=20", "plant d=5 n=20 spectrum=bogus(1)", "plant d=x n=20 spectrum=values(1)",
                "plant d=1 n=20 spectrum=values(0.5,0.4)", "plant d=5 n=20 spectrum=values(1) k=3",
                "plnt d=5"]:
        with pytest.raises(InputError):
            parse_synthetic(bad)
    assert synthesize("plant d=3 n=10 spectrum=values(0.5)").d == 3


def test_config_validation():
    with pytest.raises(InputError, match="delta-hat"):
        RunConfig(GEOM, mode="gap").validate()
    RunConfig(GEOM, mode="gapfree").validate()
    RunConfig(GEOM, mode="gap", search_gap=True).validate()
    for kw in [{"mode": "fast"}, {"inner": "lbfgs"}, {"out_format": "xml"}, {"epsilon": 0.0},
               {"delta_hat": 2.0}, {"tol": 0.0}, {"schedule": "lazy"}]:
        with pytest.raises(InputError):
            RunConfig(GEOM, **{"mode": "gapfree", **kw}).validate()


def test_run_gap_svrg_example():
    rep = run(RunConfig(GEOM, mode="gap", inner="svrg", epsilon=1e-3, p=0.1, delta_hat=0.3, seed=7))
    assert rep.exit_code == 0, rep.error
    assert rep.oracle["alignment"] >= 0.999
    c = rep.counters
    assert c.loops == len(rep.deltas) and c.inner_calls > 0
    assert c.svrg_epochs > 0 and c.component_grads > 0 and c.full_grads > 0
    assert 0.0 <= rep.oracle["alignment"] <= 1.0


def test_power_baseline_matvecs_exceed_gap_inner_calls():
    # the power baseline's matvec count should dominate the gap run's inner-solve count
    gap = run(RunConfig(GEOM, mode="gap", inner="svrg", epsilon=1e-3, delta_hat=0.3, seed=7))
    base = run(RunConfig(GEOM, mode="power-baseline", epsilon=1e-3, delta_hat=0.3, seed=7))
    assert base.exit_code == 0 and gap.exit_code == 0
    print(f"power-baseline matvecs {base.counters.matvecs}, gap inner calls {gap.counters.inner_calls}")
    assert base.counters.matvecs >= gap.counters.inner_calls


def test_power_baseline_report():
    rep = run(RunConfig(GEOM, mode="power-baseline", epsilon=1e-3, delta_hat=0.3, seed=7))
    T = pm_iterations("accurate", 50, 0.1, 1e-3, kappa=1 / 0.3)
    assert rep.counters.matvecs == T == rep.m2
    assert rep.oracle["alignment"] >= 0.999
    assert rep.oracle["steps_to_target"] <= T


def test_gapfree_subsample_size_recorded():
    src = "plant d=20 n=100000 spectrum=linear(0.6,0.05,20) seed=0"
    rep = run(RunConfig(src, mode="gapfree", inner="exact", epsilon=0.05, p=0.1, subsample=True))
    assert rep.exit_code == 0, rep.error
    assert rep.subsample_size == math.ceil(8 * math.log(2 * 20 / 0.1) / 0.05**2) == 19173
    assert rep.n == 100000
    assert rep.oracle["rayleigh_gap"] <= 0.05


def test_reports_are_byte_identical():
    cfg = RunConfig(SMALL, mode="gap", inner="svrg", delta_hat=0.2, seed=3)
    for fmt in ("json", "csv"):
        assert render(run(cfg), fmt) == render(run(cfg), fmt)


def test_json_round_trip():
    rep = run(RunConfig(SMALL, mode="gap", inner="svrg", delta_hat=0.2, seed=3))
    back = json.loads(render(rep, "json"))
    assert back["schema_version"] == 1
    assert "wall_time" not in back
    assert back["rayleigh"] == rep.rayleigh
    assert back["deltas"] == rep.deltas
    assert back["oracle"] == rep.oracle
    assert back["w_f"] == rep.w_f
    assert back["counters"]["passes"] == rep.counters.passes


def test_csv_round_trip():
    rep = run(RunConfig(SMALL, mode="gap", inner="svrg", delta_hat=0.2, seed=3))
    rows = list(csv.reader(io.StringIO(render(rep, "csv"))))
    row = dict(zip(rows[0], rows[1]))
    for key, val in rep.flat().items():
        if isinstance(val, float):
            assert float(row[key]) == val


def test_timing_only_on_request():
    rep = run(RunConfig(SMALL, mode="gapfree", inner="exact", epsilon=0.1, timing=True))
    assert rep.wall_time is not None and rep.wall_time >= 0


def _exit(**kw):
    return run(RunConfig(**kw)).exit_code


def test_exit_codes(tmp_path, monkeypatch):
    assert _exit(input=SMALL, mode="gapfree", inner="exact", epsilon=0.1) == 0
    assert _exit(input=str(tmp_path / "nope.svm"), mode="gapfree") == 2
    assert _exit(input=write(tmp_path, "bad.svm", "1 2:1 1:1\n"), mode="gapfree") == 2
    assert _exit(input=SMALL, mode="gap") == 2
    for exc, code in [(NoGapError, 3), (ToleranceError, 4), (ConditioningError, 4),
                      (StepSizeError, 4), (GuardViolation, 5), (ShrinkPcaError, 1)]:
        def boom(*a, _exc=exc, **k):
            raise _exc("injected")
        monkeypatch.setattr(cli, "_execute", boom)
        rep = run(RunConfig(SMALL, mode="gapfree"))
        assert rep.exit_code == code and rep.status == exc.__name__


def test_no_gap_exit_from_search():
    src = "plant d=4 n=40 spectrum=values(0.25,0.25,0.25,0.25) seed=0"
    rep = run(RunConfig(src, mode="gap", inner="exact", search_gap=True))
    assert rep.exit_code == 3
    assert "gap-free" in rep.error


def test_main_run_writes_report(tmp_path, capsys):
    out = tmp_path / "r.json"
    code = main(["run", "--input", SMALL, "--mode", "gap", "--delta-hat", "0.2", "--inner",
                 "exact", "--out", str(out)])
    assert code == 0
    assert json.loads(out.read_text())["status"] == "ok"
    assert main(["run", "--input", SMALL, "--mode", "gap"]) == 2
    assert "delta-hat" in capsys.readouterr().err
    assert main(["run", "--bogus"]) == 2


def test_bench_shape_and_order():
    cfgs = [RunConfig(SMALL, mode="power-baseline", delta_hat=0.2, epsilon=1e-3),
            RunConfig(SMALL, mode="gap", inner="exact", delta_hat=0.2, epsilon=1e-3)]
    rows, summary = bench(cfgs, repeats=5, workers=1)
    assert len(rows) == 10
    assert [r["config"] for r in rows] == [0] * 5 + [1] * 5
    assert [r["seed"] for r in rows[:5]] == [0, 1, 2, 3, 4]
    assert len(summary) == 2 and all(s["runs"] == 5 for s in summary)
    text = render_bench(rows, summary)
    assert "# summary" in text
    par, _ = bench(cfgs, repeats=5, workers=3)
    strip = lambda rs: [{k: v for k, v in r.items() if k != "wall_time"} for r in rs]
    assert strip(par) == strip(rows)


def test_bench_records_failures():
    cfgs = [RunConfig(SMALL, mode="gapfree", inner="exact", epsilon=0.1),
            RunConfig("plant d=2 n=1 spectrum=values(0.5)", mode="gapfree")]
    rows, summary = bench(cfgs, repeats=2, workers=1)
    assert [r["exit_code"] for r in rows] == [0, 0, 2, 2]
    assert summary[1]["ok"] == 0


def test_bench_needs_configs():
    with pytest.raises(InputError):
        bench([], repeats=1)
    with pytest.raises(InputError):
        bench([RunConfig(SMALL)], repeats=0)


def test_worker_env(monkeypatch):
    monkeypatch.setenv("SHRINKPCA_WORKERS", "3")
    assert cli.default_workers() == 3
    monkeypatch.setenv("SHRINKPCA_WORKERS", "many")
    with pytest.raises(InputError):
        cli.default_workers()


def test_main_bench(tmp_path):
    out = tmp_path / "b.csv"
    code = main(["bench", "--input", SMALL, "--mode", "gapfree", "--mode", "gap", "--delta-hat",
                 "0.2", "--inner", "exact", "--epsilon", "0.1", "--repeats", "2", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("config,mode")
    assert len([l for l in lines[1:5] if l]) == 4
