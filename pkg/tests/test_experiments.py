import json
from fractions import Fraction

import numpy as np
import pytest

from subhomog.cli import main
from subhomog.experiments import (ExperimentConfig, execute, load_config, parse_config_text, preset, read_table,
                                  run_ideal_sweep, run_localized_sweep, run_weighted_sweep)
from subhomog.grid import AlignmentError
from subhomog.plots import emit_plots, slope_guide


def _small(kind="ideal-sweep", **kw):
    base = dict(kind=kind, d=1, levels=7, coarse_exponents=[2, 3], ratios=["1/2"], seed=3, replicates=2)
    base.update(kw)
    return ExperimentConfig(**base)


def test_singleton_config_gives_one_row():
    res = run_ideal_sweep(_small(coarse_exponents=[3], replicates=1))
    assert len(res.rows) == 1
    row = res.rows[0]
    assert row["H"] == 0.125 and row["h"] == 0.0625 and row["ratio"] == "1/2" and row["l"] == "inf"
    assert row["e1"] > 0 and row["e0"] > 0


def test_execute_is_byte_deterministic_and_manifest_replays(tmp_path):
    cfg = _small()
    m1 = execute(cfg, tmp_path / "a")
    m2 = execute(cfg, tmp_path / "b")
    assert (tmp_path / "a/ideal.csv").read_bytes() == (tmp_path / "b/ideal.csv").read_bytes()
    assert m1.outputs == ["ideal.csv"] and m1.seeds == m2.seeds
    replay = ExperimentConfig.from_dict(load_config(tmp_path / "a/ideal_manifest.json"))
    execute(replay, tmp_path / "c")
    assert (tmp_path / "c/ideal.csv").read_bytes() == (tmp_path / "a/ideal.csv").read_bytes()
    assert json.loads((tmp_path / "a/ideal_manifest.json").read_text())["seeds"]["rhs_streams"] == [1, 2]


def test_threads_do_not_change_results():
    assert run_ideal_sweep(_small(threads=2)).rows == run_ideal_sweep(_small()).rows


def test_misaligned_config_aborts_before_solving():
    cfg = _small(levels=5, coarse_exponents=[2, 5], ratios=["3/4"])
    with pytest.raises(AlignmentError, match="H = 2\\^-5"):
        cfg.validate()
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"kind": "ideal-sweep", "bogus": 1})
    with pytest.raises(ValueError):
        _small(kind="nonsense").validate()


def test_tampered_csv_fails_revalidation(tmp_path):
    execute(_small(), tmp_path)
    path = tmp_path / "ideal.csv"
    assert len(read_table(path)[1]) == 4
    text = path.read_text()
    path.write_text(text.replace(",1/2,", ",1/4,", 1))
    with pytest.raises(ValueError, match="ratio"):
        read_table(path)
    path.write_text(text.replace("0.0625", "0.05", 1))
    with pytest.raises(ValueError):
        read_table(path)
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        read_table(path)


def test_saturated_localized_rows_match_ideal():
    ideal = run_ideal_sweep(_small(coarse_exponents=[3]))
    loc = run_localized_sweep(_small(kind="localized-sweep", coarse_exponents=[3], layers=[7]))
    for a, b in zip(ideal.rows, loc.rows):
        assert b["e1"] == pytest.approx(a["e1"], abs=1e-6)
        assert b["e0"] == pytest.approx(a["e0"], abs=1e-6)
        assert b["e1_galerkin"] == pytest.approx(a["e1"], abs=1e-6)


def test_presets():
    cfg = preset("ideal-sweep", 1, "paper")
    cfg.validate()
    assert len(cfg.points()) * cfg.replicates == 24
    w = preset("weighted-sweep", 2, "paper")
    w.validate()
    assert 2 * len(w.points()) == 10
    for name in ("desk", "paper"):
        for kind, d in (("ideal-sweep", 2), ("localized-sweep", 1), ("localized-sweep", 2), ("decay", 2)):
            preset(kind, d, name).validate()
    with pytest.raises(ValueError):
        preset("weighted-sweep", 1)


def test_weighted_sweep_rows():
    cfg = ExperimentConfig(kind="weighted-sweep", d=2, levels=5, coarse_exponents=[1],
                           subsample_exponents=[2, 3], seed=1)
    rows = run_weighted_sweep(cfg).rows
    assert [(r["variant"], r["h"]) for r in rows] == [("unit", 0.25), ("weighted", 0.25),
                                                      ("unit", 0.125), ("weighted", 0.125)]
    assert all(r["gamma"] == 1.0 for r in rows)


def test_config_text():
    vals = parse_config_text("[experiment]\nkind = ideal-sweep\nd = 1\ncoarse_exponents = 2 3\nratios = 1 1/2\n")
    assert vals["coarse_exponents"] == [2, 3] and vals["ratios"] == [Fraction(1), Fraction(1, 2)]
    assert parse_config_text("[experiment]\nlevels = 9   # fine grid\n")["levels"] == 9
    with pytest.raises(ValueError, match="section"):
        parse_config_text("[other]\nx = 1\n")


def test_cli_runs_and_plots(tmp_path, capsys):
    ini = tmp_path / "run.ini"
    ini.write_text("[experiment]\nlevels = 7\ncoarse_exponents = 2 3 4\nratios = 1 1/2\n")
    assert main(["ideal", "--config", str(ini), "--out", str(tmp_path / "out"), "--seed", "4"]) == 0
    assert read_table(tmp_path / "out/ideal.csv")[1][0]["seed"] == 4
    assert main(["plot", str(tmp_path / "out/ideal.csv"), "--out", str(tmp_path / "fig")]) == 0
    assert sorted(p.name for p in (tmp_path / "fig").iterdir()) == ["ideal_energy.svg", "ideal_l2.svg"]
    capsys.readouterr()


def test_cli_reports_errors_as_json(tmp_path, capsys):
    ini = tmp_path / "bad.ini"
    ini.write_text("[experiment]\nlevels = 4\ncoarse_exponents = 2\nratios = 3/4\n")
    assert main(["ideal", "--config", str(ini), "--out", str(tmp_path)]) == 1
    err = capsys.readouterr().err.strip()
    assert err.startswith("error: ")
    assert json.loads(err[len("error: "):])["type"] == "AlignmentError"
    assert not (tmp_path / "ideal.csv").exists()


def test_plots_for_every_kind(tmp_path):
    execute(_small(kind="localized-sweep", layers=[1]), tmp_path)
    execute(ExperimentConfig(kind="decay", d=2, levels=5, coarse_exponents=[2], ratios=["1/2"]), tmp_path)
    out = emit_plots([tmp_path / "localized.csv", tmp_path / "decay.csv"], tmp_path / "fig")
    assert len(out) == 5 and all(p.stat().st_size > 0 for p in out)


def test_slope_guides_exact():
    x = 2.0 ** -np.arange(2, 7)
    for order in (1, 2):
        y = slope_guide(x, order, x[0], 0.3)
        assert y[0] == 0.3
        np.testing.assert_allclose(np.diff(np.log(y)) / np.diff(np.log(x)), order, rtol=1e-14)


def test_plot_of_empty_csv_fails_without_output(tmp_path):
    (tmp_path / "ideal.csv").write_text("")
    with pytest.raises(ValueError):
        emit_plots([tmp_path / "ideal.csv"], tmp_path / "fig")
    assert not list((tmp_path / "fig").glob("*.svg"))
