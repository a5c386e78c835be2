import csv
import json
from pathlib import Path

import numpy as np
import pytest

from invdemand.experiment import (
    BUNDLED_CONFIG,
    ExperimentReport,
    ParseError,
    ValidationError,
    emit_csv,
    load_config,
    parse_config,
    run_experiment,
    save_config,
    table_header,
)

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def raw():
    return json.loads(BUNDLED_CONFIG.read_text())


@pytest.fixture(scope="module")
def report():
    return run_experiment(load_config(BUNDLED_CONFIG))


def read_columns(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_bundled_config_loads():
    cfg = load_config(BUNDLED_CONFIG)
    assert [s.name for s in cfg.settings] == ["C1_k100", "C1_k110", "C1_k111", "C2_k110", "C3_k100"]
    assert cfg.weight_rows().shape == (4, 12)
    np.testing.assert_allclose(cfg.weight_rows().reshape(4, 2, 6).sum(-1), 1.0, atol=1e-12)


def test_missing_sigma_named(raw):
    bad = dict(raw)
    del bad["sigma"]
    with pytest.raises(ValidationError) as exc:
        parse_config(bad)
    assert ("sigma", "missing") in exc.value.errors


def test_several_errors_reported_together(raw):
    bad = json.loads(json.dumps(raw))
    bad["sigma"] = -1
    bad["settings"][0]["kind"] = "C9"
    bad["network"]["arcs"][1]["velocity"] = "fast"
    with pytest.raises(ValidationError) as exc:
        parse_config(bad)
    paths = {p for p, _ in exc.value.errors}
    assert {"sigma", "settings[0].kind", "network.arcs[1].velocity"} <= paths


def test_cfl_incompatible_dt(raw):
    bad = dict(raw, dt=0.3)
    with pytest.raises(ValidationError) as exc:
        parse_config(bad)
    assert [p for p, _ in exc.value.errors] == ["dt"]


def test_c3_requires_t_hat(raw):
    bad = json.loads(json.dumps(raw))
    del bad["settings"][4]["t_hat"]
    with pytest.raises(ValidationError) as exc:
        parse_config(bad)
    assert exc.value.errors[0][0] == "settings[4].t_hat"


def test_wrong_profile_count(raw):
    bad = json.loads(json.dumps(raw))
    bad["beta_rows"]["2"] = [row[:5] for row in bad["beta_rows"]["2"]]
    with pytest.raises(ValidationError) as exc:
        parse_config(bad)
    assert exc.value.errors[0][0] == "beta_rows.2"


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ParseError):
        load_config(tmp_path / "absent.json")
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(ParseError):
        load_config(tmp_path / "x.json")
    (tmp_path / "y.json").write_text("[1, 2]")
    with pytest.raises(ParseError):
        load_config(tmp_path / "y.json")


def test_config_round_trip(tmp_path):
    cfg = load_config(BUNDLED_CONFIG)
    save_config(cfg, tmp_path / "c.json")
    assert load_config(tmp_path / "c.json") == cfg


def test_empty_report_writes_header_only(tmp_path):
    rep = ExperimentReport(demand_arcs=[2, 3], m=6)
    files = emit_csv(rep, tmp_path)
    assert files == [tmp_path / "table1.csv"]
    lines = (tmp_path / "table1.csv").read_text().splitlines()
    assert lines == [",".join(table_header(rep))]
    assert lines[0].startswith("setting,kappa,beta2_1,")


def test_table_has_one_row_per_setting(report, tmp_path):
    emit_csv(report, tmp_path)
    with open(tmp_path / "table1.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["setting"] for r in rows] == ["C1_k100", "C1_k110", "C1_k111", "C2_k110", "C3_k100"]
    assert rows[0]["kappa"] == "[1,0,0]"
    for r in rows:
        for a in (2, 3):
            # twelve printed digits per entry
            assert sum(float(r[f"beta{a}_{l}"]) for l in range(1, 7)) == pytest.approx(1, abs=1e-11)


def test_rerun_is_byte_identical(report, tmp_path):
    emit_csv(report, tmp_path / "a")
    emit_csv(run_experiment(load_config(BUNDLED_CONFIG)), tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


@pytest.mark.parametrize("name", ["C1_k100", "C3_k100"])
def test_curves_match_golden(report, tmp_path, name):
    emit_csv(report, tmp_path)
    head, got = read_columns(tmp_path / f"curves_{name}.csv")
    ghead, want = read_columns(GOLDEN / f"curves_{name}.csv")
    assert head == ghead
    np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-10)


def test_curve_semantics(report):
    cols = report.curves["C1_k100"]
    t = cols["t"]
    assert t[0] == 0 and t[-1] == pytest.approx(10)
    # arc 3 sits 30 steps downstream of the source: its supply is zero until then
    assert not cols["supply_3"][:30].any() and cols["supply_3"][30] > 0
    np.testing.assert_allclose(cols["supply_3"][30:], 0.55 * cols["optimal_inflow"][:-30], rtol=1e-12)
    # the benchmark demand on arc 2 is the first weight row applied to the step profiles
    assert cols["benchmark_demand_2"][0] == pytest.approx(
        0.20 * 1 + 0.25 * 3 + 0.10 * 1 + 0.10 * 2 + 0.30 * 2 + 0.05 * 3
    )


def test_noise_with_seed_is_reproducible(raw):
    noisy = parse_config(dict(raw, noise={"amplitude": 0.05, "seed": 11}))
    a = run_experiment(noisy)
    b = run_experiment(noisy)
    c = run_experiment(noisy, seed=12)
    assert [r.objective for r in a.results] == [r.objective for r in b.results]
    assert a.results[0].objective != c.results[0].objective
    assert all(r.converged for r in a.results)
