"""Unit tests for the experiment drivers and file plumbing."""

import math

import numpy as np
import pytest

from symcp.experiment_harness import (
    FIGURE1_COLUMNS,
    LANDSCAPE_COLUMNS,
    TABLE1_COLUMNS,
    ExperimentConfig,
    SuccessGrid,
    landscape_rows,
    perturb_init,
    read_factors_csv,
    read_tensor_file,
    run_figure1,
    run_table1,
    sample_sphere_factors,
    verify_records,
    write_csv_rows,
    write_factors_csv,
    write_manifest,
    write_tensor_file,
)
from symcp.rank1_landscape import (
    STRICT_LOCAL_MIN,
    STRICT_SADDLE,
    THIRD_ORDER_SADDLE,
    OrthogonalTarget,
)
from symcp.tensor_core import SymTensor3, build_from_factors

TINY = dict(n=12, r_list=(4,), alpha_list=(0.5,), eta_list=(0.02,),
            iters=40, trials=3)


# ----------------------------------------------------------------------
# configuration
# ----------------------------------------------------------------------

def test_default_rank_list_derives_from_dimension():
    cfg = ExperimentConfig(n=64)
    assert cfg.r_list == (32, 64, 96)
    assert ExperimentConfig(n=10).r_list == (5, 10, 15)


def test_explicit_rank_list_is_kept():
    assert ExperimentConfig(n=8, r_list=[2, 3]).r_list == (2, 3)


@pytest.mark.parametrize("kwargs", [
    dict(n=0),
    dict(r_list=()),
    dict(r_list=(0,)),
    dict(alpha_list=(-1.0,)),
    dict(eta_list=(0.0,)),
    dict(figure_alpha=-0.1),
    dict(iters=0),
    dict(trials=0),
    dict(success_tol=0.0),
    dict(scale=0.0),
])
def test_bad_config_values_rejected(kwargs):
    with pytest.raises(ValueError):
        ExperimentConfig(**kwargs)


def test_config_mapping_round_trip():
    cfg = ExperimentConfig(n=20, r_list=(3, 5), alpha_list=(0.5, 1.25),
                           eta_list=(0.015,), figure_alpha=0.03, iters=17,
                           trials=9, success_tol=2e-4, master_seed=42,
                           scale=0.5)
    assert ExperimentConfig.from_mapping(cfg.as_mapping()) == cfg


def test_from_mapping_rejects_unknown_key():
    with pytest.raises(ValueError, match="unknown config key"):
        ExperimentConfig.from_mapping({"stepsize": "0.1"})


def test_from_mapping_rejects_bad_value():
    with pytest.raises(ValueError, match="iters"):
        ExperimentConfig.from_mapping({"iters": "ten"})
    with pytest.raises(ValueError, match="r_list"):
        ExperimentConfig.from_mapping({"r_list": ","})


def test_from_mapping_parses_lists():
    cfg = ExperimentConfig.from_mapping(
        {"n": "16", "r_list": "4, 8", "eta_list": "0.01,0.03"})
    assert cfg.r_list == (4, 8) and cfg.eta_list == (0.01, 0.03)


# ----------------------------------------------------------------------
# instance generation
# ----------------------------------------------------------------------

def test_sphere_factors_have_unit_columns():
    U = sample_sphere_factors(10, 6, 1)
    assert U.shape == (10, 6)
    assert np.allclose(np.linalg.norm(U, axis=0), 1.0, atol=1e-14)


def test_sphere_factors_deterministic_per_seed():
    a = sample_sphere_factors(8, 3, 5)
    b = sample_sphere_factors(8, 3, 5)
    c = sample_sphere_factors(8, 3, 6)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_perturbation_has_exact_requested_size():
    U = sample_sphere_factors(9, 4, 0)
    for alpha in (0.07, 2.0):
        U0 = perturb_init(U, alpha, 3)
        assert math.isclose(np.linalg.norm(U0 - U), alpha, rel_tol=1e-12)
    with pytest.raises(ValueError):
        perturb_init(U, -1.0, 3)


# ----------------------------------------------------------------------
# convergence traces
# ----------------------------------------------------------------------

def test_trace_rows_cover_every_iteration_and_pair(tmp_path):
    cfg = ExperimentConfig(n=10, r_list=(3, 5), alpha_list=(0.5,),
                           eta_list=(0.01, 0.02), figure_alpha=0.05,
                           iters=25, trials=1)
    out = tmp_path / "fig.csv"
    rows = run_figure1(cfg, out_path=out)
    assert len(rows) == 2 * 2 * (cfg.iters + 1)
    by_pair = {}
    for r, eta, it, gn, rn, d in rows:
        by_pair.setdefault((r, eta), []).append(it)
    assert set(by_pair) == {(3, 0.01), (3, 0.02), (5, 0.01), (5, 0.02)}
    for iters in by_pair.values():
        assert iters == list(range(cfg.iters + 1))
    header = out.read_text().splitlines()[0]
    assert header == ",".join(FIGURE1_COLUMNS)


def test_trace_start_distance_equals_perturbation_size():
    cfg = ExperimentConfig(n=10, r_list=(3,), eta_list=(0.02,),
                           figure_alpha=0.04, iters=5, trials=1)
    rows = run_figure1(cfg)
    first = rows[0]
    assert first[2] == 0
    assert math.isclose(first[5], cfg.figure_alpha, rel_tol=1e-9)


def test_trace_shares_one_instance_across_stepsizes():
    cfg = ExperimentConfig(n=10, r_list=(3,), eta_list=(0.01, 0.02),
                           figure_alpha=0.05, iters=5, trials=1)
    rows = run_figure1(cfg)
    start = [row for row in rows if row[2] == 0]
    assert len(start) == 2
    assert start[0][3:] == start[1][3:]  # same metrics at the same U0


def test_warm_trace_converges_linearly():
    cfg = ExperimentConfig(n=16, r_list=(8,), eta_list=(0.02,),
                           figure_alpha=0.05, iters=600, trials=1)
    rows = run_figure1(cfg)
    dists = [row[5] for row in rows]
    assert dists[-1] <= 1e-6
    assert all(b <= a * (1 + 1e-12) for a, b in zip(dists[5:], dists[6:]))


# ----------------------------------------------------------------------
# success grids
# ----------------------------------------------------------------------

def test_success_grid_shape_and_rows(tmp_path):
    cfg = ExperimentConfig(**TINY)
    out = tmp_path / "grid.csv"
    grid = run_table1(cfg, out_path=out)
    assert grid.successes.shape == (1, 1, 1)
    assert grid.trials == 3
    rows = grid.to_rows()
    assert len(rows) == 1
    eta, r, alpha, trials, s, ratio = rows[0]
    assert (eta, r, alpha, trials) == (0.02, 4, 0.5, 3)
    assert ratio == s / 3
    assert out.read_text().splitlines()[0] == ",".join(TABLE1_COLUMNS)


def test_small_perturbation_cell_fully_succeeds():
    cfg = ExperimentConfig(n=12, r_list=(4,), alpha_list=(0.05,),
                           eta_list=(0.02,), iters=400, trials=3)
    grid = run_table1(cfg)
    assert int(grid.successes[0, 0, 0]) == 3
    assert grid.ratio(0.02, 4, 0.05) == 1.0


def test_huge_perturbation_cell_fails():
    cfg = ExperimentConfig(n=12, r_list=(4,), alpha_list=(50.0,),
                           eta_list=(0.05,), iters=200, trials=3)
    grid = run_table1(cfg)
    assert int(grid.successes[0, 0, 0]) == 0


def test_grid_identical_across_worker_counts():
    cfg = ExperimentConfig(n=12, r_list=(4, 6), alpha_list=(0.1, 30.0),
                           eta_list=(0.02,), iters=60, trials=2)
    seq = run_table1(cfg, workers=1)
    par = run_table1(cfg, workers=2)
    assert np.array_equal(seq.successes, par.successes)


def test_grid_workers_must_be_positive():
    with pytest.raises(ValueError):
        run_table1(ExperimentConfig(**TINY), workers=0)


def test_success_grid_validates_counts():
    with pytest.raises(ValueError, match="shape"):
        SuccessGrid(eta_values=(0.1,), r_values=(2,), alpha_values=(1.0,),
                    successes=np.zeros((2, 1, 1), dtype=int), trials=5)
    with pytest.raises(ValueError, match="trials"):
        SuccessGrid(eta_values=(0.1,), r_values=(2,), alpha_values=(1.0,),
                    successes=np.zeros((1, 1, 1), dtype=int), trials=0)
    with pytest.raises(ValueError, match="counts"):
        SuccessGrid(eta_values=(0.1,), r_values=(2,), alpha_values=(1.0,),
                    successes=np.full((1, 1, 1), 7), trials=5)


# ----------------------------------------------------------------------
# landscape table
# ----------------------------------------------------------------------

def test_landscape_rows_match_closed_form():
    target = OrthogonalTarget.diagonal([1.0, 8.0])
    rows = landscape_rows(target)
    assert len(rows) == 4  # supports {}, {0}, {1}, {0,1}
    by_support = {row[1]: row for row in rows}
    origin = by_support[""]
    assert origin[0] == 0 and origin[5] == THIRD_ORDER_SADDLE
    single = by_support["0"]
    assert single[5] == STRICT_LOCAL_MIN
    assert math.isclose(float(single[2]), 1.0, rel_tol=1e-12)
    pair = by_support["0|1"]
    assert pair[0] == 2 and pair[5] == STRICT_SADDLE
    assert pair[4] < 0
    assert len(LANDSCAPE_COLUMNS) == len(rows[0])


def test_landscape_max_support_truncates():
    target = OrthogonalTarget.diagonal([1.0, 2.0, 3.0])
    rows = landscape_rows(target, max_support=1)
    assert {row[0] for row in rows} == {0, 1}
    assert len(rows) == 4


# ----------------------------------------------------------------------
# verification records
# ----------------------------------------------------------------------

def test_verify_records_structure_and_health():
    cfg = ExperimentConfig(n=16, r_list=(4, 8), iters=10, trials=5)
    records = verify_records(cfg)
    assert [rec["r"] for rec in records] == [4, 8]
    for rec in records:
        assert rec["n"] == 16 and rec["samples"] == 5
        assert rec["regularity_pass"] == 5
        assert rec["sandwich_pass"] == 5
        assert rec["regularity_min_margin"] >= -1e-9
        assert 1.0 <= rec["sandwich_ratio_min"] <= rec["sandwich_ratio_max"]
        assert rec["warm_radius"] > 0
        assert "gram_ok" in rec and "pass_spectrum" in rec


# ----------------------------------------------------------------------
# factor CSV round-trip
# ----------------------------------------------------------------------

def test_factor_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    U = rng.standard_normal((10, 5))
    path = tmp_path / "factors.csv"
    write_factors_csv(path, U)
    lines = path.read_text().splitlines()
    assert lines[0] == "f1,f2,f3,f4,f5"
    assert len(lines) == 11
    assert np.array_equal(read_factors_csv(path), U)


def test_factor_csv_rejects_malformed_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1.0,2.0\n")
    with pytest.raises(ValueError, match="header"):
        read_factors_csv(path)


def test_factor_csv_rejects_ragged_rows(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("f1,f2\n1.0,2.0\n3.0\n")
    with pytest.raises(ValueError, match="line 3"):
        read_factors_csv(path)


def test_factor_csv_rejects_non_numeric_and_non_finite(tmp_path):
    path = tmp_path / "nan.csv"
    path.write_text("f1\nhello\n")
    with pytest.raises(ValueError, match="non-numeric"):
        read_factors_csv(path)
    path.write_text("f1\nnan\n")
    with pytest.raises(ValueError, match="non-finite"):
        read_factors_csv(path)


def test_factor_csv_rejects_empty_variants(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ValueError, match="empty"):
        read_factors_csv(path)
    path.write_text("f1,f2\n")
    with pytest.raises(ValueError, match="no coordinate rows"):
        read_factors_csv(path)


# ----------------------------------------------------------------------
# tensor file round-trip
# ----------------------------------------------------------------------

def test_tensor_file_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    T = build_from_factors(rng.standard_normal((5, 3)))
    path = tmp_path / "t.txt"
    write_tensor_file(path, T)
    first = path.read_text().splitlines()[0]
    assert first == "symtensor3 5"
    back = read_tensor_file(path)
    assert np.array_equal(back.data, T.data)


def test_tensor_file_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("tensor 4\n0.0\n")
    with pytest.raises(ValueError, match="header"):
        read_tensor_file(path)
    path.write_text("symtensor3 x\n")
    with pytest.raises(ValueError, match="dimension"):
        read_tensor_file(path)


def test_tensor_file_count_mismatch_names_both_counts(tmp_path):
    path = tmp_path / "short.txt"
    payload = "\n".join(["0.0"] * 7)
    path.write_text(f"symtensor3 2\n{payload}\n")
    with pytest.raises(ValueError, match="expected 8 .*found 7"):
        read_tensor_file(path)


def test_tensor_file_rejects_non_finite(tmp_path):
    path = tmp_path / "inf.txt"
    path.write_text("symtensor3 1\ninf\n")
    with pytest.raises(ValueError, match="non-finite"):
        read_tensor_file(path)


def test_tensor_file_symmetrizes_foreign_asymmetric_payload(tmp_path):
    cube = np.zeros((2, 2, 2))
    cube[0, 0, 1] = 3.0  # asymmetric one-entry payload
    path = tmp_path / "foreign.txt"
    flat = "\n".join(repr(v) for v in cube.ravel(order="F"))
    path.write_text(f"symtensor3 2\n{flat}\n")
    with pytest.raises(ValueError):
        read_tensor_file(path)


# ----------------------------------------------------------------------
# generic CSV writer and manifest
# ----------------------------------------------------------------------

def test_csv_rows_use_shortest_round_trip_format(tmp_path):
    path = tmp_path / "rows.csv"
    write_csv_rows(path, ("a", "b", "c"), [(0.1, 3, True)])
    assert path.read_text().splitlines()[1] == "0.1,3,true"


def test_manifest_records_config_and_versions(tmp_path):
    cfg = ExperimentConfig(n=16, r_list=(4,), iters=7, trials=2)
    path = tmp_path / "manifest.txt"
    write_manifest(path, "table1", cfg, extra={"workers": 3})
    entries = dict(line.split("=", 1)
                   for line in path.read_text().splitlines())
    assert entries["command"] == "table1"
    assert entries["package"] == "symcp"
    assert entries["config_n"] == "16"
    assert entries["config_iters"] == "7"
    assert entries["workers"] == "3"
    assert "numpy_version" in entries and "python_version" in entries


def test_manifest_without_config_skips_config_lines(tmp_path):
    path = tmp_path / "manifest.txt"
    write_manifest(path, "decompose", extra={"input": "t.txt"})
    text = path.read_text()
    assert "config_" not in text
    assert "input=t.txt" in text
