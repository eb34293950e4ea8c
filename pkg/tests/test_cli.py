import csv
import json

import numpy as np
import pytest

from condaalen.cli import main
from condaalen.data import load_sample
from condaalen.simulate import default_scenario_json


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    scen = root / "scenario.json"
    scen.write_text(json.dumps(default_scenario_json(n=120, seed=31)))
    sample = root / "sample.csv"
    assert main(["simulate", "--scenario", str(scen), "--out", str(sample)]) == 0
    return root


def test_simulate_writes_loadable_sample(workspace):
    s = load_sample(workspace / "sample.csv")
    assert len(s) == 120
    assert s.state_space.states == (1, 2, 3)


def test_simulate_is_byte_deterministic(workspace, tmp_path):
    again = tmp_path / "again.csv"
    code = main(
        ["simulate", "--scenario", str(workspace / "scenario.json"), "--out", str(again)]
    )
    assert code == 0
    assert again.read_bytes() == (workspace / "sample.csv").read_bytes()


def test_simulate_overrides_n_and_seed(workspace, tmp_path):
    out = tmp_path / "small.csv"
    code = main(
        [
            "simulate",
            "--scenario",
            str(workspace / "scenario.json"),
            "--n",
            "10",
            "--seed",
            "7",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    assert len(load_sample(out)) == 10


def test_simulate_threads_keep_order(workspace, tmp_path):
    out = tmp_path / "threaded.csv"
    code = main(
        [
            "simulate",
            "--scenario",
            str(workspace / "scenario.json"),
            "--threads",
            "4",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    assert out.read_bytes() == (workspace / "sample.csv").read_bytes()


def test_simulate_rejects_bad_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "out.csv"
    assert main(["simulate", "--scenario", str(bad), "--out", str(out)]) == 1
    assert "error:" in capsys.readouterr().err


def test_fit_writes_expected_files(workspace):
    out = workspace / "fit"
    code = main(
        [
            "fit",
            "--input",
            str(workspace / "sample.csv"),
            "--x",
            "0.3",
            "--x",
            "0.7",
            "--json",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    for i in (0, 1):
        assert (out / f"hazard_{i}.csv").exists()
        assert (out / f"occupation_{i}.csv").exists()
        assert (out / f"fit_{i}.json").exists()

    with open(out / "hazard_0.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert rows[0]["quantity"] == "hazard"
    hazard_rows = [r for r in rows if r["quantity"] == "hazard"]
    assert {(r["j"], r["k"]) for r in hazard_rows} == {
        ("1", "2"), ("1", "3"), ("2", "1"), ("2", "3"), ("3", "1"), ("3", "2")
    }
    exposure_rows = [r for r in rows if r["quantity"] == "exposure"]
    assert exposure_rows and all(r["k"] == "" for r in exposure_rows)

    body = json.loads((out / "fit_0.json").read_text())
    assert body["x"] == [0.3]
    assert body["states"] == [1, 2, 3]
    assert len(body["grid"]) == len(body["hazard"]["1->2"])
    occ = np.array([body["occupation"][s]["values"] for s in ("1", "2", "3")])
    np.testing.assert_allclose(occ.sum(axis=0), occ[:, 0].sum(), atol=1e-12)


def test_fit_output_matches_library(workspace):
    from condaalen.estimators import fit as fit_fn

    body = json.loads((workspace / "fit" / "fit_1.json").read_text())
    sample = load_sample(workspace / "sample.csv")
    r = fit_fn(sample, (0.7,))
    assert body["bandwidth"] == r.bandwidth
    np.testing.assert_array_equal(body["grid"], r.hazard.times)
    idx = (r.hazard.states.index(1), r.hazard.states.index(2))
    np.testing.assert_array_equal(
        body["hazard"]["1->2"], r.hazard.hazard.values[:, idx[0], idx[1]]
    )


def test_fit_degenerate_point_exits_2(workspace, capsys):
    out = workspace / "degenerate"
    code = main(
        [
            "fit",
            "--input",
            str(workspace / "sample.csv"),
            "--x",
            "40.0",
            "--bandwidth",
            "0.5",
            "--out",
            str(out),
        ]
    )
    assert code == 2
    assert "no kernel mass" in capsys.readouterr().err


def test_fit_atoms_flag(workspace, tmp_path):
    out = tmp_path / "atom_fit"
    code = main(
        [
            "fit",
            "--input",
            str(workspace / "sample.csv"),
            "--x",
            "0.5",
            "--atoms",
            "1:0.5,0.9",
            "--out",
            str(out),
        ]
    )
    # every simulated covariate is off the atom, so the point has no mass
    assert code == 2


def test_fit_rejects_malformed_atoms(workspace, tmp_path, capsys):
    args = [
        "fit",
        "--input",
        str(workspace / "sample.csv"),
        "--x",
        "0.5",
        "--out",
        str(tmp_path / "never"),
    ]
    assert main(args + ["--atoms", "0.5"]) == 1
    assert main(args + ["--atoms", "3:0.5"]) == 1
    assert main(args + ["--atoms", "one:0.5"]) == 1
    capsys.readouterr()


def test_fit_warns_on_floor_and_horizon(workspace, capsys):
    out = workspace / "warned"
    code = main(
        [
            "fit",
            "--input",
            str(workspace / "sample.csv"),
            "--x",
            "0.5",
            "--theta",
            "0.5",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    err = capsys.readouterr().err
    assert "beyond horizon" in err
    assert "floor engaged" in err


def test_covariance_outputs(workspace):
    out = workspace / "cov"
    code = main(
        [
            "covariance",
            "--input",
            str(workspace / "sample.csv"),
            "--x",
            "0.5",
            "--grid",
            "9",
            "--out",
            str(out),
        ]
    )
    assert code == 0
    meta = json.loads((out / "cov_meta_0.json").read_text())
    assert meta["pairs"] == ["1->2", "1->3", "2->3"]
    g = len(meta["grid"])
    with open(out / "cov_hazard_1_2_0.csv", newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == g * g
    values = np.array([float(r["value"]) for r in rows]).reshape(g, g)
    np.testing.assert_array_equal(values, values.T)
    assert np.linalg.eigvalsh(values).min() >= -1e-10
    for s in (1, 2, 3):
        assert (out / f"cov_occupation_{s}_0.csv").exists()


def test_check_quick_passes(capsys):
    assert main(["check", "--quick"]) == 0
    out = capsys.readouterr().out
    for name in (
        "conservation",
        "exposure-identity",
        "beran-reduction",
        "landmark-reduction",
        "product-integral-order",
        "surface-shape",
        "floor-behavior",
        "determinism",
    ):
        assert f"PASS {name}" in out
    assert "SKIP consistency" in out
    assert "SKIP covariance-sanity" in out


def test_check_corrupt_scenario_fails_by_name(tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text(json.dumps({"states": [1, 2]}))
    code = main(["check", "--quick", "--scenario", str(bad)])
    assert code == 1
    out = capsys.readouterr().out
    assert "FAIL" in out
    assert "missing field" in out


def test_round_trip_through_cli(workspace, tmp_path):
    s = load_sample(workspace / "sample.csv")
    from condaalen.data import write_sample

    copy = tmp_path / "copy.csv"
    write_sample(s, copy)
    assert copy.read_bytes() == (workspace / "sample.csv").read_bytes()
