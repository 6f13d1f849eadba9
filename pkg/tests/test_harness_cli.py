import json

import numpy as np
import pytest

from roughpert import Scenario, generate, verify_all
from roughpert.cli import main
from roughpert.tensor import DomainError
from roughpert.verify import CHECK_NAMES, Report, calibrated_tol, verify_sweep


def strip_runtime(obj):
    if isinstance(obj, dict):
        return {k: strip_runtime(v) for k, v in obj.items() if k != "runtime"}
    if isinstance(obj, list):
        return [strip_runtime(v) for v in obj]
    return obj


# ------------------------------------------------------------- scenarios


@pytest.mark.parametrize(
    "kwargs",
    [
        {"grid_size": 100},
        {"grid_size": 2048},
        {"level": 5},
        {"dim": 5},
        {"driver": {"kind": "midpoint_rough", "h": 0.3}},  # 1/h > p
        {"driver": {"kind": "spiral"}},
        {"perturbations": [{"kind": "young", "h": 0.5}]},  # h <= 1 - 1/p
        {"level": 1, "perturbations": [{"kind": "pure_area", "a": 1.0}]},
    ],
)
def test_infeasible_scenarios(kwargs):
    with pytest.raises(DomainError):
        Scenario(**kwargs)


def test_scenario_json_round_trip():
    s = Scenario(seed=4, grid_size=64)
    assert Scenario.from_json(json.loads(json.dumps(s.to_json()))) == s
    with pytest.raises(DomainError):
        Scenario.from_json({"sede": 1})


def test_generate_is_deterministic_and_consistent_across_grids():
    a, b = generate(Scenario(seed=7, grid_size=64)), generate(Scenario(seed=7, grid_size=64))
    assert np.array_equal(a.path, b.path)
    for Ha, Hb in zip(a.Hs, b.Hs):
        assert np.array_equal(Ha.functional.table, Hb.functional.table)
    coarse = generate(Scenario(seed=7, grid_size=32))
    assert np.array_equal(coarse.path, a.path[::2])
    other = generate(Scenario(seed=8, grid_size=64))
    assert not np.array_equal(other.path, a.path)


def test_linear_driver_closed_form():
    g = generate(Scenario(driver={"kind": "linear", "w": [1.0, -2.0]}, grid_size=16))
    v = g.X(0.0, 1.0)
    assert np.allclose(v[1], [1, -2])
    assert np.allclose(v.as_array(2), np.outer([1, -2], [1, -2]) / 2)


def test_pure_area_driver_phi():
    s = Scenario(driver={"kind": "pure_area", "a": 0.5}, perturbations=[], grid_size=32)
    g = generate(s)
    H = g.Hs[0]
    assert H.witness.phi == pytest.approx(2 / s.p)
    assert np.abs(g.X.table[..., 1:]).max() == 0.0


def test_midpoint_driver_has_finite_pvar():
    g = generate(Scenario(grid_size=128))
    m = g.control.matrix(g.grid)
    assert np.isfinite(m).all() and m[0, -1] > 0


# ------------------------------------------------------------- verification


def test_tolerance_schedule():
    assert calibrated_tol(1.0, 1.5, 32) == pytest.approx(2.0)
    assert calibrated_tol(1.0, 1.5, 128) == pytest.approx(2.0 / 2.0)
    assert calibrated_tol(0.0, 1.5, 128) == 1e-10


def test_report_anchors_markdown_and_determinism():
    s = Scenario(grid_size=32)
    only = ["chen", "pure_area_closed_form", "lift_addition", "gamma_spot"]
    r1, r2 = verify_all(s, only=only), verify_all(s, only=only, threads=1)
    assert r1.ok
    assert all(c.anchor for c in r1.checks)
    assert strip_runtime(r1.to_json()) == strip_runtime(r2.to_json())
    md = r1.to_markdown()
    assert "| lift_addition | pass |" in md
    bad = Report(s.to_json(), 32, [r1.checks[0]])
    bad.checks[0].anchor = ""
    with pytest.raises(ValueError):
        bad.to_json()


def test_tampered_scenario_fails_dev_lift():
    r = verify_all(Scenario(grid_size=32, tamper=True), only=["dev_lift_inverses"])
    assert not r.ok
    assert r.get("dev_lift_inverses").status == "fail"


def test_sweep_reports_convergence():
    r = verify_sweep(Scenario(), grids=(32, 64), only=["lift_addition", "chen"])
    row = r.convergence["lift_addition"]
    assert row["grids"] == [32, 64] and row["decreasing"] and row["required"]
    assert r.ok


def test_unknown_check_name():
    with pytest.raises(ValueError):
        verify_all(Scenario(grid_size=32), only=["nope"])


def test_level_one_scenario_skips_level_two_checks():
    s = Scenario(level=1, p=1.5, grid_size=32, driver={"kind": "midpoint_rough", "h": 0.8},
                 perturbations=[{"kind": "young", "h": None, "amplitude": 0.5}])
    r = verify_all(s, only=["pure_area_closed_form", "dev_lift_inverses", "chen"])
    assert [c.name for c in r.checks] == ["chen", "dev_lift_inverses"]
    assert r.ok


# ------------------------------------------------------------- CLI


@pytest.fixture
def gen_dir(tmp_path):
    sc = tmp_path / "s.json"
    sc.write_text(json.dumps(Scenario(grid_size=16).to_json()))
    out = tmp_path / "gen"
    assert main(["gen", "--scenario", str(sc), "--out", str(out)]) == 0
    return out


def test_cli_gen_files(gen_dir):
    names = {p.name for p in gen_dir.iterdir()}
    assert {"scenario.json", "X.json", "control.json", "I0.json", "H0.json", "H2.json"} <= names


def test_cli_lift_dev_round_trip(gen_dir):
    assert main(["lift", "--in", str(gen_dir / "I1.json"), "--out", str(gen_dir / "H.json")]) == 0
    assert main(["dev", "--in", str(gen_dir / "H.json"), "--out", str(gen_dir / "I.json")]) == 0
    a = json.loads((gen_dir / "I1.json").read_text())["values"]
    b = json.loads((gen_dir / "I.json").read_text())["values"]
    assert np.allclose(np.concatenate([np.concatenate(v) for v in a]), np.concatenate([np.concatenate(v) for v in b]),
                       atol=1e-12)


def test_cli_perturb_and_sew(gen_dir):
    y = gen_dir / "Y.json"
    args = ["perturb", "--x", str(gen_dir / "X.json"), "--h", str(gen_dir / "H2.json"),
            "--control", str(gen_dir / "control.json"), "--out", str(y)]
    assert main(args) == 0
    out = gen_dir / "S.json"
    assert main(["sew", "--in", str(y), "--control", str(gen_dir / "control.json"), "--theta", "1.2",
                 "--p", "2.5", "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    assert res["closeness_K"] <= 1e-12


def test_cli_input_errors(tmp_path, gen_dir):
    assert main(["dev", "--in", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o.json")]) == 2
    junk = tmp_path / "junk.json"
    junk.write_text("{not json")
    assert main(["lift", "--in", str(junk), "--out", str(tmp_path / "o.json")]) == 2
    junk.write_text(json.dumps({"dim": 2}))
    assert main(["lift", "--in", str(junk), "--out", str(tmp_path / "o.json")]) == 2
    assert main(["sew", "--in", str(gen_dir / "X.json")]) == 2
    assert main(["sew", "--in", str(gen_dir / "X.json"), "--control", str(gen_dir / "control.json"),
                 "--theta", "0.9", "--p", "2.5", "--out", str(tmp_path / "o.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"grid_size": 12}))
    assert main(["verify", "--scenario", str(bad)]) == 2
    assert main(["verify", "--checks", "nope"]) == 2


def test_cli_verify_exit_codes(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("RP_THREADS", "2")
    good = tmp_path / "good.json"
    good.write_text(json.dumps(Scenario(grid_size=32).to_json()))
    report = tmp_path / "r.json"
    assert main(["verify", "--scenario", str(good), "--checks", "chen,pure_area_closed_form",
                 "--report", str(report), "--markdown"]) == 0
    data = json.loads(report.read_text())
    assert data["ok"] and {c["name"] for c in data["checks"]} == {"chen", "pure_area_closed_form"}
    assert "Verification report" in capsys.readouterr().out
    tampered = tmp_path / "t.json"
    tampered.write_text(json.dumps(Scenario(grid_size=32, tamper=True).to_json()))
    assert main(["verify", "--scenario", str(tampered), "--checks", "dev_lift_inverses"]) == 1


def test_cli_verify_sweep(tmp_path):
    report = tmp_path / "r.json"
    assert main(["verify", "--sweep-grids", "32,64", "--checks", "lift_addition", "--report", str(report)]) == 0
    conv = json.loads(report.read_text())["convergence"]["lift_addition"]
    assert conv["grids"] == [32, 64] and conv["decreasing"]


def test_check_catalogue_complete():
    expected = {"chen", "sewing_fixed_point", "sewing_witness_independence", "ext_uniqueness",
                "pure_area_closed_form", "dev_lift_inverses", "lift_addition", "associativity",
                "identity_kernel", "otimes_oplus_same_sewing", "almost_h_displacement", "neoclassical"}
    assert expected <= set(CHECK_NAMES)
    assert sum(n.startswith("vector_space.") for n in CHECK_NAMES) == 8
