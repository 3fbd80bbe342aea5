import csv
import io
import json
import math
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from lrbound.bound_core import BoundDescriptor, leading_behavior
from lrbound.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def schema(name):
    return json.loads(resources.files("lrbound").joinpath(f"schemas/{name}").read_text())


# ------------------------------------------------------------------ derive


def test_derive_example(capsys):
    code, out, _ = run(capsys, "derive", "--alpha", "2", "--dim", "1", "--sigma", "0.9", "--iterations", "5")
    assert code == 0
    data = json.loads(out)
    jsonschema.validate(data, schema("bound.schema.json"))
    assert data["summary"]["spatial_exponent"] == pytest.approx(-1.8)
    bound = BoundDescriptor.from_dict(data)
    assert leading_behavior(bound)[0] == pytest.approx(-1.8)
    assert bound.iteration_count == 5


def test_derive_rejects_loose_sigma(capsys):
    code, _, err = run(capsys, "derive", "--alpha", "2", "--sigma", "0.5")
    assert code == 2
    assert err.startswith("error:") and err.count("\n") == 1


def test_derive_loose_sigma_allowed(capsys):
    code, out, _ = run(capsys, "derive", "--alpha", "2", "--sigma", "0.6", "--allow-loose-sigma")
    assert code == 0
    assert json.loads(out)["summary"]["sigma_used"] == pytest.approx(0.6)


def test_derive_zero_iterations_is_seed(capsys):
    code, out, _ = run(capsys, "derive", "--alpha", "2", "--sigma", "0.9", "--iterations", "0")
    assert code == 0
    data = json.loads(out)
    assert data["sigma_exp"] is None and data["poly_terms"] == [] and data["iteration_count"] == 0


def test_derive_nudges_log_case(capsys):
    code, out, _ = run(capsys, "derive", "--alpha", "1.5", "--sigma", "0.8", "--allow-loose-sigma")
    assert code == 0
    s = json.loads(out)["summary"]
    assert 0 < s["sigma_used"] - 0.8 < 1e-8


def test_derive_alpha_below_dim(capsys):
    assert run(capsys, "derive", "--alpha", "1", "--dim", "1", "--sigma", "0.9")[0] == 2


def test_derive_writes_file(tmp_path, capsys):
    path = tmp_path / "b.json"
    assert run(capsys, "derive", "--alpha", "3", "--sigma", "0.8", "--out", str(path))[0] == 0
    BoundDescriptor.from_json(path.read_text())


# --------------------------------------------------------------- lightcone


def parse_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_lightcone_all_methods(capsys):
    code, out, _ = run(capsys, "lightcone", "--dim", "1", "--alpha-min", "1.05", "--alpha-max", "8",
                       "--steps", "140", "--which", "LC2")
    assert code == 0
    rows = parse_csv(out)
    assert list(rows[0]) == ["alpha", "this_work", "foss_feig", "matsuta"]
    at4 = [r for r in rows if math.isclose(float(r["alpha"]), 4.0)][0]
    assert float(at4["this_work"]) == pytest.approx(3.0)
    assert float(at4["foss_feig"]) == pytest.approx(7 / 3)
    assert float(at4["matsuta"]) == pytest.approx(3.0)
    for r in rows:
        if float(r["alpha"]) <= 2:
            assert r["matsuta"] == ""


def test_lightcone_lc1_equal(capsys):
    _, out, _ = run(capsys, "lightcone", "--alpha-min", "1.2", "--alpha-max", "6", "--steps", "7", "--which", "LC1")
    for r in parse_csv(out):
        assert r["this_work"] == r["foss_feig"] == r["matsuta"]


def test_lightcone_single_method_json(capsys):
    code, out, _ = run(capsys, "lightcone", "--alpha-min", "1.5", "--alpha-max", "3", "--steps", "4",
                       "--method", "matsuta", "--format", "json")
    assert code == 0
    rows = json.loads(out)["rows"]
    assert rows[0] == {"alpha": 1.5, "matsuta": None}


def test_lightcone_bad_grid(capsys):
    assert run(capsys, "lightcone", "--dim", "1", "--alpha-min", "1", "--alpha-max", "3")[0] == 2


# ------------------------------------------------------------------ verify


def test_verify_two_site(capsys):
    code, out, _ = run(capsys, "verify", "--model", "two-site", "--tmax", str(math.pi), "--steps", "40")
    assert code == 0
    report = json.loads(out)
    assert report["analytic_max_dev"] < 1e-10
    assert all(v for k, v in report["invariants"].items() if k.endswith("_pass"))


def test_verify_site_cap(capsys):
    assert run(capsys, "verify", "--sites", "20")[0] == 2


def test_verify_chain_writes_front(tmp_path, capsys):
    front = tmp_path / "front.csv"
    code, out, _ = run(capsys, "verify", "--sites", "5", "--tmax", "1", "--steps", "4", "--front-out", str(front))
    assert code == 0
    report = json.loads(out)
    assert math.isfinite(report["kappa"]) and report["kappa"] > 0
    assert front.read_text().startswith("r,t,value\n")
    assert json.loads(front.with_suffix(".json").read_text())["L"] == 5


def test_verify_with_bound_file(tmp_path, capsys):
    path = tmp_path / "b.json"
    run(capsys, "derive", "--alpha", "2", "--sigma", "0.9", "--out", str(path))
    code, out, _ = run(capsys, "verify", "--sites", "4", "--steps", "3", "--bound-file", str(path))
    assert code == 0
    assert json.loads(out)["bound_params"]["j_const"] == 1.0


def test_verify_is_deterministic(tmp_path, capsys):
    path = tmp_path / "a.json"
    outputs = []
    for _ in range(2):
        run(capsys, "verify", "--sites", "4", "--steps", "3", "--out", str(path))
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]


# ----------------------------------------------------------------- perturb


def perturb(capsys, *extra):
    code, out, _ = run(capsys, "perturb", "--sites", "6", "--steps", "4", "--tmax", "0.4", *extra)
    return code, (json.loads(out) if out else None)


def test_perturb_rows_obey_duhamel(capsys):
    code, rep = perturb(capsys)
    assert code == 0 and rep["duhamel_pass"]
    for r in rep["rows"]:
        assert r["lhs"] <= r["duhamel_rhs"] + 1e-12
        assert set(r) == {"t", "lhs", "duhamel_rhs", "site_sum_rhs", "bound_integral_rhs"}
        assert r["lhs"] <= r["bound_integral_rhs"] + 1e-12


def test_perturb_beyond_lattice_is_zero(capsys):
    code, rep = perturb(capsys, "--r-min", "50")
    assert code == 0
    assert all(r["lhs"] == 0.0 for r in rep["rows"])
    assert rep["delta_terms"] == 0


def test_perturb_zero_strength(capsys):
    _, rep = perturb(capsys, "--delta-strength", "0")
    assert all(r["lhs"] == 0.0 for r in rep["rows"])


def test_perturb_half_scale(capsys):
    _, full = perturb(capsys, "--r-min", "1")
    _, half = perturb(capsys, "--r-min", "1", "--delta-scale", "0.5")
    assert half["rows"][1]["lhs"] / full["rows"][1]["lhs"] == pytest.approx(0.5, rel=0.1)


def test_perturb_overlap_rejected(capsys):
    assert perturb(capsys, "--r-min", "3", "--delta-sites", "1")[0] == 2


def test_perturb_csv(capsys):
    code, out, _ = run(capsys, "perturb", "--sites", "5", "--steps", "2", "--format", "csv")
    assert code == 0
    assert out.splitlines()[0] == "t,lhs,duhamel_rhs,site_sum_rhs,bound_integral_rhs"


# ------------------------------------------------------------------ lemmas


def test_lemmas(capsys):
    code, out, _ = run(capsys, "lemmas", "--chain-length", "41", "--square-side", "9")
    assert code == 0
    data = json.loads(out)
    assert len(data["incomplete_gamma"]) == 12
    assert all(math.isfinite(r["constant"]) for r in data["incomplete_gamma"] + data["sum_vs_integral"])
    half = [r for r in data["incomplete_gamma"] if r["mu"] == 0 and r["nu"] == 1][0]
    assert half["constant"] == pytest.approx(0.5, rel=1e-9)


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "lrbound", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "lrbound" in res.stdout
