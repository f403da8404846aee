import csv
import json

import numpy as np
import pytest

import dense_bse
from exsparse.cli import EXIT_GUARD, main, probe_side
from exsparse.model import ModelConfig, build_lattice, load_integrals

ZERO = {"n_sites": 4, "eps_gap": 1.7, "t_hop": 0.0, "U": 0.0, "lambda_cd": 0.0, "lambda_dd": 0.0}
TOY = {"n_sites": 2, "t_hop": 0.3, "U": 1.0, "lambda_cd": 0.2, "lambda_dd": 0.1, "R_loc": 1.5}


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def test_model_dump_round_trips(tmp_path, capsys):
    cfg = write_config(tmp_path, {"n_sites": 8, "t_hop": 0.2, "U": 1.0, "lambda_cd": 0.1,
                                  "lambda_dd": 0.05, "R_c": 2.0})
    code, out, _ = run(capsys, "model", "--config", cfg, "--out", tmp_path / "ints.txt")
    assert code == 0
    summary = json.loads(out)
    assert summary["L"] == 16 and summary["V_classes"]["charge_charge"] > 0
    I = build_lattice(ModelConfig.from_dict(json.loads(cfg.read_text())))
    J = load_integrals(tmp_path / "ints.txt")
    np.testing.assert_allclose(J.dense_V(), I.dense_V(), atol=1e-15)
    np.testing.assert_allclose(J.dense_f(), I.dense_f(), atol=1e-13)
    assert json.loads((tmp_path / "ints.summary.json").read_text())["dump"] == "ints.txt"


def test_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"n_sites": 4,, }')
    code, _, err = run(capsys, "model", "--config", bad)
    assert code == 2 and "byte 14" in err
    code, _, err = run(capsys, "model", "--config", '{"n_sites": 4, "eps_screen": 0}')
    assert code == 3
    code, _, _ = run(capsys, "model", "--config", tmp_path / "missing.json")
    assert code == 2
    code, _, _ = run(capsys, "model", "--config", '{"n_sites": 4, "bogus": 1}')
    assert code == 3
    code, _, _ = run(capsys, "lcc", "solve", "--model", json.dumps(TOY), "--max-iter", "1",
                     "--tol", "1e-14", "--quiet")
    assert code == 4
    code, _, _ = run(capsys, "probe", "--n-sites", "30", "--d", "8", "--max-support", "20",
                     "--quiet")
    assert code == EXIT_GUARD == 5
    code, _, _ = run(capsys, "bse", "dyn", "--model", json.dumps(ZERO), "--init", "nowhere")
    assert code == 2


def test_bse_eig_zero_interaction(capsys):
    code, out, _ = run(capsys, "bse", "eig", "--model", json.dumps(ZERO), "--json")
    assert code == 0
    res = json.loads(out)
    assert res["values"][0] == pytest.approx(1.7, abs=1e-12) and res["converged"]


def test_bse_eig_m2_matches_dense(capsys):
    cfg = {**TOY, "n_sites": 3, "R_c": 2.0}
    code, out, _ = run(capsys, "bse", "eig", "--m", 2, "--model", json.dumps(cfg), "--json",
                       "--tol", "1e-12")
    assert code == 0
    I = build_lattice(ModelConfig.from_dict(cfg))
    A, _ = dense_bse.build(I, 2)
    assert json.loads(out)["values"][0] == pytest.approx(np.linalg.eigvalsh(A)[0], abs=1e-9)


def test_bse_dyn_norm(tmp_path, capsys):
    cfg = {**TOY, "n_sites": 8}
    code, _, _ = run(capsys, "bse", "dyn", "--model", json.dumps(cfg), "--t", 5, "--steps", 10,
                     "--init", "site:0", "--sites", "0,1,2", "--out", tmp_path)
    assert code == 0
    with (tmp_path / "bse_dyn.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11
    assert list(rows[0]) == ["time", "support", "norm", "energy", "p_site0", "p_site1",
                             "p_site2"]
    assert all(abs(float(r["norm"]) - 1) <= 1e-10 for r in rows)
    assert float(rows[0]["p_site0"]) == 1.0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"bse_dyn.csv", "bse_dyn.json"}
    assert json.loads((tmp_path / "bse_dyn.json").read_text())["digest"] == manifest["digest"]


def test_lcc_extensivity_and_zero(tmp_path, capsys):
    one = {"n_sites": 3, "t_hop": 0.2, "U": 1.0, "lambda_cd": 0.2, "lambda_dd": 0.1}
    # two fragments 3 sites apart, beyond every cutoff, as a tabulated file
    from exsparse.model import decoupled_fragments, dump_integrals
    cfg = ModelConfig.from_dict(one)
    dump_integrals(decoupled_fragments(cfg, 1), tmp_path / "one.txt")
    dump_integrals(decoupled_fragments(cfg, 2), tmp_path / "two.txt")
    e = []
    for name in ("one.txt", "two.txt"):
        code, out, _ = run(capsys, "lcc", "solve", "--m", 2, "--model", tmp_path / name,
                           "--json", "--tol", "1e-13")
        assert code == 0
        e.append(json.loads(out)["E_c"])
    assert e[1] == pytest.approx(2 * e[0], abs=1e-10)
    code, out, _ = run(capsys, "lcc", "solve", "--m", 2, "--model", json.dumps(ZERO), "--json")
    res = json.loads(out)
    assert res["E_c"] == 0.0 and res["iterations"] == 1


def test_lcc_unconverged_report(tmp_path, capsys):
    code, _, _ = run(capsys, "lcc", "solve", "--m", 2, "--model", json.dumps({**TOY, "n_sites": 5}),
                     "--max-iter", 2, "--tol", "1e-14", "--out", tmp_path)
    assert code == 4
    rep = json.loads((tmp_path / "lcc_report.json").read_text())
    assert rep["converged"] is False and rep["iterations"] == 2
    assert (tmp_path / "amplitudes.txt").read_text().startswith("t 2 ")


def test_estimate(capsys):
    code, out, _ = run(capsys, "estimate", "--method", "bse", "--input", "crystal", "--m", 3,
                       "--D", 3, "--json")
    assert code == 0
    assert json.loads(out)["scenario"]["power"] == ["19", "7"]
    code, out, _ = run(capsys, "estimate", "--method", "lcc", "--input", "integrals", "--m", 3,
                       "--D", 3, "--json")
    assert json.loads(out)["scenario"]["ratio"]["expr"] == "d^6 * Lc^12"
    code, out, _ = run(capsys, "estimate", "--m", 3, "--D", 3)
    assert code == 0 and out.startswith("m=3 D=3") and not out.lstrip().startswith("{")


def test_probe_fit(tmp_path, capsys):
    code, _, _ = run(capsys, "probe", "--m", 1, "--D", 1, "--Rc", 1, "--d", 6, "--out", tmp_path,
                     "--quiet")
    assert code == 0
    fit = json.loads((tmp_path / "probe.json").read_text())["fit"]
    assert 1.7 <= fit["exponent"] <= 2.3
    with (tmp_path / "trace.csv").open() as fh:
        assert next(csv.reader(fh)) == ["iter", "nnz", "cum_ops", "wall_ms"]


def test_probe_side():
    n = probe_side(1, 1, 1.0, 6)
    reach = 13
    assert n >= reach + 4 and n * n >= 10 * reach ** 2
    assert probe_side(1, 2, 1.0, 3) >= 9


def test_quiet_and_json(capsys):
    code, out, err = run(capsys, "bse", "eig", "--model", json.dumps(ZERO), "--quiet")
    assert code == 0 and out == "" and err == ""
    code, out, _ = run(capsys, "estimate", "--json")
    json.loads(out)
    code, out, err = run(capsys, "model", "--config", '{"n_sites": 4, "eps_screen": 0}',
                         "--quiet")
    assert code == 3 and out == "" and err.startswith("error:")
