import csv
import io
import json

import numpy as np
import pytest

from geomq.cli import build_report, load_schema, main, validate_config

ORACLE_FAST = ["--eps", "0.1", "0.07", "0.05", "--k", "-0.2", "0", "0.2", "--grid", "1", "12", "17"]


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize("argv, kappa, tau", [
    (["--curve", "helix", "--r", "3", "--c", "4"], 0.12, 0.16),
    (["--curve", "line"], 0.0, 0.0),
    (["--curve", "circle", "--R", "2"], 0.5, 0.0),
])
def test_geometry_command(argv, kappa, tau, capsys):
    code, out, _ = _run(["geometry", *argv, "--n", "64"], capsys)
    assert code == 0
    rows = _rows(out)
    assert len(rows) == 64
    assert np.allclose([float(r["kappa"]) for r in rows], kappa, atol=1e-15)
    assert np.allclose([float(r["tau"]) for r in rows], tau, atol=1e-15)


def test_geometry_propagated_frames(tmp_path, capsys):
    side = tmp_path / "g.json"
    code, out, _ = _run(["geometry", "--curve", "helix", "--n", "16", "--propagate", "--json", str(side)], capsys)
    assert code == 0
    meta = json.loads(side.read_text())
    assert meta["n"] == 16 and meta["curve"]["kind"] == "helix"


def test_modes_command(capsys):
    code, out, _ = _run(["modes", "--w", "1", "--l", "0", "1", "2", "3"], capsys)
    assert code == 0
    rows = _rows(out)
    assert [float(r["E_oracle"]) for r in rows] == pytest.approx([1, 2, 3, 4], rel=1e-4)
    assert [float(r["E_paper"]) for r in rows] == pytest.approx([-0.5, 1.5, 7.5, 17.5])


def test_effective_examples(capsys):
    code, out, _ = _run(["effective", "--model", "spinless-circular", "--l", "1"], capsys)
    assert code == 0
    d = json.loads(out)
    assert np.allclose([s["A"] for s in d["samples"]], 0.16, atol=1e-15)

    code, out, _ = _run(["effective", "--model", "spinless-square", "--curve", "line"], capsys)
    d = json.loads(out)
    assert all(v == 0 for s in d["samples"] for v in np.ravel(s["V_re"]))

    code, out, _ = _run(["effective", "--model", "charged-circular", "--l", "1", "--Bs", "1"], capsys)
    d = json.loads(out)
    assert "induced_zeeman" in d["terms"]["V"]
    assert d["samples"][0]["V_re"][0][0] == pytest.approx(-0.5 - 0.0018, abs=1e-15)


@pytest.mark.parametrize("argv", [
    ["effective", "--model", "spinless-square", "--l", "1"],
    ["effective", "--model", "spinless-circular", "--As", "0.1"],
    ["effective", "--model", "charged-square", "--alpha-s", "0.1"],
    ["effective", "--model", "soc-square", "--full-gauge"],
    ["effective", "--model", "soc-square", "--charge", "2"],
])
def test_incompatible_flags_exit_2(argv, capsys):
    code, _, err = _run(argv, capsys)
    assert code == 2
    rep = json.loads(err)
    assert rep["exit_code"] == 2 and rep["error"]


def test_schema_violations_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"curve": {"kind": "helix", "r": 3, "c": 4}, "unknown": 1}))
    code, _, err = _run(["geometry", "--config", str(bad)], capsys)
    assert code == 2 and "unknown" in json.loads(err)["error"]
    bad.write_text("{not json")
    assert _run(["geometry", "--config", str(bad)], capsys)[0] == 2
    assert _run(["geometry", "--config", str(tmp_path / "missing.json")], capsys)[0] == 2
    assert _run(["geometry", "--curve", "circle", "--R", "-1"], capsys)[0] == 2
    assert _run(["bands", "--n-cell", "4"], capsys)[0] == 2
    assert _run(["geometry", "--curve", "parametric", "--x", "t^3", "--y", "0", "--z", "0",
                 "--t-range", "-1", "1"], capsys)[0] == 2


def test_usage_error_exit_code(capsys):
    assert main(["nonsense"]) == 2
    capsys.readouterr()


def test_numerical_failure_exit_3(monkeypatch, capsys):
    import geomq.cli as cli
    from geomq.spectrum import EigenSolverError

    def boom(*a, **k):
        raise EigenSolverError("no convergence", residuals=[1.0])

    monkeypatch.setattr(cli, "bloch_bands", boom)
    code, _, err = _run(["bands", "--model", "spinless-circular", "--l", "1", "--n-k", "2", "--n-cell", "32"], capsys)
    assert code == 3 and json.loads(err)["type"] == "EigenSolverError"


def test_config_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"curve": {"kind": "circle", "R": 2.0}, "sampling": {"n": 8}}))
    code, out, _ = _run(["geometry", "--config", str(cfg)], capsys)
    assert len(_rows(out)) == 8 and float(_rows(out)[0]["kappa"]) == 0.5
    code, out, _ = _run(["geometry", "--config", str(cfg), "--n", "5", "--R", "4"], capsys)
    rows = _rows(out)
    assert len(rows) == 5 and float(rows[0]["kappa"]) == 0.25


def test_bands_from_config_and_model_json(tmp_path, capsys):
    model = tmp_path / "m.json"
    assert main(["effective", "--model", "spinless-circular", "--l", "1", "--n", "128", "--out", str(model)]) == 0
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["bands", "--model", "spinless-circular", "--l", "1", "--n-k", "8", "--n-cell", "128",
                 "--out", str(a)]) == 0
    assert main(["bands", "--model-json", str(model), "--n-k", "8", "--n-cell", "128", "--out", str(b)]) == 0
    ea = np.array([float(r["energy_re"]) for r in _rows(a.read_text())])
    eb = np.array([float(r["energy_re"]) for r in _rows(b.read_text())])
    assert np.abs(ea - eb).max() < 1e-9
    capsys.readouterr()


def test_json_round_trip_is_lossless(tmp_path):
    out = tmp_path / "m.json"
    assert main(["effective", "--model", "soc-circular", "--l", "1", "--alpha-s", "0.1", "--alpha-n", "0.2",
                 "--n", "16", "--out", str(out)]) == 0
    text = out.read_text()
    d = json.loads(text)
    assert json.dumps(d, sort_keys=True, indent=2) + "\n" == text or json.dumps(d, sort_keys=True, indent=2) == text


@pytest.fixture(scope="module")
def circle_runs(tmp_path_factory):
    d = tmp_path_factory.mktemp("circle")
    eff, orc = d / "eff.json", d / "orc.json"
    assert main(["effective", "--model", "spinless-circular", "--l", "0", "--curve", "circle", "--R", "1",
                 "--out", str(eff)]) == 0
    assert main(["oracle", "--curve", "circle", "--R", "1", "--cross-section", "disk", *ORACLE_FAST,
                 "--out", str(orc), "--csv", str(d / "orc.csv")]) == 0
    return d, eff, orc


def test_oracle_outputs(circle_runs):
    d, _, orc = circle_runs
    res = json.loads(orc.read_text())
    assert res["cross_section"] == "disk" and res["fit"]["c_kappa"] is not None
    rows = _rows((d / "orc.csv").read_text())
    assert set(rows[0]) == {"eps", "k", "level", "energy", "L"}
    assert len(rows) == 3 * 3 * res["settings"]["n_eig"]


def test_compare_circle_report(circle_runs):
    d, eff, orc = circle_runs
    md, js = d / "rep.md", d / "rep.json"
    assert main(["compare", str(eff), str(orc), "--out", str(md), "--json", str(js)]) == 0
    rep = json.loads(js.read_text())
    row = next(r for r in rep["rows"] if r["quantity"] == "c_kappa")
    assert row["predicted"] == -0.125
    assert row["status"] in ("PASS", "FAIL")
    assert "| c_kappa |" in md.read_text()


def test_compare_hash_mismatch_exit_2(circle_runs, tmp_path, capsys):
    _, _, orc = circle_runs
    eff = tmp_path / "helix.json"
    assert main(["effective", "--model", "spinless-circular", "--l", "1", "--out", str(eff)]) == 0
    code, out, err = _run(["compare", str(eff), str(orc)], capsys)
    assert code == 2 and out == "" and "hash" in json.loads(err)["error"]


def test_compare_inconclusive_exits_0(circle_runs, capsys):
    _, eff, orc = circle_runs
    res = json.loads(orc.read_text())
    res["fit"]["c_kappa"] = None
    rep = build_report(json.loads(eff.read_text()), res)
    assert rep["inconclusive"]
    assert next(r for r in rep["rows"] if r["quantity"] == "c_kappa")["status"] == "inconclusive"


@pytest.mark.parametrize("argv, suffix", [
    (["geometry", "--curve", "helix", "--n", "32"], ".csv"),
    (["modes", "--w", "2"], ".csv"),
    (["effective", "--model", "soc-square", "--alpha-b", "0.3", "--mode", "hermitized"], ".json"),
    (["bands", "--model", "soc-circular", "--l", "1", "--alpha-n", "0.2", "--n-k", "4", "--n-cell", "64"], ".csv"),
    (["oracle", "--curve", "circle", "--R", "1", "--cross-section", "square", "--eps", "0.1", "0.07", "0.05",
      "--grid", "1", "9", "9"], ".json"),
])
def test_runs_are_bitwise_reproducible(argv, suffix, tmp_path):
    outs = []
    for tag in ("a", "b"):
        p = tmp_path / f"{tag}{suffix}"
        assert main([*argv, "--seed", "5", "--out", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1]


def test_schema_is_shipped_and_strict():
    schema = load_schema()
    assert schema["additionalProperties"] is False
    validate_config({"curve": {"kind": "helix", "r": 3, "c": 4}, "oracle": {"eps": [0.2, 0.1, 0.05]}})
    with pytest.raises(Exception):
        validate_config({"oracle": {"eps": [0.2, 0.1]}})
