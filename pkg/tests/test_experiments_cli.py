import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from vqt import cli
from vqt import experiments as ex
from vqt.capacity import tms_ea_rate
from vqt.fock import NumericError, thermal_dm, von_neumann_entropy
from vqt.gates import beamsplitter
from vqt.validate import check_homodyne, run_all

TINY_VQT = {"layers": 1, "cutoff": 5, "cutoff_a": 3, "restarts": 2, "max_iter": 5}


def write_config(path, **kw):
    raw = {"schema": 1, "protocols": ["direct"], "etas": [0.5]}
    raw.update(kw)
    path.write_text(json.dumps(raw))
    return path


def read_csv(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


# ----------------------------------------------------------------------------
# configuration

@pytest.mark.parametrize("raw,needle", [
    ({"schema": 1, "protocols": ["direct"], "etas": [0.5], "bogus": 1}, "unknown key(s) bogus"),
    ({"protocols": ["direct"], "etas": [0.5]}, "schema"),
    ({"schema": 2, "protocols": ["direct"], "etas": [0.5]}, "schema"),
    ({"schema": 1, "protocols": ["teleport"], "etas": [0.5]}, "unknown protocol"),
    ({"schema": 1, "protocols": ["direct"], "etas": [1.5]}, "etas"),
    ({"schema": 1, "protocols": ["direct"], "etas": []}, "etas"),
    ({"schema": 1, "protocols": ["vqt"], "etas": [0.5], "vqt": {"layer": 3}}, "vqt: unknown key(s) layer"),
])
def test_config_errors(raw, needle):
    with pytest.raises(ex.ConfigError) as err:
        ex.config_from_dict(raw)
    assert needle in str(err.value)


def test_config_roundtrip():
    cfg = ex.config_from_dict({"schema": 1, "protocols": ["vqt", "gkp-qt"], "etas": [0.2, 0.4],
                               "vqt": TINY_VQT, "gkp": {"d1": [2, 3]}})
    assert ex.config_from_dict(cfg.to_dict()) == cfg
    assert cfg.gkp.d1 == (2, 3)
    pc = cfg.protocol_config("vqt", 0.4)
    assert pc.with_ea and not pc.adaptive and pc.layers == 1


def test_cli_reports_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": 1,\n "protocols": ["direct"]\n "etas": [0.5]}')
    assert cli.main(["sweep", "--config", str(bad), "--out", str(tmp_path / "o")]) == 1
    assert "line 3 column 2" in capsys.readouterr().err
    unk = write_config(tmp_path / "unk.json", bogus=True)
    assert cli.main(["sweep", "--config", str(unk), "--out", str(tmp_path / "o")]) == 1
    assert "unknown key(s) bogus" in capsys.readouterr().err
    assert cli.main(["sweep", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 1


def test_workers_resolution(monkeypatch):
    monkeypatch.setenv("VQT_WORKERS", "3")
    assert cli.resolve_workers(None, 5) == 3
    assert cli.resolve_workers(2, 5) == 2
    monkeypatch.setenv("VQT_WORKERS", "many")
    with pytest.raises(ex.ConfigError):
        cli.resolve_workers(None)
    monkeypatch.delenv("VQT_WORKERS")
    assert cli.resolve_workers(None, 5) == 5
    assert cli.resolve_workers(None) >= 1


# ----------------------------------------------------------------------------
# sweeps

def test_direct_and_tms_rows(tmp_path):
    cfg = write_config(tmp_path / "c.json", protocols=["direct", "tms-ea"], etas=[0.3, 0.5, 0.7])
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "results.csv")
    assert list(rows[0]) == list(ex.CSV_COLUMNS)
    direct = [float(r["I_c"]) for r in rows if r["protocol"] == "direct"]
    # g(1.4) - g(0.6) from thermal spectra
    ref = von_neumann_entropy(thermal_dm(1.4, 120)) - von_neumann_entropy(thermal_dm(0.6, 120))
    assert direct[:2] == [0.0, 0.0]
    assert direct[2] == pytest.approx(ref, abs=1e-9)
    tms = {float(r["eta"]): float(r["I_c"]) for r in rows if r["protocol"] == "tms-ea"}
    grid = np.arange(1.0, 3.0 + 1e-9, 0.5)
    assert tms[0.3] == pytest.approx(max(tms_ea_rate(0.3, g, 2.0) for g in grid))
    assert tms[0.3] == pytest.approx(0.2507, abs=1e-4)


def test_eta_override_and_seed_flag(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    out = tmp_path / "o"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(out), "--eta", "0.6,0.8", "--seed", "4"]) == 0
    rows = read_csv(out / "results.csv")
    assert [float(r["eta"]) for r in rows] == [0.6, 0.8]
    assert {r["seed"] for r in rows} == {"4"}


def tiny_sweep_config(tmp_path, name="c.json"):
    return write_config(tmp_path / name, protocols=["vqt-no-ea", "vqt", "direct"], etas=[0.5], vqt=TINY_VQT)


def test_sweep_is_reproducible(tmp_path):
    cfg = tiny_sweep_config(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(a), "--workers", "1"]) == 0
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(b), "--workers", "2"]) == 0
    ca, cb = (a / "results.csv").read_text(), (b / "results.csv").read_text()
    assert ex.csv_without_timing(ca) == ex.csv_without_timing(cb)
    for f in sorted(a.glob("*.json")):
        da = ex.strip_timing(json.loads(f.read_text()))
        db = ex.strip_timing(json.loads((b / f.name).read_text()))
        assert da == db


def test_sweep_resume_reuses_points(tmp_path):
    cfg = tiny_sweep_config(tmp_path)
    out = tmp_path / "o"
    cli.main(["sweep", "--config", str(cfg), "--out", str(out)])
    first = {f.name: f.read_text() for f in out.glob("*.json")}
    cli.main(["sweep", "--config", str(cfg), "--out", str(out)])
    assert {f.name: f.read_text() for f in out.glob("*.json")} == first
    # a changed setting invalidates the key and recomputes
    cfg2 = write_config(tmp_path / "c2.json", protocols=["vqt-no-ea"], etas=[0.5], vqt={**TINY_VQT, "max_iter": 3})
    cli.main(["sweep", "--config", str(cfg2), "--out", str(out)])
    new = json.loads((out / "vqt-no-ea_eta0.5000.json").read_text())
    assert new["key"] != json.loads(first["vqt-no-ea_eta0.5000.json"])["key"]


def test_stored_params_reevaluate_exactly(tmp_path):
    cfg = tiny_sweep_config(tmp_path)
    out = tmp_path / "o"
    cli.main(["sweep", "--config", str(cfg), "--out", str(out)])
    rows = {r["protocol"]: float(r["I_c"]) for r in read_csv(out / "results.csv")}
    for proto in ("vqt-no-ea", "vqt"):
        doc = ex.load_point(out / f"{proto}_eta0.5000.json")
        assert abs(ex.reevaluate_point(doc).I_c - rows[proto]) <= 1e-9
    # the assisted point is warm-started from the unassisted optimum
    vqt = json.loads((out / "vqt_eta0.5000.json").read_text())
    assert vqt["result"]["restarts_used"] == TINY_VQT["restarts"] + 1
    assert rows["vqt"] >= rows["vqt-no-ea"] - 1e-12


def test_infeasible_and_numeric_exit_codes(tmp_path, monkeypatch):
    cfg = write_config(tmp_path / "c.json")

    def infeasible(*a, **k):
        return {"result": {}, "feasible": False, "row": ex._row("direct", 0.5, 0, 0, 0, 1, 0, 0, 0)}

    monkeypatch.setattr(ex, "run_point", infeasible)
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o1")]) == 2

    def broken(*a, **k):
        raise NumericError("eigensolver failed")

    monkeypatch.setattr(ex, "run_point", broken)
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "o2")]) == 3


# ----------------------------------------------------------------------------
# wigner / match-gkp

def synthetic_vqt_doc(tmp_path, params=None):
    pc = ex.ProtocolConfig(eta=0.5, with_ea=False, layers=2, cutoff=8)
    n = 2 * 6 + 2 * 4 + 2 * 4
    doc = {"protocol": "vqt-no-ea", "eta": 0.5,
           "result": {"config": pc.to_dict(), "params": list(params if params is not None else np.zeros(n))}}
    path = tmp_path / "vqt.json"
    path.write_text(json.dumps(doc))
    return path


def test_wigner_of_trivial_params_is_vacuum(tmp_path):
    res = synthetic_vqt_doc(tmp_path)
    out = tmp_path / "w.csv"
    assert cli.main(["wigner", str(res), "--mode", "S", "--points", "21", "--extent", "4",
                     "--out", str(out)]) == 0
    rows = [tuple(map(float, r)) for r in list(csv.reader(io.StringIO(out.read_text())))[1:]]
    assert len(rows) == 21 * 21
    for q, p, w in rows:
        assert w == pytest.approx(math.exp(-q * q - p * p) / math.pi, abs=1e-10)


def test_wigner_needs_params(tmp_path, capsys):
    path = tmp_path / "d.json"
    path.write_text(json.dumps({"protocol": "direct", "eta": 0.5, "result": {"I_c": 0.0}}))
    assert cli.main(["wigner", str(path)]) == 1
    assert "no state parameters" in capsys.readouterr().err
    path.write_text(json.dumps({"protocol": "vqt", "eta": 0.5, "result": {}}))
    assert cli.main(["wigner", str(path)]) == 1


def baseline_doc(tmp_path, protocol, params, settings):
    doc = {"protocol": protocol, "eta": 0.5, "result": {"params": params},
           "settings": {"n_s": 2.0, "n_p": 2.0, **settings}}
    path = tmp_path / f"{protocol}.json"
    path.write_text(json.dumps(doc))
    return path


def test_match_gkp_self_match(tmp_path):
    params = {"d1": 2, "d2": 1, "weights": [0.5, 0.5], "s_phi1": 0.0, "s_r": 0.0, "p_phi1": 0.0, "p_r": 0.0,
              "p_phi2": 0.0}
    res = baseline_doc(tmp_path, "gkp-qt", params, {"gkp": {"cutoff": 40}})
    out = tmp_path / "m.json"
    assert cli.main(["match-gkp", str(res), "--d-max", "3", "--coarse", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["S"]["fidelity"] >= 0.999
    assert rep["S"]["d"] == 2
    assert set(rep["S"]) >= {"d", "v", "u", "angle", "fidelity", "weights"}


def test_match_gkp_thermal_is_poor(tmp_path):
    params = {"r_s": 0.0, "nbar": 2.0, "r_p": 0.0}
    res = baseline_doc(tmp_path, "aqt", params, {"aqt": {"cutoff": 40}})
    out = tmp_path / "m.json"
    assert cli.main(["match-gkp", str(res), "--d-max", "6", "--coarse", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["S"]["fidelity"] < 0.9


# ----------------------------------------------------------------------------
# validate / baselines

def test_validate_passes(capsys):
    assert cli.main(["validate"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 4 and all(l.startswith("PASS") for l in lines)


def test_validate_catches_corrupted_beamsplitter():
    def flipped(eta, dims):
        return beamsplitter(eta, dims).T  # reverses the sign of the coupling

    checks = run_all(bs=flipped)
    assert not checks[1].passed
    assert all(c.passed for i, c in enumerate(checks) if i != 1)


def test_homodyne_distance_shrinks_with_bins():
    c = check_homodyne(bins=(64, 512))
    assert c.passed
    assert "bins 64" in c.detail


def test_baselines_table(capsys):
    assert cli.main(["baselines", "--eta", "0.3,0.7"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    assert lines[2].split()[0] == "0.700"


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "vqt.cli", "baselines", "--eta", "0.5"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "TMS-EA" in proc.stdout
