import json
import subprocess
import sys

import pytest

from casebook import round_trip_cases
from nashbook import pennies_game
from leontief_reduction.cli import main
from leontief_reduction.market import market_to_obj
from leontief_reduction.nash import game_to_obj
from leontief_reduction.poly import format_rational, system_to_obj


def dump(path, obj):
    path.write_text(json.dumps(obj, indent=1) + "\n")
    return str(path)


def solution_obj(z):
    return {"schema": "leontief-reduction/solution@1", "z": [format_rational(x) for x in z]}


@pytest.fixture
def compiled(tmp_path):
    _, F, z = round_trip_cases()[0]
    sysf = dump(tmp_path / "sys.json", system_to_obj(F))
    solf = dump(tmp_path / "sol.json", solution_obj(z))
    mkt, tr = str(tmp_path / "mkt.json"), str(tmp_path / "trace.json")
    assert main(["compile", sysf, "-o", mkt, "--trace", tr, "--relations", str(tmp_path / "rel.json")]) == 0
    return tmp_path, sysf, solf, mkt, tr


def test_compile_writes_market_trace_and_manifest(compiled):
    tmp, sysf, _, mkt, tr = compiled
    for f in (mkt, tr, str(tmp / "rel.json")):
        assert "schema" in json.loads(open(f).read())
    man = json.loads((tmp / "mkt.json.manifest.json").read_text())
    assert man["subcommand"] == "compile" and sysf in man["inputs"] and mkt in man["outputs"]
    assert man["config"]["trace"] == tr


def test_lift_verify_project_audit(compiled):
    tmp, sysf, solf, mkt, tr = compiled
    cert = str(tmp / "cert.json")
    assert main(["lift", tr, solf, "-o", cert]) == 0
    assert main(["verify", mkt, cert, "-o", str(tmp / "rep.json")]) == 0
    assert json.loads((tmp / "rep.json").read_text())["ok"] is True
    back = tmp / "back.json"
    assert main(["project", tr, cert, "--system", sysf, "-o", str(back)]) == 0
    assert back.read_bytes() == open(solf, "rb").read()
    assert main(["audit", tr, cert, "--market", mkt, "-o", str(tmp / "audit.json")]) == 0
    assert json.loads((tmp / "audit.json").read_text())["ok"] is True


def test_byte_exact_round_trips_on_all_cases(tmp_path):
    for name, F, z in round_trip_cases():
        d = tmp_path / name
        d.mkdir()
        sysf = dump(d / "sys.json", system_to_obj(F))
        solf = dump(d / "sol.json", solution_obj(z))
        assert main(["compile", sysf, "-o", str(d / "m.json"), "--trace", str(d / "t.json")]) == 0
        assert main(["lift", str(d / "t.json"), solf, "-o", str(d / "c.json")]) == 0
        assert main(["project", str(d / "t.json"), str(d / "c.json"), "-o", str(d / "z.json")]) == 0
        assert (d / "z.json").read_bytes() == (d / "sol.json").read_bytes(), name


def test_shell_pipeline(compiled):
    tmp, _, solf, mkt, tr = compiled
    cmd = f"{sys.executable} -m leontief_reduction lift {tr} {solf} | {sys.executable} -m leontief_reduction verify {mkt} -"
    res = subprocess.run(cmd, shell=True, capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["ok"] is True


def test_bad_certificate_and_bad_solution(compiled, capsys):
    tmp, _, solf, mkt, tr = compiled
    cert = tmp / "cert.json"
    assert main(["lift", tr, solf, "-o", str(cert)]) == 0
    obj = json.loads(cert.read_text())
    obj["beta"][0] = "2"
    bad = dump(tmp / "bad.json", obj)
    capsys.readouterr()
    assert main(["verify", mkt, bad]) == 1
    assert json.loads(capsys.readouterr().out)["violations"]
    assert main(["project", tr, bad]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "INVALID_CERTIFICATE"
    badsol = dump(tmp / "badsol.json", solution_obj([1, 1]))
    assert main(["lift", tr, badsol]) == 1
    assert json.loads(capsys.readouterr().err)["error"] == "LIFT_REJECTED"


def test_usage_errors(tmp_path, capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    broken = tmp_path / "broken.json"
    broken.write_text("{ not json")
    assert main(["compile", str(broken)]) == 2
    assert "PARSE_ERROR" in capsys.readouterr().err
    assert main(["compile", str(tmp_path / "missing.json")]) == 2


def test_stats(compiled, capsys):
    _, sysf, *_ = compiled
    capsys.readouterr()
    assert main(["stats", sysf]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["market"]["goods"] == 103 and out["H"] == "257"


def test_nash_commands(tmp_path, capsys):
    gamef = dump(tmp_path / "g.json", game_to_obj(pennies_game()))
    assert main(["nash", "encode", gamef, "-o", str(tmp_path / "f.json")]) == 0
    assert json.loads((tmp_path / "f.json").read_text())["vars"] == 15
    assert main(["nash", "encode", "--decision", gamef, "-o", str(tmp_path / "d.json")]) == 0
    half = dump(tmp_path / "z.json", {"z": ["1/2"] * 6})
    assert main(["nash", "verify", gamef, half]) == 0
    pure = dump(tmp_path / "p.json", {"z": ["1", "0"] * 3})
    assert main(["nash", "verify", gamef, pure]) == 1


def test_ncp_commands(compiled, capsys):
    tmp, _, solf, mkt, tr = compiled
    cert = str(tmp / "cert.json")
    main(["lift", tr, solf, "-o", cert])
    assert main(["ncp", "build", mkt, "-o", str(tmp / "ncp.json")]) == 0
    assert main(["ncp", "check", mkt, cert]) == 0
    capsys.readouterr()
    assert main(["ncp", "export-etr", mkt]) == 0
    assert capsys.readouterr().out.strip().endswith("(check-sat)")


def test_oracle_commands(tmp_path, capsys):
    F = round_trip_cases()[5][1]  # cube root
    sysf = dump(tmp_path / "s.json", system_to_obj(F))
    capsys.readouterr()
    assert main(["oracle", "poly", sysf, "--depth", "12"]) == 0
    (pt,) = json.loads(capsys.readouterr().out)["points"]
    assert abs(pt[0] - 0.5) < 1e-9
    from leontief_reduction.poly import Polynomial, make_system

    infeasible = make_system([Polynomial.from_terms([(1, {1: 1}), (1, {})])], [(0, 1)])
    assert main(["oracle", "poly", dump(tmp_path / "i.json", system_to_obj(infeasible))]) == 3
    diag = dump(tmp_path / "diag.json", system_to_obj(round_trip_cases()[1][1]))
    assert main(["oracle", "poly", diag, "--depth", "20", "--max-iters", "50"]) == 3
    from leontief_reduction.gadgets import gadget_market
    from leontief_reduction.reduce import Relation

    M, _ = gadget_market(Relation.eq(1, 2), 2, H=5)
    mf = dump(tmp_path / "m.json", market_to_obj(M))
    assert main(["oracle", "market", mf]) == 0
    assert main(["oracle", "tatonnement", mf, "--seed", "3"]) == 0
