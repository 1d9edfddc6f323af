import json

import pytest

from cjid.cli import main

FEW_M = "0.2,0.5,0.8"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def jsonl(out):
    return [json.loads(line) for line in out.splitlines()]


def test_verify_two_point(capsys):
    code, out, _ = run(capsys, "verify", "--eq", "E23", "--format", "jsonl")
    rows = jsonl(out)
    assert code == 0
    assert len(rows) == 21
    assert set(rows[0]) == {"name", "eq", "p", "m", "residual", "constants", "verdict"}
    assert all(r["verdict"] == "pass" and r["residual"] <= 1e-12 for r in rows)


def test_verify_table_two_three_points(capsys):
    code, out, _ = run(capsys, "verify", "--table", "2", "--p", "3", "--m-grid", FEW_M)
    assert code == 0
    assert out.splitlines()[-1] == "22/22 identities pass"


def test_verify_gap_family(capsys):
    code, out, _ = run(capsys, "verify", "--family", "E19", "--p", "7", "--format", "jsonl")
    names = sorted({r["name"] for r in jsonl(out)})
    assert code == 0 and names == ["E19.n2", "E19.n3", "E19.n4"]


def test_fit_matches_closed_form(capsys):
    code, out, _ = run(capsys, "fit", "--eq", "E3", "--format", "jsonl")
    rows = jsonl(out)
    assert code == 0 and all(r["match"] for r in rows)


def test_fit_compares_lockfile(capsys, tmp_path):
    lock = tmp_path / "bad.lock"
    lock.write_text("E78.p2:A 0.5 123.0\n")
    code, out, _ = run(capsys, "fit", "--family", "E78", "--p", "2", "--m-grid", "0.5",
                       "--lockfile", str(lock), "--format", "jsonl")
    assert code == 1 and jsonl(out)[0]["locked"] is False
    code, out, _ = run(capsys, "fit", "--family", "E78", "--p", "2", "--m-grid", "0.5",
                       "--format", "jsonl")
    assert code == 0 and jsonl(out)[0]["locked"] is True


def test_fit_writes_lockfile(capsys, tmp_path):
    path = tmp_path / "out.lock"
    code, _, _ = run(capsys, "fit", "--family", "E78", "--p", "2", "--m-grid", "0.5",
                     "--write-lockfile", str(path))
    assert code == 0
    assert path.read_text().startswith("E78.p2:A 0.5 ")


def test_derive(capsys):
    code, out, _ = run(capsys, "derive", "--eq", "E8", "--p", "4", "--m-grid", FEW_M)
    assert code == 0
    assert "cyc(s[1]*c[1]*(d[2]+d[4])) == 0" in out.splitlines()


def test_translate(capsys):
    code, out, _ = run(capsys, "translate", "--eq", "E23", "--m-grid", FEW_M)
    assert code == 0
    assert "s[1]*s[2] == 1/sqrt(m)" in out.splitlines()
    assert "@lattice imag" in out


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0 and "E23" in out and "family" in out
    code, out, _ = run(capsys, "list", "--eq", "E32", "--format", "jsonl")
    row, = jsonl(out)
    assert row["rank"] == 3 and row["known"] == ["A"]


def test_dsl_file_and_failure(capsys, tmp_path):
    good = tmp_path / "good.cjid"
    good.write_text("@p 2\nd[1]*d[2] == sqrt(1-m)\n")
    bad = tmp_path / "bad.cjid"
    bad.write_text("@p 2\nd[1]*d[2] == 1001/1000*sqrt(1-m)\n")
    assert run(capsys, "verify", str(good), "--m-grid", FEW_M)[0] == 0
    code, out, _ = run(capsys, "verify", str(bad), "--m-grid", FEW_M)
    assert code == 1 and out.startswith("FAIL")


@pytest.mark.parametrize("argv", [
    ["verify"],
    ["verify", "--eq", "E999"],
    ["verify", "--family", "E19"],
    ["verify", "--family", "E56", "--p", "5"],
    ["verify", "--family", "E23", "--p", "2"],
    ["verify", "--eq", "E23", "--m-grid", "0.5,1.7"],
    ["verify", "--eq", "E23", "--m-grid", "a,b"],
    ["verify", "--eq", "E23", "--x-count", "3"],
    ["verify", "--eq", "E23", "--tol", "-1"],
    ["verify", "/nonexistent/file.cjid"],
])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err.startswith("cjid: error:")


def test_bad_dsl_is_usage_error(capsys, tmp_path):
    path = tmp_path / "x.cjid"
    path.write_text("@p 2\nd[1]*d[7] == A\n")
    code, _, err = run(capsys, "verify", str(path))
    assert code == 2 and "outside" in err


def test_argparse_errors_exit_two(capsys):
    with pytest.raises(SystemExit) as info:
        main(["verify", "--format", "xml"])
    assert info.value.code == 2


def test_env_and_flag_precedence(capsys, monkeypatch):
    monkeypatch.setenv("CJID_TOL", "1e-30")
    code, _, _ = run(capsys, "verify", "--eq", "E23", "--m-grid", FEW_M)
    assert code == 1
    code, _, _ = run(capsys, "verify", "--eq", "E23", "--m-grid", FEW_M, "--tol", "1e-9")
    assert code == 0
    monkeypatch.setenv("CJID_XCOUNT", "4")
    assert run(capsys, "verify", "--eq", "E23", "--tol", "1e-9")[0] == 2
    assert run(capsys, "verify", "--eq", "E23", "--tol", "1e-9", "--x-count", "16",
               "--m-grid", FEW_M)[0] == 0
    monkeypatch.setenv("CJID_XCOUNT", "many")
    assert run(capsys, "verify", "--eq", "E23")[0] == 2


def test_output_is_deterministic(capsys):
    argv = ["verify", "--eq", "E32,E70", "--format", "jsonl", "--m-grid", FEW_M]
    first = run(capsys, *argv)[1]
    assert run(capsys, *argv)[1] == first


def test_complex_constants_are_pairs(capsys, tmp_path):
    path = tmp_path / "im.cjid"
    # cn(u + iK') = -i dn(u) / (sqrt(m) sn(u))
    path.write_text("@p 2\n@lattice imag\ns[1]*c[2] == A*d[1]\n")
    # a factor i always comes with an odd degree gap, so the rank rule flags it
    code, out, _ = run(capsys, "verify", str(path), "--m-grid", "0.5", "--format", "jsonl")
    row, notice = jsonl(out)
    assert code == 1 and "rank rule" in notice["text"]
    assert row["residual"] < 1e-12 and row["verdict"] == "fail"
    re, im = row["constants"]["A"]
    assert abs(re) < 1e-9 and im == pytest.approx(-(2 ** 0.5), rel=1e-9)
