import json
import subprocess
import sys

import pytest

from conftest import CORPUS, INDEX, corpus_program
from hojabr.cli import main
from hojabr.syntax import parse

DATA = CORPUS / "data"
FRONTENDS = CORPUS / "frontends"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_parse_json(capsys):
    code, out, _ = run(capsys, "parse", CORPUS / "fig4_nlj.hjb", "--json")
    assert code == 0
    tree = json.loads(out)
    assert tree["node"] == "Program" and tree["statements"][0]["node"] == "Rule"


def test_fmt_check(capsys, tmp_path):
    src = tmp_path / "p.hjb"
    src.write_text("Q(x):=R(x),S(x)\n")
    assert run(capsys, "fmt", src, "--check")[0] == 1
    code, out, _ = run(capsys, "fmt", src)
    assert out == "Q(x) := R(x), S(x)\n"
    src.write_text(out)
    assert run(capsys, "fmt", src, "--check")[0] == 0


@pytest.mark.parametrize("name", sorted(INDEX))
def test_check_corpus(capsys, name):
    code, out, _ = run(capsys, "check", CORPUS / f"{name}.hjb", "--manifest", CORPUS / INDEX[name])
    assert code == 0 and "0 errors" in out


def test_check_reports_fixture_codes(capsys):
    code, _, err = run(capsys, "check", CORPUS / "fixtures" / "unsafe_negation.hjb", "--json")
    assert code == 1
    records = [json.loads(line) for line in err.splitlines() if line.startswith("{")]
    assert records[0]["code"] == "unsafe-negation"


def test_check_strict_integrity(capsys):
    args = ["check", CORPUS / "fixtures" / "integrity_violation.hjb", "--manifest", DATA / "integrity" / "manifest.json"]
    assert run(capsys, *args)[0] == 0
    code, _, err = run(capsys, *args, "--strict")
    assert code == 1 and "integrity-violation" in err


def test_run_json_and_report(capsys, tmp_path):
    report = tmp_path / "report.json"
    code, out, _ = run(
        capsys, "run", CORPUS / "nn.hjb", "--manifest", DATA / "nn" / "manifest.json",
        "--relation", "Y", "--report", report,
    )
    assert code == 0
    assert json.loads(out)["Y"]["entries"] == [[[0], 3.0]]
    rep = json.loads(report.read_text())
    assert rep["derivations"] > 0 and "wallTime" not in rep


def test_run_csv_to_directory(capsys, tmp_path):
    code, _, _ = run(
        capsys, "run", CORPUS / "fig4_hash.hjb", "--manifest", DATA / "join" / "manifest.json",
        "--format", "csv", "--relation", "Q", "--out", tmp_path,
    )
    assert code == 0
    lines = (tmp_path / "Q.csv").read_text().splitlines()
    assert lines[0] == "c0,c1,c2" and len(lines) == 6


def test_run_unknown_relation(capsys):
    code, _, err = run(capsys, "run", CORPUS / "nn.hjb", "--manifest", DATA / "nn" / "manifest.json", "--relation", "Nope")
    assert code == 2 and "Nope" in err


def test_lower_and_lift(capsys, tmp_path):
    code, out, _ = run(capsys, "lower", CORPUS / "fig5_query.hjb", "--strategy", "generic")
    assert code == 0 and parse(out) == corpus_program("fig5_generic")
    lowered = tmp_path / "low.hjb"
    lowered.write_text(out)
    code, out, _ = run(capsys, "lift", lowered)
    assert out == "Q(x, a, b) := R(x, a), S(x, b), T(x)\n"


def test_lower_tensor(capsys):
    code, out, err = run(capsys, "lower", CORPUS / "fig6_dense.hjb", "--format", "coo")
    assert code == 0 and "B_coo" in out


def test_lower_needs_one_target(capsys):
    assert run(capsys, "lower", CORPUS / "fig5_query.hjb")[0] == 2


def test_lowering_error_exit_code(capsys):
    code, _, err = run(capsys, "lower", CORPUS / "fig4_nlj.hjb", "--strategy", "diamond")
    assert code == 1 and "inapplicable" in err


def test_sql_both_ways(capsys, tmp_path):
    q = tmp_path / "q.sql"
    q.write_text("SELECT R.a, S.c FROM R, S WHERE R.b = S.b;\n")
    code, out, _ = run(capsys, "sql", "--to-hojabr", q, "--schema", "R:a,b;S:b,c")
    assert code == 0 and out == "Q(a, c) := R(a, b), S(b', c), (b = b')\n"
    h = tmp_path / "q.hjb"
    h.write_text(out)
    code, out, _ = run(capsys, "sql", "--from-hojabr", h, "--schema", FRONTENDS / "schema.json")
    assert out == "SELECT R.a, S.c FROM R, S WHERE R.b = S.b;\n"


def test_sql_schema_from_manifest(capsys, tmp_path):
    q = tmp_path / "q.sql"
    q.write_text("SELECT a FROM R WHERE b = 1")
    code, out, _ = run(capsys, "sql", "--to-hojabr", q, "--manifest", DATA / "join" / "manifest.json")
    assert out == "Q(a) := R(a, b), (b = 1)\n"


def test_einsum_both_ways(capsys, tmp_path):
    code, out, _ = run(capsys, "einsum", "--to-hojabr", FRONTENDS / "contractions.ein")
    assert code == 0 and out.count(":=") == 22
    h = tmp_path / "e.hjb"
    h.write_text(out)
    code, out, _ = run(capsys, "einsum", "--from-hojabr", h)
    assert out.splitlines()[0] == "A[i] = B[i,j] * C[j] ; B=3x4 C=4"


def test_slangs(capsys):
    code, out, _ = run(capsys, "slangs")
    assert code == 0 and "sql-core" in out
    assert run(capsys, "slangs", "nope")[0] == 2
    assert run(capsys, "slangs", "nope", "--validate", CORPUS / "fig4_hash.hjb")[0] == 2
    code, out, _ = run(capsys, "slangs", "logical-join", "--validate", CORPUS / "fig4_hash.hjb")
    assert code == 1 and "outside logical-join" in out


def test_missing_file_is_usage_error(capsys):
    code, _, err = run(capsys, "parse", "/no/such/file.hjb")
    assert code == 2 and "cannot read" in err


def test_syntax_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.hjb"
    bad.write_text("Q(x) := ")
    code, _, err = run(capsys, "check", bad)
    assert code == 1 and "syntax" in err


def test_bad_flag(capsys):
    assert run(capsys, "run")[0] == 2


def test_console_entry_point():
    out = subprocess.run(
        [sys.executable, "-m", "hojabr.cli", "slangs"], capture_output=True, text=True, check=True
    )
    assert "einsum-core" in out.stdout
