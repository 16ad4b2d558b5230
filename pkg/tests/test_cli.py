import csv
import io
import json

import pytest

from haarfact.cli import main
from haarfact.generate import generate_operator, load_operator, read_json, write_json
from haarfact.linalg import OmegaOperator
from haarfact.norms import certified_column_bound


def run(capsys, *argv):
    code = main(list(map(str, argv)))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def diagonal_files(tmp_path, capsys):
    op = tmp_path / "op.json"
    cert = tmp_path / "cert.json"
    assert run(capsys, "gen", "--kind", "diagonal", "--nmax", 2, "--seed", 7, "-o", op)[0] == 0
    code, out, _ = run(capsys, "factor", "--op", op, "--delta", 0.6, "--eta", 0.05, "-o", cert)
    assert code == 0 and "branch=T" in out
    return op, cert


def test_gen_identity(tmp_path, capsys):
    path = tmp_path / "id.json"
    run(capsys, "gen", "--kind", "identity", "--nmax", 2, "-o", path)
    op = load_operator(path)
    assert op == OmegaOperator.identity(2) and len(op.domain) == 11


def test_gen_is_reproducible(tmp_path, capsys):
    digests = [run(capsys, "gen", "--kind", "diagonal", "--nmax", 3, "--seed", 7, "-o",
                   tmp_path / f"d{i}.json")[1] for i in range(2)]
    assert digests[0] == digests[1]
    assert (tmp_path / "d0.json").read_bytes() == (tmp_path / "d1.json").read_bytes()


def test_random_operator_respects_gamma():
    op = generate_operator("random", 2, 3, {"gamma": 1})
    assert certified_column_bound(op, "lp:1:independent") <= 1


def test_factor_and_verify(diagonal_files, capsys):
    op, cert = diagonal_files
    code, out, _ = run(capsys, "verify", "--cert", cert, "--op", op)
    assert code == 0 and out.startswith("verified")


def test_tampered_scalar_fails(diagonal_files, capsys, tmp_path):
    op, cert = diagonal_files
    data = read_json(cert)
    data["scalar"] = "1/2"
    bad = tmp_path / "bad.json"
    write_json(data, bad)
    code, _, err = run(capsys, "verify", "--cert", bad, "--op", op)
    assert code == 3 and "scalar mismatch" in err


def test_other_operator_fails(diagonal_files, capsys, tmp_path):
    _, cert = diagonal_files
    other = tmp_path / "other.json"
    run(capsys, "gen", "--kind", "diagonal", "--nmax", 2, "--seed", 8, "-o", other)
    code, _, err = run(capsys, "verify", "--cert", cert, "--op", other)
    assert code == 3 and "digest mismatch" in err


def test_factor_failure_exit_code(tmp_path, capsys):
    op = tmp_path / "op.json"
    run(capsys, "gen", "--kind", "diagonal", "--nmax", 1, "--values", "1/10,1/5", "-o", op)
    code, _, err = run(capsys, "factor", "--op", op, "--mode", "large-diagonal", "--delta", 0.6)
    assert code == 2 and "error" in err


def test_norm_command(tmp_path, capsys):
    vec = tmp_path / "vec.json"
    write_json({"depth": 1, "mode": "rational", "include_root": False,
                "coefficients": {"1": "1", "2": "2"}}, vec)
    code, out, _ = run(capsys, "norm", "--space", "lp:2:independent", "--vec", vec)
    assert code == 0 and json.loads(out)["value"] == pytest.approx(2.5 ** 0.5)


def test_formulas_command(capsys):
    code, out, _ = run(capsys, "formulas", "--n", 2, "--gamma", 1, "--eta", 0.5)
    assert code == 0 and json.loads(out) == {"N0": 67, "N1": 9, "N2": 80}


def test_seed_environment_override(tmp_path, capsys, monkeypatch):
    run(capsys, "gen", "--kind", "diagonal", "--nmax", 2, "--seed", 5, "-o", tmp_path / "a.json")
    monkeypatch.setenv("HAARFACT_SEED", "5")
    run(capsys, "gen", "--kind", "diagonal", "--nmax", 2, "--seed", 0, "-o", tmp_path / "b.json")
    assert read_json(tmp_path / "a.json") == read_json(tmp_path / "b.json")


def test_bench_pipeline_is_reproducible(capsys):
    outputs = [run(capsys, "--threads", 2, "bench", "--suite", "pipeline", "--seed", 1)[1]
               for _ in range(2)]
    tables = [list(csv.DictReader(io.StringIO(text))) for text in outputs]
    accuracy = [[(r["stage"], r["value"], r["residual"], r["extra"]) for r in t] for t in tables]
    assert accuracy[0] == accuracy[1] and len(accuracy[0]) > 0
