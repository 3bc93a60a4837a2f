import json
from pathlib import Path

from qprism.cli import run_command

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def run(capsys, *argv):
    code = run_command(list(argv))
    out = capsys.readouterr().out
    return code, out


def run_json(capsys, *argv):
    code, out = run(capsys, *argv)
    return code, json.loads(out)


def test_q_int_prints_polynomial(capsys):
    code, out = run(capsys, "q-int", "5")
    assert code == 0
    assert out == "1+q+q^2+q^3+q^4\n"


def test_q_int_base_power(capsys):
    code, out = run(capsys, "q-int", "2", "--r", "3")
    assert code == 0
    assert out == "1+q^3\n"


def test_q_int_zero(capsys):
    code, out = run(capsys, "q-int", "0")
    assert code == 0
    assert out == "0\n"


def test_q_int_negative_is_spec_error(capsys):
    code, report = run_json(capsys, "q-int", "-3")
    assert code == 2
    assert report["error"]["field"] == "n"


def test_cartier_fixture_passes(capsys):
    code, report = run_json(
        capsys, "cartier", "--spec", str(FIXTURES / "p2_rank1_nilpotent.json")
    )
    assert code == 0
    assert report["schema"] == "qprism/1"
    assert report["ok"] is True
    entry = report["reports"][0]
    assert entry["report"]["cone_acyclic"] is True
    assert entry["context"] == {"p": 2, "n_prec": 2, "m_prec": 2}
    assert entry["degree_window"] == 4


def test_cartier_batch_order_is_input_order(capsys):
    a = str(FIXTURES / "p2_rank1_trivial.json")
    b = str(FIXTURES / "p2_rank2_trivial.json")
    code, report = run_json(capsys, "cartier", "--spec", a, "--spec", b)
    assert code == 0
    assert [e["spec_path"] for e in report["reports"]] == [a, b]


def test_cartier_grow_stable(capsys):
    code, report = run_json(
        capsys,
        "cartier",
        "--spec",
        str(FIXTURES / "p2_rank1_nilpotent.json"),
        "--grow",
    )
    assert code == 0
    entry = report["reports"][0]
    assert entry["stable"] is True
    assert entry["verdict_diff"] == []
    assert entry["grown"]["context"] == {"p": 2, "n_prec": 3, "m_prec": 3}
    assert entry["grown"]["degree_window"] == 6


def test_bad_rank_exits_2_naming_field(capsys):
    code, report = run_json(
        capsys, "cohomology", "--spec", str(FIXTURES / "bad_rank.json")
    )
    assert code == 2
    assert report["error"]["field"] == "theta_matrix"


def test_missing_file_exits_2(capsys):
    code, report = run_json(capsys, "cartier", "--spec", "no_such_file.json")
    assert code == 2
    assert report["error"]["field"] == "spec"


def test_cohomology_level0(capsys):
    code, report = run_json(
        capsys,
        "cohomology",
        "--spec",
        str(FIXTURES / "cohomology_level0_trivial.json"),
    )
    assert code == 0
    coh = report["reports"][0]["cohomology"]
    assert set(coh) == {"h0", "h1"}


def test_envelope_contains_hand_derived_relation(capsys):
    code, report = run_json(capsys, "envelope", "--p", "2", "--order", "1")
    assert code == 0
    assert report["relations"][0] == "w1-q*w0^2+q^2*w1-x*w0-q*x*w0"


def test_poincare(capsys):
    code, report = run_json(capsys, "poincare", "--p", "2", "--cap", "4")
    assert code == 0
    assert report["report"]["ok"] is True


def test_poincare_grow(capsys):
    code, report = run_json(
        capsys, "poincare", "--p", "3", "--cap", "4", "--grow"
    )
    assert code == 0
    assert report["stable"] is True


def test_axioms_small(capsys):
    code, report = run_json(
        capsys, "axioms", "--p", "2", "--n", "2", "--m", "2", "--samples", "25"
    )
    assert code == 0
    assert report["suite"]["ok"] is True


def test_adic_expectations(capsys):
    code, report = run_json(
        capsys, "adic", "--spec", str(FIXTURES / "adic_z_torsion.json")
    )
    assert code == 0
    entry = report["reports"][0]
    assert entry["matches_expectation"] is True
    assert entry["predicates"]["torsion"]["bound"] == 2
    assert entry["predicates"]["pro_iso"]["shift"] == 2


def test_adic_w_quotient(capsys):
    code, report = run_json(
        capsys, "adic", "--spec", str(FIXTURES / "adic_w_quotient.json")
    )
    assert code == 0
    flat = report["reports"][0]["predicates"]["flatness"]
    assert flat["completely_flat"] is False


def test_adic_zq_free(capsys):
    code, report = run_json(
        capsys, "adic", "--spec", str(FIXTURES / "adic_zq_free.json")
    )
    assert code == 0
    flat = report["reports"][0]["predicates"]["flatness"]
    assert flat["bounded"] is True and flat["completely_flat"] is True


def test_determinism_byte_identical(capsys):
    for argv in (
        ["cartier", "--spec", str(FIXTURES / "p2_rank1_seeded.json")],
        ["adic", "--spec", str(FIXTURES / "adic_z_torsion.json")],
        ["axioms", "--p", "2", "--n", "2", "--m", "2", "--samples", "30"],
        ["poincare", "--p", "2", "--cap", "4"],
        ["envelope", "--p", "3", "--order", "0"],
        ["q-int", "7"],
    ):
        _, first = run(capsys, *argv)
        _, second = run(capsys, *argv)
        assert first == second


def test_all_connection_fixtures_verify(capsys):
    for path in sorted(FIXTURES.glob("p*_rank*.json")):
        code, report = run_json(capsys, "cartier", "--spec", str(path))
        assert code == 0, path.name
        assert report["ok"] is True, path.name


def test_cohomology_expectation_mismatch_exits_1(tmp_path, capsys):
    spec = {
        "p": 2, "n_prec": 2, "m_prec": 2, "level": 0, "rank": 1,
        "degree_window": 2, "theta_matrix": [["0"]],
        "expect": {"h0": [], "h1": []},
    }
    path = tmp_path / "wrong_expect.json"
    path.write_text(json.dumps(spec))
    code, report = run_json(capsys, "cohomology", "--spec", str(path))
    assert code == 1
    assert report["ok"] is False
    assert any("matches_expectation" in name for name in report["failed"])


def test_adic_expectation_mismatch_exits_1(tmp_path, capsys):
    spec = {
        "base": "Z", "generators": 2, "relations": [["0", "4"]],
        "f": "2", "g": "3",
        "expect": {"torsion/bound": 7},
    }
    path = tmp_path / "wrong_adic.json"
    path.write_text(json.dumps(spec))
    code, report = run_json(capsys, "adic", "--spec", str(path))
    assert code == 1
    entry = report["reports"][0]
    assert entry["matches_expectation"] is False
    assert entry["expectation_mismatches"] == ["torsion/bound"]
