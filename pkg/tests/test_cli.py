import csv
import io
import json

import pytest

from iqdp import closed_forms
from iqdp.cli import load_policy, main, make_pmf, parse_lambdas, parse_quantizer
from iqdp.model import State
from iqdp.solver import evaluate_policy


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestSolve:
    def test_single_user(self, capsys):
        code, out, _ = run_cli(
            capsys, "solve", "--dist", "uniform", "--L", "4", "--N", "1",
            "--target", "max", "--lambda", "0", "--space", "partitions",
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["cost"] == pytest.approx(2.0, abs=1e-12)
        assert doc["policy"] == [{"state": {"N": 1, "lo": 1, "hi": 4}, "quantizer": [1, 1, 1, 1]}]

    def test_two_users(self, capsys):
        code, out, _ = run_cli(
            capsys, "solve", "--dist", "uniform", "--L", "2", "--N", "2",
            "--target", "argmax", "--lambda", "0.5",
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["cost"] == pytest.approx(1.5, abs=1e-12)
        assert {"lambda", "target", "space", "expected_rate", "expected_delay"} <= doc.keys()

    def test_missing_size(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--N", "2", "--lambda", "0.5"])
        assert exc.value.code == 2

    def test_unknown_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["solve", "--L", "4", "--N", "2", "--lambda", "0.5", "--bogus"])
        assert exc.value.code == 2

    @pytest.mark.parametrize(
        "extra",
        [["--lambda", "1.5"], ["--lambda", "0.5", "--N", "0"], ["--lambda", "0.5", "--dist", "geometric"]],
    )
    def test_validation_errors(self, capsys, extra):
        code, _, err = run_cli(capsys, "solve", "--L", "4", "--N", "2", *extra)
        assert code == 2
        assert "error" in err

    def test_capacity(self, capsys):
        code, _, err = run_cli(
            capsys, "solve", "--L", "30", "--N", "2", "--lambda", "0.5", "--space", "compositions"
        )
        assert code == 3
        assert "capacity" in err

    def test_policy_round_trip(self, capsys, tmp_path):
        path = tmp_path / "policy.json"
        code, _, _ = run_cli(
            capsys, "solve", "--dist", "geometric", "--p", "0.25", "--L", "10", "--N", "3",
            "--target", "both", "--lambda", "0.3", "--out", str(path),
        )
        assert code == 0
        doc = json.loads(path.read_text())
        root = State.root(make_pmf("geometric", 10, 0.25), 3)
        val = evaluate_policy(root, load_policy(doc), doc["target"], doc["lambda"])
        assert val.cost == pytest.approx(doc["cost"], abs=1e-9)


class TestSweep:
    def test_header_and_order(self, capsys):
        code, out, _ = run_cli(
            capsys, "sweep", "--L", "16", "--N", "4", "--target", "max", "--lambdas", "1,0,0.5"
        )
        assert code == 0
        assert out.splitlines()[0] == "lambda,rate,delay,cost"
        table = rows(out)
        assert [float(r["lambda"]) for r in table] == [0.0, 0.5, 1.0]
        assert float(table[-1]["delay"]) == pytest.approx(1.0, abs=1e-12)
        assert "\r" not in out

    def test_default_grid(self, capsys):
        code, out, _ = run_cli(capsys, "sweep", "--L", "6", "--N", "2")
        assert code == 0
        assert len(rows(out)) == 201

    def test_feedback_rate_not_lower(self, capsys):
        args = ["sweep", "--L", "16", "--N", "4", "--lambdas", "0:1:0.05"]
        _, plain, _ = run_cli(capsys, *args)
        _, fb, _ = run_cli(capsys, *args, "--feedback")
        for a, b in zip(rows(plain), rows(fb)):
            assert float(b["rate"]) >= float(a["rate"]) - 1e-9

    def test_single_point_matches_solve(self, capsys):
        _, out, _ = run_cli(capsys, "sweep", "--L", "5", "--N", "3", "--lambdas", "0.4")
        _, doc, _ = run_cli(capsys, "solve", "--L", "5", "--N", "3", "--lambda", "0.4")
        assert float(rows(out)[0]["cost"]) == pytest.approx(json.loads(doc)["cost"], rel=1e-11)

    def test_byte_identical_reruns(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for path in (a, b):
            assert main(["sweep", "--L", "8", "--N", "3", "--dist", "binomial", "--p", "0.5", "--out", str(path)]) == 0
        assert a.read_bytes() == b.read_bytes()


class TestHeuristics:
    def test_table(self, capsys):
        code, out, _ = run_cli(capsys, "heuristics", "--N", "2", "4", "--L", "2", "4", "1024")
        assert code == 0
        table = {(r["N"], r["L"]): r for r in rows(out)}
        assert float(table["2", "2"]["rb_closed"]) == 2.0
        assert float(table["2", "4"]["tau_b_exact"]) == 1.5
        assert float(table["2", "4"]["tau_m_closed"]) == 1.8125
        assert float(table["4", "1024"]["rb_closed"]) / 4 == pytest.approx(1.998047, abs=1e-6)

    def test_non_power_of_two_leaves_binary_blank(self, capsys):
        code, out, _ = run_cli(capsys, "heuristics", "--N", "3", "--L", "6")
        assert code == 0
        assert rows(out)[0]["rb_closed"] == ""

    def test_self_check_failure(self, capsys, monkeypatch):
        monkeypatch.setattr(closed_forms, "max_search_rate", lambda N, L, mode="closed": float(mode == "closed"))
        code, _, err = run_cli(capsys, "heuristics", "--N", "2", "--L", "4")
        assert code == 4
        assert "self-check" in err


class TestGap:
    def test_small_alphabet_has_no_gap(self, capsys):
        code, out, err = run_cli(capsys, "gap", "--L", "16", "--N", "2", "--lambdas", "0:1:0.05")
        assert code == 0
        assert out.splitlines()[0] == "lambda,delta_abs,delta_rel"
        assert max(float(r["delta_abs"]) for r in rows(out)) <= 1e-9
        assert "delta_max=" in err

    def test_full_subset(self, capsys):
        _, out, _ = run_cli(capsys, "gap", "--L", "9", "--N", "3", "--subset", "partitions")
        assert all(float(r["delta_abs"]) == 0.0 for r in rows(out))

    def test_json(self, capsys):
        code, out, _ = run_cli(capsys, "gap", "--L", "8", "--N", "2", "--format", "json", "--lambdas", "0.5")
        assert code == 0
        assert json.loads(out)["delta_max"] == 0.0


class TestOtherCommands:
    def test_compare(self, capsys):
        code, out, _ = run_cli(
            capsys, "compare", "--L", "16", "--N", "2", "--q1", "11,5", "--q2", "15,1", "--lambdas", "0.5"
        )
        assert code == 0
        r = rows(out)[0]
        assert float(r["cost_q1"]) < float(r["cost_q2"])
        assert float(r["cost_opt"]) <= float(r["cost_q1"]) + 1e-12

    def test_compare_bad_quantizer(self, capsys):
        code, _, _ = run_cli(capsys, "compare", "--L", "16", "--N", "2", "--q1", "10,5", "--q2", "15,1")
        assert code == 2

    def test_family(self, capsys):
        code, out, _ = run_cli(capsys, "family", "--L", "4", "--format", "json")
        assert code == 0
        assert json.loads(out)["quantizers"] == [[3, 1], [2, 1, 1], [1, 1, 1, 1]]

    def test_simulate(self, capsys):
        code, out, _ = run_cli(
            capsys, "simulate", "--L", "2", "--N", "2", "--target", "argmax",
            "--policy", "binary", "--trials", "5000", "--seed", "9",
        )
        assert code == 0
        doc = json.loads(out)
        assert doc["seed"] == 9
        assert doc["mean_delay"] == 1.0
        assert doc["correctness"] == 1.0

    def test_simulate_dp_needs_lambda(self, capsys):
        code, _, _ = run_cli(capsys, "simulate", "--L", "4", "--N", "2", "--trials", "10")
        assert code == 2

    def test_simulate_policy_file(self, capsys, tmp_path):
        path = tmp_path / "p.json"
        assert main(["solve", "--L", "6", "--N", "2", "--lambda", "0.5", "--out", str(path)]) == 0
        code, out, _ = run_cli(
            capsys, "simulate", "--L", "6", "--N", "2", "--policy-file", str(path), "--trials", "2000"
        )
        assert code == 0
        assert json.loads(out)["correctness"] == 1.0

    def test_simulate_deterministic(self, capsys, monkeypatch):
        args = ["simulate", "--L", "8", "--N", "3", "--lambda", "0.5", "--trials", "9000", "--seed", "4"]
        _, a, _ = run_cli(capsys, *args)
        monkeypatch.setenv("IQDP_THREADS", "3")
        _, b, _ = run_cli(capsys, *args)
        assert a == b


def test_parse_helpers():
    assert list(parse_lambdas("0:1:0.25")) == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert list(parse_lambdas("0.3,0.1")) == [0.1, 0.3]
    assert len(parse_lambdas(None)) == 201
    assert parse_quantizer("3,1") == (3, 1)
    with pytest.raises(ValueError):
        parse_lambdas("0:2:0.5")
    with pytest.raises(ValueError):
        parse_quantizer("a,b")
