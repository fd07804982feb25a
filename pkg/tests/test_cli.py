import io
import json

import numpy as np
import pytest

from truh.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main
from truh.core import RngStream
from truh.simlab import build_scenario, sample_mixture

from fixtures import write_csv


def run(argv):
    out = io.StringIO()
    code = main(argv, stdout=out)
    return code, out.getvalue()


@pytest.fixture
def pair(tmp_path):
    g = np.random.default_rng(0)
    U = np.vstack([g.normal(size=(60, 2)), g.normal(size=(60, 2)) + 6])
    V = g.normal(size=(15, 2)) + 3
    u, v = tmp_path / "u.csv", tmp_path / "v.csv"
    write_csv(u, U)
    write_csv(v, V)
    return str(u), str(v)


def test_missing_required_flag_is_usage_error(pair):
    assert run(["test", "--uninfected", pair[0]])[0] == EXIT_USAGE


def test_unknown_flag_is_usage_error(pair):
    assert run(["test", "--uninfected", pair[0], "--infected", pair[1], "--bogus"])[0] \
        == EXIT_USAGE


@pytest.mark.parametrize("argv", [
    ["constants", "--dim", "0"],
    ["experiment", "--name", "nope", "--reps", "1"],
    ["test", "--uninfected", "a", "--infected", "b", "--alpha", "1.5"],
    ["test", "--uninfected", "a", "--infected", "b", "--tau-fc", "0.9"],
    ["sweep", "--taus", "1,0.5", "--reps", "1"],
])
def test_bad_values_are_usage_errors(argv):
    assert run(argv)[0] == EXIT_USAGE


def test_missing_file_is_data_error(pair, tmp_path):
    assert run(["test", "--uninfected", pair[0],
                "--infected", str(tmp_path / "absent.csv")])[0] == EXIT_DATA


def test_dimension_mismatch_is_data_error(pair, tmp_path):
    three = tmp_path / "three.csv"
    write_csv(three, np.ones((5, 3)))
    assert run(["test", "--uninfected", pair[0], "--infected", str(three)])[0] == EXIT_DATA


def test_malformed_csv_is_data_error(pair, tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    assert run(["baseline", "--uninfected", pair[0], "--infected", str(bad)])[0] == EXIT_DATA


def test_seed_is_reported_and_output_reproducible(pair, capsys):
    argv = ["test", "--uninfected", pair[0], "--infected", pair[1], "--b2", "60",
            "--out", "-"]
    code, first = run(argv + ["--seed", "17"])
    assert code == EXIT_OK
    assert "seed: 17" in capsys.readouterr().err
    assert run(argv + ["--seed", "17"])[1] == first
    assert run(argv + ["--seed", "17", "--threads", "8"])[1] == first
    # without a seed one is drawn and printed
    run(argv)
    seed = int(capsys.readouterr().err.split("seed: ")[1].split()[0])
    assert run(argv + ["--seed", str(seed)])[1] == run(argv + ["--seed", str(seed)])[1]
    result = json.loads(first)
    assert result["reject"] is True and result["seed"] == 17


def test_verdict_text(pair):
    code, text = run(["test", "--uninfected", pair[0], "--infected", pair[1],
                      "--b2", "60", "--seed", "1"])
    assert code == EXIT_OK and "REJECT (remodeling)" in text and "k_hat=2" in text


def test_out_file(pair, tmp_path):
    target = tmp_path / "res.json"
    run(["test", "--uninfected", pair[0], "--infected", pair[1], "--b2", "40",
         "--seed", "1", "--out", str(target)])
    saved = json.loads(target.read_text())
    assert saved["k_hat"] == 2 and len(saved["per_draw"]) == 2 and saved["seed"] == 1


def test_closed_form_constant():
    code, text = run(["constants", "--dim", "2", "--mode", "closed", "--seed", "0"])
    assert code == EXIT_OK
    assert text.splitlines()[1].split()[:2] == ["2", "0.500000"]


def test_baseline_command(pair):
    code, text = run(["baseline", "--uninfected", pair[0], "--infected", pair[1],
                      "--method", "energy", "--n-perm", "99", "--seed", "2", "--out", "-"])
    payload = json.loads(text)
    assert code == EXIT_OK and payload["method"] == "energy" and payload["reject"]


def test_experiment_and_sweep_commands():
    code, text = run(["experiment", "--name", "Exp2-I", "--reps", "3", "--b2", "40",
                      "--seed", "3", "--out", "-"])
    assert code == EXIT_OK and json.loads(text)["reps"] == 3
    code, text = run(["sweep", "--name", "Exp2-I", "--reps", "2", "--b2", "40",
                      "--taus", "1,1.2", "--seed", "3", "--out", "-"])
    assert code == EXIT_OK and len(json.loads(text)) == 2


def test_preferential_infection_is_not_rejected(tmp_path):
    # one-dimensional three-class baseline, cases from two of its classes
    sc = build_scenario("Table1-CaseB")
    accepted = 0
    for r in range(100):
        s = RngStream(50, [r])
        u, v = tmp_path / f"u{r}.csv", tmp_path / f"v{r}.csv"
        write_csv(u, sample_mixture(sc.f0, 1000, s.child(0)).data)
        write_csv(v, sample_mixture(sc.g, 50, s.child(1)).data)
        code, text = run(["test", "--uninfected", str(u), "--infected", str(v),
                          "--seed", str(r)])
        assert code == EXIT_OK
        accepted += "FAIL TO REJECT" in text
    assert accepted >= 95


def test_exact_null_split_with_fixed_k(tmp_path):
    accepted = 0
    for r in range(20):
        X = np.random.default_rng(r).normal(size=(120, 3))
        u, v = tmp_path / f"u{r}.csv", tmp_path / f"v{r}.csv"
        write_csv(u, X[:100])
        write_csv(v, X[100:])
        code, text = run(["test", "--uninfected", str(u), "--infected", str(v),
                          "--k", "1", "--seed", str(r)])
        assert code == EXIT_OK and "k_hat=1" in text
        accepted += "FAIL TO REJECT" in text
    assert accepted >= 16
