import pytest

from lapprune.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, coerce, main, parse_taus, read_config
from lapprune.verify import CheckResult

SMALL = ["--dataset", "synthetic-blobs", "--n-train", "200", "--n-test", "100", "--steps", "50",
         "--retrain-steps", "20"]


def test_parse_taus():
    assert parse_taus("4..7") == (4, 5, 6, 7)
    assert parse_taus("0,2") == (0, 2)


def test_coerce_types():
    assert coerce("q", "0.8") == 0.8
    assert coerce("trials", "5") == 5
    assert coerce("batchnorm", "true") is True
    assert coerce("n_train", "none") is None
    assert coerce("criteria", "MP, LAP") == ("MP", "LAP")


def test_train_prune_eval_round_trip(tmp_path, capsys):
    model, pruned = tmp_path / "m.lapnet", tmp_path / "p.lapnet"
    assert main(["train", *SMALL, "--out", str(model)]) == EXIT_OK
    assert main(["prune", *SMALL, "--model", str(model), "--criteria", "LAP", "--taus", "2",
                 "--out", str(pruned)]) == EXIT_OK
    assert main(["eval", *SMALL, "--model", str(pruned)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "surviving_fraction=0.2" in out and "test_error=" in out


def test_experiment_with_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# settings\ndataset = synthetic-blobs\nn_train = 200\nn_test = 100\nsteps = 50\n"
                   "retrain_steps = 20\ntrials = 2\ntaus = 0..1\ncriteria = MP,LAP\n")
    out = tmp_path / "r.csv"
    assert main(["experiment", "--config", str(cfg), "--trials", "1", "--output", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("criterion,tau")
    assert all(line.endswith(",1") for line in lines[1:])
    assert len(lines) == 1 + 2 * 2 * 4


def test_experiment_iterative_to_stdout(capsys):
    assert main(["experiment", *SMALL, "--trials", "1", "--taus", "1", "--criteria", "LAP",
                 "--cycles", "2"]) == EXIT_OK
    assert capsys.readouterr().out.count("LAP,") == 8


def test_usage_errors(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == EXIT_USAGE
    assert main(["experiment", *SMALL, "--trials", "zero"]) == EXIT_USAGE
    assert main(["experiment", *SMALL, "--architecture", "resnet"]) == EXIT_USAGE
    assert main(["experiment", "--config", str(tmp_path / "nope.cfg")]) == EXIT_USAGE
    bad = tmp_path / "bad.cfg"
    bad.write_text("colour=blue\n")
    assert main(["experiment", "--config", str(bad)]) == EXIT_USAGE
    with pytest.raises(Exception):
        read_config(tmp_path / "nope.cfg")


def test_data_errors(tmp_path):
    assert main(["eval", "--dataset", "mnist", "--data-dir", str(tmp_path), "--model",
                 str(tmp_path / "missing.lapnet")]) == EXIT_DATA
    garbage = tmp_path / "g.lapnet"
    garbage.write_bytes(b"garbage!")
    assert main(["eval", *SMALL, "--model", str(garbage)]) == EXIT_DATA
    assert main(["train", "--dataset", "mnist", "--data-dir", str(tmp_path), "--out",
                 str(tmp_path / "x")]) == EXIT_DATA


def test_verify_passes(capsys):
    assert main(["verify"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out


def test_verify_failure_exit_code(monkeypatch):
    monkeypatch.setattr("lapprune.cli.run_verification",
                        lambda seed=0: [CheckResult("x", False, "broken")])
    assert main(["verify"]) == EXIT_VERIFY


def test_bench(capsys):
    assert main(["bench", "--architecture", "fcn-small", "--criteria", "MP,LAP", "--repeats", "1"]) == EXIT_OK
    assert "x MP" in capsys.readouterr().out
    assert main(["bench", "--repeats", "0"]) == EXIT_USAGE
