import subprocess
import sys

import pytest

from relm.cli import main

SMALL = ["--set", "topology.hidden=6,3", "--set", "cmaes.max_generations=20",
         "--set", "cmaes.sigma0=1.0", "--set", "recalibration.max_generations=12",
         "--set", "environment.batch_size=256", "--set", "latent.mute=true", "--workers", "1"]


def synth(tmp_path, name="s", *extra):
    train, stream = tmp_path / f"{name}_train.csv", tmp_path / f"{name}_stream.csv"
    assert main(["synth", "--out", str(stream), "--train-out", str(train), "--seed", "5",
                 "--rows-per-period", "400", "--periods", "4", *extra]) == 0
    return train, stream


def train(tmp_path, data, name="m", *extra):
    model, metrics = tmp_path / f"{name}.relm", tmp_path / f"{name}.csv"
    code = main(["train", "--data", str(data), "--model-out", str(model),
                 "--metrics-out", str(metrics), "--seed", "3", *SMALL, *extra])
    return code, model, metrics


def stream(tmp_path, model, data, name="st"):
    out, metrics = tmp_path / f"{name}.relm", tmp_path / f"{name}.csv"
    code = main(["stream", "--model", str(model), "--data", str(data), "--model-out", str(out),
                 "--metrics-out", str(metrics), "--seed", "3", *SMALL])
    return code, out, metrics


def rows(path):
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return [dict(zip(header, line.split(","))) for line in lines[1:]]


@pytest.fixture(scope="module")
def drifted(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("drifted")
    tr, st = synth(tmp, "d", "--drift-period", "2")
    code, model, metrics = train(tmp, tr)
    assert code == 0
    return tmp, tr, st, model, metrics


def test_train_outputs(drifted):
    _, _, _, model, metrics = drifted
    assert model.is_file()
    r = rows(metrics)
    assert len(r) == 20
    assert [int(x["generation"]) for x in r] == list(range(1, 21))


def test_train_missing_file(tmp_path, capsys):
    code, model, _ = train(tmp_path, tmp_path / "nothere.csv")
    assert code == 3
    assert "nothere.csv" in capsys.readouterr().err
    assert not model.exists()


def test_train_bad_config_key(tmp_path, drifted):
    code, _, _ = train(tmp_path, drifted[1], "m", "--set", "cmaes.bogus=1")
    assert code == 5


def test_train_deterministic(tmp_path, drifted):
    _, tr, _, _, metrics = drifted
    code, _, again = train(tmp_path, tr, "again")
    assert code == 0
    assert again.read_bytes() == metrics.read_bytes()


def test_stream_no_drift(tmp_path):
    tr, st = synth(tmp_path, "calm", "--magnitude", "0")
    _, model, _ = train(tmp_path, tr)
    code, _, metrics = stream(tmp_path, model, st)
    assert code == 0
    r = rows(metrics)
    assert sum(x["phase"] == "streaming" for x in r) == 3
    assert not any(x["phase"] == "recalibrating" for x in r)


def test_stream_drift_then_restream(tmp_path, drifted):
    _, _, st, model, _ = drifted
    code, out, metrics = stream(tmp_path, model, st)
    assert code == 0
    r = rows(metrics)
    first = next(i for i, x in enumerate(r) if x["verdict"] == "recalibrate")
    assert r[first + 1]["phase"] == "recalibrating"
    recal = [x for x in r[first + 1:] if x["phase"] == "recalibrating"]
    assert float(recal[-1]["accuracy"]) >= 0.9
    # the drifted tail period again: the model has already absorbed it
    tail = tmp_path / "tail.csv"
    lines = st.read_text().splitlines()
    tail.write_text("\n".join([lines[0]] + [ln for ln in lines[1:] if ln.endswith(",3")]) + "\n")
    assert main(["drift", "--model", str(out), "--data", str(tail), *SMALL]) == 0


def test_drift_exit_codes(tmp_path, drifted, capsys):
    tmp, tr, st, model, _ = drifted
    report = tmp_path / "report.csv"
    assert main(["drift", "--model", str(model), "--data", str(tr), "--report-out",
                 str(report)]) == 0
    lines = report.read_text().splitlines()
    assert sum(ln.startswith("psi_") for ln in lines) == 2
    capsys.readouterr()
    assert main(["drift", "--model", str(model), "--data", str(st)]) == 20
    assert "verdict,recalibrate" in capsys.readouterr().out


def test_drift_magnitude_zero_next_period(tmp_path):
    tr, st = synth(tmp_path, "zero", "--magnitude", "0")
    _, model, _ = train(tmp_path, tr)
    lines = st.read_text().splitlines()
    first = tmp_path / "p1.csv"
    first.write_text("\n".join([lines[0]] + [ln for ln in lines[1:] if ln.endswith(",1")]) + "\n")
    assert main(["drift", "--model", str(model), "--data", str(first)]) == 0


def test_evaluate(drifted, capsys):
    _, tr, _, model, _ = drifted
    assert main(["evaluate", "--model", str(model), "--data", str(tr)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "accuracy,f1,log_loss"
    assert float(out[1].split(",")[0]) > 0.9


def test_model_errors(tmp_path, drifted):
    bad = tmp_path / "bad.relm"
    bad.write_bytes(b"NOPE" + bytes(40))
    assert main(["drift", "--model", str(bad), "--data", str(drifted[1])]) == 4
    assert main(["drift", "--model", str(tmp_path / "none.relm"), "--data", str(drifted[1])]) == 4


def test_synth_shape_and_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["synth", "--out", str(a), "--seed", "9"]) == 0
    assert main(["synth", "--out", str(b), "--seed", "9"]) == 0
    lines = a.read_text().splitlines()
    assert lines[0] == "x0,x1,label,period"
    assert len(lines) == 1 + 500 * 6
    assert a.read_bytes() == b.read_bytes()


def test_empty_batch_is_data_error(tmp_path, drifted):
    empty = tmp_path / "empty.csv"
    empty.write_text(drifted[1].read_text().splitlines()[0] + "\n")
    assert main(["drift", "--model", str(drifted[3]), "--data", str(empty)]) == 3


def test_synth_invalid(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "x.csv"), "--periods", "1"]) == 3
    assert not (tmp_path / "x.csv").exists()


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == 2


def test_help_documents_exit_codes():
    out = subprocess.run([sys.executable, "-m", "relm", "drift", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for code in ("0", "3", "4", "5", "10", "20"):
        assert f"\n  {code} " in out
    assert "--workers" in out and "--report-out" in out
