import json

import pytest

from batchnet.cli import main
from batchnet.data import generate_synthetic, save_csv

from conftest import resource


@pytest.fixture(scope="module")
def cohort(tmp_path_factory):
    path = tmp_path_factory.mktemp("cohort") / "cohort.csv"
    save_csv(generate_synthetic(1, 500, 0.8), path)
    return path


@pytest.fixture(scope="module")
def trained_model(tmp_path_factory):
    out = tmp_path_factory.mktemp("model")
    assert main(["train", "--data", str(resource("reference_p.csv")), "--no-split", "--out", str(out)]) == 0
    return out / "model.json"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_generate_and_split(tmp_path, capsys):
    data = tmp_path / "c.csv"
    assert run(["generate", "--out", data, "--n", 120, "--seed", 4], capsys)[0] == 0
    code, out, _ = run(["split", "--data", data, "--out", tmp_path / "parts"], capsys)
    assert code == 0
    assert "train: 72 records" in out
    assert {p.name for p in (tmp_path / "parts").iterdir()} == {"train.csv", "validation.csv", "test.csv"}


def test_train_reports_test_metrics(cohort, tmp_path, capsys):
    code, out, err = run(["train", "--data", cohort, "--out", tmp_path, "--algorithm", "lm"], capsys)
    assert code == 0
    assert "stop=GoalReached" in out and "test: precision=" in out
    assert "#   algorithm=lm" in err
    doc = json.loads((tmp_path / "model.json").read_text())
    assert "normalizer" in doc
    assert (tmp_path / "curve.csv").read_text().startswith("epoch,mse,gradient_norm,effective_lr,validation_mse\n")


def test_predict_reference_batch(trained_model, capsys):
    code, out, _ = run(["predict", "--model", trained_model, "--data", resource("reference_q.csv")], capsys)
    assert code == 0
    lines = out.splitlines()
    assert len(lines) == 10
    for i, line in enumerate(lines):
        idx, value, cls = line.split(",")
        assert int(idx) == i and 0 < float(value) < 1 and cls in ("0", "1")


def test_predict_empty_file(trained_model, tmp_path, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("age,prostate_size_g,psa_ng_ml,free_psa\n")
    code, out, _ = run(["predict", "--model", trained_model, "--data", empty], capsys)
    assert code == 0 and out == ""


def test_predict_wrong_width(trained_model, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("age,prostate_size_g,psa_ng_ml\n54,12,1.2\n")
    code, _, err = run(["predict", "--model", trained_model, "--data", bad], capsys)
    assert code == 1 and "features" in err


def test_evaluate(trained_model, capsys):
    code, out, _ = run(["evaluate", "--model", trained_model, "--data", resource("reference_p.csv")], capsys)
    assert code == 0 and out.startswith("records=2 ")


def test_missing_file_exit_code(tmp_path, capsys):
    code, _, err = run(["train", "--data", tmp_path / "nope.csv"], capsys)
    assert code == 1 and "no such file" in err


def test_unknown_flag_exit_code(capsys):
    with pytest.raises(SystemExit) as info:
        main(["train", "--bogus"])
    assert info.value.code == 1


def test_gradcheck(capsys):
    code, out, _ = run(["gradcheck", "--trials", 20, "--seed", 0], capsys)
    assert code == 0 and out.rstrip().endswith("PASS")
    assert run(["gradcheck", "--trials", 0], capsys)[0] == 1


def test_divergence_exit_code(cohort, tmp_path, capsys):
    code, _, err = run(["train", "--data", cohort, "--out", tmp_path, "--algorithm", "gd", "--lr", 50,
                        "--raw", "--goal", 0, "--max-epochs", 200, "--patience", 0], capsys)
    assert code == 2 and "divergence" in err


def test_compare_writes_table(cohort, tmp_path, capsys):
    code, out, _ = run(["compare", "--data", cohort, "--out", tmp_path], capsys)
    assert code == 0
    lines = (tmp_path / "comparison.csv").read_text().splitlines()
    assert lines[0] == "algorithm,epochs,stop_reason,precision,accuracy,fp,wall_time_s"
    assert [line.split(",")[0] for line in lines[1:]] == ["gd", "gda", "rprop", "bfgs", "lm"]
    assert (tmp_path / "comparison.txt").exists()


def test_compare_one_class_file(tmp_path, capsys):
    data = tmp_path / "one.csv"
    data.write_text("age,prostate_size_g,psa_ng_ml,free_psa,label\n" + "60,40,5,10,1\n" * 10)
    code, _, err = run(["compare", "--data", data, "--out", tmp_path], capsys)
    assert code == 1 and "class" in err


def test_compare_unknown_algorithm(cohort, tmp_path, capsys):
    assert run(["compare", "--data", cohort, "--out", tmp_path, "--algorithms", "lm,adam"], capsys)[0] == 1


def test_outputs_are_byte_identical(cohort, tmp_path, capsys):
    for name in ("a", "b"):
        out = tmp_path / name
        assert run(["train", "--data", cohort, "--out", out, "--algorithm", "rprop"], capsys)[0] == 0
        assert run(["compare", "--data", cohort, "--out", out, "--algorithms", "rprop,lm"], capsys)[0] == 0
    for fname in ("model.json", "curve.csv", "comparison.csv", "comparison.txt"):
        assert (tmp_path / "a" / fname).read_bytes() == (tmp_path / "b" / fname).read_bytes()


def test_config_file_precedence(cohort, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# settings\nalgorithm = rprop\nlr = 0.2\nmax_epochs = 3\ngoal = 0\nrprop_delta0 = 0.01\n")
    code, out, err = run(["train", "--config", cfg, "--data", cohort, "--out", tmp_path, "--lr", 0.3], capsys)
    assert code == 0
    assert "#   algorithm=rprop" in err
    assert "#   learning_rate=0.3" in err
    assert "#   rprop_delta0=0.01" in err
    assert "epochs=3 stop=MaxEpochs" in out


def test_config_file_unknown_key(cohort, tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("colour=blue\n")
    code, _, err = run(["train", "--config", cfg, "--data", cohort], capsys)
    assert code == 1 and "colour" in err


def test_invalid_setting_is_usage_error(cohort, tmp_path, capsys):
    code, _, err = run(["train", "--data", cohort, "--out", tmp_path, "--lr", -1], capsys)
    assert code == 1 and "learning_rate" in err
