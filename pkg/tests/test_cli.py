import csv
import json

import pytest

from hybrid_rscn.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, main

SMALL = ["--n-train", "400", "--n-val", "200", "--n-test", "300"]
FAST = ["--set", "n_max_nodes=12", "--set", "g_max=10", "--set", "esn_nodes=20"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_gen_data_default_counts(tmp_path):
    assert main(["gen-data", "--out", str(tmp_path / "d")]) == EXIT_OK
    counts = [len(_rows(tmp_path / "d" / f"{k}.csv")) for k in ("train", "val", "test")]
    assert counts == [2000, 1000, 800]
    man = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert man["command"] == "gen-data" and sorted(man["outputs"]) == ["test.csv", "train.csv", "val.csv"]


def test_gen_data_seed_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-data", "--seed", "7", *SMALL, "--out", str(tmp_path / name)]) == EXIT_OK
    for k in ("train", "val", "test"):
        assert (tmp_path / "a" / f"{k}.csv").read_bytes() == (tmp_path / "b" / f"{k}.csv").read_bytes()


def test_usage_errors_exit_2(tmp_path, capsys):
    assert main(["gen-data", "--n-train", "0", "--out", str(tmp_path / "x")]) == EXIT_USAGE
    missing = str(tmp_path / "nope.csv")
    assert main(["select-orders", "--train", missing, "--val", missing, "--test", missing,
                 "--out", str(tmp_path / "y")]) == EXIT_USAGE
    out = tmp_path / "full"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["gen-data", *SMALL, "--out", str(out)]) == EXIT_USAGE
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"task": "sysid", "colour": "blue"}))
    assert main(["gen-data", "--config", str(cfg), "--out", str(tmp_path / "z")]) == EXIT_USAGE
    assert main(["train", "--variant", "GRU", "--out", str(tmp_path / "w")]) == EXIT_USAGE
    assert (out / "keep.txt").read_text() == "x"


def test_empty_selection_exits_3(tmp_path):
    code = main(["select-orders", *SMALL, "--set", "select_threshold=100", "--out", str(tmp_path / "s")])
    assert code == EXIT_FAILURE


def test_select_orders_outputs(tmp_path):
    out = tmp_path / "s"
    assert main(["select-orders", *SMALL, "--max-lag", "10", "--out", str(out)]) == EXIT_OK
    rows = _rows(out / "coefficients.csv")
    assert len(rows) == 20
    assert {r["variable"] for r in rows} == {"u", "y"}
    orders = json.loads((out / "orders.json").read_text())
    inputs = [e for e in orders["selected"] if e["name"] == "u"]
    top = max(inputs, key=lambda e: abs(e["standardized"][0]))
    assert (top["name"], top["lag"]) == ("u", 0)


def test_train_eval_online_chain(tmp_path):
    data = tmp_path / "data"
    assert main(["gen-data", "--seed", "3", *SMALL, "--out", str(data)]) == EXIT_OK
    files = ["--train", str(data / "train.csv"), "--val", str(data / "val.csv"), "--test", str(data / "test.csv")]
    tr = tmp_path / "train"
    assert main(["train", *files, *FAST, "--variant", "LASSO-RSCN-L2", "--out", str(tr)]) == EXIT_OK
    metrics = json.loads((tr / "metrics.json").read_text())
    assert metrics["reservoir_size"] <= 12 and 0 < metrics["test_nrmse"] < 1
    assert (tr / "build_report.csv").exists()

    ev = tmp_path / "eval"
    assert main(["eval", "--model", str(tr / "model.json"), "--test", str(data / "test.csv"),
                 "--out", str(ev)]) == EXIT_OK
    assert json.loads((ev / "metrics.json").read_text())["nrmse"] == pytest.approx(metrics["test_nrmse"], rel=1e-12)

    for mode in ("--adapt", "--frozen"):
        on = tmp_path / f"online{mode}"
        assert main(["online", "--model", str(tr / "model.json"), "--test", str(data / "test.csv"),
                     mode, "--out", str(on)]) == EXIT_OK
        summary = json.loads((on / "online.json").read_text())
        assert summary["adapt"] == (mode == "--adapt")
        assert len(_rows(on / "trajectory.csv")) == summary["samples"]
    frozen = json.loads((tmp_path / "online--frozen" / "online.json").read_text())
    assert frozen["nrmse"] == pytest.approx(metrics["test_nrmse"], rel=1e-9)


def test_trials_and_grid(tmp_path):
    t = tmp_path / "t"
    assert main(["trials", *SMALL, *FAST, "--variants", "ESN;ESN-L1,2", "--n-trials", "2", "--out", str(t)]) == EXIT_OK
    rows = _rows(t / "table.csv")
    assert [r["model"] for r in rows] == ["ESN", "ESN-L1,2"]
    assert all(r["trials"] == "2" for r in rows)

    g = tmp_path / "g"
    assert main(["grid", *SMALL, *FAST, "--c-values", "0.001,0.01", "--n-values", "6,12",
                 "--out", str(g)]) == EXIT_OK
    assert len(_rows(g / "surface.csv")) == 4
    man = json.loads((g / "manifest.json").read_text())
    assert man["argmin"]["n"] in (6, 12)


def test_manifest_rerun_is_bit_identical(tmp_path):
    a = tmp_path / "a"
    assert main(["train", *SMALL, *FAST, "--seed", "5", "--variant", "RSCN", "--out", str(a)]) == EXIT_OK
    b = tmp_path / "b"
    assert main(["train", "--config", str(a / "manifest.json"), "--out", str(b)]) == EXIT_OK
    assert (a / "model.json").read_bytes() == (b / "model.json").read_bytes()
    ma = json.loads((a / "metrics.json").read_text())
    mb = json.loads((b / "metrics.json").read_text())
    assert ma["test_nrmse"] == mb["test_nrmse"]
