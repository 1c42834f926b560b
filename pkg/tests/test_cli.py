import json
import socket
import subprocess
import sys
import threading
import time

import pytest
import yaml

from codesign.cli import main
from codesign.results import replay

from conftest import tiny_config


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_help_and_bad_usage(capsys):
    assert main(["--help"]) == 0
    assert main(["frobnicate"]) == 2
    assert main(["model"]) == 2


def test_model_table(capsys):
    assert main(["model", "784:256/relu:10", "16x16x4", "--target", "arria10"]) == 0
    out = capsys.readouterr().out
    assert "roofline    759.0 GFLOP/s" in out
    assert "bandwidth   19.2 GB/s available (1 bank(s))" in out
    assert main(["model", "784:256/relu:10", "16x16x4", "--ddr-banks", "4"]) == 0
    assert "bandwidth   76.8 GB/s available (4 bank(s))" in capsys.readouterr().out


def test_model_json_and_out_dir(tmp_path, capsys):
    assert main(["model", "784:64/relu:10", "8x8x4", "--json", "--batch", "16", "--out-dir", str(tmp_path)]) == 0
    rec = json.loads(capsys.readouterr().out)
    assert rec["effective_gops"] <= rec["potential_gops"]
    assert json.loads((tmp_path / "model.json").read_text()) == rec
    assert rec["target"]["name"] == "arria10" and len(rec["per_layer"]) == 2


def test_model_overrides(capsys):
    assert main(["model", "784:256/relu:10", "16x16x4", "--batch", "32", "--ddr-banks", "1", "--json"]) == 0
    one = json.loads(capsys.readouterr().out)
    assert main(["model", "784:256/relu:10", "16x16x4", "--batch", "32", "--ddr-banks", "4", "--json"]) == 0
    four = json.loads(capsys.readouterr().out)
    assert four["outputs_per_s"] / one["outputs_per_s"] == pytest.approx(4.0)


def test_model_errors(capsys):
    assert main(["model", "784:256/relu", "16x16x4"]) == 2  # genome syntax
    assert main(["model", "784:256/relu:10", "16x16"]) == 2  # grid syntax
    assert main(["model", "784:256/relu:10", "16x16x4", "--target", "virtex"]) == 2
    assert main(["model", "784:256/relu:10", "64x64x16"]) == 4  # does not fit the device
    assert "does not fit" in capsys.readouterr().err


def test_targets(capsys):
    assert main(["targets"]) == 0
    out = capsys.readouterr().out
    assert "arria10" in out and "stratix10" in out


def test_search_without_config():
    assert main(["search"]) == 2


def test_search_bad_config(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("nna: {input_size: 2}\n")
    assert main(["search", "--config", str(p)]) == 2
    p.write_text(":\n  - [")
    assert main(["search", "--config", str(p)]) == 2


def test_search_missing_dataset(tmp_path, tiny_config_file):
    data = yaml.safe_load(tiny_config_file.read_text())
    data["dataset"]["path"] = str(tmp_path / "nope.csv")
    tiny_config_file.write_text(yaml.safe_dump(data))
    assert main(["search", "--config", str(tiny_config_file)]) == 4


def test_search_pareto_report(tmp_path, tiny_config_file, capsys):
    out = tmp_path / "run"
    assert main(["--seed", "3", "search", "--config", str(tiny_config_file), "--out-dir", str(out),
                 "--steps", "6"]) == 0
    for name in ("results.jsonl", "pareto.csv", "stats.json", "report.csv"):
        assert (out / name).exists()
    log = out / "results.jsonl"
    head = json.loads(log.read_text().splitlines()[0])
    assert head["config"]["evolution"]["seed"] == 3 and head["config"]["evolution"]["steps"] == 6
    assert len(replay(log)) >= 6

    again = tmp_path / "again.csv"
    assert main(["pareto", str(log), "--out", str(again)]) == 0
    assert again.read_bytes() == (out / "pareto.csv").read_bytes()
    capsys.readouterr()
    assert main(["pareto", str(log)]) == 0
    assert capsys.readouterr().out.encode() == again.read_bytes()

    rep = tmp_path / "rep.csv"
    assert main(["report", str(log), "--out", str(rep)]) == 0
    assert rep.read_bytes() == (out / "report.csv").read_bytes()


def test_pareto_corrupt_log(tmp_path, capsys):
    log = tmp_path / "x.jsonl"
    log.write_text('{"type": "header"}\n{"type": "eval", "candidate": {}, "fitness": {}}\n{not json\n')
    assert main(["pareto", str(log)]) == 4
    assert "record 2" in capsys.readouterr().err
    assert main(["pareto", str(tmp_path / "absent.jsonl")]) == 4


def test_gen_config(tmp_path, blobs_csv, capsys):
    assert main(["gen-config", str(blobs_csv), "--label-column", "label"]) == 0
    text = capsys.readouterr().out
    data = yaml.safe_load(text)
    assert data["nna"]["input_size"] == 2 and data["nna"]["output_size"] == 2
    dest = tmp_path / "gen.yaml"
    assert main(["gen-config", str(blobs_csv), "--label-column", "label", "-o", str(dest)]) == 0
    assert dest.read_text() == text
    assert main(["gen-config", str(tmp_path / "missing.csv")]) == 4


def test_worker_cannot_reach_master(capsys):
    assert main(["worker", "--kind", "hardware_db", "--master", f"127.0.0.1:{free_port()}"]) == 3
    assert main(["worker", "--kind", "simulation", "--master", "127.0.0.1:1"]) == 2


def test_tcp_search_with_remote_worker(tmp_path, blobs_csv):
    """Master in one process, hardware worker in another, all over TCP."""
    port = free_port()
    data = tiny_config(blobs_csv, tmp_path / "out", steps=4)
    data["workers"] = {"transport": "tcp", "listen": f"127.0.0.1:{port}", "hardware_db": 0,
                       "remote_hardware_db": 1, "wait_s": 30}
    cfg = tmp_path / "tcp.yaml"
    cfg.write_text(yaml.safe_dump(data))
    code = {}
    t = threading.Thread(target=lambda: code.setdefault("rc", main(["search", "--config", str(cfg)])))
    t.start()
    deadline = time.monotonic() + 10
    while time.monotonic() < deadline:
        try:
            socket.create_connection(("127.0.0.1", port), timeout=0.2).close()
            break
        except OSError:
            time.sleep(0.05)
    proc = subprocess.Popen([sys.executable, "-m", "codesign.cli", "worker", "--kind", "hardware_db",
                             "--master", f"127.0.0.1:{port}", "--id", "remote-hw"],
                            stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True)
    try:
        t.join(60)
        assert code.get("rc") == 0
        archive = replay(tmp_path / "out" / "results.jsonl")
        ok = [fv for _, fv in archive if fv.ok]
        assert ok and all("remote-hw" in fv.payload["worker"] for fv in ok)
    finally:
        proc.terminate()
        proc.wait(10)
