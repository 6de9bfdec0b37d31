import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from n2n.cli import main
from n2n.datasets import make_citation_like
from n2n.graph import Graph, write_edge_list, write_split
from n2n.tensor import load_matrix, save_matrix


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ds = make_citation_like(num_nodes=100, num_classes=3, num_words=40, p_in=0.1, seed=4)
    d = root / "toy"
    d.mkdir()
    write_edge_list(ds.graph, d / "edges.txt")
    np.savetxt(d / "features.csv", ds.features, delimiter=",", fmt="%g")
    np.savetxt(d / "labels.csv", ds.labels, fmt="%d")
    cfg = {"pipeline": "nf-n2n", "constraint": "W", "dataset": str(d), "hidden": 8, "epochs": 2,
           "batch_size": 64, "probe_epochs": 20}
    (root / "cfg.json").write_text(json.dumps(cfg))
    return root, d


def test_taps_on_star(tmp_path, capsys):
    write_edge_list(Graph.from_edges([0, 0, 0, 0], [1, 2, 3, 4]), tmp_path / "s.txt")
    assert main(["taps", "--graph", str(tmp_path / "s.txt"), "--k", "1", "--out", str(tmp_path / "o")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "o" / "partition.csv")))
    assert {r["component"] for r in rows} == {"0"}
    stats = json.loads((tmp_path / "o" / "stats.json").read_text())
    assert stats["components"] == 1
    assert "components=1" in capsys.readouterr().out


def test_taps_with_labels(files):
    root, d = files
    out = root / "taps"
    assert main(["taps", "--graph", str(d / "edges.txt"), "--labels", str(d / "labels.csv"),
                 "--out", str(out)]) == 0
    stats = json.loads((out / "stats.json").read_text())
    assert set(stats["label_smoothness"]) == {"all", "taps_1", "taps_2", "taps_3", "taps_4", "taps_5"}
    assert stats["largest_components"][0]["label_purity"] > 0


def test_taps_missing_file(tmp_path, capsys):
    assert main(["taps", "--graph", str(tmp_path / "nope.txt"), "--out", str(tmp_path)]) == 2
    assert "nope.txt" in capsys.readouterr().err


def test_train_outputs(files, capsys):
    root, d = files
    out = root / "run"
    assert main(["train", "--config", str(root / "cfg.json"), "--out", str(out)]) == 0
    line = capsys.readouterr().out.strip().split()
    assert line[:4] == ["nf-n2n", "W", "toy", "0"]
    for name in ("report.json", "loss_trace.csv", "embeddings.csv", "manifest.json", "timing.json",
                 "checkpoint/config.json", "checkpoint/w0.csv"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert len(manifest["inputs"]) == 3
    assert all(len(v) == 64 for v in manifest["inputs"].values())
    assert "wall_clock" not in json.loads((out / "report.json").read_text())


def test_train_is_reproducible(files):
    root, _ = files
    for name in ("a", "b"):
        assert main(["train", "--config", str(root / "cfg.json"), "--out", str(root / name),
                     "--seed", "5"]) == 0
    assert (root / "a" / "loss_trace.csv").read_bytes() == (root / "b" / "loss_trace.csv").read_bytes()
    assert (root / "a" / "report.json").read_bytes() == (root / "b" / "report.json").read_bytes()


def test_train_multiple_seeds(files, capsys):
    root, _ = files
    assert main(["train", "--config", str(root / "cfg.json"), "--out", str(root / "multi"),
                 "--seed", "1", "2", "--jobs", "2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [l.split()[3] for l in lines] == ["1", "2"]
    assert (root / "multi" / "seed-2" / "report.json").exists()


def test_train_rejects_bad_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"constraint": "XYZ", "colour": "red"}))
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "colour" in capsys.readouterr().err
    p.write_text(json.dumps({"constraint": "XYZ"}))
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_probe_metrics_export(files):
    root, d = files
    run_dir = root / "run"
    if not run_dir.exists():
        main(["train", "--config", str(root / "cfg.json"), "--out", str(run_dir)])
    emb = run_dir / "embeddings.csv"
    assert main(["probe", "--embeddings", str(emb), "--labels", str(d / "labels.csv"),
                 "--split", str(run_dir / "split.txt"), "--out", str(root / "probe")]) == 0
    assert "test_f1" in json.loads((root / "probe" / "probe.json").read_text())
    assert main(["metrics", "--embeddings", str(emb), "--graph", str(d / "edges.txt"),
                 "--labels", str(d / "labels.csv"), "--out", str(root / "m.json")]) == 0
    m = json.loads((root / "m.json").read_text())
    assert m["gtv"] >= 0 and "effective_rank" in m["collapse"]
    out = root / "exported.csv"
    assert main(["export-embeddings", "--checkpoint", str(run_dir / "checkpoint"),
                 "--features", str(d / "features.csv"), "--out", str(out)]) == 0
    np.testing.assert_allclose(load_matrix(out), load_matrix(emb), atol=1e-10)


def test_metrics_size_mismatch(files, tmp_path):
    _, d = files
    save_matrix(tmp_path / "e.csv", np.zeros((3, 2)))
    assert main(["metrics", "--embeddings", str(tmp_path / "e.csv"), "--graph", str(d / "edges.txt"),
                 "--out", str(tmp_path)]) == 2


def test_constant_embeddings_flagged(files, tmp_path):
    _, d = files
    save_matrix(tmp_path / "e.csv", np.ones((100, 3)))
    assert main(["metrics", "--embeddings", str(tmp_path / "e.csv"), "--graph", str(d / "edges.txt"),
                 "--out", str(tmp_path / "m.json")]) == 0
    m = json.loads((tmp_path / "m.json").read_text())
    assert m["gtv"] == 0.0 and m["collapse"]["degenerate"]


def test_probe_split_file(tmp_path):
    rng = np.random.default_rng(0)
    y = np.repeat([0, 1], 20)
    save_matrix(tmp_path / "e.csv", rng.normal(size=(40, 2)) + 4 * y[:, None])
    np.savetxt(tmp_path / "y.csv", y, fmt="%d")
    from n2n.graph import Split
    write_split(Split(np.arange(0, 40, 2), np.arange(1, 20, 2), np.arange(21, 40, 2)),
                tmp_path / "s.txt")
    assert main(["probe", "--embeddings", str(tmp_path / "e.csv"), "--labels", str(tmp_path / "y.csv"),
                 "--split", str(tmp_path / "s.txt"), "--out", str(tmp_path)]) == 0


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "n2n", "taps", "--graph", str(tmp_path / "x"),
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 2
    res = subprocess.run([sys.executable, "-m", "n2n", "frobnicate"], capture_output=True, text=True)
    assert res.returncode == 2
