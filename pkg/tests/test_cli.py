"""End-to-end command tests driven through main(argv)."""

import json
import os

import numpy as np
import pytest

from topoembed.cli import main
from topoembed.graph import (
    FiltrationParams,
    PointCloud,
    WeightedGraph,
    pairwise_distances,
    pointcloud_to_graph,
    save_edge_list,
    save_point_cloud,
)
from topoembed.persistence import (
    DiagramPoint,
    PersistenceDiagram,
    read_diagrams,
    rips_diagram,
    write_diagrams,
)
from topoembed.synth import SyntheticSpec, generate


@pytest.fixture
def circle_csv(tmp_path):
    pc = generate(SyntheticSpec("circle", (1, 16), (1.0, 1.0), 5e-3, 0))
    path = tmp_path / "circle.csv"
    save_point_cloud(path, pc)
    return path


def write_spec(tmp_path, **overrides):
    spec = {"kind": "circle", "counts": [1, 12], "radii": [1.0, 1.0], "seed": 3}
    spec.update(overrides)
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec))
    return path


def write_train_config(tmp_path, input_csv, **tweaks):
    cfg = {
        "input": {"path": os.path.basename(input_csv), "format": "points"},
        "walk": {"l": 1, "r": "inf"},
        "model": {"m": 2, "seed": 0},
        "train": {
            "eta": 0.05,
            "lambda0": 1.0,
            "lambda1": 1.0,
            "epochs": 8,
            "minibatch": {"kind": "linear", "start": 0.5, "end": 1.0},
            "convergence": None,
        },
        "topo": {"epsilon": 0.01, "dims": [1]},
        "output_dir": str(tmp_path / "run"),
    }
    for key, value in tweaks.items():
        section, _, field = key.partition(".")
        if not field:
            cfg[section] = value
        elif value is None and field in cfg.get(section, {}):
            del cfg[section][field]
        else:
            cfg.setdefault(section, {})[field] = value
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


# --------------------------------------------------------------- generate


def test_generate_writes_cloud_and_graph(tmp_path, capsys):
    spec = write_spec(tmp_path)
    out = tmp_path / "data"
    assert main(["generate", str(spec), "--out", str(out)]) == 0
    assert (out / "points.csv").exists()
    assert (out / "edges.csv").exists()
    summary = capsys.readouterr().out
    assert "n=12" in summary
    first = (out / "points.csv").read_bytes()
    assert main(["generate", str(spec), "--out", str(out)]) == 0
    assert (out / "points.csv").read_bytes() == first


def test_generate_rejects_bad_specs(tmp_path, capsys):
    bad_kind = write_spec(tmp_path, kind="moebius")
    assert main(["generate", str(bad_kind), "--out", str(tmp_path / "x")]) == 1
    assert "error" in capsys.readouterr().err
    unknown_key = write_spec(tmp_path, surprise=1)
    assert main(["generate", str(unknown_key), "--out", str(tmp_path / "x")]) == 1
    assert main(["generate", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x")]) == 1


# --------------------------------------------------------------------- pd


def test_pd_four_cycle_graph_has_one_loop(tmp_path):
    w = np.zeros((4, 4))
    for i in range(4):
        w[i, (i + 1) % 4] = w[(i + 1) % 4, i] = 1.0
    edges = tmp_path / "cycle.csv"
    save_edge_list(edges, WeightedGraph(w))
    out = tmp_path / "dgm.csv"
    assert main(["pd", str(edges), "--format", "edges", "--out", str(out)]) == 0
    dgms = read_diagrams(out)
    assert len(dgms[1].points) == 1


def test_pd_max_dim_zero(tmp_path, circle_csv, capsys):
    assert main(["pd", str(circle_csv), "--max-dim", "0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("dim,")
    assert all(line.split(",")[0] == "0" for line in lines[1:])
    assert len(lines) == 16  # header + n-1 merge deaths


def test_pd_cloud_and_reciprocal_graph_agree(tmp_path, circle_csv):
    pc = generate(SyntheticSpec("circle", (1, 16), (1.0, 1.0), 5e-3, 0))
    g = pointcloud_to_graph(pc, FiltrationParams(gamma=1e-12))
    edges = tmp_path / "edges.csv"
    save_edge_list(edges, g)
    out_pts = tmp_path / "from_points.csv"
    out_g = tmp_path / "from_graph.csv"
    assert main(["pd", str(circle_csv), "--out", str(out_pts)]) == 0
    assert (
        main(
            ["pd", str(edges), "--format", "edges", "--gamma", "1e-12", "--out", str(out_g)]
        )
        == 0
    )
    da, db = read_diagrams(out_pts), read_diagrams(out_g)
    for pa, pb in zip(da, db):
        assert len(pa.points) == len(pb.points)
        for a, b in zip(pa.points, pb.points):
            assert a.birth == pytest.approx(b.birth, abs=1e-6)
            assert a.death == pytest.approx(b.death, abs=1e-6)


def test_pd_rejects_unknown_format(tmp_path, circle_csv):
    assert main(["pd", str(circle_csv), "--format", "parquet"]) == 1


# ---------------------------------------------------------------- compare


def one_point_diagram(tmp_path, name, birth, death):
    dgm = [
        PersistenceDiagram(0, ()),
        PersistenceDiagram(1, (DiagramPoint(1, birth, death, (0, 1), (2, 3)),)),
    ]
    path = tmp_path / name
    write_diagrams(path, dgm)
    return path


def test_compare_self_is_zero(tmp_path, circle_csv, capsys):
    dgm = tmp_path / "dgm.csv"
    main(["pd", str(circle_csv), "--out", str(dgm)])
    capsys.readouterr()
    assert main(["compare", str(dgm), str(dgm)]) == 0
    report = json.loads(capsys.readouterr().out)
    for entry in report["dims"].values():
        assert entry["fg_exact"] == 0.0
        assert abs(entry["sfg"]) < 1e-9


def test_compare_single_point_pair(tmp_path, capsys):
    a = one_point_diagram(tmp_path, "a.csv", 0.0, 2.0)
    b = one_point_diagram(tmp_path, "b.csv", 0.0, 2.1)
    assert main(["compare", str(a), str(b), "--epsilon", "1e-3"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["dims"]["1"]["fg_exact"] == pytest.approx(0.01)
    assert main(["compare", str(b), str(a), "--epsilon", "1e-3"]) == 0
    swapped = json.loads(capsys.readouterr().out)
    assert swapped["dims"]["1"]["fg_exact"] == report["dims"]["1"]["fg_exact"]


def test_compare_writes_report_file(tmp_path, circle_csv):
    dgm = tmp_path / "dgm.csv"
    main(["pd", str(circle_csv), "--out", str(dgm)])
    out = tmp_path / "report.json"
    assert main(["compare", str(dgm), str(dgm), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["epsilon"] == 0.01


# ------------------------------------------------------------------ train


def test_train_run_directory_artifacts(tmp_path, circle_csv):
    cfg = write_train_config(tmp_path, circle_csv)
    assert main(["train", str(cfg)]) == 0
    run = tmp_path / "run"
    assert json.loads((run / "config.json").read_text())["model"] == {"m": 2, "seed": 0}
    metrics = [json.loads(line) for line in (run / "metrics.jsonl").read_text().splitlines()]
    assert len(metrics) == 8
    assert metrics[0]["batch_size"] == 8
    assert metrics[-1]["batch_size"] == 16
    emb = np.loadtxt(run / "embedding.csv", delimiter=",")
    assert emb.shape == (16, 2)
    assert read_diagrams(run / "diagram.csv")
    report = json.loads((run / "match_report.json").read_text())
    assert "fg_exact" in report["1"]


def test_train_rerun_is_bit_identical(tmp_path, circle_csv):
    cfg = write_train_config(tmp_path, circle_csv)
    assert main(["train", str(cfg), "--output-dir", str(tmp_path / "r1")]) == 0
    assert main(["train", str(cfg), "--output-dir", str(tmp_path / "r2")]) == 0
    assert (tmp_path / "r1" / "embedding.csv").read_bytes() == (
        tmp_path / "r2" / "embedding.csv"
    ).read_bytes()


def test_train_without_topo_reports_zero_l1(tmp_path, circle_csv):
    cfg = write_train_config(
        tmp_path, circle_csv, **{"topo": None, "train.lambda1": 0.0}
    )
    assert main(["train", str(cfg)]) == 0
    metrics = [
        json.loads(line)
        for line in (tmp_path / "run" / "metrics.jsonl").read_text().splitlines()
    ]
    assert all(r["L1"] == 0.0 for r in metrics)


def test_train_flag_overrides(tmp_path, circle_csv):
    cfg = write_train_config(tmp_path, circle_csv)
    assert (
        main(
            [
                "train",
                str(cfg),
                "--epochs",
                "3",
                "--checkpoint-every",
                "2",
                "--output-dir",
                str(tmp_path / "r3"),
            ]
        )
        == 0
    )
    run = tmp_path / "r3"
    metrics = (run / "metrics.jsonl").read_text().splitlines()
    assert len(metrics) == 3
    assert (run / "checkpoints" / "epoch_000002").is_dir()
    saved = json.loads((run / "config.json").read_text())
    assert saved["train"]["epochs"] == 3


@pytest.mark.parametrize(
    "tweaks, message",
    [
        ({"train.minibatch": {"kind": "exp", "start": 0.5}}, "constant or linear"),
        ({"surprise": {}}, "unknown keys"),
        ({"input.path": "missing.csv"}, "does not exist"),
        ({"model": None}, "missing required section"),
        ({"topo.dims": [0, 1]}, "dims"),
    ],
)
def test_train_config_errors(tmp_path, circle_csv, capsys, tweaks, message):
    cfg = write_train_config(tmp_path, circle_csv, **tweaks)
    assert main(["train", str(cfg)]) == 1
    assert message in capsys.readouterr().err


def test_train_epsilon_flag_needs_topo_section(tmp_path, circle_csv, capsys):
    cfg = write_train_config(
        tmp_path, circle_csv, **{"topo": None, "train.lambda1": 0.0}
    )
    assert main(["train", str(cfg), "--epsilon", "0.1"]) == 1
    assert "topo section" in capsys.readouterr().err


def test_train_runtime_abort_exits_two(tmp_path, circle_csv, capsys):
    cfg = write_train_config(
        tmp_path, circle_csv, **{"topo": None, "train.lambda1": 0.0}
    )
    with np.errstate(over="ignore", invalid="ignore"):
        code = main(["train", str(cfg), "--eta", "1e14", "--epochs", "50"])
    assert code == 2
    assert "aborted" in capsys.readouterr().err


# ------------------------------------------------------------------- eval


def test_eval_profile_and_summary(tmp_path, capsys):
    pc = generate(SyntheticSpec("torus", (16, 8), (1.0, 2.0), 5e-3, 0))
    emb = tmp_path / "emb.csv"
    save_point_cloud(emb, pc)
    profile_csv = tmp_path / "prof.csv"
    assert (
        main(["eval", str(emb), "--spheres", "4", "--out-profile", str(profile_csv)]) == 0
    )
    summary = json.loads(capsys.readouterr().out)
    assert summary["spheres"] == 4
    assert summary["mean_radius"] > 0
    assert len(profile_csv.read_text().splitlines()) == 5  # header + 4 rows


def test_eval_projects_high_dimensional_embeddings(tmp_path, capsys):
    rng = np.random.default_rng(0)
    cloud = rng.normal(size=(30, 5))
    emb = tmp_path / "highdim.csv"
    save_point_cloud(emb, PointCloud(cloud))
    assert main(["eval", str(emb), "--spheres", "6"]) == 0
    assert json.loads(capsys.readouterr().out)["spheres"] == 6


def test_eval_rejects_planar_embeddings(tmp_path, capsys):
    emb = tmp_path / "flat.csv"
    save_point_cloud(emb, PointCloud(np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 0.0]])))
    assert main(["eval", str(emb)]) == 1
    assert "3 dimensions" in capsys.readouterr().err


# ------------------------------------------------------------------ misc


def test_usage_errors_exit_one(capsys):
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    capsys.readouterr()


def test_thread_env_validation(monkeypatch, capsys):
    monkeypatch.setenv("TOPOEMBED_THREADS", "zero")
    assert main(["compare", "a", "b"]) == 1
    assert "TOPOEMBED_THREADS" in capsys.readouterr().err
    monkeypatch.setenv("TOPOEMBED_THREADS", "2")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.delenv(var, raising=False)
    assert main(["compare", "missing_a.csv", "missing_b.csv"]) == 1
    assert os.environ["OMP_NUM_THREADS"] == "2"
