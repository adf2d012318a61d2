"""Command line front end: generate, pd, compare, train, eval.

Every command is deterministic given its inputs and seeds.  Exit codes:
0 success, 1 usage or configuration error, 2 runtime abort (training blew
up or a solver failed).  All floats in CSV artifacts are written with 17
significant digits so reruns are byte-comparable.

TOPOEMBED_THREADS caps the BLAS thread pools; it must take effect before
numpy is first imported, which is why the heavy imports live inside the
command functions.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract reserves 2 for runtime
    # aborts, so route usage problems through the normal error path
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _apply_thread_env() -> None:
    threads = os.environ.get("TOPOEMBED_THREADS")
    if not threads:
        return
    if not threads.isdigit() or int(threads) < 1:
        raise _UsageError(f"TOPOEMBED_THREADS must be a positive integer, got {threads!r}")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, threads)


def _fmt(x: float) -> float:
    """Round-trip a float through its 17-significant-digit form."""
    return float(f"{float(x):.17g}")


def _write_json(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2)
    if out is None or out == "-":
        print(text)
    else:
        Path(out).write_text(text + "\n")


def _require_keys(d: dict, allowed: set[str], where: str) -> None:
    from .errors import ConfigError

    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


# ---------------------------------------------------------------------------
# generate


def _load_spec(path: str):
    from .errors import ConfigError
    from .synth import SyntheticSpec

    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: spec must be a JSON object")
    _require_keys(raw, {"kind", "counts", "radii", "jitter", "seed"}, path)
    try:
        return SyntheticSpec(
            kind=raw.get("kind", ""),
            counts=tuple(raw.get("counts", ())),
            radii=tuple(raw.get("radii", ())),
            jitter=raw.get("jitter", 5e-3),
            seed=raw.get("seed", 0),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def cmd_generate(args) -> int:
    from .graph import (
        FiltrationParams,
        pairwise_distances,
        pointcloud_to_graph,
        save_edge_list,
        save_point_cloud,
    )
    from .persistence import rips_diagram
    from .synth import generate, prominent_points

    spec = _load_spec(args.spec)
    pc = generate(spec)
    g = pointcloud_to_graph(pc, FiltrationParams())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_point_cloud(out / "points.csv", pc)
    save_edge_list(out / "edges.csv", g)
    diagrams = rips_diagram(pairwise_distances(pc.points), max_dim=args.max_dim)
    counts = ", ".join(
        f"H{pd.dim}: {len(prominent_points(pd))} prominent / {len(pd.points)}"
        for pd in diagrams
        if pd.dim >= 1
    )
    edges = (g.weights > 0).sum() // 2
    print(f"{spec.kind}: n={pc.n} edges={edges} ({counts})")
    print(f"wrote {out / 'points.csv'} and {out / 'edges.csv'}")
    return 0


# ---------------------------------------------------------------------------
# pd


def _load_input(path: str, fmt: str):
    from .errors import ConfigError
    from .graph import load_edge_list, load_point_cloud, load_weight_matrix

    if fmt == "points":
        return load_point_cloud(path), None
    if fmt == "edges":
        return None, load_edge_list(path)
    if fmt == "weights":
        return None, load_weight_matrix(path)
    raise ConfigError(f"unknown input format {fmt!r}")


def _diagrams_of_input(pc, g, max_dim: int, fp):
    """Point clouds filter by raw distance, graphs by 1/(w + gamma)^nu."""
    from .graph import pairwise_distances
    from .persistence import diagram_of_graph, rips_diagram

    if pc is not None:
        return rips_diagram(pairwise_distances(pc.points), max_dim=max_dim)
    return diagram_of_graph(g, fp, max_dim=max_dim)


def cmd_pd(args) -> int:
    from .graph import FiltrationParams
    from .persistence import write_diagrams

    fp = FiltrationParams(nu=args.nu, gamma=args.gamma)
    pc, g = _load_input(args.input, args.format)
    diagrams = _diagrams_of_input(pc, g, args.max_dim, fp)
    if args.out == "-":
        from .persistence import _CSV_HEADER

        print(_CSV_HEADER)
        for pd in diagrams:
            for p in pd.points:
                bi, bj = p.birth_edge if p.birth_edge is not None else (-1, -1)
                di, dj = p.death_edge
                print(f"{p.dim},{p.birth:.17g},{p.death:.17g},{bi},{bj},{di},{dj}")
    else:
        write_diagrams(args.out, diagrams)
        total = sum(len(pd.points) for pd in diagrams)
        print(f"wrote {total} diagram points to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    from .persistence import read_diagrams
    from .transport import PDPointSet, fg_exact, sfg

    da = read_diagrams(args.pd_a)
    db = read_diagrams(args.pd_b)
    dims = sorted(
        {pd.dim for pd in da if pd.points} | {pd.dim for pd in db if pd.points}
    )
    by_dim_a = {pd.dim: pd for pd in da}
    by_dim_b = {pd.dim: pd for pd in db}
    report = {"epsilon": _fmt(args.epsilon), "dims": {}}
    for k in dims:
        empty = PDPointSet(())
        alpha = (
            PDPointSet.from_diagram(by_dim_a[k]) if k in by_dim_a else empty
        )
        beta = PDPointSet.from_diagram(by_dim_b[k]) if k in by_dim_b else empty
        value, _ = fg_exact(alpha, beta)
        report["dims"][str(k)] = {
            "fg_exact": _fmt(value),
            "sfg": _fmt(sfg(alpha, beta, args.epsilon)),
        }
    _write_json(report, args.out)
    return 0


# ---------------------------------------------------------------------------
# train


_RUN_SECTIONS = {"input", "walk", "model", "train", "topo", "output_dir"}
_INPUT_KEYS = {"path", "format"}
_WALK_KEYS = {"l", "r", "p", "q", "seed"}
_MODEL_KEYS = {"m", "seed"}
_TRAIN_KEYS = {
    "eta",
    "lambda0",
    "lambda1",
    "epochs",
    "minibatch",
    "convergence",
    "checkpoint_every",
}
_MINIBATCH_KEYS = {"kind", "start", "end"}
_CONVERGENCE_KEYS = {"window", "rel_improvement"}
_TOPO_KEYS = {"epsilon", "dims", "dim_weights", "filtration", "tol", "max_iter"}
_FILTRATION_KEYS = {"nu", "gamma"}


def _build_run_config(raw: dict, path: str):
    """Validate the JSON document and build the dataclass tree.

    Dataclass __post_init__ checks carry the numeric invariants; this
    function owns structure: sections, key names, required fields.
    """
    from .errors import ConfigError
    from .graph import FiltrationParams
    from .topo import TopoLossConfig
    from .trainer import Convergence, MinibatchSchedule, TrainConfig
    from .walks import INFINITE_WALKS, WalkConfig

    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    _require_keys(raw, _RUN_SECTIONS, path)
    for section in ("input", "model", "output_dir"):
        if section not in raw:
            raise ConfigError(f"{path}: missing required section {section!r}")
    for section in _RUN_SECTIONS - {"output_dir"}:
        if section in raw and raw[section] is not None and not isinstance(raw[section], dict):
            raise ConfigError(f"{path}: section {section!r} must be a JSON object")
    if raw.get("model") is None or raw.get("input") is None:
        raise ConfigError(f"{path}: input and model sections must be JSON objects")

    inp = raw["input"]
    _require_keys(inp, _INPUT_KEYS, f"{path}: input")
    if "path" not in inp:
        raise ConfigError(f"{path}: input.path is required")
    input_path = Path(inp["path"])
    if not input_path.is_absolute():
        input_path = Path(path).resolve().parent / input_path
    if not input_path.exists():
        raise ConfigError(f"{path}: input file {input_path} does not exist")
    input_format = inp.get("format", "points")
    if input_format not in ("points", "edges", "weights"):
        raise ConfigError(f"{path}: input.format must be points, edges or weights")

    model = raw["model"]
    _require_keys(model, _MODEL_KEYS, f"{path}: model")
    seed = model.get("seed", 0)

    walk = dict(raw.get("walk", {}))
    _require_keys(walk, _WALK_KEYS, f"{path}: walk")
    if walk.get("r") == "inf":
        walk["r"] = INFINITE_WALKS
    walk.setdefault("seed", seed)

    train = dict(raw.get("train", {}))
    _require_keys(train, _TRAIN_KEYS, f"{path}: train")
    mb = train.pop("minibatch", None)
    conv = train.pop("convergence", "unset")

    topo_raw = raw.get("topo")
    topo_cfg = None
    if topo_raw is not None:
        topo = dict(topo_raw)
        _require_keys(topo, _TOPO_KEYS, f"{path}: topo")
        filt = topo.pop("filtration", None)
        if filt is not None:
            _require_keys(filt, _FILTRATION_KEYS, f"{path}: topo.filtration")
            filt = FiltrationParams(**filt)
        if "dims" in topo:
            topo["dims"] = tuple(topo["dims"])
        if topo.get("dim_weights") is not None:
            topo["dim_weights"] = tuple(topo["dim_weights"])
        try:
            topo_cfg = TopoLossConfig(
                **topo, **({"filtration": filt} if filt is not None else {})
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: topo: {exc}") from None

    try:
        if mb is not None:
            _require_keys(mb, _MINIBATCH_KEYS, f"{path}: train.minibatch")
            mb = MinibatchSchedule(**mb)
        if conv == "unset":
            conv_obj = Convergence()
        elif conv is None:
            conv_obj = None
        else:
            _require_keys(conv, _CONVERGENCE_KEYS, f"{path}: train.convergence")
            conv_obj = Convergence(**conv)
        cfg = TrainConfig(
            m=model.get("m", 2),
            seed=seed,
            walk_cfg=WalkConfig(**walk),
            topo_cfg=topo_cfg,
            convergence=conv_obj,
            **({"minibatch": mb} if mb is not None else {}),
            **train,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return cfg, str(input_path), input_format, raw["output_dir"]


_OVERRIDE_FIELDS = (
    ("epochs", ("train", "epochs"), int),
    ("eta", ("train", "eta"), float),
    ("lambda0", ("train", "lambda0"), float),
    ("lambda1", ("train", "lambda1"), float),
    ("seed", ("model", "seed"), int),
    ("epsilon", ("topo", "epsilon"), float),
    ("checkpoint_every", ("train", "checkpoint_every"), int),
)


def _apply_overrides(raw: dict, args) -> dict:
    from .errors import ConfigError

    for flag, (section, key), _ in _OVERRIDE_FIELDS:
        value = getattr(args, flag)
        if value is None:
            continue
        if section == "topo" and raw.get("topo") is None:
            raise ConfigError(f"--{flag.replace('_', '-')} needs a topo section")
        raw.setdefault(section, {})[key] = value
    if args.output_dir is not None:
        raw["output_dir"] = args.output_dir
    return raw


def cmd_train(args) -> int:
    from .errors import ConfigError
    from .graph import FiltrationParams, pairwise_distances, pointcloud_to_graph
    from .persistence import rips_diagram, write_diagrams
    from .synth import diagram_match_report
    from .topo import TopoLoss, TopoLossConfig
    from .trainer import train

    config_path = args.config
    try:
        raw = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{config_path}: {exc}") from None
    raw = _apply_overrides(raw, args)
    cfg, input_path, input_format, output_dir = _build_run_config(raw, config_path)

    pc, g = _load_input(input_path, input_format)
    fp = cfg.topo_cfg.filtration if cfg.topo_cfg is not None else FiltrationParams()
    if g is None:
        g = pointcloud_to_graph(pc, fp)

    run_dir = Path(output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(json.dumps(raw, indent=2) + "\n")

    import numpy as np

    with open(run_dir / "metrics.jsonl", "w") as metrics_fh:

        def on_epoch(record: dict) -> None:
            metrics_fh.write(json.dumps(record) + "\n")
            metrics_fh.flush()

        params, _ = train(
            g,
            cfg,
            checkpoint_dir=run_dir / "checkpoints" if cfg.checkpoint_every else None,
            on_epoch=on_epoch,
        )

    np.savetxt(run_dir / "embedding.csv", params.W1, delimiter=",", fmt="%.17g")

    topo_cfg = cfg.topo_cfg or TopoLossConfig()
    max_dim = max(topo_cfg.dims)
    emb = rips_diagram(pairwise_distances(params.W1), max_dim=max_dim)
    write_diagrams(run_dir / "diagram.csv", emb)

    from .persistence import diagram_of_graph

    target = diagram_of_graph(g, topo_cfg.filtration, max_dim=max_dim)
    loss = TopoLoss(target, topo_cfg)
    report = {
        str(k): diagram_match_report(emb[k], target[k], loss.epsilons[t])
        for t, k in enumerate(topo_cfg.dims)
    }
    _write_json(report, str(run_dir / "match_report.json"))
    print(f"run artifacts in {run_dir}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    from .errors import ConfigError
    from .graph import PointCloud, load_point_cloud
    from .synth import inscribed_sphere_profile, pca_projection, write_profile

    pc = load_point_cloud(args.embedding)
    if pc.dim < 3:
        raise ConfigError(
            f"sphere profile needs at least 3 dimensions, embedding has {pc.dim}"
        )
    if pc.dim > 3:
        pc = PointCloud(pca_projection(pc.points))
    profile = inscribed_sphere_profile(pc, K=args.spheres)
    out_profile = args.out_profile or (str(Path(args.embedding).with_suffix("")) + "_profile.csv")
    write_profile(out_profile, profile)
    radii = profile.radii
    summary = {
        "spheres": int(args.spheres),
        "mean_radius": _fmt(radii.mean()),
        "cv": _fmt(profile.coefficient_of_variation()),
        "min_radius": _fmt(radii.min()),
        "max_radius": _fmt(radii.max()),
        "profile_csv": out_profile,
    }
    _write_json(summary, args.out)
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="topoembed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthetic cloud + graph from a spec file")
    p.add_argument("spec", help="JSON spec: kind, counts, radii, jitter, seed")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-dim", type=int, default=1, dest="max_dim")
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("pd", help="persistence diagram of a cloud or graph")
    p.add_argument("input")
    p.add_argument("--format", choices=("points", "edges", "weights"), default="points")
    p.add_argument("--max-dim", type=int, default=1, dest="max_dim")
    p.add_argument("--nu", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1e-9)
    p.add_argument("--out", default="-", help="diagram CSV path, - for stdout")
    p.set_defaults(fn=cmd_pd)

    p = sub.add_parser("compare", help="exact and entropic distances between diagrams")
    p.add_argument("pd_a")
    p.add_argument("pd_b")
    p.add_argument("--epsilon", type=float, default=1e-2)
    p.add_argument("--out", default="-", help="report JSON path, - for stdout")
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("train", help="run the embedding loop from a config file")
    p.add_argument("config")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--epochs", type=int)
    p.add_argument("--eta", type=float)
    p.add_argument("--lambda0", type=float)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="inscribed-sphere profile of an embedding")
    p.add_argument("embedding", help="embedding CSV (n rows, >= 3 columns)")
    p.add_argument("--spheres", type=int, default=100)
    p.add_argument("--out-profile", dest="out_profile", help="profile CSV path")
    p.add_argument("--out", default="-", help="summary JSON path, - for stdout")
    p.set_defaults(fn=cmd_eval)

    return parser


def main(argv=None) -> int:
    try:
        _apply_thread_env()
        args = _build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 1

    from .errors import ConfigError, ConvergenceError, InputFormatError, TrainingAbort

    try:
        return args.fn(args)
    except (ConfigError, InputFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TrainingAbort, ConvergenceError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
