"""Command-line harness: experiment runs, sweeps, dumps, and verification.

Config files are plain ``key = value`` text; ``[section]`` headers and
``#`` comments are allowed and ignored. Flags of the form
``--set key=value`` override file keys. Exit codes: 0 success, 1 config
error, 2 property or runtime failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .graph import Graph, generate_synthetic, load_graph, split_edges
from .metrics import default_k, evaluate_model
from .partition import build_worker_subgraphs, save_plan
from .sparsify import save_sparsified, sparsify_subgraph, summary_line
from .training import (
    VARIANTS,
    TrainConfig,
    make_plan,
    run_baseline,
)
from .verify import run_verification


class ConfigError(ValueError):
    """Invalid or missing configuration key."""


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config(path: str, overrides: list[str]) -> dict[str, str]:
    try:
        with open(path) as f:
            cfg = parse_config_text(f.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def _get(cfg: dict[str, str], key: str, default=None, required: bool = False) -> str:
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing required config key {key!r}")
    return default


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected boolean, got {text!r}")


def build_dataset(cfg: dict[str, str]) -> Graph:
    kind = _get(cfg, "dataset.kind", required=True)
    if kind == "files":
        edges = _get(cfg, "dataset.edges", required=True)
        features = _get(cfg, "dataset.features", required=True)
        return load_graph(edges, features)
    if kind != "synthetic":
        raise ConfigError(f"dataset.kind must be 'files' or 'synthetic', got {kind!r}")
    generator = _get(cfg, "dataset.generator", "erdos_renyi")
    fdim = int(_get(cfg, "dataset.feature_dim", "16"))
    seed = int(_get(cfg, "dataset.seed", _get(cfg, "run.seed", "0")))
    if generator in ("er", "erdos_renyi"):
        params = {"n": int(_get(cfg, "dataset.nodes", required=True)), "p": float(_get(cfg, "dataset.p", required=True))}
        generator = "erdos_renyi"
    elif generator in ("ba", "barabasi_albert"):
        params = {"n": int(_get(cfg, "dataset.nodes", required=True)), "m": int(_get(cfg, "dataset.m", required=True))}
        generator = "barabasi_albert"
    elif generator == "sbm":
        params = {
            "block_sizes": _int_list(_get(cfg, "dataset.blocks", required=True)),
            "p_in": float(_get(cfg, "dataset.p_in", required=True)),
            "p_out": float(_get(cfg, "dataset.p_out", required=True)),
        }
    else:
        raise ConfigError(f"unknown dataset.generator {generator!r}")
    try:
        return generate_synthetic(generator, params, fdim, seed)
    except ValueError as exc:
        raise ConfigError(f"dataset generation failed: {exc}") from exc


def build_train_config(cfg: dict[str, str], seed: int) -> TrainConfig:
    fanouts = tuple(_int_list(_get(cfg, "train.fanouts", "25,10,5")))
    try:
        return TrainConfig(
            num_parts=int(_get(cfg, "train.parts", "4")),
            alpha=float(_get(cfg, "train.alpha", "0.15")),
            fanouts=fanouts,
            batch_size=int(_get(cfg, "train.batch_size", "256")),
            lr=float(_get(cfg, "train.lr", "0.001")),
            epochs=int(_get(cfg, "train.epochs", "1")),
            sync_mode=_get(cfg, "train.sync", "model_avg"),
            sharing_mode=_get(cfg, "train.sharing", "sparsified"),
            architecture=_get(cfg, "train.architecture", "sage"),
            predictor=_get(cfg, "train.predictor", "mlp"),
            hidden_dim=int(_get(cfg, "train.hidden_dim", "256")),
            partition_strategy=_get(cfg, "train.partition", "greedy_cut"),
            num_miniclusters=(
                int(cfg["train.num_miniclusters"]) if "train.num_miniclusters" in cfg else None
            ),
            degree_scope=_get(cfg, "train.degree_scope", "local"),
            eval_k=(int(cfg["train.eval_k"]) if "train.eval_k" in cfg else None),
            eval_every=int(_get(cfg, "train.eval_every", "1")),
            sync_period=int(_get(cfg, "train.sync_period", "1")),
        ).with_seed(seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def config_hash(cfg: dict[str, str]) -> str:
    canonical = "\n".join(f"{k}={cfg[k]}" for k in sorted(cfg))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set or [])
    outdir = _get(cfg, "run.outdir", required=True)
    seed = int(_get(cfg, "run.seed", "0"))
    variants = [v.strip() for v in _get(cfg, "run.variants", "splpg").split(",") if v.strip()]
    if not variants:
        raise ConfigError("run.variants is empty")
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"run.variants contains unknown variant {v!r}")
    alphas = _float_list(_get(cfg, "run.alphas", _get(cfg, "train.alpha", "0.15")))
    parts_grid = _int_list(_get(cfg, "run.parts", _get(cfg, "train.parts", "4")))
    if not alphas or not parts_grid:
        raise ConfigError("sweep grids must be non-empty")

    os.makedirs(outdir, exist_ok=True)
    g = build_dataset(cfg)
    split_seed = int(_get(cfg, "split.seed", str(seed)))
    split = split_edges(
        g,
        tuple(_float_list(_get(cfg, "split.ratios", "0.8,0.1,0.1"))),
        int(_get(cfg, "split.neg_multiplier", "3")),
        seed=split_seed,
    )
    base = build_train_config(cfg, seed)

    grid = [
        (alpha, parts, variant)
        for alpha in alphas
        for parts in parts_grid
        for variant in variants
    ]
    parallel = _bool(_get(cfg, "run.parallel", "false"))
    if parallel and len(grid) > 1:
        # each cell is self-contained; results are collected in grid order
        with ProcessPoolExecutor() as pool:
            cells = list(pool.map(_run_cell, [(g, split, base, c) for c in grid]))
    else:
        cells = [_run_cell((g, split, base, c)) for c in grid]

    metric_rows: list[dict] = []
    ledger_rows: list[dict] = []
    summary_rows: list[dict] = []
    for cell_metrics, cell_ledger, cell_summary in cells:
        metric_rows.extend(cell_metrics)
        ledger_rows.extend(cell_ledger)
        summary_rows.append(cell_summary)

    _write_csv(os.path.join(outdir, "metrics.csv"), metric_rows)
    _write_csv(os.path.join(outdir, "ledger.csv"), ledger_rows)
    _write_csv(os.path.join(outdir, "summary.csv"), summary_rows)
    with open(os.path.join(outdir, "summary.txt"), "w") as f:
        f.write(render_summary_table(summary_rows))
    with open(os.path.join(outdir, "manifest.txt"), "w") as f:
        f.write(f"config_hash={config_hash(cfg)}\n")
        f.write(f"seed={seed}\nsplit_seed={split_seed}\n")
        for key in sorted(cfg):
            f.write(f"{key}={cfg[key]}\n")
        tc = build_train_config(cfg, seed)
        for name in ("seed_partition", "seed_sparsify", "seed_sample", "seed_init"):
            f.write(f"resolved.{name}={getattr(tc, name)}\n")
    print(f"wrote artifacts to {outdir}")
    return 0


def _run_cell(job) -> tuple[list[dict], list[dict], dict]:
    g, split, base, (alpha, parts, variant) = job
    run_cfg = dataclasses.replace(base, alpha=alpha, num_parts=parts)
    result = run_baseline(g, split, variant, run_cfg)
    test_report = evaluate_model(
        result.best_params,
        split,
        g,
        run_cfg.fanouts,
        k=run_cfg.eval_k or default_k(len(split.test_neg)),
        seed=run_cfg.seed_sample + 9001,
        which="test",
        variant=variant,
    )
    k = test_report.ks[0]
    metric_rows = [{"alpha": alpha, "parts": parts, **row} for row in result.history]
    ledger_rows = [
        {"alpha": alpha, "parts": parts, "variant": variant, **row}
        for row in result.ledger.to_rows()
    ]
    epoch_bytes = [
        sum(result.ledger.epoch_totals(e)) for e in range(result.ledger.num_epochs)
    ]
    summary = {
        "variant": variant,
        "alpha": alpha,
        "parts": parts,
        "test_hits": test_report.hits[k],
        "k": k,
        "best_epoch": result.best_epoch,
        "mean_epoch_bytes": float(np.mean(epoch_bytes)),
    }
    return metric_rows, ledger_rows, summary


def _write_csv(path: str, rows: list[dict]) -> None:
    if not rows:
        with open(path, "w") as f:
            f.write("\n")
        return
    cols = list(rows[0].keys())
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(_fmt(row.get(c, "")) for c in cols) + "\n")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_summary_table(summary_rows: list[dict]) -> str:
    """Sparsified-vs-complete saving and accuracy, one row per (alpha, p)."""
    lines = ["variant        alpha   p   test_hits@k      mean_epoch_bytes"]
    for row in summary_rows:
        lines.append(
            f"{row['variant']:<14} {row['alpha']:<7g} {row['parts']:<3d} "
            f"{row['test_hits']:.4f}@{row['k']:<9d} {row['mean_epoch_bytes']:.0f}"
        )
    plus_bytes = {
        (r["alpha"], r["parts"]): r["mean_epoch_bytes"]
        for r in summary_rows
        if r["variant"] == "splpg_plus"
    }
    saving_lines = []
    for row in summary_rows:
        if row["variant"] != "splpg":
            continue
        ref = plus_bytes.get((row["alpha"], row["parts"]))
        if not ref:
            continue
        saving = 1.0 - row["mean_epoch_bytes"] / ref
        saving_lines.append(
            f"alpha={row['alpha']:<6g} p={row['parts']:<3d} saving={saving:6.1%} "
            f"accuracy={row['test_hits']:.4f}"
        )
    if saving_lines:
        lines.append("")
        lines.append("communication saving vs complete sharing:")
        lines.extend(saving_lines)
    return "\n".join(lines) + "\n"


def cmd_verify(args: argparse.Namespace) -> int:
    results = run_verification(trials=args.trials)
    failed = False
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        print(f"[{status}] {res.name}: {res.detail}")
        failed |= not res.passed
    return 2 if failed else 0


def cmd_partition(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set or [])
    g = build_dataset(cfg)
    tc = build_train_config(cfg, int(_get(cfg, "run.seed", "0")))
    plan = make_plan(g, tc)
    save_plan(plan, args.output)
    sizes = plan.part_sizes()
    print(f"{plan.strategy}: {plan.num_parts} parts, sizes {sizes.tolist()}")
    return 0


def cmd_sparsify(args: argparse.Namespace) -> int:
    cfg = load_config(args.config, args.set or [])
    g = build_dataset(cfg)
    tc = build_train_config(cfg, int(_get(cfg, "run.seed", "0")))
    plan = make_plan(g, tc)
    workers = build_worker_subgraphs(g, plan)
    os.makedirs(args.output_dir, exist_ok=True)
    for w in workers:
        sp = sparsify_subgraph(w, tc.alpha, seed=[tc.seed_sparsify, w.part_id], degree_scope=tc.degree_scope)
        save_sparsified(sp, os.path.join(args.output_dir, f"sparsed_part{w.part_id}.csv"))
        print(summary_line(sp))
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    path = os.path.join(args.outdir, "summary.csv")
    if not os.path.exists(path):
        print(f"no summary.csv under {args.outdir}", file=sys.stderr)
        return 1
    rows = []
    with open(path) as f:
        header = f.readline().strip().split(",")
        for line in f:
            vals = line.strip().split(",")
            row = dict(zip(header, vals))
            row["alpha"] = float(row["alpha"])
            row["parts"] = int(row["parts"])
            row["test_hits"] = float(row["test_hits"])
            row["k"] = int(row["k"])
            row["mean_epoch_bytes"] = float(row["mean_epoch_bytes"])
            rows.append(row)
    table = render_summary_table(rows)
    with open(os.path.join(args.outdir, "summary.txt"), "w") as f:
        f.write(table)
    print(table, end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="sparselink")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute the variants/sweeps in a config file")
    p_run.add_argument("config")
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_run.set_defaults(func=cmd_run)

    p_verify = sub.add_parser("verify", help="run the built-in oracle suite")
    p_verify.add_argument("--trials", type=int, default=800)
    p_verify.set_defaults(func=cmd_verify)

    p_part = sub.add_parser("partition", help="dump a partition plan CSV")
    p_part.add_argument("config")
    p_part.add_argument("output")
    p_part.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_part.set_defaults(func=cmd_partition)

    p_sp = sub.add_parser("sparsify", help="dump sparsified subgraphs and stats")
    p_sp.add_argument("config")
    p_sp.add_argument("output_dir")
    p_sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_sp.set_defaults(func=cmd_sparsify)

    p_rep = sub.add_parser("report", help="regenerate the summary table from CSVs")
    p_rep.add_argument("outdir")
    p_rep.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
