"""Subcommand CLI wiring the pipeline end to end.

    siamtab prepare --data framingham.csv --out runs/a --seed 7
    siamtab pairs --out runs/a
    siamtab train siamese --out runs/a
    siamtab eval siamese --out runs/a
    siamtab export siamese --out runs/a

Every value resolves as: built-in default < config file (--config, flat
key=value lines keyed by flag name) < command-line flag. Each run prints its
effective config; all randomness derives from the one root seed, which is
echoed into every report. Rerunning a command with identical inputs and seed
rewrites byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as dt
from . import pairs as pr
from .nn import load_checkpoint, save_checkpoint
from .siamese import ReferenceBank, SiameseModel, build_reference_bank
from .train import (
    base_config,
    base_network_spec,
    evaluate_classifier,
    evaluate_pairs,
    export_history,
    load_history,
    siamese_config,
    train_base,
    train_siamese,
)

TEST_FRACTION = 0.2  # sample-level held-out fraction written by `prepare`
PAIR_TRAIN_FRACTION = 0.8  # pair-level train share written by `pairs`

# Stage tags mixed into the root seed so every pipeline step gets its own
# reproducible stream.
_STAGE_SYNTH = 0
_STAGE_SPLIT = 1
_STAGE_PAIRS = 2
_STAGE_PAIR_SPLIT = 3
_STAGE_TRAIN_BASE = 4
_STAGE_TRAIN_SIAMESE = 5
_STAGE_BANK = 6


def stage_seed(root: int, stage: int) -> int:
    return int(np.random.SeedSequence([root, stage]).generate_state(1)[0])


_DEFAULTS = {
    "data": None,
    "out": "runs/default",
    "seed": 0,
    "epochs": None,  # None -> per-model default
    "batch-size": None,
    "lr": None,
    "margin": 1.0,
    "threshold": 0.5,
    "k-refs": 10,
    "pairs-diff": 100000,
    "pairs-same0": 50000,
    "pairs-same1": 50000,
    "synthetic": None,
}

_CASTS = {
    "seed": int,
    "epochs": int,
    "batch-size": int,
    "lr": float,
    "margin": float,
    "threshold": float,
    "k-refs": int,
    "pairs-diff": int,
    "pairs-same0": int,
    "pairs-same1": int,
}


@dataclass
class RunConfig:
    data: Path | None
    out: Path
    seed: int
    epochs: int | None
    batch_size: int | None
    lr: float | None
    margin: float
    threshold: float
    k_refs: int
    pairs_diff: int
    pairs_same0: int
    pairs_same1: int
    synthetic: tuple[int, int, float] | None
    explicit: frozenset[str] = frozenset()  # keys set by config file or flags

    def echo(self):
        items = {
            "data": self.data,
            "out": self.out,
            "seed": self.seed,
            "epochs": self.epochs,
            "batch-size": self.batch_size,
            "lr": self.lr,
            "margin": self.margin,
            "threshold": self.threshold,
            "k-refs": self.k_refs,
            "pairs-diff": self.pairs_diff,
            "pairs-same0": self.pairs_same0,
            "pairs-same1": self.pairs_same1,
            "synthetic": (
                ",".join(str(v) for v in self.synthetic) if self.synthetic else None
            ),
        }
        print("effective config:")
        for key, value in items.items():
            print(f"  {key}={'default' if value is None else value}")


def read_config_file(path: Path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected key=value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _DEFAULTS:
            raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
        values[key] = value.strip()
    return values


def _parse_synthetic(text: str) -> tuple[int, int, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise ValueError("--synthetic expects n,d,imbalance")
    return int(parts[0]), int(parts[1]), float(parts[2])


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = dict(_DEFAULTS)
    explicit = set()
    if args.config is not None:
        for key, raw in read_config_file(Path(args.config)).items():
            values[key] = _CASTS.get(key, str)(raw)
            explicit.add(key)
    for key in _DEFAULTS:
        cli_value = getattr(args, key.replace("-", "_"))
        if cli_value is not None:
            values[key] = cli_value
            explicit.add(key)
    synthetic = values["synthetic"]
    if isinstance(synthetic, str):
        synthetic = _parse_synthetic(synthetic)
    return RunConfig(
        data=Path(values["data"]) if values["data"] else None,
        out=Path(values["out"]),
        seed=values["seed"],
        epochs=values["epochs"],
        batch_size=values["batch-size"],
        lr=values["lr"],
        margin=values["margin"],
        threshold=values["threshold"],
        k_refs=values["k-refs"],
        pairs_diff=values["pairs-diff"],
        pairs_same0=values["pairs-same0"],
        pairs_same1=values["pairs-same1"],
        synthetic=synthetic,
        explicit=frozenset(explicit),
    )


def _artifact(cfg: RunConfig, name: str) -> Path:
    return cfg.out / name


def _require(cfg: RunConfig, name: str) -> Path:
    path = _artifact(cfg, name)
    if not path.exists():
        raise ValueError(f"missing artifact {path}; run the earlier stages first")
    return path


def _load_prepared(cfg: RunConfig) -> dt.FeatureTable:
    schema = dt.load_schema_csv(_require(cfg, "schema.csv"))
    label = [c for c in schema if c.is_label][0]
    ordered = [c for c in schema if not c.is_label] + [label]
    return dt.load_table_csv(_require(cfg, "normalized.csv"), ordered)


def _load_split_indices(cfg: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    train_idx, test_idx = [], []
    for line in _require(cfg, "splits.csv").read_text().splitlines()[1:]:
        idx, part = line.split(",")
        (train_idx if part == "train" else test_idx).append(int(idx))
    return np.array(train_idx, dtype=np.int64), np.array(test_idx, dtype=np.int64)


def cmd_prepare(cfg: RunConfig) -> int:
    if cfg.synthetic is None and cfg.data is None:
        raise ValueError("prepare needs --data or --synthetic")
    cfg.out.mkdir(parents=True, exist_ok=True)

    if cfg.synthetic is not None:
        n, d, imbalance = cfg.synthetic
        ft = dt.synth_generate(n, d, imbalance, stage_seed(cfg.seed, _STAGE_SYNTH))
        schema = dt.synthetic_schema(d)
        missing = {c.name: 0 for c in schema}
        source = f"synthetic n={n},d={d},imbalance={imbalance}"
    else:
        schema = dt.framingham_schema()
        raw = dt.load_csv(cfg.data, schema)
        missing = raw.missing_counts()
        ft = dt.to_features(dt.impute(raw))
        source = str(cfg.data)

    stats = dt.fit_norm(ft)
    normed = dt.apply_norm(ft, stats)
    train_idx, test_idx = dt.stratified_split_indices(
        normed.labels, TEST_FRACTION, stage_seed(cfg.seed, _STAGE_SPLIT)
    )

    label_name = [c.name for c in schema if c.is_label][0]
    dt.save_schema_csv(schema, _artifact(cfg, "schema.csv"))
    dt.save_table_csv(normed, _artifact(cfg, "normalized.csv"), label_name=label_name)
    dt.save_norm_stats_csv(stats, normed.schema, _artifact(cfg, "norm_stats.csv"))
    parts = np.empty(normed.n, dtype=object)
    parts[train_idx] = "train"
    parts[test_idx] = "test"
    with open(_artifact(cfg, "splits.csv"), "w", newline="\n") as fh:
        fh.write("index,part\n")
        for i in range(normed.n):
            fh.write(f"{i},{parts[i]}\n")

    lines = [
        "data report",
        f"source: {source}",
        f"seed: {cfg.seed}",
        f"rows: {normed.n}",
        f"columns: {len(schema)}",
        f"class 0: {int((normed.labels == 0).sum())}",
        f"class 1: {int((normed.labels == 1).sum())}",
        "missing values per column:",
    ]
    lines += [f"  {name}: {count}" for name, count in missing.items()]
    lines += [f"train rows: {train_idx.size}", f"test rows: {test_idx.size}"]
    report = "\n".join(lines) + "\n"
    _artifact(cfg, "report.txt").write_text(report)
    print(report, end="")
    return 0


def cmd_pairs(cfg: RunConfig) -> int:
    ft = _load_prepared(cfg)
    ps = pr.generate_pairs(
        ft,
        cfg.pairs_diff,
        cfg.pairs_same0,
        cfg.pairs_same1,
        stage_seed(cfg.seed, _STAGE_PAIRS),
    )
    train_ps, test_ps = pr.split_pairs(
        ps, PAIR_TRAIN_FRACTION, stage_seed(cfg.seed, _STAGE_PAIR_SPLIT)
    )
    pr.save_pairs_csv(train_ps, _artifact(cfg, "pairs_train.csv"))
    pr.save_pairs_csv(test_ps, _artifact(cfg, "pairs_test.csv"))
    print(
        f"pairs: {len(ps)} total "
        f"(diff={ps.counts[0]}, same0={ps.counts[1]}, same1={ps.counts[2]}) "
        f"-> train={len(train_ps)}, test={len(test_ps)}"
    )
    return 0


def cmd_train(cfg: RunConfig, which: str) -> int:
    ft = _load_prepared(cfg)
    train_idx, _ = _load_split_indices(cfg)
    train_ft = dt.take_rows(ft, train_idx)
    overrides = {}
    if cfg.epochs is not None:
        overrides["epochs"] = cfg.epochs
    if cfg.batch_size is not None:
        overrides["batch_size"] = cfg.batch_size
    if cfg.lr is not None:
        overrides["learning_rate"] = cfg.lr

    if which == "base":
        tc = base_config(seed=stage_seed(cfg.seed, _STAGE_TRAIN_BASE), **overrides)
        params, history = train_base(tc, train_ft, progress=print)
        save_checkpoint(
            _artifact(cfg, "base_model.npz"),
            base_network_spec(train_ft.d),
            params,
            extra={"kind": "base", "seed": cfg.seed},
        )
        export_history(history, _artifact(cfg, "base_history.csv"))
    else:
        pairs_train = pr.load_pairs_csv(_require(cfg, "pairs_train.csv"), ft)
        tc = siamese_config(
            seed=stage_seed(cfg.seed, _STAGE_TRAIN_SIAMESE),
            margin=cfg.margin,
            **overrides,
        )
        model, history = train_siamese(
            tc, pairs_train, pair_threshold=cfg.threshold, progress=print
        )
        bank = build_reference_bank(train_ft, cfg.k_refs, stage_seed(cfg.seed, _STAGE_BANK))
        save_checkpoint(
            _artifact(cfg, "siamese_model.npz"),
            model.spec,
            model.params,
            extra={
                "kind": "siamese",
                "seed": cfg.seed,
                "margin": model.margin,
                "pair_threshold": model.pair_threshold,
            },
            arrays={"refs0": bank.refs0, "refs1": bank.refs1},
        )
        export_history(history, _artifact(cfg, "siamese_history.csv"))
    return 0


def _write_report(path: Path, lines: list[str], kv_path: Path, kv: dict[str, str]):
    text = "\n".join(lines) + "\n"
    path.write_text(text)
    with open(kv_path, "w", newline="\n") as fh:
        for key, value in kv.items():
            fh.write(f"{key}={value}\n")
    print(text, end="")


def cmd_eval(cfg: RunConfig, which: str) -> int:
    ft = _load_prepared(cfg)
    _, test_idx = _load_split_indices(cfg)
    test_ft = dt.take_rows(ft, test_idx)

    if which == "base":
        spec, params, extra, _ = load_checkpoint(_require(cfg, "base_model.npz"))
        report = evaluate_classifier((spec, params), test_ft)
        lines = [
            "evaluation: base network (held-out samples)",
            f"seed: {extra['seed']}",
            f"samples: {test_ft.n}",
        ] + report.lines()
        kv = {"report": "base", "seed": str(extra["seed"]), "samples": str(test_ft.n)}
        kv.update(report.kv())
        _write_report(
            _artifact(cfg, "eval_base.txt"), lines, _artifact(cfg, "eval_base.kv"), kv
        )
    else:
        spec, params, extra, arrays = load_checkpoint(_require(cfg, "siamese_model.npz"))
        model = SiameseModel(
            spec,
            params,
            margin=extra["margin"],
            pair_threshold=(
                cfg.threshold if "threshold" in cfg.explicit else extra["pair_threshold"]
            ),
        )
        bank = ReferenceBank(arrays["refs0"], arrays["refs1"], arrays["refs0"].shape[0])
        pairs_test = pr.load_pairs_csv(_require(cfg, "pairs_test.csv"), ft)
        pair_report = evaluate_pairs(model, pairs_test)
        sample_report = evaluate_classifier(model, test_ft, bank)
        lines = (
            [
                "evaluation: siamese network",
                f"seed: {extra['seed']}",
                f"pair threshold: {model.pair_threshold}",
                "",
                f"pair-level (held-out pairs, n={len(pairs_test)}, similar = positive):",
            ]
            + pair_report.lines()
            + ["", f"sample-level (held-out samples via reference bank, n={test_ft.n}):"]
            + sample_report.lines()
        )
        kv = {
            "report": "siamese",
            "seed": str(extra["seed"]),
            "pair_threshold": repr(model.pair_threshold),
            "pairs": str(len(pairs_test)),
            "samples": str(test_ft.n),
        }
        kv.update({f"pair_{k}": v for k, v in pair_report.kv().items()})
        kv.update({f"sample_{k}": v for k, v in sample_report.kv().items()})
        _write_report(
            _artifact(cfg, "eval_siamese.txt"),
            lines,
            _artifact(cfg, "eval_siamese.kv"),
            kv,
        )
    return 0


def cmd_export(cfg: RunConfig, which: str) -> int:
    history = load_history(_require(cfg, f"{which}_history.csv"))
    acc_path = _artifact(cfg, f"accuracy_{which}.csv")
    loss_path = _artifact(cfg, f"loss_{which}.csv")
    with open(acc_path, "w", newline="\n") as fh:
        fh.write("epoch,train_acc,val_acc\n")
        for i in range(len(history)):
            fh.write(f"{i + 1},{history.train_acc[i]!r},{history.val_acc[i]!r}\n")
    with open(loss_path, "w", newline="\n") as fh:
        fh.write("epoch,train_loss,val_loss\n")
        for i in range(len(history)):
            fh.write(f"{i + 1},{history.train_loss[i]!r},{history.val_loss[i]!r}\n")
    print(f"wrote {acc_path} and {loss_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", help="flat key=value config file")
    shared.add_argument("--data", help="input CSV path")
    shared.add_argument("--out", help="run output directory")
    shared.add_argument("--seed", type=int, help="root seed for the whole run")
    shared.add_argument("--epochs", type=int)
    shared.add_argument("--batch-size", type=int)
    shared.add_argument("--lr", type=float)
    shared.add_argument("--margin", type=float)
    shared.add_argument("--threshold", type=float, help="pair-similarity distance threshold")
    shared.add_argument("--k-refs", type=int, help="reference samples per class")
    shared.add_argument("--pairs-diff", type=int)
    shared.add_argument("--pairs-same0", type=int)
    shared.add_argument("--pairs-same1", type=int)
    shared.add_argument("--synthetic", help="n,d,imbalance synthetic dataset spec")

    parser = argparse.ArgumentParser(prog="siamtab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("prepare", parents=[shared])
    sub.add_parser("pairs", parents=[shared])
    p_train = sub.add_parser("train", parents=[shared])
    p_train.add_argument("which", choices=["base", "siamese"])
    p_eval = sub.add_parser("eval", parents=[shared])
    p_eval.add_argument("which", choices=["base", "siamese"])
    p_export = sub.add_parser("export", parents=[shared])
    p_export.add_argument("which", choices=["base", "siamese"])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        cfg.echo()
        if args.command == "prepare":
            return cmd_prepare(cfg)
        if args.command == "pairs":
            return cmd_pairs(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.which)
        if args.command == "eval":
            return cmd_eval(cfg, args.which)
        return cmd_export(cfg, args.which)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
