"""Command-line entry points for the whole pipeline.

Configuration is a flat key=value text file plus command-line overrides
(override wins). Every randomized command takes --seed and reproduces
byte-identical outputs under the same config and seed. The effective
merged config is written next to the outputs as run.cfg and can re-drive
an identical run via --config.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Optional

from . import evaluation, graph as graphmod, inductive, synth, training
from .errors import ConfigError, DataError, NumericError

# key -> (type, default); types: int, float, str, range ("lo:hi"), ints ("a,b,c")
CONFIG_KEYS: dict[str, tuple[str, object]] = {
    "data_csv": ("str", ""),
    "graph": ("str", ""),
    "ckpt": ("str", ""),
    "out": ("str", "out"),
    "seed": ("int", 0),
    "min_items_per_basket": ("int", 30),
    "min_baskets_per_user": ("int", 5),
    "mode": ("str", "transductive"),
    "holdout_frac": ("float", 0.2),
    "seed_count": ("int", 5),
    "dim": ("int", 64),
    "intents": ("int", 3),
    "layers": ("int", 3),
    "lr": ("float", 5e-4),
    "lambda": ("float", 1e-4),
    "dropout": ("float", 0.1),
    "leaky_slope": ("float", 0.2),
    "epochs": ("int", 100),
    "triples_per_epoch": ("int", 0),
    "negatives": ("int", 1),
    "val_frac": ("float", 0.05),
    "val_holdout": ("float", 0.2),
    "eval_every": ("int", 5),
    "checkpoint_every": ("int", 20),
    "k_set": ("ints", "10,20,30,40,60,80,100"),
    "dump_cases": ("int", 0),
    "synth_users": ("int", 50),
    "synth_items": ("int", 300),
    "synth_intents": ("int", 3),
    "items_per_intent": ("int", 100),
    "baskets_per_user": ("int", 8),
    "intents_per_basket": ("range", "2:2"),
    "items_per_basket": ("range", "12:20"),
    "noise_rate": ("float", 0.05),
    "user": ("str", ""),
    "items": ("str", ""),
    "top": ("int", 20),
    "t_list": ("ints", "1,2,3,4,5"),
    "l_list": ("ints", "1,2,3,4"),
    "gc_users": ("int", 3),
    "gc_baskets": ("int", 4),
    "gc_items": ("int", 8),
    "gc_dim": ("int", 4),
    "gc_intents": ("int", 2),
    "gc_layers": ("int", 2),
    "gc_step": ("float", 1e-5),
    "tolerance": ("float", 1e-4),
}

_COMMAND_KEYS = {
    "ingest": ["data_csv", "out", "min_items_per_basket", "min_baskets_per_user"],
    "synth": ["out", "seed", "synth_users", "synth_items", "synth_intents",
              "items_per_intent", "baskets_per_user", "intents_per_basket",
              "items_per_basket", "noise_rate"],
    "split": ["graph", "out", "seed", "mode", "holdout_frac", "seed_count"],
    "train": ["graph", "out", "seed", "mode", "holdout_frac", "seed_count",
              "dim", "intents", "layers", "lr", "lambda", "dropout",
              "leaky_slope", "epochs", "triples_per_epoch", "negatives",
              "val_frac", "val_holdout", "eval_every", "checkpoint_every"],
    "eval": ["graph", "ckpt", "out", "seed", "mode", "holdout_frac",
             "seed_count", "k_set", "dump_cases"],
    "infer": ["graph", "ckpt", "out", "user", "items", "top"],
    "gradcheck": ["out", "seed", "gc_users", "gc_baskets", "gc_items",
                  "gc_dim", "gc_intents", "gc_layers", "gc_step", "tolerance"],
    "grid": ["graph", "out", "seed", "mode", "holdout_frac", "seed_count",
             "t_list", "l_list", "dim", "lr", "lambda", "dropout",
             "leaky_slope", "epochs", "triples_per_epoch", "negatives",
             "val_frac"],
}


def _coerce(key: str, raw: str):
    kind, _ = CONFIG_KEYS[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "range":
            lo, hi = raw.split(":")
            return (int(lo), int(hi))
        if kind == "ints":
            return tuple(int(x) for x in raw.split(",") if x != "")
        return raw
    except (ValueError, TypeError):
        raise ConfigError(f"bad value {raw!r} for key {key!r} ({kind})") from None


def _format_value(key: str, value) -> str:
    kind, _ = CONFIG_KEYS[key]
    if kind == "range":
        return f"{value[0]}:{value[1]}"
    if kind == "ints":
        return ",".join(str(x) for x in value)
    if kind == "float":
        return repr(float(value))
    return str(value)


def read_config_file(path) -> dict[str, str]:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    raw: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            raw[key] = value.strip()
    return raw


def build_config(args: argparse.Namespace) -> dict[str, object]:
    cfg = {key: (_coerce(key, default) if isinstance(default, str) and kind != "str"
                 else default)
           for key, (kind, default) in CONFIG_KEYS.items()}
    if args.config:
        for key, raw in read_config_file(args.config).items():
            cfg[key] = _coerce(key, raw)
    for key in CONFIG_KEYS:
        flag = key.replace("-", "_")
        if hasattr(args, flag) and getattr(args, flag) is not None:
            cfg[key] = _coerce(key, str(getattr(args, flag)))
    return cfg


def write_effective_config(cfg: dict[str, object], out_dir: str) -> None:
    path = os.path.join(out_dir, "run.cfg")
    lines = [f"{key}={_format_value(key, cfg[key])}" for key in sorted(cfg)]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _require(cfg, key, hint):
    if not cfg[key]:
        raise ConfigError(f"{key} is required ({hint})")
    return cfg[key]


def _out_dir(cfg) -> str:
    out = str(cfg["out"])
    os.makedirs(out, exist_ok=True)
    return out


def _load_graph(cfg) -> graphmod.BasketGraph:
    path = _require(cfg, "graph", "pass --graph graph.cache")
    if not os.path.exists(path):
        raise DataError(f"graph cache not found: {path}")
    return graphmod.load_graph(path)


def _make_split(cfg, g: graphmod.BasketGraph) -> graphmod.DataSplit:
    mode = str(cfg["mode"])
    if mode == graphmod.TRANSDUCTIVE:
        return graphmod.split_transductive(g, float(cfg["holdout_frac"]),
                                           int(cfg["seed"]))
    if mode == graphmod.INDUCTIVE:
        return graphmod.split_inductive(g, int(cfg["seed_count"]),
                                        int(cfg["seed"]))
    raise ConfigError(f"mode must be transductive or inductive, got {mode!r}")


def _train_config(cfg) -> training.TrainConfig:
    return training.TrainConfig(
        dim=int(cfg["dim"]), num_intents=int(cfg["intents"]),
        num_layers=int(cfg["layers"]), learning_rate=float(cfg["lr"]),
        reg_lambda=float(cfg["lambda"]), dropout=float(cfg["dropout"]),
        leaky_slope=float(cfg["leaky_slope"]), epochs=int(cfg["epochs"]),
        triples_per_epoch=int(cfg["triples_per_epoch"]) or None,
        negatives_per_positive=int(cfg["negatives"]), seed=int(cfg["seed"]),
        val_frac=float(cfg["val_frac"]), val_holdout=float(cfg["val_holdout"]),
        eval_every=int(cfg["eval_every"]),
        checkpoint_every=int(cfg["checkpoint_every"]))


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg) -> None:
    out = _out_dir(cfg)
    path = _require(cfg, "data_csv", "pass --data-csv interactions.csv")
    records, maps = graphmod.load_interactions(path)
    records, maps = graphmod.filter_records(
        records, maps,
        min_items_per_basket=int(cfg["min_items_per_basket"]),
        min_baskets_per_user=int(cfg["min_baskets_per_user"]))
    g = graphmod.build_graph(records, id_maps=maps)
    g.validate()
    graphmod.save_graph(g, os.path.join(out, "graph.cache"))
    write_effective_config(cfg, out)
    print(f"edges={g.num_edges} baskets={g.num_baskets} users={g.num_users} "
          f"items={g.num_items} density={g.density():.6%}")


def cmd_synth(cfg) -> None:
    out = _out_dir(cfg)
    spec = synth.SynthSpec(
        num_users=int(cfg["synth_users"]), num_items=int(cfg["synth_items"]),
        num_intents=int(cfg["synth_intents"]),
        items_per_intent=int(cfg["items_per_intent"]),
        baskets_per_user=int(cfg["baskets_per_user"]),
        intents_per_basket=tuple(cfg["intents_per_basket"]),
        items_per_basket=tuple(cfg["items_per_basket"]),
        noise_rate=float(cfg["noise_rate"]), seed=int(cfg["seed"]))
    records, labels = synth.generate(spec)
    synth.write_dataset(records, labels,
                        os.path.join(out, "data.csv"),
                        os.path.join(out, "labels.csv"))
    write_effective_config(cfg, out)
    baskets = len(labels.basket_intents)
    print(f"records={len(records)} baskets={baskets} users={spec.num_users} "
          f"items={spec.num_items}")


def cmd_split(cfg) -> None:
    out = _out_dir(cfg)
    g = _load_graph(cfg)
    split = _make_split(cfg, g)
    graphmod.write_split(split, os.path.join(out, "split.tsv"))
    write_effective_config(cfg, out)
    print(f"mode={split.mode} test_cases={len(split.test_cases)} "
          f"train_edges={split.train_graph.num_edges}")


def cmd_train(cfg) -> None:
    out = _out_dir(cfg)
    g = _load_graph(cfg)
    split = _make_split(cfg, g)
    tc = _train_config(cfg)
    result = training.train(tc, split, checkpoint_dir=out)

    val_at = dict(result.val_curve)
    with open(os.path.join(out, "losses.csv"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write("epoch,loss,val_recall100\n")
        for epoch, loss in enumerate(result.epoch_losses, start=1):
            val = f"{val_at[epoch]:.12g}" if epoch in val_at else ""
            fh.write(f"{epoch},{loss:.12g},{val}\n")
    write_effective_config(cfg, out)
    best = f" best_epoch={result.best_epoch}" if result.best_epoch else ""
    print(f"epochs={len(result.epoch_losses)} "
          f"final_loss={result.epoch_losses[-1]:.6g}{best} "
          f"checkpoint={os.path.join(out, 'model.ckpt')}")


def cmd_eval(cfg) -> None:
    out = _out_dir(cfg)
    g = _load_graph(cfg)
    split = _make_split(cfg, g)
    params = training.load_checkpoint(_require(cfg, "ckpt", "pass --ckpt model.ckpt"))
    tg = split.train_graph
    if (params.num_users, params.num_baskets, params.num_items) != \
            (tg.num_users, tg.num_baskets, tg.num_items):
        raise DataError("checkpoint was trained on a different graph/split "
                        f"(expects {params.num_users}/{params.num_baskets}/"
                        f"{params.num_items} users/baskets/items)")
    if split.mode == graphmod.INDUCTIVE:
        score = inductive.InductiveScorer(params, tg).scorer()
    else:
        score = training.transductive_scorer(params, tg)
    dump = os.path.join(out, "cases.tsv") if int(cfg["dump_cases"]) else None
    report = evaluation.evaluate(split, score, tuple(cfg["k_set"]), dump_path=dump)
    report.write_csv(os.path.join(out, "metrics.csv"))
    write_effective_config(cfg, out)
    for line in report.csv_rows()[1:]:
        print(line)


def cmd_infer(cfg) -> None:
    out = _out_dir(cfg)
    g = _load_graph(cfg)
    params = training.load_checkpoint(_require(cfg, "ckpt", "pass --ckpt model.ckpt"))
    if (params.num_users, params.num_baskets, params.num_items) != \
            (g.num_users, g.num_baskets, g.num_items):
        raise DataError("checkpoint does not match this graph; pass the graph "
                        "the model was trained on")
    user_ext = _require(cfg, "user", "pass --user USER_ID")
    if user_ext not in g.id_maps.user_index:
        raise DataError(f"unknown user {user_ext!r}")
    user = g.id_maps.user_index[user_ext]
    seeds = []
    if cfg["items"]:
        for ext in str(cfg["items"]).split(","):
            if ext not in g.id_maps.item_index:
                raise DataError(f"unknown item {ext!r}")
            seeds.append(g.id_maps.item_index[ext])

    scorer = inductive.InductiveScorer(params, g)
    scores = scorer.score_cold(user, seeds)
    ranked = evaluation.rank_candidates(
        graphmod.EntityId(graphmod.BASKET, 0), scores, seeds)
    top = int(cfg["top"])
    with open(os.path.join(out, "ranked.tsv"), "w", encoding="utf-8",
              newline="") as fh:
        for rank, (item, score) in enumerate(
                zip(ranked.items[:top], ranked.scores[:top]), start=1):
            line = f"{rank}\t{g.id_maps.items[int(item)]}\t{score:.12g}"
            fh.write(line + "\n")
            print(line)
    write_effective_config(cfg, out)


def cmd_gradcheck(cfg) -> None:
    out = _out_dir(cfg)
    report = training.run_gradient_check(
        step=float(cfg["gc_step"]),
        num_users=int(cfg["gc_users"]), num_baskets=int(cfg["gc_baskets"]),
        num_items=int(cfg["gc_items"]), dim=int(cfg["gc_dim"]),
        num_intents=int(cfg["gc_intents"]), num_layers=int(cfg["gc_layers"]),
        seed=int(cfg["seed"]) + 11)
    worst = max(report.values())
    for name in sorted(report):
        print(f"{name}: {report[name]:.3e}")
    write_effective_config(cfg, out)
    tol = float(cfg["tolerance"])
    if worst < tol:
        print(f"PASS max_rel_err={worst:.3e} < {tol:g}")
    else:
        raise NumericError(f"gradient check FAILED: max_rel_err={worst:.3e} "
                           f">= {tol:g}")


def cmd_grid(cfg) -> None:
    out = _out_dir(cfg)
    g = _load_graph(cfg)
    split = _make_split(cfg, g)
    rows = ["T,L,recall@100"]
    for t in cfg["t_list"]:
        for l in cfg["l_list"]:
            tc = _train_config(cfg)
            tc.num_intents = int(t)
            tc.num_layers = int(l)
            result = training.train(tc, split)
            if split.mode == graphmod.INDUCTIVE:
                score = inductive.InductiveScorer(result.params,
                                                  split.train_graph).scorer()
            else:
                score = training.transductive_scorer(result.params,
                                                     split.train_graph)
            report = evaluation.evaluate(split, score, (100,))
            rows.append(f"{t},{l},{report.recall[100]:.12g}")
            print(rows[-1])
    with open(os.path.join(out, "grid.csv"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write("\n".join(rows) + "\n")
    write_effective_config(cfg, out)


_COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "split": cmd_split,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "gradcheck": cmd_gradcheck,
    "grid": cmd_grid,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mitgnn",
        description="Multi-intent translation GNN basket recommender")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value config file")
        for key in _COMMAND_KEYS[name]:
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        _COMMANDS[args.command](cfg)
        return 0
    except (ConfigError, ValueError) as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error[data]: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"error[numeric]: {exc}", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
