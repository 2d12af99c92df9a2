"""Command line entry point: ``madman {gen,train,eval,sweep,report,repro}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiments as ex
from .data import PRESETS, DataConfig, generate, read_shards, write_shards
from .errors import ConfigError, MadmanError
from .mnist import load_digits

REPRO_TARGETS = ("table1", "table2", "fig3", "fig4", "fig6", "appendix-tables", "all")


def _load_json(path: str | None) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _budget(args) -> dict:
    """Named budget preset, optionally overridden by --budget-json fields."""
    budget = dict(ex.BUDGETS[args.budget])
    budget.update(_load_json(getattr(args, "budget_json", None)))
    return budget


def _data_config(args) -> DataConfig:
    cfg = _load_json(args.config)
    base = PRESETS[args.preset] if args.preset else DataConfig()
    merged = {**base.to_dict(), **cfg}
    if args.seed is not None:
        merged["seed"] = args.seed
    if args.n is not None:
        merged["n_samples"] = args.n
    return DataConfig.from_dict(merged)


# --------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    cfg = _data_config(args)
    digits = load_digits()
    records = generate(cfg, jobs=args.jobs, digits=digits)
    out = write_shards(cfg, records, args.out, digits_fingerprint=digits.fingerprint)
    print(f"wrote {len(records)} records to {out}")
    return 0


def cmd_train(args) -> int:
    from .data import ArrayDataset, read_manifest
    from .model import ModelConfig
    from .train import TrainConfig, save_checkpoint, train, write_log

    cfg = _load_json(args.config)
    model_cfg = ModelConfig.from_dict(cfg.get("model", {}))
    train_cfg = TrainConfig.from_dict(cfg.get("train", {}))
    if args.seed is not None:
        train_cfg = train_cfg.replace(seed=args.seed)
    manifest = read_manifest(args.data)
    records = list(read_shards(args.data))
    data_cfg = DataConfig.from_dict({k: v for k, v in manifest["config"].items() if k != "kind"})
    result = train(model_cfg, train_cfg, ArrayDataset.from_records(records),
                   source_split=data_cfg.source_split, progress=not args.quiet)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_log(out / "train_log.csv", result.log)
    h = save_checkpoint(out / "checkpoint.pt", result, extra={"dataset_hash": manifest["config_hash"]})
    print(f"checkpoint {out / 'checkpoint.pt'} sha256:{h} final loss {result.final_loss:.4f}")
    return 0


def cmd_eval(args) -> int:
    from .evaluate import evaluate
    from .model import ScoringModel
    from .train import load_checkpoint

    model, _ = load_checkpoint(args.checkpoint)
    ws = ex.Workspace(args.cache)
    targets = args.targets.split(",") if args.targets else list(ex.EVAL_TARGETS)
    sets = {t: ws.load_evalset(t, args.n, args.seed or 0, args.split) for t in targets}
    report = evaluate(ScoringModel(model), sets)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.json").write_text(report.to_json())
    (out / "eval.csv").write_text(report.to_csv_row())
    print(report.to_csv_row(), end="")
    return 0


def _spec_kwargs(args) -> dict:
    kw = {"output_dir": args.out}
    if args.seeds:
        kw["seeds"] = args.seeds
    elif args.seed is not None:
        kw["seeds"] = (args.seed,)
    if args.eval_n:
        kw["eval_n"] = args.eval_n
    return kw


def cmd_sweep(args) -> int:
    cfg = _load_json(args.config)
    base = PRESETS[args.preset] if args.preset else ex.BASE
    base = DataConfig.from_dict({**base.to_dict(), **cfg.get("data", {})})
    spec = ex.sweep_spec(args.property, args.values, base=base, budget=_budget(args),
                         ood=args.ood, **_spec_kwargs(args))
    table = ex.run_experiment(spec, ex.Workspace(args.cache, jobs=args.jobs), jobs=args.jobs)
    for p in ex.emit_report([table], args.out):
        print(p)
    return 0


def cmd_report(args) -> int:
    tables = []
    for path in args.results:
        p = Path(path)
        files = sorted(p.glob("results/*.json")) + sorted(p.glob("*.json")) if p.is_dir() else [p]
        for f in files:
            try:
                tables.append(ex.ResultsTable.from_json(f.read_text()))
            except (KeyError, json.JSONDecodeError):
                continue
    if not tables:
        raise ConfigError("no results tables found")
    for p in ex.emit_report(tables, args.out):
        print(p)
    return 0


def cmd_repro(args) -> int:
    specs = ex.repro_specs(args.target, scale=args.scale, budget=_budget(args), **_spec_kwargs(args))
    ws = ex.Workspace(args.cache, jobs=args.jobs)
    tables = [ex.run_experiment(s, ws, jobs=args.jobs) for s in specs]
    for p in ex.emit_report(tables, args.out):
        print(p)
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="madman", description="Synthetic binding benchmark for tiny CLIP models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="{gen,train,eval,sweep,report,repro}")

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required)
        sp.add_argument("--jobs", type=int, default=1)
        sp.add_argument("--cache", help="cache directory (default $MADMAN_CACHE)")

    g = sub.add_parser("gen", help="generate a sharded dataset")
    common(g)
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.add_argument("--n", type=int, help="number of samples")
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train a model on a generated dataset")
    common(t)
    t.add_argument("--data", required=True, help="dataset directory written by gen")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="recognition and binding of a checkpoint")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--targets", help="comma-separated targets (default: all)")
    e.add_argument("--n", type=int, default=ex.DEFAULT_EVAL_N)
    e.add_argument("--split", choices=("test", "ood-test"), default="test")
    e.set_defaults(func=cmd_eval)

    def experiment_flags(sp):
        sp.add_argument("--seeds", type=_ints, help="comma-separated training seeds")
        sp.add_argument("--eval-n", type=int)
        sp.add_argument("--budget", choices=sorted(ex.BUDGETS), default="full")
        sp.add_argument("--budget-json", help="JSON file overriding budget fields")

    s = sub.add_parser("sweep", help="sweep one data property")
    common(s)
    experiment_flags(s)
    s.add_argument("--property", required=True, choices=sorted(ex.PROPERTY_ALIASES))
    s.add_argument("--values", type=_floats)
    s.add_argument("--preset", choices=sorted(PRESETS), help="base data preset (default: base setup)")
    s.add_argument("--ood", action="store_true", help="also evaluate on the OOD split")
    s.set_defaults(func=cmd_sweep)

    r = sub.add_parser("report", help="re-emit tables and plots from results JSON")
    r.add_argument("results", nargs="+")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_report)

    rp = sub.add_parser("repro", help="reproduce a table or figure")
    common(rp)
    experiment_flags(rp)
    rp.add_argument("target", choices=REPRO_TARGETS)
    rp.add_argument("--scale", choices=("small", "all"), default="all")
    rp.set_defaults(func=cmd_repro)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        if e.code:
            parser.print_help(sys.stderr)
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (MadmanError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
