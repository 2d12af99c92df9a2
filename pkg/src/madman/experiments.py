"""Experiment orchestration: cached datasets, runs, evaluation and reports.

Everything is content-addressed under the cache directory (``MADMAN_CACHE``,
default ``~/.cache/madman``)::

    datasets/<data hash>/        shards + manifest
    evalsets/<eval hash>/        shards + manifest
    runs/<run hash>/             checkpoint.pt, train_log.csv, eval-<hash>.json

so re-running a finished experiment trains nothing and reproduces its table.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .captions import PRESET_MEANS
from .data import (BASE, IDEAL, REALISTIC, ArrayDataset, DataConfig, SampleRecord, build_eval_set,
                   generate, read_manifest, read_shards, scenes_of, write_shards)
from .errors import ConfigError, MadmanError
from .evaluate import TABLE_ORDER, EvalReport, aggregate_seeds, evaluate, format_cell
from .mnist import load_digits
from .model import ModelConfig, ScoringModel
from .train import TrainConfig, file_hash, load_checkpoint, save_checkpoint, train, write_log

log = logging.getLogger(__name__)

SWEEP_PROPERTIES = ("p_two_obj_img", "p_two_obj_cap", "attr_mean", "p_saliency")
PROPERTY_ALIASES = {
    "two-obj-img": "p_two_obj_img", "p_two_obj_img": "p_two_obj_img",
    "two-obj-cap": "p_two_obj_cap", "p_two_obj_cap": "p_two_obj_cap",
    "attrs": "attr_mean", "attr-mean": "attr_mean", "attr_mean": "attr_mean", "n_a": "attr_mean",
    "saliency": "p_saliency", "p_saliency": "p_saliency",
}
PROPERTY_LABELS = {
    "p_two_obj_img": "Two-object-in-image-probability",
    "p_two_obj_cap": "Two-object-in-caption-probability",
    "attr_mean": "Attributes-per-object-in-caption",
    "p_saliency": "Saliency bias",
}
DEFAULT_GRIDS = {
    "p_two_obj_img": (0.0, 0.25, 0.5, 0.75, 1.0),
    "p_two_obj_cap": (0.0, 0.25, 0.5, 0.75, 1.0),
    "attr_mean": PRESET_MEANS,
    "p_saliency": (0.0, 0.25, 0.5, 0.75, 0.9, 1.0),
}
SCALE_GRID = ((16, 32), (16, 256), (256, 32), (256, 256))
DEFAULT_SEEDS = (0, 1, 2)
DEFAULT_EVAL_N = 2000
EVAL_TARGETS = TABLE_ORDER + ("object",)


def resolve_property(name: str) -> str:
    try:
        return PROPERTY_ALIASES[name]
    except KeyError:
        raise ConfigError(f"unknown property {name!r}; choose from {sorted(PROPERTY_ALIASES)}") from None


def cache_dir() -> Path:
    return Path(os.environ.get("MADMAN_CACHE") or Path.home() / ".cache" / "madman")


def _hash(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


# --------------------------------------------------------------------------
# specs

@dataclass(frozen=True)
class Cell:
    """One training setup; ``label`` names it in tables (e.g. property value)."""

    label: tuple[tuple[str, object], ...]
    data: DataConfig
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()

    @property
    def label_dict(self) -> dict:
        return dict(self.label)


@dataclass
class ExperimentSpec:
    name: str
    cells: list[Cell]
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    eval_targets: tuple[str, ...] = EVAL_TARGETS
    eval_n: int = DEFAULT_EVAL_N
    eval_seed: int = 0
    ood: bool = False
    sweep_property: str | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if not self.cells:
            raise ConfigError(f"experiment {self.name!r} has no cells")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.sweep_property is not None:
            check_sweep_isolation(self.cells, self.sweep_property)


def check_sweep_isolation(cells: Sequence[Cell], prop: str) -> None:
    """Within a sweep only ``prop`` may differ between data configs."""
    if prop not in SWEEP_PROPERTIES:
        raise ConfigError(f"sweep property must be one of {SWEEP_PROPERTIES}, got {prop!r}")
    ref = cells[0]
    for c in cells[1:]:
        a = {k: v for k, v in ref.data.to_dict().items() if k != prop}
        b = {k: v for k, v in c.data.to_dict().items() if k != prop}
        if a != b or c.model != ref.model or c.train != ref.train:
            raise ConfigError(f"sweep over {prop} changes more than one property")


def apply_budget(cell_data: DataConfig, model: ModelConfig, train_cfg: TrainConfig,
                 budget: dict | None) -> tuple[DataConfig, ModelConfig, TrainConfig]:
    """Override dataset size / model / training fields from a budget dict."""
    if not budget:
        return cell_data, model, train_cfg
    budget = dict(budget)
    if "n_samples" in budget:
        cell_data = cell_data.replace(n_samples=int(budget.pop("n_samples")))
    m_fields = {f.name for f in dataclasses.fields(ModelConfig)}
    t_fields = {f.name for f in dataclasses.fields(TrainConfig)}
    m = {k: budget.pop(k) for k in list(budget) if k in m_fields}
    t = {k: budget.pop(k) for k in list(budget) if k in t_fields}
    if budget:
        raise ConfigError(f"unknown budget field(s): {sorted(budget)}")
    return cell_data, dataclasses.replace(model, **m), dataclasses.replace(train_cfg, **t)


def sweep_spec(prop: str, values: Iterable[float] | None = None, *, base: DataConfig = BASE,
               name: str | None = None, model: ModelConfig = ModelConfig(),
               train_cfg: TrainConfig = TrainConfig(), budget: dict | None = None, **kw) -> ExperimentSpec:
    prop = resolve_property(prop)
    values = tuple(DEFAULT_GRIDS[prop] if values is None else values)
    cells = []
    for v in values:
        d, m, t = apply_budget(base.replace(**{prop: float(v)}), model, train_cfg, budget)
        cells.append(Cell(((prop, float(v)),), d, m, t))
    return ExperimentSpec(name or f"sweep-{prop}", cells, sweep_property=prop, **kw)


def model_for_embed(embed_dim: int, base: ModelConfig = ModelConfig()) -> ModelConfig:
    if embed_dim == base.embed_dim:
        return base
    return base.scaled(embed_dim)


def table1_spec(scale: str = "all", budget: dict | None = None, **kw) -> ExperimentSpec:
    grid = [(16, 32)] if scale == "small" else list(SCALE_GRID)
    cells = []
    for data_name, data in (("Realistic", REALISTIC), ("Ideal", IDEAL)):
        for batch, embed in grid:
            d, m, t = apply_budget(data, model_for_embed(embed), TrainConfig(batch_size=batch), budget)
            cells.append(Cell((("Data", data_name), ("Batch", batch), ("Embed", embed)), d, m, t))
    return ExperimentSpec("table1", cells, **kw)


def table2_spec(budget: dict | None = None, **kw) -> ExperimentSpec:
    rows = [("CLIP", REALISTIC, "none"), ("CLIP (+Ideal data)", IDEAL, "none"),
            ("NegCLIP (Text)", REALISTIC, "text"), ("NegCLIP (Text+Image)", REALISTIC, "text+image")]
    cells = []
    for label, data, mode in rows:
        d, m, t = apply_budget(data, ModelConfig(), TrainConfig(negclip_mode=mode), budget)
        cells.append(Cell((("Model", label),), d, m, t))
    return ExperimentSpec("table2", cells, **kw)


def appendix_specs(budget: dict | None = None, **kw) -> list[ExperimentSpec]:
    """Ideal value per property on the base setup, and single realistic substitutions."""
    ideal_vals = {p: getattr(IDEAL, p) for p in SWEEP_PROPERTIES}
    real_vals = {p: getattr(REALISTIC, p) for p in SWEEP_PROPERTIES}
    best, subs = [], []
    for p in SWEEP_PROPERTIES:
        d, m, t = apply_budget(BASE.replace(**{p: ideal_vals[p]}), ModelConfig(), TrainConfig(), budget)
        best.append(Cell((("Setup", f"Best {PROPERTY_LABELS[p]}"),), d, m, t))
    for label, data in [("Full Ideal", IDEAL)] + [
            (f"Ideal except {PROPERTY_LABELS[p]}", IDEAL.replace(**{p: real_vals[p]})) for p in
            ("p_saliency", "attr_mean", "p_two_obj_img", "p_two_obj_cap")] + [("Full Realistic", REALISTIC)]:
        d, m, t = apply_budget(data, ModelConfig(), TrainConfig(), budget)
        subs.append(Cell((("Setup", label),), d, m, t))
    d, m, t = apply_budget(IDEAL, ModelConfig(), TrainConfig(), budget)
    best.append(Cell((("Setup", "Combined Ideal data"),), d, m, t))
    return [ExperimentSpec("appendix-ideal-per-property", best, **kw),
            ExperimentSpec("appendix-realistic-substitutions", subs, **kw)]


# --------------------------------------------------------------------------
# cached building blocks

class Workspace:
    """Content-addressed cache of datasets, eval sets and runs."""

    def __init__(self, root: str | os.PathLike | None = None, jobs: int = 1):
        self.root = Path(root) if root is not None else cache_dir()
        self.jobs = jobs
        self.digits = load_digits()
        self.stats = {"generated": 0, "trained": 0, "evaluated": 0}

    # datasets
    def dataset_path(self, cfg: DataConfig) -> Path:
        return self.root / "datasets" / cfg.content_hash(self.digits.fingerprint)

    def _scene_index(self, cfg: DataConfig) -> Path:
        return self.root / "scenes" / cfg.scene_key(self.digits.fingerprint)

    def ensure_dataset(self, cfg: DataConfig) -> Path:
        path = self.dataset_path(cfg)
        if (path / "manifest.json").exists():
            read_manifest(path, cfg)
            return path
        scenes = None
        idx = self._scene_index(cfg)
        if idx.exists():
            donor = Path(idx.read_text().strip())
            if (donor / "manifest.json").exists():
                scenes = scenes_of(list(read_shards(donor)))
        log.info("generating dataset %s (%d samples)", path.name, cfg.n_samples)
        records = generate(cfg, jobs=self.jobs, digits=self.digits, scenes=scenes)
        write_shards(cfg, records, path, digits_fingerprint=self.digits.fingerprint)
        idx.parent.mkdir(parents=True, exist_ok=True)
        if not idx.exists():
            idx.write_text(str(path))
        self.stats["generated"] += 1
        return path

    def load_dataset(self, cfg: DataConfig) -> ArrayDataset:
        return ArrayDataset.from_records(list(read_shards(self.ensure_dataset(cfg), cfg)))

    # eval sets
    def evalset_config(self, target: str, n: int, seed: int, split: str) -> dict:
        return {"kind": "eval", "target": target, "n": n, "seed": seed, "split": split,
                "digits": self.digits.fingerprint}

    def ensure_evalset(self, target: str, n: int, seed: int = 0, split: str = "test") -> Path:
        cfg = self.evalset_config(target, n, seed, split)
        path = self.root / "evalsets" / _hash(cfg)
        if not (path / "manifest.json").exists():
            records = build_eval_set(target, n, seed, split=split, digits=self.digits)
            write_shards(cfg, records, path, digits_fingerprint=self.digits.fingerprint)
        return path

    def load_evalset(self, target: str, n: int, seed: int = 0, split: str = "test") -> list[SampleRecord]:
        path = self.ensure_evalset(target, n, seed, split)
        return list(read_shards(path, self.evalset_config(target, n, seed, split)))

    # runs
    def run_path(self, data_cfg: DataConfig, model_cfg: ModelConfig, train_cfg: TrainConfig) -> Path:
        key = _hash({"data": data_cfg.content_hash(self.digits.fingerprint),
                     "model": model_cfg.content_hash(), "train": train_cfg.content_hash()})
        return self.root / "runs" / key

    def ensure_run(self, data_cfg: DataConfig, model_cfg: ModelConfig, train_cfg: TrainConfig) -> Path:
        path = self.run_path(data_cfg, model_cfg, train_cfg)
        ckpt = path / "checkpoint.pt"
        if ckpt.exists():
            return path
        ds_path = self.ensure_dataset(data_cfg)
        dataset = ArrayDataset.from_records(list(read_shards(ds_path, data_cfg)))
        log.info("training run %s (%s)", path.name, train_cfg)
        result = train(model_cfg, train_cfg, dataset, digits=self.digits,
                       source_split=data_cfg.source_split)
        path.mkdir(parents=True, exist_ok=True)
        write_log(path / "train_log.csv", result.log)
        (path / "config.json").write_text(json.dumps({
            "data": data_cfg.to_dict(), "model": model_cfg.to_dict(), "train": train_cfg.to_dict(),
            "dataset_hash": read_manifest(ds_path)["config_hash"], "dataset_dir": ds_path.name,
        }, indent=1, sort_keys=True))
        save_checkpoint(ckpt, result)
        self.stats["trained"] += 1
        return path

    def evaluate_run(self, run: Path, targets: Sequence[str], n: int, seed: int = 0,
                     split: str = "test") -> dict:
        key = _hash({"targets": list(targets), "n": n, "seed": seed, "split": split,
                     "digits": self.digits.fingerprint})
        out = run / f"eval-{key}.json"
        ckpt_hash = file_hash(run / "checkpoint.pt")
        if out.exists():
            cached = json.loads(out.read_text())
            if cached.get("checkpoint_hash") == ckpt_hash:
                return cached
        model, _ = load_checkpoint(run / "checkpoint.pt")
        sets = {t: self.load_evalset(t, n, seed, split) for t in targets}
        report = evaluate(ScoringModel(model), sets)
        result = {"checkpoint_hash": ckpt_hash, "split": split, **report.to_dict()}
        out.write_text(json.dumps(result, indent=1, sort_keys=True))
        self.stats["evaluated"] += 1
        return result


def _train_job(args):
    root, data_cfg, model_cfg, train_cfg = args
    ws = Workspace(root)
    return str(ws.ensure_run(data_cfg, model_cfg, train_cfg))


# --------------------------------------------------------------------------
# results

@dataclass
class ResultsTable:
    name: str
    rows: list[dict] = field(default_factory=list)        # aggregated rows
    seed_rows: list[dict] = field(default_factory=list)   # one per (cell, seed, split, attribute)
    label_keys: tuple[str, ...] = ()

    def to_json(self) -> str:
        return json.dumps({"name": self.name, "label_keys": list(self.label_keys),
                           "rows": self.rows, "seed_rows": self.seed_rows}, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ResultsTable":
        d = json.loads(text)
        return cls(d["name"], d["rows"], d["seed_rows"], tuple(d["label_keys"]))

    def lookup(self, attribute: str, split: str = "test", metric: str = "binding", **label) -> dict:
        for r in self.rows:
            if r["attribute"] == attribute and r["split"] == split and all(
                    r["label"].get(k) == v for k, v in label.items()):
                return r
        raise KeyError(f"no row for {attribute}/{split}/{label}")

    def value(self, attribute: str, split: str = "test", unfiltered: bool = False, **label) -> float | None:
        r = self.lookup(attribute, split, **label)
        return r["binding_unfiltered_mean"] if unfiltered else r["binding_mean"]

    def long_csv(self) -> str:
        buf = io.StringIO()
        cols = list(self.label_keys) + ["split", "attribute", "binding_mean", "binding_ci",
                                        "binding_unfiltered_mean", "binding_unfiltered_ci",
                                        "recognition_mean", "n_kept_mean", "n_seeds_kept", "seeds",
                                        "dataset_hashes", "checkpoint_hashes"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([r["label"].get(k) for k in self.label_keys] + [
                r["split"], r["attribute"], _fmt(r["binding_mean"]), _fmt(r["binding_ci"]),
                _fmt(r["binding_unfiltered_mean"]), _fmt(r["binding_unfiltered_ci"]),
                _fmt(r["recognition_mean"]), _fmt(r["n_kept_mean"]), r["n_seeds_kept"],
                " ".join(str(s) for s in r["seeds"]), " ".join(r["dataset_hashes"]),
                " ".join(r["checkpoint_hashes"])])
        return buf.getvalue()

    def table_csv(self, split: str = "test", unfiltered: bool = False) -> str:
        """One line per cell, attribute columns in table order; values in %."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.label_keys) + [a.capitalize() for a in TABLE_ORDER])
        seen = []
        for r in self.rows:
            key = tuple(r["label"].get(k) for k in self.label_keys)
            if r["split"] == split and key not in seen:
                seen.append(key)
        for key in seen:
            label = dict(zip(self.label_keys, key))
            cells = []
            for a in TABLE_ORDER:
                try:
                    cells.append(format_cell(self.value(a, split, unfiltered, **label)))
                except KeyError:
                    cells.append("")
            w.writerow(list(key) + cells)
        return buf.getvalue()


def _fmt(x):
    if x is None:
        return ""
    return f"{x:.6f}" if isinstance(x, float) else str(x)


def _mean_ci(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    if len(values) == 1:
        return float(values[0]), None
    return aggregate_seeds(values)


def _aggregate(spec: ExperimentSpec, seed_rows: list[dict]) -> list[dict]:
    rows = []
    groups: dict[tuple, list[dict]] = {}
    for r in seed_rows:
        key = (json.dumps(r["label"], sort_keys=True), r["split"], r["attribute"])
        groups.setdefault(key, []).append(r)
    for (label_json, split, attr), rs in groups.items():
        kept = [r["binding"] for r in rs if r["binding"] is not None]
        unf = [r["binding_unfiltered"] for r in rs if r["binding_unfiltered"] is not None]
        b_mean, b_ci = _mean_ci(kept)
        u_mean, u_ci = _mean_ci(unf)
        rows.append({
            "label": json.loads(label_json), "split": split, "attribute": attr,
            "binding_mean": b_mean, "binding_ci": b_ci,
            "binding_unfiltered_mean": u_mean, "binding_unfiltered_ci": u_ci,
            "recognition_mean": float(np.mean([r["recognition"] for r in rs])),
            "n_kept_mean": float(np.mean([r["n_kept"] for r in rs])) if rs[0]["n_kept"] is not None else None,
            "n_seeds_kept": len(kept),
            "seeds": [r["seed"] for r in rs],
            "dataset_hashes": sorted({r["dataset_hash"] for r in rs}),
            "checkpoint_hashes": [r["checkpoint_hash"] for r in rs],
        })
    return rows


def run_experiment(spec: ExperimentSpec, workspace: Workspace | None = None,
                   jobs: int = 1) -> ResultsTable:
    """Generate -> train -> evaluate every (cell, seed); aggregate over seeds."""
    ws = workspace or Workspace(jobs=jobs)
    label_keys = tuple(dict.fromkeys(k for c in spec.cells for k, _ in c.label))
    table = ResultsTable(spec.name, label_keys=label_keys)
    out_dir = Path(spec.output_dir) if spec.output_dir else None
    jobs_list = []
    for cell in spec.cells:
        ws.ensure_dataset(cell.data)
        for seed in spec.seeds:
            jobs_list.append((cell, seed, cell.train.replace(seed=seed)))
    pending = [(c, t) for c, _, t in jobs_list
               if not (ws.run_path(c.data, c.model, t) / "checkpoint.pt").exists()]
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            list(ex.map(_train_job, [(ws.root, c.data, c.model, t) for c, t in pending]))
        ws.stats["trained"] += len(pending)
    splits = ["test"] + (["ood-test"] if spec.ood else [])
    for cell, seed, tcfg in jobs_list:
        try:
            run = ws.ensure_run(cell.data, cell.model, tcfg)
            ds_hash = read_manifest(ws.dataset_path(cell.data))["config_hash"]
            for split in splits:
                ev = ws.evaluate_run(run, spec.eval_targets, spec.eval_n, spec.eval_seed, split)
                for attr, b in ev["binding"].items():
                    table.seed_rows.append({
                        "label": cell.label_dict, "seed": seed, "split": split, "attribute": attr,
                        "binding": b["binding_accuracy"], "binding_unfiltered": b["binding_accuracy_unfiltered"],
                        "recognition": b["recognition_accuracy"], "kept": b["kept"], "n_kept": b["n_kept"],
                        "status": b["status"], "dataset_hash": ds_hash,
                        "checkpoint_hash": ev["checkpoint_hash"], "run": run.name,
                    })
                if "object" in ev["recognition"]:
                    table.seed_rows.append({
                        "label": cell.label_dict, "seed": seed, "split": split, "attribute": "object",
                        "binding": None, "binding_unfiltered": None,
                        "recognition": ev["recognition"]["object"], "kept": None, "n_kept": None,
                        "status": "recognition-only", "dataset_hash": ds_hash,
                        "checkpoint_hash": ev["checkpoint_hash"], "run": run.name,
                    })
        except MadmanError as e:
            if out_dir is not None:
                _persist(table, spec, out_dir)
            raise type(e)(f"[{spec.name} {cell.label_dict} seed={seed}] {e}") from e
    table.rows = _aggregate(spec, table.seed_rows)
    if out_dir is not None:
        _persist(table, spec, out_dir)
    return table


def _persist(table: ResultsTable, spec: ExperimentSpec, out_dir: Path) -> None:
    table.rows = table.rows or _aggregate(spec, table.seed_rows)
    res = out_dir / "results"
    res.mkdir(parents=True, exist_ok=True)
    (res / f"{table.name}.json").write_text(table.to_json())


# --------------------------------------------------------------------------
# reports

def emit_report(tables: Sequence[ResultsTable], out_dir: str | os.PathLike,
                plots: bool = True) -> list[Path]:
    """Write CSV/JSON per table and line plots for sweeps; returns written paths."""
    if not tables:
        raise ConfigError("emit_report needs at least one table")
    out = Path(out_dir)
    (out / "results").mkdir(parents=True, exist_ok=True)
    written = []
    for t in tables:
        splits = sorted({r["split"] for r in t.rows})
        for name, text in [(f"{t.name}.json", t.to_json()), (f"{t.name}.csv", t.long_csv())]:
            p = out / "results" / name
            p.write_text(text)
            written.append(p)
        for split in splits:
            suffix = "" if split == "test" else "-ood"
            for unf, tag in ((False, ""), (True, "-nofilter")):
                p = out / "results" / f"{t.name}{suffix}{tag}-table.csv"
                p.write_text(t.table_csv(split, unf))
                written.append(p)
        if plots and len(t.label_keys) == 1 and t.label_keys[0] in SWEEP_PROPERTIES:
            written.extend(_plot_sweep(t, out / "plots"))
    return written


def _plot_sweep(table: ResultsTable, out: Path) -> list[Path]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out.mkdir(parents=True, exist_ok=True)
    prop = table.label_keys[0]
    paths = []
    for split in sorted({r["split"] for r in table.rows}):
        for unf, tag in ((False, ""), (True, "-nofilter")):
            fig, ax = plt.subplots(figsize=(5, 3.5))
            for attr in TABLE_ORDER:
                rows = sorted((r for r in table.rows if r["attribute"] == attr and r["split"] == split),
                              key=lambda r: r["label"][prop])
                xs, ys, lo, hi = [], [], [], []
                for r in rows:
                    m = r["binding_unfiltered_mean"] if unf else r["binding_mean"]
                    ci = r["binding_unfiltered_ci"] if unf else r["binding_ci"]
                    if m is None:
                        continue
                    xs.append(r["label"][prop])
                    ys.append(100 * m)
                    lo.append(100 * (m - (ci or 0)))
                    hi.append(100 * (m + (ci or 0)))
                if xs:
                    ax.plot(xs, ys, marker="o", label=attr)
                    ax.fill_between(xs, lo, hi, alpha=0.2)
            ax.axhline(50, color="gray", ls=":", lw=1)
            ax.set_xlabel(PROPERTY_LABELS.get(prop, prop))
            ax.set_ylabel("binding accuracy (%)")
            ax.set_title(f"{table.name} ({split}{', no filter' if unf else ''})", fontsize=9)
            if ax.get_legend_handles_labels()[0]:
                ax.legend(fontsize=7)
            fig.tight_layout()
            suffix = "" if split == "test" else "-ood"
            p = out / f"{table.name}{suffix}{tag}.png"
            fig.savefig(p, dpi=120, metadata={"Software": None})
            plt.close(fig)
            paths.append(p)
    return paths


# --------------------------------------------------------------------------
# presets for the CLI

# "full" is the default recipe; "desk" fits one CPU core (see README).
BUDGETS: dict[str, dict] = {
    "full": {},
    "desk": {"n_samples": 20000, "max_steps": 8000, "vision_patch_size": 14},
    "smoke": {"n_samples": 64, "max_steps": 4, "vision_patch_size": 16, "warmup_steps": 1},
}


def figure_specs(name: str, props: Sequence[str], ood: bool = False, budget: dict | None = None,
                 **kw) -> list[ExperimentSpec]:
    return [sweep_spec(p, name=f"{name}-{p}", budget=budget, ood=ood, **kw) for p in props]


def repro_specs(target: str, scale: str = "all", budget: dict | None = None, **kw) -> list[ExperimentSpec]:
    if target == "table1":
        return [table1_spec(scale, budget, **kw)]
    if target == "table2":
        return [table2_spec(budget, **kw)]
    if target == "fig3":
        return figure_specs("fig3", ("p_two_obj_img", "p_two_obj_cap"), budget=budget, **kw)
    if target == "fig4":
        return figure_specs("fig4", ("attr_mean", "p_saliency"), budget=budget, **kw)
    if target == "fig6":
        return figure_specs("fig6", SWEEP_PROPERTIES, ood=True, budget=budget, **kw)
    if target == "appendix-tables":
        return appendix_specs(budget, **kw)
    if target == "all":
        return [s for t in ("table1", "table2", "fig3", "fig4", "fig6", "appendix-tables")
                for s in repro_specs(t, scale, budget, **kw)]
    raise ConfigError(f"unknown repro target {target!r}")
