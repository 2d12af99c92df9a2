import json

import pytest

from madman import experiments as ex
from madman.data import BASE, IDEAL, REALISTIC
from madman.errors import ConfigError
from madman.model import ModelConfig
from madman.train import TrainConfig

SMOKE = dict(ex.BUDGETS["smoke"])
TARGETS = ("color", "scaling")


def tiny_sweep(**kw):
    return ex.sweep_spec("saliency", [0.0, 1.0], budget=SMOKE, seeds=(0, 1), eval_n=6,
                         eval_targets=TARGETS, **kw)


def test_base_setup():
    assert (BASE.p_two_obj_img, BASE.p_two_obj_cap, BASE.attr_mean, BASE.p_saliency) == (1.0, 1.0, 1.8, 0.0)
    assert ex.DEFAULT_SEEDS == (0, 1, 2)


def test_property_aliases():
    assert ex.resolve_property("saliency") == "p_saliency"
    with pytest.raises(ConfigError):
        ex.resolve_property("brightness")


def test_sweep_isolation():
    spec = ex.sweep_spec("attrs", budget=SMOKE)
    assert [c.data.attr_mean for c in spec.cells] == list(ex.DEFAULT_GRIDS["attr_mean"])
    bad = [spec.cells[0], ex.Cell((("attr_mean", 2.0),), spec.cells[1].data.replace(p_saliency=0.5),
                                  spec.cells[1].model, spec.cells[1].train)]
    with pytest.raises(ConfigError, match="more than one"):
        ex.ExperimentSpec("bad", bad, sweep_property="attr_mean")
    with pytest.raises(ConfigError):
        ex.ExperimentSpec("bad", [spec.cells[0], ex.Cell(spec.cells[1].label, spec.cells[1].data,
                                                         spec.cells[1].model, TrainConfig(lr=1.0))],
                          sweep_property="attr_mean")


def test_table_specs():
    t1 = ex.table1_spec()
    labels = [c.label_dict for c in t1.cells]
    assert {(l["Batch"], l["Embed"]) for l in labels} == set(ex.SCALE_GRID)
    big = next(c for c in t1.cells if c.label_dict["Embed"] == 256)
    assert big.model.vision_width == 384
    assert len(ex.table1_spec("small").cells) == 2
    t2 = ex.table2_spec()
    assert [c.train.negclip_mode for c in t2.cells] == ["none", "none", "text", "text+image"]
    assert t2.cells[1].data == IDEAL and t2.cells[0].data == REALISTIC
    a, b = ex.appendix_specs()
    assert len(a.cells) == 5 and len(b.cells) == 6


def test_budget_overrides():
    d, m, t = ex.apply_budget(BASE, ModelConfig(), TrainConfig(), {"n_samples": 10, "max_steps": 3,
                                                                    "vision_patch_size": 12})
    assert d.n_samples == 10 and t.max_steps == 3 and m.vision_patch_size == 12
    with pytest.raises(ConfigError):
        ex.apply_budget(BASE, ModelConfig(), TrainConfig(), {"learning_speed": 1})


def test_repro_targets():
    for t in ("table1", "table2", "fig3", "fig4", "fig6", "appendix-tables"):
        assert ex.repro_specs(t, budget=SMOKE)
    assert all(s.ood for s in ex.repro_specs("fig6"))
    with pytest.raises(ConfigError):
        ex.repro_specs("fig9")


@pytest.fixture(scope="module")
def sweep_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("ws")
    ws = ex.Workspace(root / "cache")
    table = ex.run_experiment(tiny_sweep(output_dir=str(root / "out"), ood=True), ws)
    return root, ws, table


def test_run_and_provenance(sweep_run):
    root, ws, table = sweep_run
    assert ws.stats["trained"] == 4
    assert {r["split"] for r in table.rows} == {"test", "ood-test"}
    for r in table.seed_rows:
        assert r["seed"] in (0, 1) and len(r["dataset_hash"]) == 16 and len(r["checkpoint_hash"]) == 16
    for r in table.rows:
        assert r["seeds"] == [0, 1]
    assert (root / "out" / "results" / f"{table.name}.json").exists()


def test_rerun_is_cached(sweep_run):
    root, _, table = sweep_run
    ws2 = ex.Workspace(root / "cache")
    again = ex.run_experiment(tiny_sweep(output_dir=str(root / "out2"), ood=True), ws2)
    assert ws2.stats == {"generated": 0, "trained": 0, "evaluated": 0}
    assert again.to_json() == table.to_json()


def test_scene_sharing_between_caption_configs(tmp_path):
    ws = ex.Workspace(tmp_path)
    a = BASE.replace(n_samples=6)
    b = a.replace(attr_mean=3.5)
    ws.ensure_dataset(a)
    ws.ensure_dataset(b)
    ra = ws.load_dataset(a)
    rb = ws.load_dataset(b)
    assert (ra.images == rb.images).all()
    assert ws.stats["generated"] == 2


def test_emit_report(sweep_run, tmp_path):
    _, _, table = sweep_run
    paths = ex.emit_report([table], tmp_path / "r1")
    names = sorted(p.name for p in paths)
    assert f"{table.name}-table.csv" in names and f"{table.name}-ood-table.csv" in names
    assert any(n.endswith(".png") for n in names)
    first = {p.name: p.read_bytes() for p in paths if p.suffix in (".csv", ".json")}
    again = {p.name: p.read_bytes() for p in ex.emit_report([table], tmp_path / "r2") if p.suffix in (".csv", ".json")}
    assert first == again
    header = (tmp_path / "r1" / "results" / f"{table.name}-table.csv").read_text().splitlines()[0]
    assert header == "p_saliency,Color,Scaling,Fracture,Rotation,Swelling,Thickness"


def test_report_filtered_cell():
    t = ex.ResultsTable("t", label_keys=("Data", "Batch", "Embed"))
    for attr, b in (("color", None), ("scaling", 0.9)):
        t.rows.append({"label": {"Data": "Ideal", "Batch": 16, "Embed": 32}, "split": "test", "attribute": attr,
                       "binding_mean": b, "binding_ci": None, "binding_unfiltered_mean": 0.5,
                       "binding_unfiltered_ci": None, "recognition_mean": 0.1, "n_kept_mean": 0,
                       "n_seeds_kept": 0, "seeds": [0], "dataset_hashes": ["x"], "checkpoint_hashes": ["y"]})
    csv = t.table_csv().splitlines()
    assert csv[0] == "Data,Batch,Embed,Color,Scaling,Fracture,Rotation,Swelling,Thickness"
    assert csv[1] == "Ideal,16,32,filtered,90.00,,,,"
    assert ex.ResultsTable.from_json(t.to_json()).rows == t.rows


def test_single_value_single_seed(tmp_path):
    spec = ex.sweep_spec("two-obj-img", [1.0], budget=SMOKE, seeds=(0,), eval_n=4, eval_targets=("color",))
    table = ex.run_experiment(spec, ex.Workspace(tmp_path))
    assert len([r for r in table.rows if r["attribute"] == "color"]) == 1


def test_emit_report_needs_tables(tmp_path):
    with pytest.raises(ConfigError):
        ex.emit_report([], tmp_path)


def test_cache_dir_env(cache):
    assert ex.cache_dir() == cache
