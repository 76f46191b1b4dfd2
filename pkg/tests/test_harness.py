import json

import numpy as np
import pytest

from tinyadv import harness, models, quant, serialize
from tinyadv.errors import InvalidSpec

SMALL_DATA = {"kind": "synthetic", "n_train": 300, "n_test": 60, "classes": 4, "side": 8, "seed": 5, "n_calib": 40}


@pytest.fixture(scope="module")
def model_path(small_model, tmp_path_factory):
    p = tmp_path_factory.mktemp("model") / "small.bin"
    serialize.save_model(small_model, p)
    return p


def make_spec(model_path, **kw):
    raw = {"protocol": "direct", "model": {"path": str(model_path)}, "bitwidths": ["float32", "int16", "int8"],
           "dataset": dict(SMALL_DATA), "samples": 6, "seed": 3}
    raw.update(kw)
    return harness.validate_spec(raw)


# -- validation ---------------------------------------------------------------

@pytest.mark.parametrize("raw,msg", [
    ({"attacks": [{"name": "pgd"}]}, "white-box"),
    ({"protocol": "transfer", "bitwidths": ["int8"]}, "float32"),
    ({"protocol": "defense-eval"}, "defense"),
    ({"attacks": [{"name": "square-linf", "config": {"bogus": 1}}]}, "square-linf"),
    ({"attacks": [{"name": "square-linf", "config": {"eps": -1}}]}, "square-linf"),
    ({"attacks": [{"name": "boundary", "calibrate": True}]}, "calibration"),
    ({"protocol": "transfer", "defense": {"name": "pgd-advt", "recraft": True}}, "recraft"),
    ({"protocol": "defense-eval", "defense": {"name": "distillation", "config": {"alpha": 3}}}, "distillation"),
    ({"bitwidths": ["int4"]}, "bitwidths"),
    ({"protocol": "transfer", "attacks": [{"name": "fgsm", "calibrate": True, "sweep": {"parameter": "eps", "values": [0.1]}}]},
     "mutually exclusive"),
    ({"protocol": "transfer", "attacks": [{"name": "fgsm", "sweep": {"parameter": "bogus", "values": [0.1]}}]},
     "fgsm"),
    ({"extra": 1}, "root"),
])
def test_invalid_specs(model_path, raw, msg):
    with pytest.raises(InvalidSpec, match=msg):
        make_spec(model_path, **raw)


def test_white_box_allowed_on_float_only_direct(model_path):
    make_spec(model_path, bitwidths=["float32"], attacks=[{"name": "pgd"}])
    make_spec(model_path, protocol="transfer", attacks=[{"name": "pgd"}])


def test_load_spec_formats(tmp_path, model_path):
    raw = {"protocol": "direct", "model": {"path": "m.bin"}, "bitwidths": ["float32"], "dataset": SMALL_DATA}
    (tmp_path / "s.json").write_text(json.dumps(raw))
    (tmp_path / "s.yaml").write_text("protocol: direct\nmodel: {path: m.bin}\nbitwidths: [float32]\n"
                                     "dataset: {kind: synthetic}\n")
    assert harness.load_spec(tmp_path / "s.json").path("m.bin") == tmp_path / "m.bin"
    assert harness.load_spec(tmp_path / "s.yaml").protocol == "direct"
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(InvalidSpec):
        harness.load_spec(tmp_path / "bad.json")
    with pytest.raises(InvalidSpec):
        harness.load_spec(tmp_path / "missing.json")


def test_defense_success_rule():
    assert harness.defense_success(0.9, 0.9)
    assert harness.defense_success(0.9, 0.7001)
    assert not harness.defense_success(0.9, 0.7)  # exactly 20 points is not "below"
    assert not harness.defense_success(0.5, 0.1)


# -- protocols ----------------------------------------------------------------

def _check_report_files(out, report, n_cells):
    rows = (out / "report.csv").read_text().splitlines()
    assert rows[0] == ",".join(harness.CSV_COLUMNS)
    assert len(rows) == n_cells + 1
    assert harness.load_report(out / "report.json") == json.loads(harness.report_json(report))


def test_direct_square(model_path, tmp_path, monkeypatch):
    real = harness.GradientOracle

    def guarded(model):
        assert isinstance(model, models.ModelGraph), "gradient oracle over an integer model"
        return real(model)

    monkeypatch.setattr(harness, "GradientOracle", guarded)
    spec = make_spec(model_path, attacks=[{"name": "square-linf", "config": {"eps": 0.05, "max_iter": 40}}])
    written, report = harness.run(spec, tmp_path)
    assert [c["bitwidth"] for c in report["cells"]] == ["float32", "int16", "int8"]
    assert all(0.0 <= c["accuracy"] <= 1.0 for c in report["cells"])
    _check_report_files(tmp_path, report, 3)
    # every cell is reproducible from the stored example files
    _, _, calib = harness.load_datasets(spec)
    varts = harness.variants(serialize.load_model(model_path), calib, spec.bitwidths)
    for cell in report["cells"]:
        assert harness.recompute_accuracy(tmp_path, cell, varts[cell["bitwidth"]]) == cell["accuracy"]


def test_direct_run_is_byte_deterministic(model_path, tmp_path):
    spec = make_spec(model_path, attacks=[{"name": "boundary", "config": {"max_iter": 5}}],
                     bitwidths=["float32", "int8"])
    harness.run(spec, tmp_path / "a")
    harness.run(spec, tmp_path / "b")
    for f in ("report.json", "report.csv", "examples/boundary__int8.adv.bin"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_transfer_zero_eps_equals_clean_quantized_accuracy(model_path, tmp_path):
    spec = make_spec(model_path, protocol="transfer",
                     attacks=[{"name": "pgd", "config": {"eps": 0.0, "step": 0.0, "restarts": 1}}])
    _, report = harness.run(spec, tmp_path)
    for c in report["cells"]:
        assert c["accuracy"] == c["clean_accuracy"]
    dists = [json.dumps(c["distortion"], sort_keys=True) for c in report["cells"]]
    assert len(set(dists)) == 1


def test_transfer_distortions_shared_across_bitwidths(model_path):
    spec = make_spec(model_path, protocol="transfer", attacks=[{"name": "fgsm", "config": {"eps": 0.05}}],
                     diagnostics={"zero_density": True, "cosine": True, "boundary_distance": True, "samples": 2})
    report = harness.run_transfer(spec)
    assert len({json.dumps(c["distortion"], sort_keys=True) for c in report["cells"]}) == 1
    dg = report["diagnostics"]
    assert set(dg["zero_density"]) == {"float32", "int16", "int8"}
    assert abs(dg["cosine"]["float32"]["mean"] - 1.0) <= 1e-6
    assert dg["boundary_distance"]["n_used"] + dg["boundary_distance"]["n_skipped"] == 2
    assert report["manifest"]["spec_hash"] == serialize.config_hash(spec.raw)


def test_pgd_eps_sweep_is_explicit_list(model_path, tmp_path):
    eps = [0.0002, 0.0004, 0.0006, 0.0008]
    spec = make_spec(model_path, protocol="transfer", bitwidths=["float32", "int8"],
                     attacks=[{"name": "pgd", "sweep": {"parameter": "eps", "values": eps},
                               "config": {"step": 0.0001, "restarts": 1}}])
    _, report = harness.run(spec, tmp_path)
    assert [c["sweep"]["eps"] for c in report["cells"]] == [e for e in eps for _ in range(2)]
    assert [c["params"]["eps"] for c in report["cells"]] == [c["sweep"]["eps"] for c in report["cells"]]
    for c in report["cells"]:
        assert c["distortion"]["mean_all"]["linf"] <= c["sweep"]["eps"] + 1e-7
    assert len({c["examples"] for c in report["cells"]}) == 4
    rows = (tmp_path / "report.csv").read_text().splitlines()[1:]
    assert rows[0].startswith("pgd@eps=0.0002,float32")


def test_calibration_doubles_until_below_chance(model_path):
    spec = make_spec(model_path, bitwidths=["float32"],
                     attacks=[{"name": "pgd", "calibrate": True, "calibration_cap": 10,
                               "config": {"eps": 0.005, "step": 0.001, "restarts": 1}}])
    report = harness.run_direct(spec)
    cal = report["cells"][0]["calibration"]
    assert cal["met"] and cal["doublings"] >= 1
    assert cal["value"] == pytest.approx(0.005 * 2 ** cal["doublings"])
    assert report["cells"][0]["accuracy"] < 0.25


def test_defense_eval_feature_squeezing(model_path, tmp_path):
    spec = make_spec(model_path, protocol="defense-eval", bitwidths=["float32", "int8"],
                     attacks=[{"name": "fgsm", "config": {"eps": 0.05}}],
                     defense={"name": "feature-squeezing", "config": {"bit_depth": 4, "window": 2}})
    _, report = harness.run(spec, tmp_path)
    assert report["defense"]["config"]["window"] == 3 and report["defense"]["config"]["requested_window"] == 2
    for c in report["cells"]:
        assert "undefended_accuracy" in c and isinstance(c["success"], bool)
        assert c["success"] == harness.defense_success(c["baseline_accuracy"], c["accuracy"])


def test_defense_eval_recraft(model_path):
    spec = make_spec(model_path, protocol="defense-eval", bitwidths=["float32"],
                     attacks=[{"name": "boundary", "config": {"max_iter": 3}}],
                     defense={"name": "feature-squeezing", "recraft": True})
    report = harness.run_defense_eval(spec)
    assert report["cells"][0]["recrafted"]
    with pytest.raises(InvalidSpec):
        make_spec(model_path, protocol="defense-eval", attacks=[{"name": "fgsm"}],
                  defense={"name": "feature-squeezing", "recraft": True})


def test_defense_eval_training_defense(model_path):
    spec = make_spec(model_path, protocol="defense-eval", bitwidths=["float32", "int8"], samples=4,
                     attacks=[{"name": "fgsm", "config": {"eps": 0.02}}],
                     defense={"name": "pgd-advt", "config": {"eps": 0.02, "step": 0.01, "iters": 1,
                                                             "epochs": 1, "lr": 0.01}})
    report = harness.run_defense_eval(spec)
    assert report["defense"]["kind"] == "pgd-advt"
    assert len(report["defense"]["loss_trace"]) == 1
    assert {c["bitwidth"] for c in report["cells"]} == {"float32", "int8"}


def test_emit_report_to_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        harness.emit_report({"cells": []}, blocker / "sub")


def test_default_defense_attack_list(model_path):
    spec = make_spec(model_path, protocol="defense-eval", defense={"name": "feature-squeezing"})
    assert [a["name"] for a in spec.attacks] == list(harness.DEFENSE_EVAL_ATTACKS)


def test_trains_model_from_arch(tmp_path):
    raw = {"protocol": "direct", "model": {"arch": "toy-dscnn", "width": 4, "train": {"epochs": 1}},
           "bitwidths": ["float32"], "dataset": dict(SMALL_DATA, n_train=64), "samples": 2}
    spec = harness.validate_spec(raw)
    train, _, _ = harness.load_datasets(spec)
    m = harness.load_float_model(spec, train)
    assert m.metadata["arch"] == "toy-dscnn" and len(m.metadata["loss_trace"]) == 1
    assert isinstance(quant.quantize_model(m, train.images[:8], 8), quant.QuantizedModel)
