"""Declarative experiment runner: direct, transfer and defense-evaluation protocols."""
from __future__ import annotations

import copy
import csv
import io
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from . import __version__, attacks as A, data, defenses as D, metrics, models, quant, serialize
from .errors import BoundaryNotBracketed, GradientDegenerate, InitFailed, InvalidArgument, InvalidSpec
from .oracles import DecisionOracle, GradientOracle, ScoreOracle

log = logging.getLogger(__name__)

BITWIDTHS = ("float32", "int16", "int8")
DEFENSE_EVAL_ATTACKS = ("deepfool", "cw-linf", "autoattack", "square-linf", "boundary", "geoda")
CSV_COLUMNS = ("attack", "bitwidth", "acc", "l0", "l1", "l2", "linf", "n", "n_success")
DROP_LIMIT_POINTS = 20.0

_CONFIGS = {
    "fgsm": A.FGSMConfig, "deepfool": A.DeepFoolConfig, "jsma": A.JSMAConfig, "cw-l2": A.CWConfig,
    "cw-linf": A.CWConfig, "pgd": A.PGDConfig, "ead": A.EADConfig, "autoattack": A.AutoAttackConfig,
    "zoo": A.ZOOConfig, "square-linf": A.SquareConfig, "square-l2": A.SquareConfig,
    "boundary": A.BoundaryConfig, "geoda": A.GeoDAConfig,
}
# attack -> the config field swept upward by auto-calibration
_STRENGTH = {"fgsm": "eps", "pgd": "eps", "autoattack": "eps", "square-linf": "eps", "square-l2": "eps",
             "cw-l2": "initial_const", "ead": "initial_const", "zoo": "initial_const"}


def load_schema():
    text = resources.files("tinyadv").joinpath("schemas/experiment.schema.json").read_text()
    return json.loads(text)


# ----------------------------------------------------------------------------
# spec
# ----------------------------------------------------------------------------

@dataclass
class ExperimentSpec:
    raw: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @property
    def protocol(self):
        return self.raw["protocol"]

    @property
    def bitwidths(self):
        return [b for b in BITWIDTHS if b in self.raw["bitwidths"]]

    @property
    def seed(self):
        return int(self.raw.get("seed", 0))

    @property
    def samples(self):
        return int(self.raw.get("samples", 20))

    @property
    def attacks(self):
        default = DEFENSE_EVAL_ATTACKS if self.protocol == "defense-eval" else ()
        entries = self.raw.get("attacks") or [{"name": n} for n in default]
        out = []
        for e in entries:
            if "sweep" not in e:
                out.append(e)
                continue
            # one entry per swept value, each with its own example files and report cells
            param = e["sweep"]["parameter"]
            for v in e["sweep"]["values"]:
                one = {k: val for k, val in e.items() if k != "sweep"}
                one["config"] = {**e.get("config", {}), param: v}
                one["tag"] = f"{e['name']}@{param}={v:g}"
                one["sweep_value"] = {param: v}
                out.append(one)
        return out

    @property
    def defense(self):
        return self.raw.get("defense")

    @property
    def output(self):
        out = {"dir": "report", "formats": ["json", "csv"], "store_examples": True}
        out.update(self.raw.get("output", {}))
        return out

    def path(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    def attack_config(self, entry, **override):
        cls = _CONFIGS[entry["name"]]
        cfg = dict(entry.get("config", {}))
        if "seed" in cls.__dataclass_fields__:
            cfg.setdefault("seed", self.seed)
        if entry["name"] == "square-l2":
            cfg = {"eps": 1.0, "max_iter": 2000, "init_fraction": 0.8, **cfg, "norm": "l2"}
        elif entry["name"] == "square-linf":
            cfg["norm"] = "linf"
        cfg.update(override)
        if "clip" in cfg and cfg["clip"] is not None:
            cfg["clip"] = tuple(cfg["clip"])
        try:
            return cls(**cfg)
        except TypeError as e:
            raise InvalidSpec(f"attack {entry['name']}: {e}") from None
        except InvalidArgument as e:
            raise InvalidSpec(f"attack {entry['name']}: {e}") from None

    def to_dict(self):
        return copy.deepcopy(self.raw)


def validate_spec(raw, base_dir=None) -> ExperimentSpec:
    """Schema check plus the cross-field rules the schema cannot express."""
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as e:
        where = "/".join(map(str, e.absolute_path)) or "<root>"
        raise InvalidSpec(f"{where}: {e.message}") from None
    spec = ExperimentSpec(copy.deepcopy(raw), Path(base_dir) if base_dir else Path.cwd())
    if spec.protocol == "transfer" and "float32" not in spec.bitwidths:
        raise InvalidSpec("the transfer protocol needs float32 as its source model")
    if spec.protocol == "defense-eval" and not spec.defense:
        raise InvalidSpec("defense-eval needs a defense")
    if spec.protocol == "direct":
        ints = [b for b in spec.bitwidths if b != "float32"]
        for a in spec.attacks:
            if A.tier(a["name"]) == "white" and ints:
                raise InvalidSpec(f"white-box attack {a['name']} cannot run directly on {ints[0]} models")
    d = spec.defense or {}
    if d.get("recraft"):
        if d["name"] != "feature-squeezing":
            raise InvalidSpec("recraft only applies to pre-processing defenses")
        for a in spec.attacks:
            if A.tier(a["name"]) == "white":
                raise InvalidSpec(f"{a['name']} cannot be re-crafted through a non-differentiable squeezer")
    for a in spec.raw.get("attacks", []):
        if a.get("calibrate") and "sweep" in a:
            raise InvalidSpec(f"{a['name']}: calibrate and sweep are mutually exclusive")
    for a in spec.attacks:
        if a.get("calibrate") and a["name"] not in _STRENGTH:
            raise InvalidSpec(f"auto-calibration is not defined for {a['name']}")
        spec.attack_config(a)
    if d:
        _defense_config(d)
    return spec


def load_spec(path) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise InvalidSpec(f"cannot read spec {path}: {e}") from None
    try:
        raw = yaml.safe_load(text) if path.suffix in (".yaml", ".yml") else json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as e:
        raise InvalidSpec(f"cannot parse spec {path}: {e}") from None
    if not isinstance(raw, dict):
        raise InvalidSpec("spec must be a mapping")
    return validate_spec(raw, path.parent)


def _defense_config(d):
    cls = {"distillation": D.DistillationConfig, "pgd-advt": D.PGDTrainConfig,
           "ensemble-advt": D.EnsembleTrainConfig, "sinkhorn-advt": D.SinkhornTrainConfig,
           "feature-squeezing": D.SqueezeConfig}[d["name"]]
    try:
        return cls(**d.get("config", {}))
    except (TypeError, InvalidArgument) as e:
        raise InvalidSpec(f"defense {d['name']}: {e}") from None


# ----------------------------------------------------------------------------
# datasets and models
# ----------------------------------------------------------------------------

def load_datasets(spec):
    ds = spec.raw["dataset"]
    kind = ds["kind"]
    if kind == "synthetic":
        sp = data.make_splits(ds.get("n_train", 2000), ds.get("n_test", 400), ds.get("classes", 10),
                              ds.get("side", 16), seed=ds.get("seed", spec.seed),
                              n_calib=ds.get("n_calib", 200))
        return sp["train"], sp["test"], sp["calibration"]
    if kind == "cifar10-bin":
        if "test" not in ds:
            raise InvalidSpec("cifar10-bin datasets need a 'test' path")
        test = data.load_cifar10_bin(spec.path(ds["test"]), limit=ds.get("n_test"))
        train = data.load_cifar10_bin(spec.path(ds["train"]), limit=ds.get("n_train"), split="train") \
            if "train" in ds else None
    else:
        if "test_images" not in ds or "test_labels" not in ds:
            raise InvalidSpec("raw datasets need test_images and test_labels")
        k = ds.get("classes", 10)
        test = data.load_raw_dataset(spec.path(ds["test_images"]), spec.path(ds["test_labels"]), k)
        train = data.load_raw_dataset(spec.path(ds["train_images"]), spec.path(ds["train_labels"]), k,
                                      "train") if "train_images" in ds else None
    calib_src = train if train is not None else test
    calib = calib_src.head(min(len(calib_src), ds.get("n_calib", 200)), "calibration")
    return train, test, calib


def _train_cfg(spec):
    t = dict(spec.raw["model"].get("train", {}))
    t.setdefault("seed", spec.seed)
    t.setdefault("lr", 0.01)  # 0.02 and above is unstable on the toy ResNet
    return models.TrainConfig(**t)


def _fresh_model(spec, arch=None, seed_offset=0):
    m = spec.raw["model"]
    ds = spec.raw["dataset"]
    side = ds.get("side", 16)
    shape = (side, side, 3) if ds["kind"] == "synthetic" else (32, 32, 3)
    kw = {"width": m["width"]} if "width" in m else {}
    return models.build(arch or m["arch"], shape, ds.get("classes", 10),
                        seed=m.get("seed", spec.seed) + seed_offset, **kw)


def load_float_model(spec, train):
    m = spec.raw["model"]
    if "path" in m:
        model = serialize.load_model(spec.path(m["path"]))
        if not isinstance(model, models.ModelGraph):
            raise InvalidSpec("the model reference must be a float model container")
        return model
    if train is None:
        raise InvalidSpec("training a model needs a training split")
    model, trace = models.train(_fresh_model(spec), train, _train_cfg(spec))
    model.metadata = dict(model.metadata, loss_trace=trace)
    return model


def variants(model, calib, bitwidths):
    out = {}
    for b in bitwidths:
        out[b] = model if b == "float32" else quant.quantize_model(model, calib.images, int(b[3:]))
    return out


# ----------------------------------------------------------------------------
# running attacks
# ----------------------------------------------------------------------------

def run_attack(name, cfg, x, y, index, float_model=None, target=None, preprocess=None):
    """One sample.  ``target`` is the model whose score/decision oracle gray and
    black-box attacks see (defaults to the float model); ``preprocess`` wraps it."""
    target = target if target is not None else float_model
    probs, predict = target.probs, target.predict
    if preprocess is not None:
        probs = lambda a, f=target.probs: f(preprocess(a))
        predict = lambda a, f=target.predict: f(preprocess(a))
    tier = A.tier(name)
    try:
        if tier == "white":
            g = GradientOracle(float_model)
            if name == "fgsm":
                return A.fgsm(g, x, y, cfg=cfg)
            if name == "deepfool":
                return A.deepfool(g, x, y, cfg)
            if name == "jsma":
                return A.jsma(g, x, y, cfg)
            if name in ("cw-l2", "cw-linf"):
                return A.cw(g, x, y, name[3:], cfg)
            if name == "pgd":
                return A.pgd(g, x, y, cfg, index)
            if name == "ead":
                return A.ead(g, x, y, cfg)
            return A.autoattack(g, ScoreOracle(probs, target.input_shape), x, y, cfg, index)
        if tier == "gray":
            s = ScoreOracle(probs, target.input_shape)
            if name == "zoo":
                return A.zoo(s, x, y, cfg, index)
            return A.square_attack(s, x, y, cfg, index)
        dec = DecisionOracle(predict, target.input_shape)
        if name == "boundary":
            return A.boundary_attack(dec, x, y, cfg, index)
        return A.geoda(dec, x, y, cfg, index)
    except (InitFailed, BoundaryNotBracketed, GradientDegenerate) as e:
        decide = DecisionOracle(predict, target.input_shape)
        from .attacks.base import failed
        return failed(decide, x, y, name, extras={"error": f"{type(e).__name__}: {e}"})


def attack_set(name, cfg, images, labels, **kw):
    return [run_attack(name, cfg, x, int(y), i, **kw) for i, (x, y) in enumerate(zip(images, labels))]


def calibrate_attack(spec, entry, float_model, images, labels, num_classes):
    """Double the attack's strength parameter until float accuracy falls below chance."""
    name = entry["name"]
    key = _STRENGTH[name]
    cfg = spec.attack_config(entry)
    cap = entry.get("calibration_cap", 8)
    chance = 1.0 / num_classes
    steps = 0
    while True:
        results = attack_set(name, cfg, images, labels, float_model=float_model)
        acc = metrics.adversarial_accuracy(float_model, results)
        if acc < chance or steps >= cap:
            return cfg, results, {"parameter": key, "value": getattr(cfg, key), "doublings": steps,
                                  "float_accuracy": acc, "met": acc < chance}
        steps += 1
        over = {key: getattr(cfg, key) * 2}
        if name == "pgd":
            over["step"] = cfg.step * 2
        cfg = spec.attack_config(entry, **over)


# ----------------------------------------------------------------------------
# report assembly
# ----------------------------------------------------------------------------

def _queries(results):
    q = [r.queries for r in results]
    return {"mean": float(np.mean(q)), "max": int(np.max(q)), "total": int(np.sum(q))}


def _accuracy(model, images, labels, preprocess=None):
    x = preprocess(images) if preprocess else images
    return float(np.mean(models.predict_labels(model, x) == labels))


def defense_success(baseline_accuracy, adversarial_accuracy):
    """True when the accuracy drop stays strictly below 20 points."""
    drop = round((baseline_accuracy - adversarial_accuracy) * 100.0, 9)
    return drop < DROP_LIMIT_POINTS


class _Store:
    def __init__(self, spec, out_dir):
        self.enabled = spec.output["store_examples"] and out_dir is not None
        self.dir = Path(out_dir) / "examples" if out_dir is not None else None

    def save(self, key, results):
        if not self.enabled:
            return None
        self.dir.mkdir(parents=True, exist_ok=True)
        adv = np.stack([r.adversarial for r in results])
        lab = np.array([r.original_label for r in results], dtype=np.float32)
        data.write_raw_tensor(self.dir / f"{key}.adv.bin", adv)
        data.write_raw_tensor(self.dir / f"{key}.labels.bin", lab)
        return f"examples/{key}.adv.bin"


def _tag(entry):
    return entry.get("tag", entry["name"])


def _sweep(entry):
    return {"sweep": entry["sweep_value"], "label": entry["tag"]} if "sweep_value" in entry else {}


def _cell(attack, bitwidth, acc, results, source=None, **extra):
    stats = metrics.DistortionStats.from_results(results)
    cell = {"attack": attack, "bitwidth": bitwidth, "accuracy": acc,
            "distortion": stats.to_dict(), "n": stats.n, "n_success": stats.n_success,
            "queries": _queries(results), "examples": source}
    cell.update(extra)
    return cell


def _manifest(spec, extra=None):
    m = {"code_version": __version__, "seed": spec.seed, "spec_hash": serialize.config_hash(spec.raw),
         "spec": spec.to_dict()}
    m.update(extra or {})
    return m


def _diagnostics(spec, float_model, varts, test):
    dg = spec.raw.get("diagnostics") or {}
    if not dg:
        return {}
    n = min(dg.get("samples", 20), len(test))
    xs, ys = test.images[:n], test.labels[:n]
    h = dg.get("h", 1e-4)
    out = {"h": h, "samples": n}
    if dg.get("zero_density"):
        out["zero_density"] = {
            b: float(np.mean([metrics.gradient_zero_density(metrics.loss_function(m, int(y)), [x], h)
                              for x, y in zip(xs, ys)]))
            for b, m in varts.items()}
    if dg.get("cosine"):
        gf = GradientOracle(float_model)
        table = {}
        for b, m in varts.items():
            other = float_model if b == "float32" else quant.dequantize_model(m)
            c = metrics.gradient_cosine_similarity(gf, GradientOracle(other), xs, ys)
            table[b] = {"mean": c.mean, "n_used": c.n_used, "n_zero": c.n_zero}
        out["cosine"] = table
    if dg.get("boundary_distance"):
        bd = metrics.boundary_distance(GradientOracle(float_model), xs, ys)
        out["boundary_distance"] = {"mean": bd.mean, "n_used": bd.n_used, "n_skipped": bd.n_skipped}
    return out


# ----------------------------------------------------------------------------
# protocols
# ----------------------------------------------------------------------------

def _prepare(spec):
    train, test, calib = load_datasets(spec)
    model = load_float_model(spec, train)
    n = min(spec.samples, len(test))
    return train, test, calib, model, test.images[:n], test.labels[:n]


def run_direct(spec, out_dir=None):
    """Each bit-width is attacked through its own score/decision oracle."""
    _, test, calib, model, xs, ys = _prepare(spec)
    varts = variants(model, calib, spec.bitwidths)
    store = _Store(spec, out_dir)
    cells = []
    for entry in spec.attacks:
        name = entry["name"]
        cal = None
        for b, target in varts.items():
            if b == "float32" and entry.get("calibrate"):
                cfg, results, cal = calibrate_attack(spec, entry, model, xs, ys, model.num_classes)
            else:
                cfg = spec.attack_config(entry) if cal is None else spec.attack_config(
                    entry, **{cal["parameter"]: cal["value"]})
                results = attack_set(name, cfg, xs, ys, float_model=model, target=target)
            src = store.save(f"{_tag(entry)}__{b}", results)
            cells.append(_cell(name, b, metrics.adversarial_accuracy(target, results), results, src,
                               clean_accuracy=_accuracy(target, xs, ys), params=cfg.to_dict(),
                               calibration=cal, **_sweep(entry)))
    report = {"protocol": "direct", "cells": cells,
              "diagnostics": _diagnostics(spec, model, varts, test), "manifest": _manifest(spec)}
    return report


def _transfer_cells(spec, entry, model, varts, xs, ys, store, prefix="", preprocess=None,
                    results=None, cfg=None, extra_fn=None):
    name = entry["name"]
    cal = None
    if results is None:
        if entry.get("calibrate"):
            cfg, results, cal = calibrate_attack(spec, entry, model, xs, ys, model.num_classes)
        else:
            cfg = spec.attack_config(entry)
            results = attack_set(name, cfg, xs, ys, float_model=model)
    src = store.save(f"{prefix}{_tag(entry)}__float32", results)
    adv = np.stack([r.adversarial for r in results])
    cells = []
    for b, target in varts.items():
        perceived = adv if b == "float32" else quant.quantize_adversarial_input(adv, target)
        acc = _accuracy(target, perceived, ys, preprocess)
        extra = {"clean_accuracy": _accuracy(target, xs, ys, preprocess), "params": cfg.to_dict(),
                 "calibration": cal, "source_bitwidth": "float32"}
        if extra_fn:
            extra.update(extra_fn(b, target, perceived))
        cells.append(_cell(name, b, acc, results, src, **extra, **_sweep(entry)))
    return cells, results, cfg


def run_transfer(spec, out_dir=None):
    """Examples crafted once on the float model, then snapped onto each integer input lattice."""
    _, test, calib, model, xs, ys = _prepare(spec)
    varts = variants(model, calib, spec.bitwidths)
    store = _Store(spec, out_dir)
    cells = []
    for entry in spec.attacks:
        c, _, _ = _transfer_cells(spec, entry, model, varts, xs, ys, store)
        cells += c
    return {"protocol": "transfer", "cells": cells,
            "diagnostics": _diagnostics(spec, model, varts, test), "manifest": _manifest(spec)}


def _sources(spec, train, model):
    d = spec.defense
    if d.get("sources"):
        return [serialize.load_model(spec.path(p)) for p in d["sources"]]
    arch = model.metadata.get("arch", spec.raw["model"].get("arch", "toy-resnet"))
    sibling = "toy-dscnn" if arch == "toy-resnet" else "toy-resnet"
    src, _ = models.train(_fresh_model(spec, sibling, seed_offset=1), train, _train_cfg(spec))
    return [src]


def harden(spec, model, train):
    """Apply a training defense starting from a fresh copy of the model's architecture."""
    d = spec.defense
    cfg = _defense_config(d)
    if train is None:
        raise InvalidSpec("training defenses need a training split")
    init = _fresh_model(spec) if "arch" in spec.raw["model"] else model
    if d["name"] == "distillation":
        return D.distill_train(init, train, cfg)
    if d["name"] == "pgd-advt":
        return D.pgd_adversarial_train(init, train, cfg)
    if d["name"] == "sinkhorn-advt":
        return D.sinkhorn_adversarial_train(init, train, cfg)
    return D.ensemble_adversarial_train(init, train, _sources(spec, train, model), cfg)


def run_defense_eval(spec, out_dir=None):
    """Defended accuracy per (attack, bit-width) with the 20-point success rule.

    The baseline of every cell is the undefended model's clean accuracy at that
    bit-width.  Training defenses retrain the float model, quantize it, and are
    attacked like the transfer protocol; feature squeezing is evaluated against
    the examples crafted on the undefended models unless ``recraft`` is set.
    """
    train, test, calib, model, xs, ys = _prepare(spec)
    d = spec.defense
    base = variants(model, calib, spec.bitwidths)
    baseline = {b: _accuracy(m, xs, ys) for b, m in base.items()}
    store = _Store(spec, out_dir)
    cells = []
    if d["name"] == "feature-squeezing":
        sq = _defense_config(d)
        squeeze = D.squeezer(sq)
        for entry in spec.attacks:
            def undefended(b, target, perceived):
                return {"undefended_accuracy": _accuracy(target, perceived, ys)}
            if d.get("recraft"):
                name = entry["name"]
                cfg = spec.attack_config(entry)
                for b, target in base.items():
                    res = attack_set(name, cfg, xs, ys, float_model=model, target=target, preprocess=squeeze)
                    src = store.save(f"squeezed__{_tag(entry)}__{b}", res)
                    adv = np.stack([r.adversarial for r in res])
                    acc = _accuracy(target, adv, ys, squeeze)
                    cells.append(_cell(name, b, acc, res, src, clean_accuracy=_accuracy(target, xs, ys, squeeze),
                                       params=cfg.to_dict(), recrafted=True, **_sweep(entry)))
            else:
                c, _, _ = _transfer_cells(spec, entry, model, base, xs, ys, store, preprocess=squeeze,
                                          extra_fn=undefended)
                cells += c
        defended = base
        info = {"kind": "feature-squeezing", "config": sq.to_dict()}
    else:
        hardened = harden(spec, model, train)
        defended = variants(hardened, calib, spec.bitwidths)
        for entry in spec.attacks:
            c, _, _ = _transfer_cells(spec, entry, hardened, defended, xs, ys, store, prefix="defended__")
            cells += c
        info = dict(hardened.metadata["defense"])
        info["loss_trace"] = hardened.metadata.get("loss_trace")
    for cell in cells:
        cell["baseline_accuracy"] = baseline[cell["bitwidth"]]
        cell["success"] = defense_success(baseline[cell["bitwidth"]], cell["accuracy"])
    return {"protocol": "defense-eval", "cells": cells, "defense": info,
            "diagnostics": _diagnostics(spec, model, base, test), "manifest": _manifest(spec)}


PROTOCOLS = {"direct": run_direct, "transfer": run_transfer, "defense-eval": run_defense_eval}


def run(spec, out_dir=None):
    out_dir = out_dir if out_dir is not None else spec.path(spec.output["dir"])
    report = PROTOCOLS[spec.protocol](spec, out_dir)
    return emit_report(report, out_dir, spec.output["formats"]), report


# ----------------------------------------------------------------------------
# emission
# ----------------------------------------------------------------------------

def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    return o


def report_json(report) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def report_csv(report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for c in report["cells"]:
        m = c["distortion"]["mean_all"]
        w.writerow([c.get("label", c["attack"]), c["bitwidth"], repr(float(c["accuracy"]))]
                   + [repr(float(m[k])) for k in metrics.NORMS] + [c["n"], c["n_success"]])
    return buf.getvalue()


def emit_report(report, out_dir, formats=("json", "csv")):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out / "report.json"
        p.write_text(report_json(report))
        written.append(p)
    if "csv" in formats:
        p = out / "report.csv"
        p.write_text(report_csv(report))
        written.append(p)
    return written


def load_report(path):
    return json.loads(Path(path).read_text())


def recompute_accuracy(report_dir, cell, model):
    """Accuracy of ``model`` on a cell's stored examples (snapped onto the model's input lattice)."""
    base = Path(report_dir)
    adv = data.read_raw_tensor(base / cell["examples"])
    labels = data.read_raw_tensor(base / cell["examples"].replace(".adv.bin", ".labels.bin")).astype(np.int64)
    if isinstance(model, quant.QuantizedModel):
        adv = quant.quantize_adversarial_input(adv, model)
    return float(np.mean(models.predict_labels(model, adv) == labels))
