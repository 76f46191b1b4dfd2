"""Command-line front end.

Exit codes: 0 success, 2 invalid spec or usage, 1 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, harness, metrics, models, quant, serialize
from .errors import InvalidSpec, TinyAdvError

log = logging.getLogger("tinyadv")


def _common(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help="override the spec seed")
    p.add_argument("--out", default=d, help="output directory")
    p.add_argument("--config", default=d, help="experiment spec (JSON or YAML)")


def build_parser():
    ap = argparse.ArgumentParser(prog="tinyadv", description="Adversarial robustness workbench for tiny float "
                                 "and fixed-point classifiers.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    _common(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", metavar="{train,quantize,attack,defend,eval,report}")
    sub.required = True

    p = sub.add_parser("train", help="train the spec's model and save it")
    _common(p, True)

    p = sub.add_parser("quantize", help="quantize a float model container")
    _common(p, True)
    p.add_argument("--model", required=True, help="float model container")
    p.add_argument("--bits", type=int, choices=(8, 16), default=8)

    p = sub.add_parser("attack", help="run one attack against a model and store the results")
    _common(p, True)
    p.add_argument("--model", help="model container (float or quantized); defaults to the spec's model")
    p.add_argument("--attack", required=True, choices=sorted(harness._CONFIGS))
    p.add_argument("--params", default="{}", help="attack config overrides as JSON")

    p = sub.add_parser("defend", help="train the spec's defense and save the hardened model")
    _common(p, True)

    p = sub.add_parser("eval", help="run an experiment spec and write report files")
    _common(p, True)

    p = sub.add_parser("report", help="render a report JSON as CSV")
    _common(p, True)
    p.add_argument("report", help="report.json")
    return ap


def _spec(args):
    if not args.config:
        raise InvalidSpec("--config is required")
    spec = harness.load_spec(args.config)
    if args.seed is not None:
        spec.raw["seed"] = args.seed
        spec = harness.validate_spec(spec.raw, spec.base_dir)
    return spec


def _out(args, spec=None, default="out"):
    if args.out:
        return Path(args.out)
    if spec is not None:
        return spec.path(spec.output["dir"])
    return Path(default)


def cmd_train(args):
    spec = _spec(args)
    train, test, _ = harness.load_datasets(spec)
    model = harness.load_float_model(spec, train)
    out = _out(args, spec)
    out.mkdir(parents=True, exist_ok=True)
    serialize.save_model(model, out / "model.bin")
    print(json.dumps({"model": str(out / "model.bin"), "test_accuracy": models.evaluate_accuracy(model, test)}))


def cmd_quantize(args):
    model = serialize.load_model(args.model)
    if not isinstance(model, models.ModelGraph):
        raise InvalidSpec("quantize expects a float model container")
    spec = _spec(args)
    _, _, calib = harness.load_datasets(spec)
    qm = quant.quantize_model(model, calib.images, args.bits)
    out = _out(args, spec)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"model-int{args.bits}.bin"
    serialize.save_model(qm, path)
    print(json.dumps({"model": str(path)}))


def cmd_attack(args):
    spec = _spec(args)
    train, test, _ = harness.load_datasets(spec)
    target = serialize.load_model(args.model) if args.model else harness.load_float_model(spec, train)
    try:
        overrides = json.loads(args.params)
    except json.JSONDecodeError as e:
        raise InvalidSpec(f"--params: {e}") from None
    entry = {"name": args.attack, "config": overrides}
    cfg = spec.attack_config(entry)
    is_float = isinstance(target, models.ModelGraph)
    if harness.A.tier(args.attack) == "white" and not is_float:
        raise InvalidSpec(f"white-box attack {args.attack} needs a float model")
    n = min(spec.samples, len(test))
    xs, ys = test.images[:n], test.labels[:n]
    results = harness.attack_set(args.attack, cfg, xs, ys, float_model=target if is_float else None,
                                 target=target)
    out = _out(args, spec)
    key = f"{args.attack}__{'float32' if is_float else f'int{target.bits}'}"
    store = harness._Store(spec, out)
    store.enabled = True
    src = store.save(key, results)
    summary = {"attack": args.attack, "accuracy": metrics.adversarial_accuracy(target, results),
               "distortion": metrics.DistortionStats.from_results(results).to_dict(),
               "examples": src, "params": cfg.to_dict(), "results": [r.summary() for r in results]}
    (out / f"{key}.json").write_text(harness.report_json(summary))
    print(json.dumps({"accuracy": summary["accuracy"], "results": str(out / f"{key}.json")}))


def cmd_defend(args):
    spec = _spec(args)
    if not spec.defense or spec.defense["name"] == "feature-squeezing":
        raise InvalidSpec("defend needs a training defense in the spec")
    train, test, _ = harness.load_datasets(spec)
    model = harness.load_float_model(spec, train)
    hardened = harness.harden(spec, model, train)
    out = _out(args, spec)
    out.mkdir(parents=True, exist_ok=True)
    serialize.save_model(hardened, out / "hardened.bin")
    print(json.dumps({"model": str(out / "hardened.bin"),
                      "test_accuracy": models.evaluate_accuracy(hardened, test)}))


def cmd_eval(args):
    spec = _spec(args)
    written, _ = harness.run(spec, _out(args, spec))
    for p in written:
        print(p)


def cmd_report(args):
    try:
        report = harness.load_report(args.report)
    except (OSError, json.JSONDecodeError) as e:
        raise InvalidSpec(f"cannot read report: {e}") from None
    text = harness.report_csv(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(text)
    else:
        sys.stdout.write(text)


COMMANDS = {"train": cmd_train, "quantize": cmd_quantize, "attack": cmd_attack, "defend": cmd_defend,
            "eval": cmd_eval, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        COMMANDS[args.command](args)
    except InvalidSpec as e:
        print(f"invalid spec: {e}", file=sys.stderr)
        return 2
    except (TinyAdvError, OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
