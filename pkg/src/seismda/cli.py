"""``seismda`` command line: simulate, preprocess, weights, train, evaluate,
sweep, compare, stats."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import adapt, physweights, quakesim, sigprep
from .errors import ConfigurationError, SeismdaError
from .harness import diagnostics, experiment, metrics

log = logging.getLogger("seismda")


def _experiment_config(args) -> experiment.ExperimentConfig:
    cfg = (experiment.ExperimentConfig.load(args.config) if args.config
           else experiment.default_config("default"))
    if args.seed is not None:
        cfg.seeds = [args.seed]
    return cfg


def _out_dir(args, default) -> Path:
    out = Path(args.out or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_json(obj, args, name):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if args.out:
        path = Path(args.out)
        if path.suffix != ".json":
            path.mkdir(parents=True, exist_ok=True)
            path = path / name
        else:
            path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(path)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands

def cmd_simulate(args):
    cfg = _experiment_config(args)
    out = _out_dir(args, cfg.out + "/records")
    fleet = experiment.build_fleet(cfg)
    motions = experiment.motion_specs(cfg)
    for bid, spec in fleet.items():
        recs = quakesim.generate_domain_dataset(spec, motions, cfg.scales)
        per_record = [asdict(m) for m in motions for _ in cfg.scales]
        quakesim.export_records(recs, out / bid, spec, per_record)
        print(f"{bid}: {len(recs)} records -> {out / bid}")
    (out / "properties.json").write_text(
        json.dumps(experiment.properties_table(cfg, fleet), indent=2, sort_keys=True) + "\n")


def cmd_preprocess(args):
    records = quakesim.load_records(args.inp)
    prep = sigprep.PrepConfig()
    if args.config:
        prep = experiment.ExperimentConfig.load(args.config).prep_config()
    if args.l is not None:
        prep.l = args.l
    if args.f_max is not None:
        prep.f_max = args.f_max
    ds = sigprep.assemble_dataset(records, args.story, args.task, prep, domain_id=args.domain)
    out = Path(args.out or "dataset.npz")
    out.parent.mkdir(parents=True, exist_ok=True)
    ds.save(out)
    print(f"{len(ds)} samples {ds.X.shape[1:]} classes {ds.class_histogram.tolist()} -> {out}")


def cmd_weights(args):
    if args.properties:
        table = json.loads(Path(args.properties).read_text())
    else:
        table = physweights.STEEL_ARCHETYPES
    if args.target not in table:
        raise ConfigurationError(f"target {args.target!r} not in the property table")
    sources = args.sources.split(",") if args.sources else [k for k in table if k != args.target]
    props = tuple(p.strip() for p in args.props.split(","))
    unknown = [p for p in props if any(p not in table[b] for b in (args.target, *sources))]
    if unknown:
        raise ConfigurationError(f"properties {unknown} missing from the table")
    _emit_json(physweights.weight_report(table, args.target, sources, props, args.eps), args,
               "weights.json")


def _train_config(args, mode):
    base = {}
    if args.config:
        base = dict(experiment.ExperimentConfig.load(args.config).train)
    for key in ("lam", "epochs", "lr", "width", "batch_size"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.seed is not None:
        base["seed"] = args.seed
    return adapt.TrainConfig(**base)


def cmd_train(args):
    sources = [sigprep.Dataset.load(p) for p in args.sources.split(",")] if args.sources else []
    target = sigprep.Dataset.load(args.target) if args.target else None
    first = sources[0] if sources else target
    if first is None:
        raise ConfigurationError("give --sources and/or --target datasets")
    cfg = _train_config(args, args.mode)
    cfg.task = first.task
    weights = [float(v) for v in args.weights.split(",")] if args.weights else None
    run = adapt.train_variant(args.mode, sources, target, cfg, weights=weights)
    out = _out_dir(args, "model")
    run.model.save(out / "model.npz")
    meta = {"mode": args.mode, "architecture": run.model.architecture(),
            "train": cfg.to_dict(), "sources": run.sources, "weights": run.weights}
    if run.selection:
        meta["selection"] = run.selection
    (out / "model.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    for k, r in enumerate(run.results):
        r.write_log(out / (f"log_{run.sources[k]}.jsonl" if len(run.results) > 1 else "log.jsonl"))
    print(f"trained {args.mode} -> {out}")


def load_model(model_dir) -> adapt.PhyMDANModel:
    model_dir = Path(model_dir)
    meta = json.loads((model_dir / "model.json").read_text())
    arch = meta["architecture"]
    model = adapt.build_model(arch["task"], arch["n_domains"], arch["l"], arch["width"],
                              arch["slope"])
    model.load(model_dir / "model.npz")
    return model


def cmd_evaluate(args):
    model = load_model(args.model)
    data = sigprep.Dataset.load(args.data)
    preds, _ = adapt.predict(model, data.X)
    rep = {"data": str(args.data), "domain": data.domain_id,
           **metrics.summary(preds, data.y, model.n_classes)}
    out = _out_dir(args, "evaluation")
    (out / "metrics.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    diagnostics.write_csv(experiment._confusion_rows(rep["confusion"]), out / "confusion.csv")
    print(f"accuracy {rep['accuracy']:.4f}  +-1 {rep['pm1_accuracy']:.4f}  -> {out}")


def cmd_sweep(args):
    cfg = _experiment_config(args)
    rows = experiment.lambda_sweep(cfg)
    out = _out_dir(args, cfg.out)
    diagnostics.write_csv(rows, out / "sweep.csv")
    print(f"{len(rows)} lambda values -> {out / 'sweep.csv'}")


def cmd_compare(args):
    cfg = _experiment_config(args)
    res = experiment.run_experiment(cfg, _out_dir(args, cfg.out))
    for row in res.comparison:
        print(f"{row['variant']:>18s}  acc {row['mean_accuracy']:.4f} +- {row['std_accuracy']:.4f}")
    print(f"reports -> {res.out_dir}")


def cmd_stats(args):
    records = quakesim.load_records(args.inp)
    rows = diagnostics.response_stats(records, args.story)
    out = Path(args.out or "stats.csv")
    if out.suffix != ".csv":
        out = out / "stats.csv"
    diagnostics.write_csv(rows, out)
    print(out)


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS so a global flag given before the subcommand is not reset by
    # the subparser's copy of the same option
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="experiment config (.toml or .json)")
    common.add_argument("--seed", type=int, help="override the seed(s)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("--threads", type=int, help="BLAS thread limit")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="seismda", parents=[common],
                                description="Multi-building seismic damage transfer toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate the fleet records")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("preprocess", parents=[common], help="records -> stacked spectra")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--story", type=int, default=2)
    s.add_argument("--task", choices=sorted(quakesim.TASK_CLASSES), default="detection")
    s.add_argument("--domain")
    s.add_argument("--l", type=int)
    s.add_argument("--f-max", type=float)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("weights", parents=[common], help="physics-guided source weights")
    s.add_argument("--properties", help="JSON {building: {property: value}}")
    s.add_argument("--target", required=True)
    s.add_argument("--sources", help="comma list; default all other buildings")
    s.add_argument("--props", default="H")
    s.add_argument("--eps", type=float, default=physweights.DEFAULT_EPS)
    s.set_defaults(func=cmd_weights)

    s = sub.add_parser("train", parents=[common], help="train one method")
    s.add_argument("--sources", help="comma list of dataset files")
    s.add_argument("--target", help="target dataset file")
    s.add_argument("--mode", choices=adapt.MODES, default="phymdan")
    s.add_argument("--weights", help="comma list of source weights (phymdan)")
    s.add_argument("--lam", type=float)
    s.add_argument("--epochs", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--width", type=int)
    s.add_argument("--batch-size", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("evaluate", parents=[common], help="score a trained model")
    s.add_argument("--model", required=True, help="directory written by 'train'")
    s.add_argument("--data", required=True)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", parents=[common], help="lambda grid")
    s.set_defaults(func=cmd_sweep)
    s = sub.add_parser("compare", parents=[common], help="all variants, all seeds")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("stats", parents=[common], help="PFA / SDR statistics per scale")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--story", type=int, default=2)
    s.set_defaults(func=cmd_stats)
    return p


GLOBAL_DEFAULTS = {"config": None, "seed": None, "out": None, "threads": None, "verbose": False}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for name, default in GLOBAL_DEFAULTS.items():
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(args.threads):
                args.func(args)
        else:
            args.func(args)
    except SeismdaError as exc:
        print(f"seismda {args.command}: [{exc.stage}] {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, ValueError) as exc:
        print(f"seismda {args.command}: [{args.command}] {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
