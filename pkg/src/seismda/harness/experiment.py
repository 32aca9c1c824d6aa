"""Config-driven experiments: simulate a fleet, preprocess, train, evaluate."""
from __future__ import annotations

import copy
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .. import adapt, physweights, quakesim, sigprep
from ..errors import ConfigurationError, SeismdaError
from .diagnostics import proxy_a_distance, write_csv
from .metrics import summary

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

ADVERSARIAL = ("phymdan", "mdan", "c_dann", "b_dann")


@dataclass
class ExperimentConfig:
    buildings: list
    target: str
    sources: list
    motions: dict = field(default_factory=lambda: {"n_motions": 8, "seed": 11})
    scales: list = field(default_factory=lambda: [0.6, 1.2, 2.4, 4.8])
    story: int = 2
    task: str = "detection"
    prep: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    weight_props: list = field(default_factory=lambda: ["H"])
    eps: float = physweights.DEFAULT_EPS
    variants: list = field(default_factory=lambda: ["phymdan", "mdan", "c_cnn"])
    seeds: list = field(default_factory=lambda: [0])
    lambda_grid: list = field(default_factory=lambda: [0.01, 0.1, 0.5])
    sweep_variant: str = "phymdan"
    sweep_folds: int = 1
    saturation: float = 0.99
    pad: dict = field(default_factory=lambda: {"epochs": 30, "max_samples": 1000})
    out: str = "runs/experiment"

    def __post_init__(self):
        ids = [b.get("id") for b in self.buildings]
        if None in ids or len(set(ids)) != len(ids):
            raise ConfigurationError("every building needs a unique 'id'")
        if self.target in self.sources:
            raise ConfigurationError(f"target {self.target!r} is also listed as a source")
        missing = [b for b in (self.target, *self.sources) if b not in ids]
        if missing:
            raise ConfigurationError(f"unknown building ids {missing}")
        if not self.sources:
            raise ConfigurationError("need at least one source building")
        if not self.lambda_grid:
            raise ConfigurationError("lambda grid is empty")
        bad = [v for v in self.variants if v not in adapt.MODES]
        if bad:
            raise ConfigurationError(f"unknown variants {bad}")
        if self.task not in quakesim.TASK_CLASSES:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if not self.seeds:
            raise ConfigurationError("need at least one seed")

    @classmethod
    def from_dict(cls, data) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigurationError(f"unknown config keys {extra}")
        try:
            return cls(**copy.deepcopy(data))
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(load_config_file(path))

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self, seed, **changes) -> adapt.TrainConfig:
        kw = {**self.train, "seed": seed, "task": self.task, **changes}
        try:
            return adapt.TrainConfig(**kw)
        except TypeError as exc:
            raise ConfigurationError(f"bad train settings: {exc}") from exc

    def prep_config(self) -> sigprep.PrepConfig:
        try:
            return sigprep.PrepConfig(**self.prep)
        except TypeError as exc:
            raise ConfigurationError(f"bad prep settings: {exc}") from exc


def load_config_file(path) -> dict:
    path = Path(path)
    try:
        if path.suffix == ".toml":
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc


def default_config(name="default") -> ExperimentConfig:
    """Packaged fleet configs: ``"default"`` or ``"small"``."""
    text = resources.files("seismda.data").joinpath(f"{name}_fleet.json").read_text()
    return ExperimentConfig.from_dict(json.loads(text))


# ---------------------------------------------------------------- the fleet

def build_fleet(config) -> dict:
    out = {}
    for b in config.buildings:
        kw = {k: v for k, v in b.items() if k not in ("id", "n_stories", "first_period",
                                                     "properties")}
        try:
            out[b["id"]] = quakesim.shear_building(b["n_stories"], b["first_period"],
                                                   name=b["id"], **kw)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"building {b.get('id')!r}: {exc}") from exc
    return out


def properties_table(config, fleet=None) -> dict:
    """Physical properties per building: N, H, T1 plus any configured extras."""
    fleet = fleet or build_fleet(config)
    table = {}
    for b in config.buildings:
        spec = fleet[b["id"]]
        table[b["id"]] = {"N": spec.n_stories, "H": round(spec.total_height, 9),
                          "T1": round(float(spec.modal_periods()[0]), 9),
                          **b.get("properties", {})}
    return table


def motion_specs(config) -> list:
    kw = dict(config.motions)
    n = kw.pop("n_motions", 8)
    seed = kw.pop("seed", 0)
    if "freq_range" in kw:
        kw["freq_range"] = tuple(kw["freq_range"])
    if "sample_rates" in kw:
        kw["sample_rates"] = tuple(kw["sample_rates"])
    return quakesim.motion_suite(n, seed, **kw)


def simulate_fleet(config, ids=None) -> dict:
    fleet = build_fleet(config)
    motions = motion_specs(config)
    ids = ids or [b["id"] for b in config.buildings]
    return {bid: quakesim.generate_domain_dataset(fleet[bid], motions, config.scales)
            for bid in ids}


_DOMAIN_CACHE: dict = {}


def build_domains(config) -> dict:
    """Labeled ``Dataset`` per building, cached per fleet/motion/prep setting."""
    key = json.dumps([config.buildings, config.motions, config.scales, config.story,
                      config.task, config.prep, config.target, config.sources], sort_keys=True)
    if key not in _DOMAIN_CACHE:
        prep = config.prep_config()
        ids = [config.target, *config.sources]
        records = simulate_fleet(config, ids)
        _DOMAIN_CACHE.clear()
        _DOMAIN_CACHE[key] = {bid: sigprep.assemble_dataset(records[bid], config.story,
                                                             config.task, prep, domain_id=bid)
                              for bid in ids}
    cached = _DOMAIN_CACHE[key]
    # fresh wrappers so label-read counters start at zero for every caller
    return {k: sigprep.Dataset(d.X, d._y, d.domain_id, story=d.story, task=d.task,
                               record_ids=d.record_ids, windows=d.windows,
                               n_classes=d.n_classes, header=d.header)
            for k, d in cached.items()}


def physics_weight_report(config, fleet=None) -> dict:
    table = properties_table(config, fleet)
    return physweights.weight_report(table, config.target, config.sources,
                                     tuple(config.weight_props), config.eps)


# ------------------------------------------------------------------ reports

def _schema(name):
    return json.loads(resources.files("seismda.schemas").joinpath(name).read_text())


def validate_report(report, schema="report.schema.json") -> None:
    try:
        jsonschema.validate(report, _schema(schema))
    except jsonschema.ValidationError as exc:
        raise SeismdaError(f"report does not match {schema}: {exc.message}") from exc


def _dump(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _mixture_sample(sources, weights, n, rng):
    """About ``n`` source samples drawn per-domain in proportion to ``weights``."""
    w = np.asarray(weights, dtype=np.float64)
    raw = w * n
    counts = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - counts), kind="stable")[: n - counts.sum()]:
        counts[i] += 1
    parts = [d.X[np.sort(rng.choice(len(d), size=min(c, len(d)), replace=False))]
             for d, c in zip(sources, counts) if c > 0]
    return np.concatenate(parts)


def domain_shift(model, sources, target, weights, seed, pad_cfg) -> dict:
    """Proxy A-distance of raw spectra and of extracted features, same samples."""
    rng = np.random.default_rng(seed)
    n = min(len(target), int(pad_cfg.get("max_samples", 1000)))
    xt = target.X[np.sort(rng.choice(len(target), size=n, replace=False))]
    xs = _mixture_sample(sources, weights, n, rng)
    kw = {"seed": seed, "epochs": int(pad_cfg.get("epochs", 30))}
    raw = proxy_a_distance(xs, xt, **kw)
    adapted = proxy_a_distance(adapt.features(model, xs), adapt.features(model, xt), **kw)
    return {"pad_raw": raw, "pad_adapted": adapted}


@dataclass
class ExperimentResult:
    reports: list
    comparison: list
    summary: dict
    out_dir: Path | None
    timings: dict


def run_experiment(config: ExperimentConfig, out_dir=None, domains=None) -> ExperimentResult:
    """Train and evaluate every variant for every seed.

    Target labels are read only to score predictions (and by ``b_dann``
    selection and ``target_supervised`` training, which need them); each
    report records how many label reads happened during training.
    """
    out = Path(out_dir) if out_dir is not None else None
    stage = "simulate"
    timings = {}
    try:
        t0 = time.perf_counter()
        fleet = build_fleet(config)
        domains = domains or build_domains(config)
        timings["data_s"] = time.perf_counter() - t0
        stage = "weights"
        wrep = physics_weight_report(config, fleet)
        phys_w = wrep["combined"]["weights"]
        sources = [domains[s] for s in config.sources]
        target = domains[config.target]
        n_cls = quakesim.TASK_CLASSES[config.task]
        reports = []
        for seed in config.seeds:
            for variant in config.variants:
                stage = f"train:{variant}:seed{seed}"
                t1 = time.perf_counter()
                reads_before = target.label_reads
                run = adapt.train_variant(variant, sources, target, config.train_config(seed),
                                          weights=phys_w)
                train_reads = target.label_reads - reads_before
                stage = f"evaluate:{variant}:seed{seed}"
                if variant == "target_supervised":
                    X, y, eval_set = run.holdout.X, run.holdout.y, "target_holdout"
                else:
                    X, y, eval_set = target.X, target.y, "target_all"
                preds, _ = adapt.predict(run.model, X)
                rep = {"variant": variant, "seed": seed, "target": config.target,
                       "sources": list(config.sources), "task": config.task,
                       "story": config.story, "weights": [float(v) for v in run.weights],
                       "eval_set": eval_set, **summary(preds, y, n_cls),
                       "target_label_reads_in_training": int(train_reads),
                       "uses_target_labels": variant in ("b_dann", "target_supervised"),
                       "final_epoch": run.results[run.best].log[-1],
                       "architecture": run.model.architecture()}
                if run.selection is not None:
                    rep["selection"] = run.selection
                if variant != "target_supervised":
                    mix = phys_w if variant == "phymdan" else [1 / len(sources)] * len(sources)
                    rep.update(domain_shift(run.model, sources, target, mix, seed, config.pad))
                validate_report(rep)
                reports.append(rep)
                timings[f"{variant}_seed{seed}_s"] = time.perf_counter() - t1
                if out is not None:
                    tag = f"{variant}_seed{seed}"
                    _dump(rep, out / "reports" / f"{tag}.json")
                    write_csv(_confusion_rows(rep["confusion"]), out / "confusion" / f"{tag}.csv")
                    for k, r in enumerate(run.results):
                        suffix = f"_{run.sources[k]}" if len(run.results) > 1 else ""
                        r.write_log(out / "logs" / f"{tag}{suffix}.jsonl")
        stage = "compare"
        comparison = compare(reports)
        summ = {"config": config.to_dict(), "weights": wrep, "comparison": comparison,
                "checks": acceptance_checks(reports),
                "target_label_reads_in_training": {
                    f"{r['variant']}_seed{r['seed']}": r["target_label_reads_in_training"]
                    for r in reports}}
        validate_report(summ, "summary.schema.json")
        timings["total_s"] = time.perf_counter() - t0
        if out is not None:
            _dump(wrep, out / "weights.json")
            _dump(summ, out / "summary.json")
            write_csv(comparison, out / "comparison.csv")
            _dump(timings, out / "timings.json")
        return ExperimentResult(reports, comparison, summ, out, timings)
    except SeismdaError as exc:
        raise type(exc)(str(exc), stage=stage) from exc


def _confusion_rows(cm):
    return [{"true": i, **{f"pred_{j}": v for j, v in enumerate(row)}} for i, row in enumerate(cm)]


def compare(reports) -> list:
    """Mean and spread of target accuracy per variant, in first-seen order."""
    order = list(dict.fromkeys(r["variant"] for r in reports))
    rows = []
    for v in order:
        rs = [r for r in reports if r["variant"] == v]
        acc = np.array([r["accuracy"] for r in rs])
        row = {"variant": v, "n_seeds": len(rs), "mean_accuracy": float(acc.mean()),
               "std_accuracy": float(acc.std()),
               "mean_pm1_accuracy": float(np.mean([r["pm1_accuracy"] for r in rs])),
               "accuracies": acc.tolist()}
        if all("pad_raw" in r for r in rs):
            row["mean_pad_raw"] = float(np.mean([r["pad_raw"] for r in rs]))
            row["mean_pad_adapted"] = float(np.mean([r["pad_adapted"] for r in rs]))
        rows.append(row)
    return rows


def acceptance_checks(reports) -> dict:
    """Ranking checks between methods, where the needed variants ran."""
    mean = {}
    for r in reports:
        mean.setdefault(r["variant"], []).append(r["accuracy"])
    mean = {k: float(np.mean(v)) for k, v in mean.items()}
    out = {}
    if "phymdan" in mean and "c_cnn" in mean:
        out["phymdan_minus_c_cnn"] = mean["phymdan"] - mean["c_cnn"]
    if "phymdan" in mean and "mdan" in mean:
        out["phymdan_minus_mdan"] = mean["phymdan"] - mean["mdan"]
    phy = [r for r in reports if r["variant"] == "phymdan" and "pad_raw" in r]
    if phy:
        out["pad_adapted_below_raw"] = [bool(r["pad_adapted"] < r["pad_raw"]) for r in phy]
    return out


# ----------------------------------------------------------------- λ sweep

def lambda_sweep(config: ExperimentConfig, domains=None, seed=None) -> list:
    """One row per λ (ascending): discriminator, source and target accuracies.

    With ``sweep_folds > 1`` every λ is trained once per fold and the
    validation numbers are averaged.  ``selected`` marks the λ with the best
    source validation accuracy among rows whose target-side discriminator
    validation accuracy stays below ``saturation`` (all rows if none do).
    """
    domains = domains or build_domains(config)
    seed = config.seeds[0] if seed is None else seed
    sources = [domains[s] for s in config.sources]
    target = domains[config.target]
    phys_w = physics_weight_report(config)["combined"]["weights"]
    rows = []
    for lam in sorted(float(v) for v in config.lambda_grid):
        cells = []
        for fold in range(config.sweep_folds):
            cfg = config.train_config(seed, lam=lam, n_folds=config.sweep_folds, fold=fold)
            run = adapt.train_variant(config.sweep_variant, sources, target, cfg, weights=phys_w)
            last = run.results[run.best].log[-1]
            acc = float(np.mean(adapt.predict(run.model, target.X)[0] == target.y))
            cells.append({"disc_train_acc": float(np.mean(last.get("disc_train_acc", [np.nan]))),
                          "disc_val_acc": float(np.mean(last.get("disc_val_acc", [np.nan]))),
                          "source_val_acc": float(np.mean(last["source_val_acc"])),
                          "target_acc": acc})
        row = {"lam": lam, **{k: float(np.mean([c[k] for c in cells])) for k in cells[0]},
               "folds": config.sweep_folds}
        rows.append(row)
    pool = [r for r in rows if r["disc_val_acc"] < config.saturation] or rows
    best = max(pool, key=lambda r: r["source_val_acc"])
    for r in rows:
        r["selected"] = r is best
    return rows
