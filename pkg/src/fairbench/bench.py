"""Benchmark sweeps and their aggregation into tables and trade-off curves.

A run configuration names a dataset, the methods with their strength grids,
the seeds, and the formats/notions to evaluate. Every (method, strength,
seed) triple yields one :class:`RunRecord`, appended to
``<output_dir>/records.jsonl`` as soon as it finishes.
"""

from __future__ import annotations

import concurrent.futures
import copy
import csv
import dataclasses
import hashlib
import io
import json
import logging
import math
import time
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import inmethods, postmethods, premethods
from .data import (
    FORMATS,
    DualLabelConfig,
    TabularDataset,
    encode_sensitive,
    generate_dual_label,
    load_csv,
    restandardize,
    split_indices,
)
from .errors import ConfigError, FairbenchError, InferenceError, TableError
from .metrics import NOTIONS, OUTPUT_TYPES, evaluate, harden
from .model import TrainConfig, forward, init_scorer, train

logger = logging.getLogger(__name__)

# standard strength grids per method
DEFAULT_STRENGTHS = {
    "data_repairer": [0.1, 0.5, 0.8, 0.9, 1],
    "label_flipping": [0.001, 0.01, 0.03, 0.1, 0.3],
    "prevalence_sampling": [0.1, 0.5, 0.8, 0.9, 1],
    "fairret_norm": [0.001, 0.01, 0.1, 1, 3],
    "prejudice_remover": [0.001, 0.01, 0.1, 0.3, 1],
    "exponentiated_gradient": [0.8, 0.9, 0.95, 0.99, 1],
    "error_parity": [0.005, 0.01, 0.05, 0.1, 0.3],
}
STAGES = {
    "naive": "none",
    **{m: "pre" for m in premethods.PREMETHODS},
    **{m: "in" for m in inmethods.INMETHODS},
    **{m: "post" for m in postmethods.POSTMETHODS},
}
UNSUPPORTED = {
    "fairret_kl_proj": "fairret_kl_proj is not implemented (projection objective unavailable)",
    "laftr": "laftr is not implemented (adversary architecture and objective unspecified)",
    "learning_fair_representations": "learning_fair_representations is not implemented",
}
DEFAULT_MODEL = {"hidden": [64], "learning_rate": 0.001, "epochs": 80, "batch_size": 64, "optimizer": "adam"}


# ---------------------------------------------------------------------------
# Configuration


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as f:
        config = json.load(f)
    # relative paths are taken relative to the config file
    base = Path(path).parent
    ds = config.get("dataset", {})
    for key in ("csv", "schema"):
        if isinstance(ds.get(key), str) and not Path(ds[key]).is_absolute():
            ds[key] = str(base / ds[key])
    if isinstance(config.get("output_dir"), str) and not Path(config["output_dir"]).is_absolute():
        config["output_dir"] = str(base / config["output_dir"])
    return config


def normalize_config(config: dict) -> dict:
    """Fill defaults and validate a run configuration."""
    cfg = copy.deepcopy(config)
    if "dataset" not in cfg:
        raise ConfigError("config has no 'dataset' entry")
    ds = cfg["dataset"]
    if not (("csv" in ds and "schema" in ds) or "synthetic" in ds):
        raise ConfigError("dataset needs either 'csv' and 'schema' or 'synthetic'")

    methods = []
    for entry in cfg.get("methods", []):
        entry = {"name": entry} if isinstance(entry, str) else dict(entry)
        name = entry.get("name")
        if name in UNSUPPORTED:
            raise ConfigError(UNSUPPORTED[name])
        if name not in STAGES or name == "naive":
            raise ConfigError(f"unknown method {name!r}; expected one of {sorted(set(STAGES) - {'naive'})}")
        entry.setdefault("strengths", DEFAULT_STRENGTHS[name])
        entry.setdefault("format", "intersectional")
        entry.setdefault("notion", "dem_par")
        if entry["format"] not in FORMATS:
            raise ConfigError(f"{name}: unknown format {entry['format']!r}")
        methods.append(entry)
    cfg["methods"] = methods
    cfg.setdefault("seeds", [0, 1, 2, 3, 4])
    cfg.setdefault("formats", list(FORMATS))
    cfg.setdefault("notions", list(NOTIONS))
    cfg.setdefault("split", [0.6, 0.2, 0.2])
    cfg.setdefault("binary_attr", 0)
    cfg["model"] = {**DEFAULT_MODEL, **cfg.get("model", {})}
    for f in cfg["formats"]:
        if f not in FORMATS:
            raise ConfigError(f"unknown format {f!r}; expected one of {list(FORMATS)}")
    for n in cfg["notions"]:
        if n not in NOTIONS:
            raise ConfigError(f"unknown notion {n!r}; expected one of {list(NOTIONS)}")
    return cfg


def config_hash(config: dict) -> str:
    relevant = {k: v for k, v in config.items() if k not in ("output_dir", "workers")}
    blob = json.dumps(relevant, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def load_dataset(config: dict) -> TabularDataset:
    ds = config["dataset"]
    if "synthetic" in ds:
        try:
            return generate_dual_label(DualLabelConfig(**ds["synthetic"]))
        except TypeError as exc:
            raise ConfigError(f"bad synthetic dataset settings: {exc}") from None
    return load_csv(ds["csv"], ds["schema"])


def derive_seed(seed: int, method: str, strength) -> int:
    """Seed for method-internal randomness, independent of scheduling."""
    entropy = [int(seed), zlib.crc32(method.encode()), zlib.crc32(repr(strength).encode())]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Records


@dataclass
class RunRecord:
    method: str
    stage: str
    strength: float | None
    seed: int
    report: dict = field(default_factory=dict)
    wall_time: float = 0.0
    warnings: list[str] = field(default_factory=list)
    failed: bool = False
    error: str | None = None
    metadata: dict = field(default_factory=dict)
    config_hash: str = ""

    def __post_init__(self):
        self._index = None

    @property
    def key(self):
        return (self.method, self.strength, self.seed)

    def _cells(self):
        if self._index is None:
            self._index = {
                (c["target"], c["format"], c["notion"], c["output_type"]): c
                for c in self.report.get("cells", [])
            }
        return self._index

    def has_cell(self, format, notion, output_type, target="biased") -> bool:
        return (target, format, notion, output_type) in self._cells()

    def violation(self, format, notion, output_type, target="biased"):
        cell = self._cells().get((target, format, notion, output_type))
        return None if cell is None else cell["violation"]

    def performance(self, output_type, target="biased"):
        return self.report.get("performance", {}).get(target, {}).get(output_type)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "RunRecord":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in doc.items() if k in names})


def read_records(path) -> list[RunRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                records.append(RunRecord.from_dict(json.loads(line)))
    return records


def _append_record(path, record: RunRecord):
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(record.to_dict(), sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Single run


@dataclass
class _Context:
    config: dict
    dataset: TabularDataset
    encodings: dict  # format -> full-data SensitiveEncoding
    chash: str


def _train_config(model_cfg: dict, seed: int, penalty_weight: float = 0.0) -> TrainConfig:
    return TrainConfig(
        learning_rate=model_cfg["learning_rate"],
        epochs=model_cfg["epochs"],
        batch_size=model_cfg["batch_size"],
        optimizer=model_cfg["optimizer"],
        penalty_weight=penalty_weight,
        seed=seed,
    )


def _encoding_for(ctx: _Context, format: str):
    if format not in ctx.encodings:
        ctx.encodings[format] = encode_sensitive(ctx.dataset, format, ctx.config["binary_attr"])
    return ctx.encodings[format]


def run_single(ctx: _Context, method: dict | None, strength, seed: int) -> RunRecord:
    """Split, mitigate, train and evaluate for one (method, strength, seed)."""
    name = "naive" if method is None else method["name"]
    record = RunRecord(name, STAGES[name], strength, seed, config_hash=ctx.chash)
    cfg = ctx.config
    start = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            scores, meta, test, test_idx = _execute(ctx, method, strength, seed)
        record.warnings.extend(str(w.message) for w in caught)
        record.metadata.update(meta)
        encs = [_encoding_for(ctx, f).take(test_idx) for f in cfg["formats"]]
        report = evaluate(scores, test, encs, cfg["notions"])
        record.report = report.to_dict()
        undefined = sum(c.stats.n_undefined for c in report.cells if c.stats is not None)
        if undefined:
            record.warnings.append(f"{undefined} undefined group statistics skipped")
        errors = {c.error for c in report.cells if c.error}
        record.warnings.extend(sorted(errors))
    except FairbenchError as exc:
        record.failed = True
        record.error = f"{type(exc).__name__}: {exc}"
        logger.warning("run %s failed: %s", record.key, record.error)
    record.wall_time = time.perf_counter() - start
    return record


def restandardize_split(dataset, fractions, seed):
    return restandardize([dataset.subset(i) for i in split_indices(dataset.n, fractions, seed)])


def _execute(ctx: _Context, method, strength, seed):
    cfg = ctx.config
    idx_train, _, idx_test = split_indices(ctx.dataset.n, cfg["split"], seed)
    train_ds, _, test_ds = restandardize_split(ctx.dataset, cfg["split"], seed)
    meta = {}
    scores = _scores_for(ctx, method, strength, seed, train_ds, test_ds, idx_train, idx_test, meta)
    return scores, meta, test_ds, idx_test


def _scores_for(ctx, method, strength, seed, train_ds, test_ds, idx_train, idx_test, meta):
    model_cfg = ctx.config["model"]
    if method is None:
        scorer = train(init_scorer(train_ds.d, model_cfg["hidden"], seed), train_ds, _train_config(model_cfg, seed))
        return forward(scorer, test_ds.features)

    name = method["name"]
    stage = STAGES[name]
    enc_train = _encoding_for(ctx, method["format"]).take(idx_train)
    enc_test = _encoding_for(ctx, method["format"]).take(idx_test)
    method_seed = derive_seed(seed, name, strength)
    meta.update(format=method["format"], method_seed=method_seed)

    if stage == "pre":
        if name == "data_repairer":
            train_ds = premethods.data_repairer(train_ds, enc_train, strength)
        elif name == "label_flipping":
            train_ds = premethods.label_flipping(train_ds, enc_train, strength, method_seed)
            meta["labels_flipped"] = int(np.sum(train_ds.labels != ctx.dataset.labels[idx_train]))
        else:
            train_ds = premethods.prevalence_sampling(train_ds, enc_train, strength, method_seed)
        scorer = train(init_scorer(train_ds.d, model_cfg["hidden"], seed), train_ds, _train_config(model_cfg, seed))
        return forward(scorer, test_ds.features)

    if name in ("fairret_norm", "prejudice_remover"):
        spec = inmethods.PenaltySpec(name, enc_train, method["notion"])
        penalty = inmethods.BatchPenalty(spec, train_ds)
        tc = _train_config(model_cfg, seed, penalty_weight=float(strength))
        scorer = train(init_scorer(train_ds.d, model_cfg["hidden"], seed), train_ds, tc, penalty)
        meta.update(notion=method["notion"], skipped_batches=penalty.skipped)
        return forward(scorer, test_ds.features)

    naive = train(init_scorer(train_ds.d, model_cfg["hidden"], seed), train_ds, _train_config(model_cfg, seed))
    if name == "exponentiated_gradient":
        notion = method["notion"]
        naive_hard = harden(forward(naive, train_ds.features)).astype(np.float64)
        gaps = inmethods.absolute_gaps(notion, naive_hard, train_ds.labels, enc_train.indicators, train_ds.weights)
        slack = inmethods.slack_from_strength(float(strength), float(np.nanmax(np.abs(gaps))))
        eg_cfg = inmethods.EGConfig(
            notion=notion,
            slack=slack,
            iterations=method.get("iterations", 20),
            eg_rate=method.get("eg_rate", 2.0),
            multiplier_bound=method.get("multiplier_bound", 100.0),
            initial_multiplier=method.get("initial_multiplier", 0.3),
            inner=_train_config(model_cfg, seed),
            layer_sizes=tuple(model_cfg["hidden"]),
        )
        result = inmethods.exponentiated_gradient(train_ds, enc_train, eg_cfg)
        meta.update(result.metadata)
        if not result.converged:
            warnings.warn(f"exponentiated_gradient: train gap {result.metadata['train_gap']:.4g} above slack {slack:.4g}")
        return result.ensemble.soft(test_ds.features)

    # error parity
    notion = method["notion"]
    policy = postmethods.fit_error_parity(
        forward(naive, train_ds.features), train_ds.labels, enc_train, notion, float(strength), train_ds.weights
    )
    meta["policy"] = policy.to_dict()
    if policy.infeasible:
        warnings.warn(f"error_parity: tolerance {strength} infeasible; achieved {policy.achieved_violation:.4g}")
    hard = postmethods.apply_thresholds(forward(naive, test_ds.features), enc_test, policy)
    return hard.astype(np.float64)


# ---------------------------------------------------------------------------
# Sweep


def _tasks(cfg) -> list[tuple[dict | None, float | None, int]]:
    tasks = [(None, None, seed) for seed in cfg["seeds"]]
    for method in cfg["methods"]:
        for strength in method["strengths"]:
            for seed in cfg["seeds"]:
                tasks.append((method, strength, seed))
    return tasks


_WORKER_CTX = None


def _worker_init(ctx):
    global _WORKER_CTX
    _WORKER_CTX = ctx


def _worker_run(task):
    return run_single(_WORKER_CTX, *task)


def run_benchmark(config: dict, dataset: TabularDataset | None = None, workers: int | None = None) -> list[RunRecord]:
    """Execute every (method, strength, seed) run of ``config``.

    With ``output_dir`` set, records are appended to ``records.jsonl`` as they
    finish, and runs already recorded under the same config hash are reused.
    """
    cfg = normalize_config(config)
    chash = config_hash(cfg)
    if dataset is None:
        dataset = load_dataset(cfg)
    encodings = {f: encode_sensitive(dataset, f, cfg["binary_attr"]) for f in cfg["formats"]}
    ctx = _Context(cfg, dataset, encodings, chash)

    out_path = None
    done = {}
    if cfg.get("output_dir"):
        out_dir = Path(cfg["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        out_path = out_dir / "records.jsonl"
        if out_path.exists():
            for rec in read_records(out_path):
                if rec.config_hash == chash and not rec.failed:
                    done[rec.key] = rec

    tasks = _tasks(cfg)
    keys = [("naive" if m is None else m["name"], s, seed) for m, s, seed in tasks]
    pending = [(k, t) for k, t in zip(keys, tasks) if k not in done]
    results = dict(done)
    workers = workers if workers is not None else cfg.get("workers", 1)

    def finish(key, rec):
        results[key] = rec
        if out_path is not None:
            _append_record(out_path, rec)

    if workers and workers > 1 and len(pending) > 1:
        with concurrent.futures.ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(ctx,)) as pool:
            futures = {pool.submit(_worker_run, t): k for k, t in pending}
            for fut in concurrent.futures.as_completed(futures):
                finish(futures[fut], fut.result())
    else:
        for key, task in pending:
            finish(key, run_single(ctx, *task))
    return [results[k] for k in keys]


# ---------------------------------------------------------------------------
# Tables


def infer_k(naive_violation: float) -> list[float]:
    if not naive_violation > 0:
        raise InferenceError(f"cannot infer k from naive violation {naive_violation!r}")
    return [naive_violation / 4, naive_violation / 2, naive_violation]


@dataclass
class TableSpec:
    notion: str
    output_type: str
    k: dict[str, list[float]] = field(default_factory=dict)
    target: str = "biased"

    def __post_init__(self):
        for fmt, ks in self.k.items():
            ks = [float(v) for v in ks]
            if any(v <= 0 for v in ks) or ks != sorted(ks):
                raise ValueError(f"k values for {fmt} must be positive and ascending")
            self.k[fmt] = ks


@dataclass
class TableCell:
    mean: float
    se: float
    strength: float
    mean_violation: float
    n_seeds: int


@dataclass
class PerformanceTable:
    spec: TableSpec
    methods: list[str]
    cells: dict  # (format, k, method) -> TableCell | None
    naive_violation: dict[str, float]
    naive_performance: float | None
    min_violation: dict  # (format, method) -> lowest mean violation over strengths

    def rows(self) -> list[dict]:
        out = []
        for fmt, ks in self.spec.k.items():
            for k in ks:
                for m in self.methods:
                    c = self.cells[(fmt, k, m)]
                    out.append({
                        "format": fmt, "k": k, "method": m,
                        "performance": None if c is None else c.mean,
                        "se": None if c is None else c.se,
                        "strength": None if c is None else c.strength,
                        "mean_violation": None if c is None else c.mean_violation,
                        "n_seeds": None if c is None else c.n_seeds,
                    })
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.rows()
        fields = ["format", "k", "method", "performance", "se", "strength", "mean_violation", "n_seeds"]
        writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: ("" if v is None else (repr(v) if isinstance(v, float) else v)) for k, v in r.items()})
        return buf.getvalue()

    def to_text(self) -> str:
        perf = "AUROC" if self.spec.output_type == "soft" else "accuracy"
        lines = [
            f"max {perf} (mean ± s.e.) where mean ({self.spec.output_type}) {self.spec.notion} violation <= k"
            f" [{self.spec.target} labels]",
            "naive: " + _fmt(self.naive_performance) + " " + perf + "; violation "
            + ", ".join(f"{f}={_fmt(v)}" for f, v in self.naive_violation.items()),
        ]
        header = ["format", "k"] + self.methods
        body = []
        for fmt, ks in self.spec.k.items():
            for k in ks:
                row = [fmt, _fmt(k)]
                for m in self.methods:
                    c = self.cells[(fmt, k, m)]
                    row.append("-" if c is None else f"{_fmt(c.mean)} ± {_fmt(c.se)}")
                body.append(row)
        widths = [max(len(str(r[j])) for r in [header] + body) for j in range(len(header))]
        for r in [header] + body:
            lines.append("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.4g}"


def _se(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / np.sqrt(values.size))


def aggregate(records: Iterable[RunRecord], format, notion, output_type, target="biased") -> dict:
    """(method, strength) -> (per-seed violations, per-seed performances).

    Seeds whose violation or performance is undefined are dropped.
    """
    groups: dict = {}
    for r in records:
        if r.failed:
            continue
        v = r.violation(format, notion, output_type, target)
        p = r.performance(output_type, target)
        if v is None or p is None:
            continue
        vs, ps = groups.setdefault((r.method, r.strength), ([], []))
        vs.append(v)
        ps.append(p)
    return groups


def performance_table(records: Sequence[RunRecord], spec: TableSpec) -> PerformanceTable:
    """Best mean performance among strengths whose mean violation is <= k."""
    records = [r for r in records if not r.failed]
    gaps = [
        f for f in spec.k
        if not any(r.has_cell(f, spec.notion, spec.output_type, spec.target) for r in records)
    ]
    if not records or gaps:
        raise TableError(
            f"records lack ({spec.target}, {spec.notion}, {spec.output_type}) cells for formats {gaps or list(spec.k)}"
        )
    methods = []
    for r in records:
        if r.method != "naive" and r.method not in methods:
            methods.append(r.method)

    cells, min_violation, naive_violation = {}, {}, {}
    naive_perf = None
    for fmt, ks in spec.k.items():
        agg = aggregate(records, fmt, spec.notion, spec.output_type, spec.target)
        if ("naive", None) in agg:
            vs, ps = agg[("naive", None)]
            naive_violation[fmt] = float(np.mean(vs))
            naive_perf = float(np.mean(ps))
        for m in methods:
            candidates = [
                (float(np.mean(vs)), float(np.mean(ps)), _se(ps), s, len(ps))
                for (name, s), (vs, ps) in agg.items() if name == m
            ]
            if candidates:
                min_violation[(fmt, m)] = min(c[0] for c in candidates)
            for k in ks:
                feasible = [c for c in candidates if c[0] <= k]
                if not feasible:
                    cells[(fmt, k, m)] = None
                    continue
                # max performance; ties resolved by lower violation then lower strength
                best = max(feasible, key=lambda c: (c[1], -c[0], -c[3]))
                cells[(fmt, k, m)] = TableCell(best[1], best[2], best[3], best[0], best[4])
    return PerformanceTable(spec, methods, cells, naive_violation, naive_perf, min_violation)


def auto_table_spec(records, notion, output_type, formats=None, target="biased", k=None) -> TableSpec:
    """TableSpec with explicit ``k`` or k inferred from the naive baseline per format."""
    if formats is None:
        formats = []
        for r in records:
            for c in r.report.get("cells", []):
                if c["format"] not in formats:
                    formats.append(c["format"])
    if k is not None:
        return TableSpec(notion, output_type, {f: list(k) for f in formats}, target)
    ks = {}
    for f in formats:
        naive = [
            r.violation(f, notion, output_type, target)
            for r in records if r.method == "naive" and not r.failed
        ]
        naive = [v for v in naive if v is not None]
        if not naive:
            raise TableError(f"no naive baseline records for format {f!r}; pass k explicitly")
        ks[f] = infer_k(float(np.mean(naive)))
    return TableSpec(notion, output_type, ks, target)


# ---------------------------------------------------------------------------
# Trade-off curves

TRADEOFF_FIELDS = [
    "method", "stage", "strength", "n_seeds", "violation_mean", "performance_mean",
    "cov_vv", "cov_vp", "cov_pp", "radius_major", "radius_minor", "angle_deg",
]


def ellipse(cov) -> tuple[float, float, float]:
    """Radii (sqrt eigenvalues) and major-axis angle in degrees within [0, 180)."""
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=np.float64))
    vals = np.clip(vals, 0.0, None)
    major = vecs[:, 1]
    if vals[1] <= 0:
        angle = 0.0
    else:
        angle = math.degrees(math.atan2(major[1], major[0])) % 180.0
    return float(np.sqrt(vals[1])), float(np.sqrt(vals[0])), angle


def tradeoff_export(records, notion, output_type, format, target="biased") -> list[dict]:
    """One row per (method, strength): mean point plus standard-error ellipse."""
    agg = aggregate(records, format, notion, output_type, target)
    if not agg:
        raise TableError(f"records lack ({target}, {format}, {notion}, {output_type}) cells")
    stages = {r.method: r.stage for r in records}
    rows = []
    for (method, strength), (vs, ps) in agg.items():
        pts = np.column_stack([vs, ps])
        row = {
            "method": method, "stage": stages[method], "strength": strength, "n_seeds": len(vs),
            "violation_mean": float(pts[:, 0].mean()), "performance_mean": float(pts[:, 1].mean()),
        }
        if len(vs) < 2:
            warnings.warn(f"{method} at strength {strength}: single seed, covariance omitted")
            row.update(cov_vv=None, cov_vp=None, cov_pp=None, radius_major=None, radius_minor=None, angle_deg=None)
        else:
            # shifting by one point is exact for identical seeds, so they give zero covariance
            cov = np.cov((pts - pts[0]).T, ddof=1) / len(vs)
            major, minor, angle = ellipse(cov)
            row.update(cov_vv=float(cov[0, 0]), cov_vp=float(cov[0, 1]), cov_pp=float(cov[1, 1]),
                       radius_major=major, radius_minor=minor, angle_deg=angle)
        rows.append(row)
    rows.sort(key=lambda r: (r["method"] != "naive", r["method"], -math.inf if r["strength"] is None else r["strength"]))
    return rows


def rows_to_csv(rows: list[dict], fields=TRADEOFF_FIELDS) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: ("" if r[k] is None else (repr(r[k]) if isinstance(r[k], float) else r[k])) for k in fields})
    return buf.getvalue()
