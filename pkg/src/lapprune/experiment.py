"""Train, prune, retrain, evaluate; plus timing and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .criteria import canonical_criterion, compute_scores
from .data import Dataset, load_mnist, synthetic_blobs
from .masks import PruneConfig, SparsitySchedule, prune
from .nn.network import ARCHITECTURES, Network, architecture, glorot_init
from .nn.stats import estimate_activation_probs, hessian_diagonal
from .nn.train import TrainConfig, evaluate, retrain, train

DATASETS = ("mnist", "synthetic-blobs")
METRICS = ("pre_retrain_error", "test_error", "train_error", "generalization_gap")


@dataclass
class ExperimentSpec:
    architecture: str = "fcn-small"
    dataset: str = "mnist"
    criteria: tuple = ("MP", "LAP")
    taus: tuple = (0,)
    trials: int = 3
    base_seed: int = 0
    p: float = 0.0
    q: float = 0.5
    scope: str = "layerwise"
    structure: str = "unstructured"
    order: str = "simultaneous"
    sequential_steps: int = 1
    steps: int = 5000
    retrain_steps: int = 5000
    learning_rate: float = 1.2e-3
    batch_size: int = 60
    batchnorm: bool = False
    n_train: int | None = None
    n_test: int | None = None
    stats_samples: int = 10000
    data_dir: str | None = None
    output: str | None = None

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        if self.dataset not in DATASETS:
            raise ValueError(f"dataset must be one of {DATASETS}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        self.taus = tuple(int(t) for t in self.taus)
        if not self.taus:
            raise ValueError("tau range must be nonempty")
        self.criteria = tuple(canonical_criterion(c) for c in self.criteria)
        if not self.criteria:
            raise ValueError("at least one criterion is required")
        self.prune_config(self.criteria[0], self.taus[0], 0)  # validate combination early

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(steps=self.steps, learning_rate=self.learning_rate,
                           batch_size=self.batch_size, seed=seed, retrain_steps=self.retrain_steps)

    def prune_config(self, criterion: str, tau: int, seed: int) -> PruneConfig:
        return PruneConfig(criterion=criterion, schedule=SparsitySchedule(self.p, self.q, tau),
                           scope=self.scope, structure=self.structure, order=self.order,
                           sequential_steps=self.sequential_steps, seed=seed)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["criteria"] = list(self.criteria)
        d["taus"] = list(self.taus)
        return d


@dataclass
class TrialRecord:
    criterion: str
    tau: int
    trial: int
    surviving_fraction: float
    pre_retrain_error: float
    test_error: float
    train_error: float
    generalization_gap: float
    prune_seconds: float = 0.0


@dataclass
class ExperimentResult:
    spec: dict
    records: list = field(default_factory=list)
    baseline: list = field(default_factory=list)  # (trial, train_error, test_error)

    def summary(self) -> list:
        """Rows (criterion, tau, surviving_fraction, metric, mean, std, trials) in report order."""
        if not self.records:
            raise ValueError("empty experiment result")
        groups = {}
        for r in self.records:
            groups.setdefault((r.criterion, r.tau), []).append(r)
        crit_order = {c: k for k, c in enumerate(dict.fromkeys(r.criterion for r in self.records))}
        rows = []
        for (crit, tau) in sorted(groups, key=lambda key: (crit_order[key[0]], key[1])):
            recs = sorted(groups[(crit, tau)], key=lambda r: r.trial)
            surv = float(np.mean([r.surviving_fraction for r in recs]))
            for metric in METRICS:
                vals = np.array([getattr(r, metric) for r in recs])
                rows.append((crit, tau, surv, metric, float(vals.mean()), float(vals.std()), len(recs)))
        return rows


# ------------------------------------------------------------ data


def _square_image(ds: Dataset) -> Dataset:
    side = math.isqrt(ds.inputs.shape[1])
    if side * side != ds.inputs.shape[1]:
        raise ValueError("convolutional architectures need a square number of blob dimensions")
    return Dataset(ds.inputs.reshape(len(ds), 1, side, side), ds.labels, ds.class_count)


def load_data(spec: ExperimentSpec):
    """(train, test) datasets for ``spec``."""
    if spec.dataset == "mnist":
        tr = load_mnist("train", spec.data_dir)
        te = load_mnist("test", spec.data_dir)
    else:
        n_tr = spec.n_train or 2000
        n_te = spec.n_test or 1000
        full = synthetic_blobs(classes=10, dim=64, count=n_tr + n_te, seed=spec.base_seed)
        tr = Dataset(full.inputs[:n_tr], full.labels[:n_tr], full.class_count)
        te = Dataset(full.inputs[n_tr:], full.labels[n_tr:], full.class_count)
        if spec.architecture == "conv6-small":
            tr, te = _square_image(tr), _square_image(te)
    if spec.n_train is not None:
        tr = tr.take(spec.n_train)
    if spec.n_test is not None:
        te = te.take(spec.n_test)
    return tr, te


def build_network(spec: ExperimentSpec, input_shape, n_classes: int, seed: int) -> Network:
    return glorot_init(architecture(spec.architecture, input_shape=input_shape,
                                    n_classes=n_classes, batchnorm=spec.batchnorm), seed=seed)


# ------------------------------------------------------------ pipelines


def _side_info(net, criterion, data, n):
    sample = data.take(min(n, len(data)))
    if criterion == "LAP_act":
        return {"stats": estimate_activation_probs(net, sample)}
    if criterion in ("OBD", "OBD_LAP"):
        return {"hessian": hessian_diagonal(net, sample)}
    return {}


def _record(crit, tau, trial, net, pre_err, retrained, train_data, test_data, seconds):
    test_err = evaluate(retrained, test_data)
    train_err = evaluate(retrained, train_data)
    return TrialRecord(crit, tau, trial, net.surviving_fraction(), pre_err, test_err, train_err,
                       test_err - train_err, seconds)


def run_pipeline(spec: ExperimentSpec, data=None, log=None) -> ExperimentResult:
    """One-shot train, prune, retrain for every (trial, criterion, tau)."""
    train_data, test_data = load_data(spec) if data is None else data
    result = ExperimentResult(spec.to_dict())
    for trial in range(spec.trials):
        seed = spec.base_seed + trial
        try:
            cfg = spec.train_config(seed)
            net = train(build_network(spec, train_data.input_shape, train_data.class_count, seed),
                        train_data, cfg)
            result.baseline.append((trial, evaluate(net, train_data), evaluate(net, test_data)))
            for crit in spec.criteria:
                side = _side_info(net, crit, train_data, spec.stats_samples)
                for tau in spec.taus:
                    t0 = time.perf_counter()
                    pruned, _ = prune(net, spec.prune_config(crit, tau, seed), **side)
                    seconds = time.perf_counter() - t0
                    pre_err = evaluate(pruned, test_data)
                    retrained = retrain(pruned, train_data, cfg)
                    rec = _record(crit, tau, trial, pruned, pre_err, retrained, train_data,
                                  test_data, seconds)
                    result.records.append(rec)
                    if log:
                        log(f"trial {trial} {crit} tau={tau} surviving={rec.surviving_fraction:.4%} "
                            f"pre={pre_err:.4f} post={rec.test_error:.4f}")
        except Exception as exc:
            raise _with_context(exc, f"{spec.architecture} trial {trial}") from exc
    return result


def _with_context(exc, context):
    try:
        return type(exc)(f"[{context}] {exc}")
    except TypeError:
        return RuntimeError(f"[{context}] {exc!r}")


def iterative_pipeline(spec: ExperimentSpec, cycles: int, data=None, log=None) -> ExperimentResult:
    """Repeated prune-retrain cycles; cycle c prunes to tau = c * taus[0] on top of earlier masks."""
    if cycles < 1:
        raise ValueError("cycles must be at least 1")
    train_data, test_data = load_data(spec) if data is None else data
    step = spec.taus[0]
    result = ExperimentResult(spec.to_dict())
    for trial in range(spec.trials):
        seed = spec.base_seed + trial
        cfg = spec.train_config(seed)
        dense = train(build_network(spec, train_data.input_shape, train_data.class_count, seed),
                      train_data, cfg)
        result.baseline.append((trial, evaluate(dense, train_data), evaluate(dense, test_data)))
        for crit in spec.criteria:
            net = dense
            for c in range(1, cycles + 1):
                side = _side_info(net, crit, train_data, spec.stats_samples)
                t0 = time.perf_counter()
                pruned, _ = prune(net, spec.prune_config(crit, c * step, seed), **side)
                seconds = time.perf_counter() - t0
                pre_err = evaluate(pruned, test_data)
                net = retrain(pruned, train_data, cfg)
                result.records.append(_record(crit, c * step, trial, pruned, pre_err, net,
                                              train_data, test_data, seconds))
                if log:
                    log(f"trial {trial} {crit} cycle {c} surviving={pruned.surviving_fraction():.4%}")
    return result


def benchmark_scoring(net: Network, criteria, repeats: int = 5, stats=None, hessian=None) -> dict:
    """Mean wall-time of score computation per criterion (one warm-up pass discarded)."""
    if repeats < 1:
        raise ValueError("repeats must be at least 1")
    crits = [canonical_criterion(c) for c in criteria]
    for c in crits:
        compute_scores(net, c, stats=stats, hessian=hessian)
    # rounds interleave criteria so load drift hits all of them alike
    times = {c: [] for c in crits}
    for _ in range(repeats):
        for c in crits:
            t0 = time.perf_counter()
            compute_scores(net, c, stats=stats, hessian=hessian)
            times[c].append(time.perf_counter() - t0)
    return {c: float(np.mean(t)) for c, t in times.items()}


# ------------------------------------------------------------ reports

CSV_HEADER = ("criterion", "tau", "surviving_fraction", "metric", "mean", "std", "trials")


def _g(x: float) -> str:
    return f"{x:.6g}"


def report_csv(result: ExperimentResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for crit, tau, surv, metric, mean, std, n in result.summary():
        w.writerow((crit, tau, _g(surv), metric, _g(mean), _g(std), n))
    return buf.getvalue()


def report_json(result: ExperimentResult) -> str:
    summary = [dict(zip(CSV_HEADER, (c, t, float(_g(s)), m, float(_g(mu)), float(_g(sd)), n)))
               for c, t, s, m, mu, sd, n in result.summary()]
    doc = {
        "spec": result.spec,
        "summary": summary,
        "records": [asdict(r) for r in result.records],
        "baseline": [list(b) for b in result.baseline],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def emit_report(result: ExperimentResult, path, fmt: str | None = None) -> Path:
    path = Path(path)
    fmt = fmt or ("json" if path.suffix == ".json" else "csv")
    if fmt not in ("csv", "json"):
        raise ValueError(f"report format must be csv or json, got {fmt!r}")
    text = report_csv(result) if fmt == "csv" else report_json(result)
    path.write_text(text)
    return path


def read_json_report(path) -> ExperimentResult:
    doc = json.loads(Path(path).read_text())
    return ExperimentResult(doc["spec"], [TrialRecord(**r) for r in doc["records"]],
                            [tuple(b) for b in doc["baseline"]])


__all__ = [
    "ExperimentResult", "ExperimentSpec", "TrialRecord", "benchmark_scoring", "build_network",
    "emit_report", "iterative_pipeline", "load_data", "read_json_report",
    "report_csv", "report_json", "run_pipeline",
]
