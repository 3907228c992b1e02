"""Config-driven experiment runner.

A run is fully determined by its JSON config (including the seed). Every
random stream is derived from the seed, so repeated runs write byte-identical
record files. Wall-clock timings are kept in memory and only written when
``metrics.timing`` is enabled.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import os
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import data as data_mod
from .flows import FlowConfig, FlowState, step
from .metrics import MetricReport, estimate_kl, estimate_negated_elbo, predictive_loss
from .mixture import ParticleMixture, sample_mixture
from .targets import (
    BnnArch,
    GmmTargetSpec,
    make_bnn_target,
    make_gmm_target,
    make_logistic_regression_target,
)

OUTPUT_ENV = "VPFLOW_OUTPUT_DIR"
CSV_COLUMNS = ("iteration", "elbo_neg", "kl", "wall_ms", "pred_loss")

# fixed stream tags so no two random streams of a run coincide
_INIT, _BATCH, _PROBE, _METRIC = 1, 2, 3, 4


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


def _rng(seed, *tags):
    return np.random.default_rng([int(seed), 2**32 - 1, *tags])


@dataclass
class ExperimentConfig:
    target: dict
    flow: FlowConfig
    init: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    output: str | None = None
    seed: int = 0
    name: str = "experiment"
    base_dir: Path = field(default=Path("."), repr=False)

    METRIC_DEFAULTS = {
        "every": 1,
        "kl_samples": 10_000,
        "elbo_samples": 1000,
        "prediction_samples": 100,
        "final_samples": None,
        "timing": False,
        "snapshot": False,
    }

    def __post_init__(self):
        self.metrics = {**self.METRIC_DEFAULTS, **self.metrics}
        if int(self.metrics["every"]) < 1:
            raise ConfigError("metrics.every must be at least 1")
        kind = self.target.get("kind")
        if kind not in ("gmm", "logreg", "bnn"):
            raise ConfigError(f"target.kind must be gmm, logreg or bnn, got {kind!r}")
        ds = self.target.get("dataset")
        if kind != "gmm":
            if not isinstance(ds, dict):
                raise ConfigError(f"{kind} target needs a dataset section")
            if "path" in ds:
                p = self.resolve(ds["path"])
                if not p.is_file():
                    raise ConfigError(f"dataset file not found: {p}")

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        d = copy.deepcopy(d)
        seed = int(d.get("seed", 0))
        flow = dict(d.get("flow", {}))
        flow.setdefault("seed", seed)
        if flow.get("box") is not None:
            flow["box"] = tuple(flow["box"])
        try:
            flow_cfg = FlowConfig(**flow)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad flow section: {exc}") from None
        unknown = set(d) - {"target", "flow", "init", "metrics", "output", "seed", "name"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "target" not in d:
            raise ConfigError("config has no target section")
        return cls(
            target=d["target"],
            flow=flow_cfg,
            init=d.get("init", {}),
            metrics=d.get("metrics", {}),
            output=d.get("output"),
            seed=seed,
            name=d.get("name", "experiment"),
            base_dir=Path(base_dir),
        )

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        with path.open() as fh:
            try:
                d = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(d, base_dir=path.parent)

    def to_dict(self) -> dict:
        flow = {k: getattr(self.flow, k) for k in self.flow.__dataclass_fields__}
        if flow["box"] is not None:
            flow["box"] = list(flow["box"])
        return copy.deepcopy({
            "name": self.name,
            "seed": self.seed,
            "target": self.target,
            "flow": flow,
            "init": self.init,
            "metrics": self.metrics,
            "output": self.output,
        })

    def with_changes(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-key overrides, e.g. ``{"init.K": 3, "flow.eta": 0.01}``."""
        d = self.to_dict()
        for key, value in changes.items():
            node = d
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
        return ExperimentConfig.from_dict(d, base_dir=self.base_dir)


def preset_names() -> list[str]:
    files = resources.files("vpflow").joinpath("presets").iterdir()
    return sorted(f.name[:-5] for f in files if f.name.endswith(".json"))


def load_config(spec: str) -> ExperimentConfig:
    """Load a config from a file path or a bundled preset name."""
    path = Path(spec)
    if path.is_file():
        return ExperimentConfig.load(path)
    if spec in preset_names():
        text = resources.files("vpflow").joinpath("presets").joinpath(f"{spec}.json").read_text()
        return ExperimentConfig.from_dict(json.loads(text))
    raise FileNotFoundError(f"config file not found: {spec}")


@dataclass
class IterationRecord:
    iteration: int
    elbo_neg_estimate: float | None = None
    kl_estimate: float | None = None
    wall_ms: float = 0.0
    predictive_loss: float | None = None
    snapshot: ParticleMixture | None = field(default=None, repr=False)
    report: dict | None = field(default=None, repr=False)


@dataclass
class Problem:
    """A constructed target plus whatever is needed to evaluate it."""

    target: object
    dim: int
    arch: BnnArch | None = None
    task: str | None = None
    X_test: np.ndarray | None = None
    y_test: np.ndarray | None = None
    batches: object = None
    # logistic regression has no bias; predictions go through a zero-bias linear net
    pad_bias: bool = False


def _load_dataset(cfg: ExperimentConfig, tcfg: dict) -> data_mod.Dataset:
    ds = tcfg["dataset"]
    if "path" in ds:
        return data_mod.load_csv(cfg.resolve(ds["path"]), ds["target_column"], ds.get("label_kind", "real"))
    kind = ds.get("synthetic")
    if kind == "regression":
        return data_mod.synthetic_regression(ds.get("n", 200), ds.get("in_dim", 1), ds.get("noise", 0.1),
                                             ds.get("seed", 0))
    if kind == "classification":
        return data_mod.synthetic_classification(ds.get("n", 300), ds.get("in_dim", 2), ds.get("seed", 0))
    raise ConfigError(f"dataset needs 'path' or 'synthetic', got {sorted(ds)}")


def build_problem(cfg: ExperimentConfig) -> Problem:
    t = cfg.target
    if t["kind"] == "gmm":
        means = np.asarray(t["means"], dtype=float)
        prec = np.asarray(t.get("precisions", t.get("precision", 1.0)), dtype=float)
        if prec.ndim < 2:
            prec = np.broadcast_to(prec.reshape(-1, 1) if prec.ndim == 1 else prec, means.shape).copy()
        weights = t.get("weights")
        weights = np.full(len(means), 1.0 / len(means)) if weights is None else np.asarray(weights, float)
        target = make_gmm_target(GmmTargetSpec(means, prec, weights))
        return Problem(target, target.dim)

    ds = _load_dataset(cfg, t)
    n_splits = int(t.get("n_splits", 1))
    split_idx = int(t.get("split", 0))
    train_count = t.get("train_count")
    splits = data_mod.make_splits(ds, max(n_splits, split_idx + 1), train_count=train_count,
                                  train_fraction=t.get("train_fraction", 0.9 if train_count is None else None),
                                  seed=int(t.get("split_seed", 0)))
    split = splits[split_idx]
    ds = data_mod.standardize(ds, split.train_indices)
    Xtr, ytr = ds.X[split.train_indices], ds.y[split.train_indices]
    Xte, yte = ds.X[split.test_indices], ds.y[split.test_indices]
    reg = float(t.get("reg", 0.1))
    batch_size = t.get("batch_size")

    if t["kind"] == "logreg":
        if not ds.is_classification:
            raise ConfigError("logreg target needs a classification dataset")
        target = make_logistic_regression_target(Xtr, ytr, reg)
        arch = BnnArch(Xtr.shape[1], 0, 1, "identity")
        task = "classification"
    else:
        task = t.get("task", "classification" if ds.is_classification else "regression")
        arch = BnnArch(Xtr.shape[1], int(t.get("hidden", 50)), 1, t.get("activation", "relu"))
        target = make_bnn_target(arch, Xtr, ytr, reg, task,
                                 hess_mode=t.get("hess_mode", "hutchinson"),
                                 probes=int(t.get("hess_probes", 64)),
                                 rng=_rng(cfg.seed, _PROBE))
    batches = None
    if batch_size:
        local = data_mod.Split(np.arange(Xtr.shape[0]), np.array([], dtype=int))
        batches = data_mod.minibatches(ds, local, int(batch_size), _rng(cfg.seed, _BATCH))
    return Problem(target, target.dim, arch, task, Xte, yte, batches, pad_bias=t["kind"] == "logreg")


def initial_state(cfg: ExperimentConfig, dim: int) -> FlowState:
    init = cfg.init
    rng = _rng(cfg.seed, _INIT)
    scale = float(init.get("mean_scale", 1.0))
    loc = np.asarray(init.get("mean_loc", 0.0), dtype=float)
    if cfg.flow.algorithm == "svgd":
        M = int(init.get("points", init.get("K", 100)))
        pts = loc + scale * rng.standard_normal((M, dim))
        dummy = ParticleMixture(np.zeros((1, dim)), np.ones((1, dim)))
        return FlowState(dummy, points=pts)
    K = int(init.get("K", 1))
    means = loc + scale * rng.standard_normal((K, dim))
    prec = np.full((K, dim), float(init.get("precision", 1.0)))
    return FlowState(ParticleMixture(means, prec))


def _evaluate(cfg, problem, state, iteration, final=False):
    """Objective estimates at one recorded iteration."""
    m = cfg.metrics
    rng = _rng(cfg.seed, _METRIC, iteration)
    target = problem.target
    target.set_batch(None)
    out = {}
    is_svgd = cfg.flow.algorithm == "svgd"
    n_elbo = int(m["final_samples"] or m["elbo_samples"]) if final else int(m["elbo_samples"])
    n_kl = int(m["final_samples"] or m["kl_samples"]) if final else int(m["kl_samples"])
    if not is_svgd:
        q = state.mixture
        r = estimate_negated_elbo(q, target, n_elbo, rng)
        out["elbo_neg"] = r
        if getattr(target, "has_log_density", False):
            out["kl"] = estimate_kl(q, target, n_kl, rng)
    if problem.arch is not None:
        q = state.points if is_svgd else state.mixture
        if problem.pad_bias:
            W = q if is_svgd else sample_mixture(q, rng, int(m["prediction_samples"]))
            q = np.hstack([W, np.zeros((W.shape[0], 1))])
        out["pred"] = predictive_loss(q, problem.arch, problem.X_test, problem.y_test,
                                      int(m["prediction_samples"]), rng, problem.task)
    return out


def _fmt(x):
    return "" if x is None else repr(float(x))


def records_to_csv(records, timing: bool) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow([r.iteration, _fmt(r.elbo_neg_estimate), _fmt(r.kl_estimate),
                    _fmt(r.wall_ms) if timing else "", _fmt(r.predictive_loss)])
    return buf.getvalue()


def output_dir_for(cfg: ExperimentConfig) -> Path | None:
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env) / cfg.name
    if cfg.output:
        return cfg.resolve(cfg.output)
    return None


def _report_dict(ev) -> dict:
    rep = {}
    for key, r in ev.items():
        rep[key] = r.to_dict()
    return rep


def _mixture_dict(m: ParticleMixture) -> dict:
    return {"means": m.means.tolist(), "precisions": m.precisions.tolist(), "weights": m.weights.tolist()}


def run_experiment(cfg: ExperimentConfig, output_dir=None, write: bool = True) -> list[IterationRecord]:
    """Run the configured flow and return the recorded iterations.

    Records are emitted at iteration 0 and every ``metrics.every`` iterations
    after it, plus always at the last iteration. The last record carries the
    end-of-run report. When an output directory is known, ``records.csv`` and
    ``summary.json`` are written there.
    """
    problem = build_problem(cfg)
    state = initial_state(cfg, problem.dim)
    every = int(cfg.metrics["every"])
    n_iter = cfg.flow.iterations
    keep_snapshots = bool(cfg.metrics["snapshot"])
    records = []

    def record(state, wall_ms):
        final = state.iteration == n_iter
        ev = _evaluate(cfg, problem, state, state.iteration, final=final)
        rec = IterationRecord(
            iteration=state.iteration,
            elbo_neg_estimate=ev["elbo_neg"].elbo_neg_estimate if "elbo_neg" in ev else None,
            kl_estimate=ev["kl"].kl_estimate if "kl" in ev else None,
            wall_ms=wall_ms,
            predictive_loss=ev["pred"].predictive_loss if "pred" in ev else None,
            snapshot=state.mixture.copy() if keep_snapshots and state.points is None else None,
        )
        if final:
            rec.report = _report_dict(ev)
        records.append(rec)

    record(state, 0.0)
    wall_ms = 0.0
    for i in range(n_iter):
        if problem.batches is not None:
            problem.target.set_batch(next(problem.batches))
        t0 = time.perf_counter()
        try:
            state = step(state, problem.target, cfg.flow)
        except (FloatingPointError, ValueError) as exc:
            raise ExperimentError(f"{cfg.name}: step failed at iteration {i}: {exc}") from exc
        wall_ms += 1e3 * (time.perf_counter() - t0)
        if state.iteration % every == 0 or state.iteration == n_iter:
            record(state, wall_ms / (state.iteration - (records[-1].iteration if records else 0)))
            wall_ms = 0.0
    problem.target.set_batch(None)

    out = output_dir if output_dir is not None else output_dir_for(cfg)
    if write and out is not None:
        write_outputs(cfg, records, state, Path(out))
    return records


def write_outputs(cfg, records, state, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    timing = bool(cfg.metrics["timing"])
    (out / "records.csv").write_text(records_to_csv(records, timing))
    summary = {"config": cfg.to_dict(), "final_report": records[-1].report or {}}
    if cfg.metrics["snapshot"]:
        if state.points is not None:
            summary["final_points"] = state.points.tolist()
        else:
            summary["final_mixture"] = _mixture_dict(state.mixture)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
