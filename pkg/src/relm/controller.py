"""The self-learning loop: initial training, streaming with drift checks, recalibration."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from functools import partial
from typing import Callable

import numpy as np

from . import cmaes
from .config import RelmConfig
from .environment import ReplayWindow, SampleSpec, WindowError
from .evaluator import (DriftThresholds, RECALIBRATE, accuracy, drift_report, f1,
                        fitness, log_loss)
from .ingest import (Column, DataError, Dataset, FeatureSchema, fit_standardization)
from .latent import Encoders
from .policy import Topology, forward, param_count

log = logging.getLogger(__name__)

INITIAL, STREAMING, RECALIBRATING = "initial", "streaming", "recalibrating"
METRIC_COLUMNS = ("step", "phase", "generation", "accuracy", "f1", "log_loss",
                  "best_fitness", "sigma", "max_psi", "verdict")


class TrainingError(RuntimeError):
    pass


@dataclass
class MetricsRow:
    step: int
    phase: str
    generation: int
    accuracy: float
    f1: float
    log_loss: float
    best_fitness: float
    sigma: float
    max_psi: float | None = None
    verdict: str = ""

    def to_csv(self) -> str:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return repr(v)
            return str(v)
        return ",".join(fmt(getattr(self, c)) for c in METRIC_COLUMNS)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def metrics_csv(rows: list[MetricsRow]) -> str:
    return ",".join(METRIC_COLUMNS) + "\n" + "".join(r.to_csv() + "\n" for r in rows)


@dataclass(eq=False)
class RelmModel:
    encoders: Encoders
    topology: Topology
    genome: np.ndarray
    state: cmaes.CmaesState
    snapshot: np.ndarray
    baselines: tuple[float, float]
    window: ReplayWindow
    rng: np.random.Generator
    period: int = 0
    history: list[MetricsRow] = field(default_factory=list)

    @property
    def schema(self) -> FeatureSchema:
        return self.encoders.schema

    def next_step(self) -> int:
        return self.history[-1].step + 1 if self.history else 0

    def predict_proba(self, data: Dataset) -> np.ndarray:
        return forward(self.genome, self.topology, self.encoders.encode(data))

    def predict(self, data: Dataset, threshold: float = 0.5) -> np.ndarray:
        return (self.predict_proba(data) >= threshold).astype(np.int64)


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**63 - 1))


def _thresholds(config: RelmConfig) -> DriftThresholds:
    ev = config.evaluator
    return DriftThresholds(ev.psi_warn, ev.psi_recalibrate, ev.accuracy_drop, ev.f1_drop)


def _subsample(rng, n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.sort(rng.choice(n, cap, replace=False))


def _scores(model: RelmModel, config: RelmConfig, genome, states, labels):
    ev = config.evaluator
    probs = forward(genome, model.topology, states)
    preds = (probs >= ev.threshold).astype(np.int64)
    return accuracy(preds, labels), f1(preds, labels), log_loss(probs, labels, ev.eps)


def _workers(config: RelmConfig) -> int:
    w = config.runtime.workers
    if w is None:
        return os.cpu_count() or 1
    return max(1, w)


def _run_phase(model: RelmModel, config: RelmConfig, phase: str, max_generations: int,
               eval_states: np.ndarray, eval_labels: np.ndarray,
               on_improve: Callable[[RelmModel], None] | None = None) -> str:
    """ask / evaluate on a fresh rehearsal batch / tell, until a stop rule fires."""
    c, env, ev = config.cmaes, config.environment, config.evaluator
    crit = cmaes.StopCriteria(max_generations, c.target_fitness, c.tol_fun, c.sigma_floor)
    state = model.state
    n_workers = _workers(config)
    pool = ThreadPoolExecutor(n_workers) if n_workers > 1 else None
    spread = math.inf
    try:
        while (reason := cmaes.should_stop(state, crit, spread)) is None:
            pop = cmaes.ask(state)
            spec = SampleSpec(env.batch_size, env.new_fraction, env.stratify, _seed(model.rng))
            states, labels = model.window.sample_batch(spec)
            fit = partial(fitness, t=model.topology, states=states, labels=labels,
                          threshold=ev.threshold, w_acc=ev.w_acc, w_f1=ev.w_f1)
            fits = np.array(list(pool.map(fit, pop)) if pool else [fit(g) for g in pop])
            before = state.best_f
            cmaes.tell(state, pop, fits)
            finite = fits[np.isfinite(fits)]
            spread = float(finite.max() - finite.min()) if len(finite) else math.inf
            if state.best_f < before:
                model.genome = state.best_x.copy()
                if on_improve is not None:
                    on_improve(model)
            acc, f, ll = _scores(model, config, model.genome, eval_states, eval_labels)
            model.history.append(MetricsRow(model.next_step(), phase, state.generation,
                                            acc, f, ll, state.best_f, state.sigma))
            log.debug("%s gen %d acc %.4f f1 %.4f best %.4f sigma %.3g", phase,
                      state.generation, acc, f, state.best_f, state.sigma)
    finally:
        if pool is not None:
            pool.shutdown()
    log.info("%s phase stopped after %d generations (%s)", phase, state.generation, reason)
    return reason


def _freeze_reference(model: RelmModel, config: RelmConfig) -> None:
    """Baselines and PSI reference from the newest period of the window."""
    states, labels = model.window.newest()
    acc, f, _ = _scores(model, config, model.genome, states, labels)
    model.baselines = (acc, f)
    model.snapshot = states[_subsample(model.rng, len(states), config.evaluator.snapshot_rows)]


def train_initial(config: RelmConfig, train: Dataset,
                  on_improve: Callable[[RelmModel], None] | None = None) -> RelmModel:
    """Fit encoders and train a policy from scratch on ``train`` (period 0)."""
    if len(train) == 0:
        raise TrainingError("training data is empty")
    if len(np.unique(train.labels)) < 2:
        raise TrainingError("training data must contain both labels")
    seed = config.cmaes.seed
    rng = np.random.default_rng([seed, 1])
    lat = config.latent
    encoders = Encoders(train.schema, fit_standardization(train), mute=lat.mute)
    raw = encoders.raw_features(train)
    encoders.refit(raw, lat.latent_dim, lat.rbm_hidden, lat.rbm_epochs, lat.rbm_lr, _seed(rng))
    states = encoders.encode_raw(raw)
    topology = Topology.default(encoders.state_dim, config.topology.hidden)
    n = param_count(topology)
    window = ReplayWindow(config.environment.capacity_periods)
    window.push_batch(states, train.labels, 0, raw)
    state = cmaes.cmaes_init(n, np.zeros(n), config.cmaes.sigma0, config.cmaes.popsize, seed)
    model = RelmModel(encoders, topology, np.zeros(n), state, states[:0], (0.0, 0.0),
                      window, rng)
    eval_idx = _subsample(rng, len(states), config.evaluator.eval_rows)
    _run_phase(model, config, INITIAL, config.cmaes.max_generations,
               states[eval_idx], train.labels[eval_idx], on_improve)
    _freeze_reference(model, config)
    return model


def recalibrate(model: RelmModel, config: RelmConfig,
                on_improve: Callable[[RelmModel], None] | None = None) -> RelmModel:
    """Warm-start CMA-ES from the deployed genome and retrain on rehearsal batches."""
    if len(model.window) == 0:
        raise WindowError("cannot recalibrate on an empty window")
    lat = config.latent
    if config.recalibration.refit_encoders and not model.encoders.mute:
        raw = model.window.raw_arrays()
        if raw is not None:
            model.encoders.refit(raw, lat.latent_dim, lat.rbm_hidden, lat.rbm_epochs,
                                 lat.rbm_lr, _seed(model.rng))
            model.window.replace_states(model.encoders.encode_raw)
    n = len(model.genome)
    model.state = cmaes.cmaes_init(n, model.genome, config.sigma_restart,
                                   config.cmaes.popsize, _seed(model.rng))
    eval_states, eval_labels = model.window.newest()
    _run_phase(model, config, RECALIBRATING, config.recalibration.max_generations,
               eval_states, eval_labels, on_improve)
    _freeze_reference(model, config)
    return model


def stream_step(model: RelmModel, batch: Dataset, config: RelmConfig,
                on_improve: Callable[[RelmModel], None] | None = None):
    """Predict a labelled batch, check drift, store it as a new period and
    recalibrate when the verdict asks for it.

    Returns (predictions, report, model).
    """
    if batch.schema != model.schema:
        raise DataError("stream batch schema does not match the model schema")
    ev = config.evaluator
    raw = model.encoders.raw_features(batch)
    states = model.encoders.encode_raw(raw)
    probs = forward(model.genome, model.topology, states)
    preds = (probs >= ev.threshold).astype(np.int64)
    report = drift_report(probs, batch.labels, model.snapshot, states, model.baselines,
                          _thresholds(config), ev.bin_count, ev.threshold, ev.eps)
    model.period += 1
    model.window.push_batch(states, batch.labels, model.period, raw)
    model.history.append(MetricsRow(
        model.next_step(), STREAMING, model.period, report.accuracy, report.f1,
        report.log_loss, -(ev.w_acc * report.accuracy + ev.w_f1 * report.f1),
        model.state.sigma, report.max_psi, report.verdict))
    log.info("stream period %d: acc %.4f f1 %.4f max_psi %.4f -> %s", model.period,
             report.accuracy, report.f1, report.max_psi, report.verdict)
    if report.verdict == RECALIBRATE:
        recalibrate(model, config, on_improve)
    return preds, report, model


def drift_check(model: RelmModel, batch: Dataset, config: RelmConfig):
    """Drift report for a batch without touching the model."""
    if batch.schema != model.schema:
        raise DataError("batch schema does not match the model schema")
    ev = config.evaluator
    states = model.encoders.encode(batch)
    probs = forward(model.genome, model.topology, states)
    return drift_report(probs, batch.labels, model.snapshot, states, model.baselines,
                        _thresholds(config), ev.bin_count, ev.threshold, ev.eps)


DRIFT_KINDS = ("rotation", "mean-shift", "label-flip")


def generate_synthetic_drift(n_blobs: int = 2, rows_per_period: int = 500, periods: int = 4,
                             drift_kind: str = "rotation", magnitude: float = 90.0,
                             seed: int = 0, *, dim: int = 2, separation: float = 3.0,
                             drift_period: int | None = None) -> Dataset:
    """Labelled Gaussian blobs whose generating process changes at ``drift_period``.

    Blob centers sit on a circle of radius ``separation`` (unit-variance
    blobs) in the first two coordinates, alternating labels 0/1. From
    ``drift_period`` on the process is altered by ``drift_kind``:

    * rotation: centers rotated by ``magnitude`` degrees
    * mean-shift: centers moved by ``magnitude`` along the diagonal
    * label-flip: each label flipped with probability ``magnitude``
    """
    if periods < 2:
        raise ValueError("need at least 2 periods")
    if n_blobs < 2 or rows_per_period < 1 or dim < 2:
        raise ValueError("need n_blobs >= 2, rows_per_period >= 1 and dim >= 2")
    if drift_kind not in DRIFT_KINDS:
        raise ValueError(f"drift_kind must be one of {DRIFT_KINDS}")
    if magnitude < 0 or (drift_kind == "label-flip" and magnitude > 1):
        raise ValueError(f"invalid magnitude {magnitude} for {drift_kind}")
    drift_period = periods // 2 if drift_period is None else drift_period
    if not 1 <= drift_period < periods:
        raise ValueError("drift_period must fall inside the stream")
    rng = np.random.default_rng(seed)
    angles = 2 * np.pi * np.arange(n_blobs) / n_blobs
    centers = np.zeros((n_blobs, dim))
    centers[:, 0] = separation * np.cos(angles)
    centers[:, 1] = separation * np.sin(angles)
    blob_labels = np.arange(n_blobs) % 2
    drifted = centers.copy()
    if drift_kind == "rotation":
        a = np.deg2rad(magnitude)
        rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        drifted[:, :2] = centers[:, :2] @ rot.T
    elif drift_kind == "mean-shift":
        drifted = centers + magnitude * np.ones(dim) / np.sqrt(dim)

    xs, ys, ps = [], [], []
    for p in range(periods):
        cen = drifted if p >= drift_period else centers
        blob = rng.integers(0, n_blobs, rows_per_period)
        x = cen[blob] + rng.standard_normal((rows_per_period, dim))
        y = blob_labels[blob].copy()
        if drift_kind == "label-flip" and p >= drift_period:
            flip = rng.random(rows_per_period) < magnitude
            y[flip] = 1 - y[flip]
        xs.append(x)
        ys.append(y)
        ps.append(np.full(rows_per_period, p, dtype=np.int64))
    x, y, period = np.vstack(xs), np.concatenate(ys), np.concatenate(ps)
    names = [f"x{j}" for j in range(dim)]
    schema = FeatureSchema(tuple([Column(n, "continuous") for n in names]
                                 + [Column("label", "label"), Column("period", "timestamp")]))
    cols = {n: x[:, j] for j, n in enumerate(names)}
    cols["label"] = y.astype(np.int64)
    cols["period"] = period.astype(float)
    return Dataset(schema, cols, period)
