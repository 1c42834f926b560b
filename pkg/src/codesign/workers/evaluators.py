"""The three worker kinds: simulation (train and score), hardware database (model), physical (stub)."""

from __future__ import annotations

import time
from typing import Callable, Dict

from ..dataset import Dataset, make_folds, train_test_split
from ..evolution import Candidate
from ..hw.model import GridError, model_run
from ..hw.target import HardwareTarget
from ..mlp import TrainConfig, TrainingError, kfold_accuracy, split_accuracy
from .protocol import (HARDWARE_DB, PHYSICAL, PHYSICAL_FIELDS, SIMULATION, EvalRequest, EvalResult,
                       WorkerDescriptor)


class Worker:
    kind = ""

    def __init__(self, worker_id: str, slots: int = 1, clock: Callable[[], float] = time.perf_counter):
        self.worker_id = worker_id
        self.slots = slots
        self.clock = clock

    @property
    def descriptor(self) -> WorkerDescriptor:
        return WorkerDescriptor(self.worker_id, self.kind, slots=self.slots)

    def _result(self, req: EvalRequest, status: str, objectives=None, reason: str = "", timings=None,
                payload=None) -> EvalResult:
        return EvalResult(req.job_id, status, objectives or {}, reason, timings or {}, self.worker_id,
                          self.kind, payload or {})

    def handle(self, req: EvalRequest) -> EvalResult:
        raise NotImplementedError


class SimulationWorker(Worker):
    kind = SIMULATION

    def __init__(self, worker_id: str, datasets: Dict[str, Dataset], slots: int = 1,
                 clock: Callable[[], float] = time.perf_counter):
        super().__init__(worker_id, slots, clock)
        self.datasets = dict(datasets)

    @property
    def descriptor(self) -> WorkerDescriptor:
        return WorkerDescriptor(self.worker_id, self.kind, datasets=tuple(sorted(self.datasets)), slots=self.slots)

    def handle(self, req: EvalRequest) -> EvalResult:
        return simulation_evaluate(req, self)


class HardwareDbWorker(Worker):
    kind = HARDWARE_DB

    def __init__(self, worker_id: str, targets: Dict[str, HardwareTarget], slots: int = 1,
                 clock: Callable[[], float] = time.perf_counter):
        super().__init__(worker_id, slots, clock)
        self.targets = dict(targets)

    @property
    def descriptor(self) -> WorkerDescriptor:
        return WorkerDescriptor(self.worker_id, self.kind, targets=tuple(sorted(self.targets)), slots=self.slots)

    def handle(self, req: EvalRequest) -> EvalResult:
        return hwdb_evaluate(req, self)


class PhysicalWorker(Worker):
    kind = PHYSICAL

    def handle(self, req: EvalRequest) -> EvalResult:
        return physical_evaluate(req, self)


def simulation_evaluate(req: EvalRequest, worker: SimulationWorker) -> EvalResult:
    t0 = worker.clock()
    ds = worker.datasets.get(req.dataset)
    if ds is None:
        return worker._result(req, "failed", reason=f"unknown dataset {req.dataset!r}")
    c = Candidate.from_dict(req.candidate)
    g = c.genome
    if g.input_size != ds.n_features or g.output_size != ds.n_classes:
        return worker._result(req, "failed", reason=(
            f"shape mismatch: genome {g.input_size}->{g.output_size}, dataset {ds.n_features}->{ds.n_classes}"))
    cfg = TrainConfig(**req.train)
    split = req.split
    payload = {}
    try:
        if split.get("mode") == "kfold":
            res = kfold_accuracy(g, ds, make_folds(ds, int(split["k"]), int(split.get("seed", 0))), cfg)
            if res.failures == len(res.per_fold):
                raise TrainingError("all folds diverged")
            acc = res.mean
            payload = {"per_fold": res.per_fold, "fold_failures": res.failures}
        else:
            tr, te = train_test_split(ds.n_rows, float(split.get("test_fraction", 0.2)), int(split.get("seed", 0)))
            acc = split_accuracy(g, ds, tr, te, cfg)
    except TrainingError as e:
        return worker._result(req, "failed", reason=f"training diverged: {e}",
                              timings={"train_s": worker.clock() - t0})
    return worker._result(req, "ok", {"accuracy": acc}, timings={"train_s": worker.clock() - t0}, payload=payload)


def hwdb_evaluate(req: EvalRequest, worker: HardwareDbWorker) -> EvalResult:
    t0 = worker.clock()
    target = worker.targets.get(req.target)
    if target is None:
        return worker._result(req, "failed", reason=f"unknown target {req.target!r}")
    target = target.with_overrides(**req.target_overrides)
    c = Candidate.from_dict(req.candidate)
    try:
        report = model_run(c.genome, c.grid, target, c.batch_m, req.total_inputs)
    except GridError as e:
        return worker._result(req, "failed", reason=f"invalid grid: {e}", payload={"violations": e.violations})
    metrics = report.objectives()
    objectives = {o: metrics[o] for o in req.objectives if o in metrics}
    payload = {k: v for k, v in report.to_dict().items() if k != "per_layer"}
    return worker._result(req, "ok", objectives, timings={"model_s": worker.clock() - t0}, payload=payload)


def physical_evaluate(req: EvalRequest, worker: Worker) -> EvalResult:
    # Synthesis is not available; the payload documents what a real physical worker reports.
    return worker._result(req, "failed", reason="unsupported: physical synthesis worker is an interface stub",
                          payload={"fields": list(PHYSICAL_FIELDS),
                                   "units": {"alm": "count", "m20k": "blocks", "dsp": "count", "fmax": "Hz"}})
