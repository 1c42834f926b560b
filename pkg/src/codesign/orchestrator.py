"""Run a search described by a :class:`RunConfig` and write its artifacts."""

from __future__ import annotations

import logging
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from .config import ConfigError, RunConfig
from .dataset import DataError, Dataset, load_csv, make_folds, write_csv
from .evolution import Budget, Candidate, FitnessVector, SearchConfig, SearchResult, SteadyStateSearch
from .hw.target import HardwareTarget, load_catalog
from .mlp import TrainConfig, kfold_accuracy
from .results import ResultsLog, sort_front, write_pareto, write_report, write_stats
from .workers import (HARDWARE_DB, OBJECTIVE_ROUTES, SIMULATION, HardwareDbWorker, InProcessEndpoint, Master,
                      MasterEvaluator, MasterServer, SimulationWorker)
from .workers.transport import parse_address

logger = logging.getLogger(__name__)

LOG_NAME = "results.jsonl"
PARETO_NAME = "pareto.csv"
STATS_NAME = "stats.json"
REPORT_NAME = "report.csv"
FINALISTS_NAME = "finalists.csv"


class WorkerUnavailable(RuntimeError):
    pass


@dataclass
class RunArtifacts:
    out_dir: Path
    log: Path
    pareto: Path
    stats: Path
    report: Path
    result: SearchResult
    run_id: str
    front_rows: int = 0
    extra: Dict[str, str] = field(default_factory=dict)


def resolve_target(cfg: RunConfig) -> HardwareTarget:
    try:
        catalog = load_catalog(cfg.hardware.catalog)
    except OSError as e:
        raise ConfigError(f"cannot read target catalog: {e}") from None
    if cfg.hardware.target not in catalog:
        raise ConfigError(f"unknown hardware target {cfg.hardware.target!r}; known: {sorted(catalog)}")
    return catalog[cfg.hardware.target]


def overrides(cfg: RunConfig) -> dict:
    return {k: v for k, v in (("ddr_banks", cfg.hardware.ddr_banks), ("clock_hz", cfg.hardware.clock_hz))
            if v is not None}


def load_dataset(cfg: RunConfig) -> Optional[Dataset]:
    if not cfg.dataset.path:
        return None
    ds = load_csv(cfg.dataset.path, cfg.dataset.label_column, cfg.dataset.has_header, cfg.dataset.name)
    if ds.n_features != cfg.nna.input_size or ds.n_classes != cfg.nna.output_size:
        raise DataError(f"dataset {ds.name} has {ds.n_features} features and {ds.n_classes} classes but the "
                        f"config says input_size={cfg.nna.input_size}, output_size={cfg.nna.output_size}")
    return ds


def needed_kinds(cfg: RunConfig) -> List[str]:
    unknown = [o.name for o in cfg.objectives if o.name not in OBJECTIVE_ROUTES]
    if unknown:
        raise ConfigError(f"unknown objectives {unknown}; known: {sorted(OBJECTIVE_ROUTES)}")
    return sorted({OBJECTIVE_ROUTES[o.name] for o in cfg.objectives})


def build_master(cfg: RunConfig, dataset: Optional[Dataset], target: HardwareTarget):
    """Master with the configured in-process workers, plus a TCP server when remote workers are expected."""
    w = cfg.workers
    master = Master(retries=w.retries, heartbeat_s=w.heartbeat_s, lease_timeout_s=w.lease_timeout_s)
    kinds = needed_kinds(cfg)
    if SIMULATION in kinds and dataset is not None:
        for i in range(w.simulation):
            wk = SimulationWorker(f"sim-{i}", {dataset.name: dataset})
            master.register(wk.descriptor, InProcessEndpoint(wk))
    if HARDWARE_DB in kinds:
        for i in range(w.hardware_db):
            wk = HardwareDbWorker(f"hwdb-{i}", {target.name: target})
            master.register(wk.descriptor, InProcessEndpoint(wk))
    server = None
    if w.transport == "tcp":
        host, port = parse_address(w.listen)
        try:
            server = MasterServer(master, host, port).start()
        except OSError as e:
            master.close()
            raise WorkerUnavailable(f"cannot listen on {w.listen}: {e}") from None
        logger.info("master listening on %s:%d", *server.address)
        master.start()
        want = {SIMULATION: w.remote_simulation, HARDWARE_DB: w.remote_hardware_db}
        deadline = time.monotonic() + w.wait_s
        while True:
            have = {k: sum(d.kind == k for d in master.workers()) for k in want}
            local = {SIMULATION: w.simulation, HARDWARE_DB: w.hardware_db}
            if all(have[k] >= local[k] * (k in kinds) + want[k] for k in want):
                break
            if time.monotonic() > deadline:
                server.close()
                master.close()
                raise WorkerUnavailable(f"timed out waiting for remote workers: have {have}, want {want}")
            time.sleep(0.05)
    elif w.transport != "inprocess":
        raise ConfigError(f"unknown transport {w.transport!r}")
    for k in kinds:
        if not any(d.kind == k for d in master.workers()):
            if server is not None:
                server.close()
            master.close()
            raise WorkerUnavailable(f"no {k} worker configured for objectives "
                                    f"{[o.name for o in cfg.objectives if OBJECTIVE_ROUTES[o.name] == k]}")
    return master, server


def search_config(cfg: RunConfig, target: HardwareTarget) -> SearchConfig:
    e = cfg.evolution
    rates = {**SearchConfig.__dataclass_fields__["rates"].default_factory(), **e.rates}
    return SearchConfig(cfg.bounds(), cfg.objective_list(), target.with_overrides(**overrides(cfg)),
                        e.population, rates, e.tournament, e.seed, e.parallelism, e.mode, e.fitness)


def score_finalists(cfg: RunConfig, dataset: Dataset, front: List[Tuple[Candidate, FitnessVector]],
                    path: Path) -> int:
    """Re-score the best front members with k-fold cross-validation (search itself uses the cheap split)."""
    finalists = sort_front(front)[:cfg.evaluation.finalists_kfold]
    plan = make_folds(dataset, cfg.evaluation.k, cfg.evaluation.seed)
    tcfg = TrainConfig(**cfg.training.model_dump())
    rows = []
    for c, fv in finalists:
        res = kfold_accuracy(c.genome, dataset, plan, tcfg)
        rows.append([c.label(), repr(fv.values.get("accuracy", float("nan"))), repr(res.mean),
                     str(res.failures), str(c.genome.total_neurons)])
    write_csv(path, ["candidate", "split_accuracy", "kfold_accuracy", "fold_failures", "neurons"], rows)
    return len(rows)


def run_from_config(cfg: RunConfig, out_dir: Optional[str] = None,
                    on_record: Optional[Callable[[dict], None]] = None) -> RunArtifacts:
    out = Path(out_dir or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    target = resolve_target(cfg)
    dataset = load_dataset(cfg)
    scfg = search_config(cfg, target)
    run_id = uuid.uuid4().hex[:8]
    master, server = build_master(cfg, dataset, target)
    evaluator = MasterEvaluator(master, scfg.objectives, dataset.name if dataset else "", target.name,
                                cfg.evaluation.split_spec(), cfg.training.model_dump(), cfg.hardware.total_inputs,
                                overrides(cfg), run_id)
    paths = {n: out / f for n, f in (("log", LOG_NAME), ("pareto", PARETO_NAME), ("stats", STATS_NAME),
                                      ("report", REPORT_NAME))}
    log = ResultsLog(paths["log"], cfg.model_dump(mode="json"), run_id)

    def record(rec):
        log.record(rec)
        if on_record is not None:
            on_record(rec)

    try:
        e = cfg.evolution
        result = SteadyStateSearch(scfg, evaluator, record).run(Budget(e.steps, e.max_evaluations, e.max_seconds))
    finally:
        log.close()
        if server is not None:
            server.close()
        master.close()
    front = write_pareto(paths["pareto"], result.archive, target.name)
    write_stats(paths["stats"], result.stats)
    write_report(paths["report"], result.archive, target.name)
    extra = {}
    if cfg.evaluation.finalists_kfold and dataset is not None and any(o.name == "accuracy" for o in cfg.objectives):
        extra["finalists"] = str(out / FINALISTS_NAME)
        score_finalists(cfg, dataset, front, out / FINALISTS_NAME)
    logger.info("run %s: %d evaluated, %d failed, %d cache hits, front of %d", run_id,
                result.stats.models_evaluated, result.stats.failed, result.stats.cache_hits, len(front))
    return RunArtifacts(out, paths["log"], paths["pareto"], paths["stats"], paths["report"], result, run_id,
                        len(front), extra)
