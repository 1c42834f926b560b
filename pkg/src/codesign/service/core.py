"""Service operations. Both the HTTP app and the in-process client call these."""

from __future__ import annotations

import logging
import threading
import uuid
from pathlib import Path
from typing import Callable, Dict, Optional

import yaml

from .. import __version__
from ..config import ConfigError, generate_config, parse_config
from ..dataset import DataError
from ..evolution import SearchError, pareto_front
from ..hw.model import GridError, bandwidth_available, device_roofline, model_run, validate_grid
from ..hw.target import GridConfig, HardwareTarget, load_catalog
from ..mlp import MlpGenome
from ..orchestrator import WorkerUnavailable, run_from_config
from ..results import LogError, front_table, log_headers, replay, write_pareto, write_report
from ..workers.protocol import ProtocolError
from . import schemas as S

logger = logging.getLogger(__name__)

EXIT_CODES = {"config": 2, "worker": 3, "data": 4}


class ServiceError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind
        self.message = message

    @property
    def exit_code(self) -> int:
        return EXIT_CODES.get(self.kind, 1)

    def body(self) -> S.ErrorBody:
        return S.ErrorBody(kind=self.kind, message=self.message)


def classify(e: BaseException) -> ServiceError:
    if isinstance(e, ServiceError):
        return e
    if isinstance(e, (ConfigError, SearchError)):
        return ServiceError("config", str(e))
    if isinstance(e, (DataError, GridError, LogError)):
        return ServiceError("data", str(e))
    if isinstance(e, (WorkerUnavailable, ProtocolError, ConnectionError, TimeoutError)):
        return ServiceError("worker", str(e))
    if isinstance(e, OSError):
        return ServiceError("data", str(e))
    raise e


def _target_info(t: HardwareTarget) -> S.TargetInfo:
    return S.TargetInfo(**t.to_dict(), roofline_gops=device_roofline(t), bandwidth_bytes_per_s=bandwidth_available(t))


def _target(name: str, ddr_banks=None, clock_hz=None) -> HardwareTarget:
    catalog = load_catalog()
    if name not in catalog:
        raise ServiceError("config", f"unknown target {name!r}; known: {sorted(catalog)}")
    try:
        return catalog[name].with_overrides(ddr_banks, clock_hz)
    except ValueError as e:
        raise ServiceError("config", f"bad target override: {e}") from None


def health() -> S.Health:
    return S.Health(version=__version__)


def targets() -> list:
    return [_target_info(t) for t in load_catalog().values()]


def model(req: S.ModelRequest) -> S.ModelResponse:
    try:
        genome = MlpGenome.parse(req.genome)
        grid = GridConfig.parse(req.grid)
    except ValueError as e:
        raise ServiceError("config", str(e)) from None
    t = _target(req.target, req.ddr_banks, req.clock_hz)
    try:
        rep = model_run(genome, grid, t, req.batch, req.inputs)
    except GridError as e:
        raise ServiceError("data", f"grid {grid.spec()} does not fit {t.name}: " + "; ".join(e.violations)) from None
    return S.ModelResponse(genome=genome.spec(), grid=grid.spec(), target=_target_info(t), batch=req.batch,
                           inputs=req.inputs, **rep.to_dict())


def check_grid(req: S.GridCheckRequest) -> S.GridCheckResponse:
    try:
        grid = GridConfig.parse(req.grid)
    except ValueError as e:
        raise ServiceError("config", str(e)) from None
    v = validate_grid(grid, _target(req.target))
    return S.GridCheckResponse(grid=grid.spec(), target=req.target, ok=not v, violations=v)


def gen_config(req: S.GenerateConfigRequest) -> S.GenerateConfigResponse:
    try:
        cfg = generate_config(req.dataset, req.template, req.label_column, req.has_header)
    except Exception as e:
        raise classify(e) from None
    return S.GenerateConfigResponse(yaml=cfg.to_yaml(), input_size=cfg.nna.input_size,
                                    output_size=cfg.nna.output_size, dataset_name=cfg.dataset.name)


def search(req: S.SearchRequest, on_record: Optional[Callable[[dict], None]] = None) -> S.SearchSummary:
    data = yaml.safe_load(yaml.safe_dump(req.config))
    evo = dict(data.get("evolution") or {})
    if req.seed is not None:
        evo["seed"] = req.seed
    if req.parallelism is not None:
        evo["parallelism"] = req.parallelism
    data["evolution"] = evo
    try:
        cfg = parse_config(data)
        art = run_from_config(cfg, req.out_dir, on_record)
    except Exception as e:
        raise classify(e) from None
    st = art.result.stats
    return S.SearchSummary(run_id=art.run_id, out_dir=str(art.out_dir), log=str(art.log), pareto=str(art.pareto),
                           stats=str(art.stats), report=str(art.report), models_evaluated=st.models_evaluated,
                           avg_eval_s=st.avg_eval_s, total_eval_s=st.total_eval_s, cache_hits=st.cache_hits,
                           failed=st.failed, front_size=art.front_rows)


def _log_target(log: str, given: Optional[str]) -> Optional[str]:
    if given:
        return given
    heads = log_headers(log)
    return heads[0]["config"].get("hardware", {}).get("target") if heads else None


def pareto(req: S.LogRequest) -> S.ParetoResponse:
    try:
        archive = replay(req.log)
        target = _log_target(req.log, req.target)
        if req.out:
            front = write_pareto(req.out, archive, target)
        else:
            front = pareto_front(archive)
    except Exception as e:
        raise classify(e) from None
    header, rows = front_table(front, target)
    warning = None if front else f"log {req.log} has no successful evaluations; the front is empty"
    return S.ParetoResponse(path=req.out, header=header, rows=rows, evaluations=len(archive), warning=warning)


def report(req: S.LogRequest) -> S.ReportResponse:
    if not req.out:
        raise ServiceError("config", "report needs an output path")
    try:
        archive = replay(req.log)
        n = write_report(req.out, archive, _log_target(req.log, req.target))
    except Exception as e:
        raise classify(e) from None
    return S.ReportResponse(path=req.out, rows=n, failed=len(archive) - n)


class SearchJobs:
    """Background searches for the HTTP service; one thread per job."""

    def __init__(self):
        self._jobs: Dict[str, S.SearchJob] = {}
        self._lock = threading.Lock()

    def start(self, req: S.SearchRequest) -> S.SearchJob:
        job = S.SearchJob(job_id=uuid.uuid4().hex[:12], state="queued")
        with self._lock:
            self._jobs[job.job_id] = job

        def progress(_rec):
            with self._lock:
                job.evaluated += 1

        def run():
            job.state = "running"
            try:
                summary = search(req, progress)
                with self._lock:
                    job.summary, job.state = summary, "done"
            except ServiceError as e:
                with self._lock:
                    job.error, job.state = e.body(), "failed"
            except Exception as e:  # keep the service alive; surface the failure in the job record
                logger.exception("search %s crashed", job.job_id)
                with self._lock:
                    job.error, job.state = S.ErrorBody(kind="internal", message=str(e)), "failed"

        threading.Thread(target=run, daemon=True, name=f"search-{job.job_id}").start()
        return job.model_copy()

    def get(self, job_id: str) -> S.SearchJob:
        with self._lock:
            job = self._jobs.get(job_id)
            if job is None:
                raise KeyError(job_id)
            return job.model_copy()

    def list(self):
        with self._lock:
            return [j.model_copy() for j in self._jobs.values()]


def default_out(log: str, name: str) -> str:
    return str(Path(log).with_name(name))
