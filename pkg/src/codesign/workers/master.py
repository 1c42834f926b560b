"""Master side of the evaluation fabric.

The master pushes jobs into leased worker slots. A request whose objectives
span several worker kinds is split into one sub-job per kind and the results
are merged. A job is retried on worker failure (exception from the endpoint or
lease expiry) at most ``retries`` times, and its future is resolved exactly
once.
"""

from __future__ import annotations

import itertools
import logging
import threading
import time
from collections import deque
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, List, Optional, Sequence, Set

from ..evolution import Candidate, Evaluator, FitnessVector, Objective
from .protocol import (OBJECTIVE_ROUTES, PROTOCOL_VERSION, EvalRequest, EvalResult, WorkerDescriptor, decode,
                       encode)

logger = logging.getLogger(__name__)


class Endpoint:
    def call(self, req: EvalRequest) -> EvalResult:
        raise NotImplementedError

    def close(self):
        pass


class InProcessEndpoint(Endpoint):
    """Calls a worker object directly, passing messages through the wire codec."""

    def __init__(self, worker):
        self.worker = worker

    def call(self, req: EvalRequest) -> EvalResult:
        _, body = decode(encode("eval", req.to_dict()))
        res = self.worker.handle(EvalRequest.from_dict(body))
        _, body = decode(encode("result", res.to_dict()))
        return EvalResult.from_dict(body)


@dataclass
class Lease:
    worker_id: str
    expires_at: float


@dataclass
class _Worker:
    descriptor: WorkerDescriptor
    endpoint: Endpoint
    expires_at: float
    busy: int = 0
    inflight: Dict[int, "_SubJob"] = field(default_factory=dict)


@dataclass
class _Job:
    req: EvalRequest
    future: Future
    subs: List["_SubJob"] = field(default_factory=list)
    done: bool = False


@dataclass
class _SubJob:
    req: EvalRequest
    kind: str
    parent: _Job
    attempts: int = 0
    token: int = -1
    tried: Set[str] = field(default_factory=set)
    done: bool = False
    result: Optional[EvalResult] = None
    errors: List[str] = field(default_factory=list)


class Master:
    def __init__(self, retries: int = 2, heartbeat_s: float = 5.0, lease_timeout_s: float = 15.0,
                 clock: Callable[[], float] = time.monotonic, max_threads: int = 16):
        self.retries = retries
        self.heartbeat_s = heartbeat_s
        self.lease_timeout_s = lease_timeout_s
        self.clock = clock
        self._lock = threading.RLock()
        self._workers: Dict[str, _Worker] = {}
        self._queue: Deque[_SubJob] = deque()
        self._jobs: Dict[str, _Job] = {}
        self._tokens = itertools.count()
        self._pool = ThreadPoolExecutor(max_threads, thread_name_prefix="master")
        self.deliveries: Dict[str, int] = {}
        self._reaper: Optional[threading.Thread] = None
        self._stop = threading.Event()

    # -- membership ---------------------------------------------------------
    def register(self, descriptor: WorkerDescriptor, endpoint: Endpoint) -> Lease:
        if descriptor.protocol_version != PROTOCOL_VERSION:
            raise ValueError(f"protocol version {descriptor.protocol_version} != {PROTOCOL_VERSION}")
        with self._lock:
            if descriptor.worker_id in self._workers:
                raise ValueError(f"worker {descriptor.worker_id!r} already registered")
            expires = self.clock() + self.lease_timeout_s
            self._workers[descriptor.worker_id] = _Worker(descriptor, endpoint, expires)
            logger.info("registered %s worker %s (%d slots)", descriptor.kind, descriptor.worker_id, descriptor.slots)
        self._pump()
        return Lease(descriptor.worker_id, expires)

    def heartbeat(self, worker_id: str) -> Lease:
        with self._lock:
            w = self._workers.get(worker_id)
            if w is None:
                raise KeyError(f"unknown or expired worker {worker_id!r}")
            w.expires_at = self.clock() + self.lease_timeout_s
            return Lease(worker_id, w.expires_at)

    def deregister(self, worker_id: str):
        with self._lock:
            deliver = []
            w = self._workers.pop(worker_id, None)
            if w is not None:
                self._requeue_inflight(w, "deregistered", deliver)
        self._deliver(deliver)
        self._pump()

    def workers(self) -> List[WorkerDescriptor]:
        with self._lock:
            return [w.descriptor for w in self._workers.values()]

    def expire(self) -> List[str]:
        """Drop workers whose lease ran out and requeue their in-flight jobs."""
        now = self.clock()
        deliver = []
        with self._lock:
            gone = [wid for wid, w in self._workers.items() if w.expires_at < now]
            for wid in gone:
                w = self._workers.pop(wid)
                logger.warning("lease of worker %s expired; requeueing %d job(s)", wid, len(w.inflight))
                self._requeue_inflight(w, "lease expired", deliver)
        self._deliver(deliver)
        self._pump()
        return gone

    def _requeue_inflight(self, w: _Worker, why: str, deliver: list):
        for sj in list(w.inflight.values()):
            sj.token = -1  # any late reply from the old assignment is stale
            self._fail_attempt(sj, w.descriptor.worker_id, why, deliver)
        w.inflight.clear()
        w.busy = 0

    def start(self):
        """Run lease expiry in a background thread."""
        if self._reaper is None:
            self._reaper = threading.Thread(target=self._reap, daemon=True, name="master-reaper")
            self._reaper.start()

    def _reap(self):
        while not self._stop.wait(self.heartbeat_s):
            self.expire()

    def close(self):
        self._stop.set()
        self._pool.shutdown(wait=False, cancel_futures=True)
        with self._lock:
            for w in self._workers.values():
                w.endpoint.close()

    # -- dispatch -------------------------------------------------------------
    def dispatch(self, req: EvalRequest) -> Future:
        fut: Future = Future()
        deliver = []
        with self._lock:
            if req.job_id in self._jobs:
                raise ValueError(f"duplicate job id {req.job_id!r}")
            job = _Job(req, fut)
            self._jobs[req.job_id] = job
            unknown = [o for o in req.objectives if o not in OBJECTIVE_ROUTES]
            kinds = sorted({OBJECTIVE_ROUTES[o] for o in req.objectives if o in OBJECTIVE_ROUTES})
            if unknown or not kinds:
                deliver.append((job, self._failed(req, f"no worker kind measures objectives {unknown or []}")))
            else:
                missing = [k for k in kinds if not self._capable(k, req)]
                if missing:
                    deliver.append((job, self._failed(req, f"no capable worker for kind(s) {missing}")))
                else:
                    for k in kinds:
                        sj = _SubJob(req.for_kind(k), k, job)
                        job.subs.append(sj)
                        self._queue.append(sj)
        self._deliver(deliver)
        self._pump()
        return fut

    def _capable(self, kind: str, req: EvalRequest, exclude: Sequence[str] = ()) -> List[_Worker]:
        return [w for wid, w in sorted(self._workers.items())
                if w.descriptor.kind == kind and w.descriptor.slots > 0 and w.descriptor.can_serve(req)
                and wid not in exclude]

    def _failed(self, req: EvalRequest, reason: str) -> EvalResult:
        return EvalResult(req.job_id, "failed", reason=reason, worker_id="master")

    def _pump(self):
        deliver = []
        with self._lock:
            waiting: Deque[_SubJob] = deque()
            while self._queue:
                sj = self._queue.popleft()
                if sj.done:
                    continue
                capable = self._capable(sj.kind, sj.req)
                if not capable:
                    self._finish_sub(sj, self._failed(sj.req, "no capable worker online"), deliver)
                    continue
                # a retry waits for a worker it has not failed on, unless it has tried them all
                fresh = [w for w in capable if w.descriptor.worker_id not in sj.tried] or capable
                free = [w for w in fresh if w.busy < w.descriptor.slots]
                if not free:
                    waiting.append(sj)
                    continue
                w = min(free, key=lambda w: (w.busy, w.descriptor.worker_id))
                sj.token = next(self._tokens)
                w.busy += 1
                w.inflight[sj.token] = sj
                self._pool.submit(self._run, w.descriptor.worker_id, w.endpoint, sj, sj.token)
            self._queue = waiting
        self._deliver(deliver)

    def _run(self, worker_id: str, endpoint: Endpoint, sj: _SubJob, token: int):
        try:
            res: Optional[EvalResult] = endpoint.call(sj.req)
            err = None
        except Exception as e:
            res, err = None, f"{type(e).__name__}: {e}"
        deliver = []
        with self._lock:
            w = self._workers.get(worker_id)
            if w is not None and w.inflight.pop(token, None) is not None:
                w.busy -= 1
            if sj.token == token and not sj.done:
                if res is None:
                    self._fail_attempt(sj, worker_id, err, deliver)
                else:
                    self._finish_sub(sj, res, deliver)
        self._deliver(deliver)
        self._pump()

    def _fail_attempt(self, sj: _SubJob, worker_id: str, why: str, deliver: list):
        sj.attempts += 1
        sj.tried.add(worker_id)
        sj.errors.append(f"{worker_id}: {why}")
        if sj.attempts > self.retries:
            self._finish_sub(sj, self._failed(sj.req, "retries exhausted: " + "; ".join(sj.errors)), deliver)
        else:
            self._queue.append(sj)

    def _finish_sub(self, sj: _SubJob, res: EvalResult, deliver: list):
        sj.done = True
        sj.result = res
        job = sj.parent
        if job.done or not all(s.done for s in job.subs):
            return
        deliver.append((job, self._merge(job)))

    def _merge(self, job: _Job) -> EvalResult:
        objectives: Dict[str, float] = {}
        timings: Dict[str, float] = {}
        payload: dict = {}
        reasons = []
        for s in job.subs:
            r = s.result
            if not r.ok:
                reasons.append(f"{s.kind}: {r.reason}")
                continue
            missing = [o for o in s.req.objectives if o not in r.objectives]
            if missing:
                reasons.append(f"{s.kind}: result lacks {missing}")
            objectives.update({o: r.objectives[o] for o in s.req.objectives if o in r.objectives})
            timings.update({f"{s.kind}.{k}": v for k, v in r.timings.items()})
            payload[s.kind] = r.payload
        status = "failed" if reasons else "ok"
        return EvalResult(job.req.job_id, status, objectives if status == "ok" else {}, "; ".join(reasons), timings,
                          "+".join(s.result.worker_id for s in job.subs),
                          "+".join(s.kind for s in job.subs), payload)

    def _deliver(self, items):
        for job, res in items:
            with self._lock:
                if job.done:
                    continue
                job.done = True
                self.deliveries[job.req.job_id] = self.deliveries.get(job.req.job_id, 0) + 1
            job.future.set_result(res)


class MasterEvaluator(Evaluator):
    """Adapts the master to the search engine: one request per candidate."""

    def __init__(self, master: Master, objectives: Sequence[Objective], dataset: str = "", target: str = "",
                 split: Optional[dict] = None, train: Optional[dict] = None, total_inputs: int = 10000,
                 target_overrides: Optional[dict] = None, run_id: str = "run"):
        self.master = master
        self.objectives = tuple(objectives)
        self.template = dict(dataset=dataset, target=target, split=split or {"mode": "split", "test_fraction": 0.2,
                                                                              "seed": 0},
                             train=train or {}, total_inputs=total_inputs, target_overrides=target_overrides or {})
        self.run_id = run_id
        self._n = itertools.count()

    def request_for(self, c: Candidate) -> EvalRequest:
        return EvalRequest(job_id=f"{self.run_id}-{next(self._n)}-{c.id}", candidate=c.to_dict(),
                           objectives=tuple(o.name for o in self.objectives), **self.template)

    def submit(self, c: Candidate) -> Future:
        out: Future = Future()
        senses = {o.name: o.sense for o in self.objectives}

        def done(f: Future):
            res: EvalResult = f.result()
            fv = FitnessVector(dict(res.objectives), senses, res.status, res.reason,
                               {"worker": res.worker_id, "job_id": res.job_id, "timings": res.timings,
                                **({"workers": res.payload} if res.payload else {})},
                               float(sum(res.timings.values())))
            out.set_result(fv)

        self.master.dispatch(self.request_for(c)).add_done_callback(done)
        return out
