import itertools
import threading
import time

import pytest

from codesign.evolution import Candidate, Objective
from codesign.hw import GridConfig, get_target
from codesign.mlp import LayerGene, MlpGenome
from codesign.oracles import synth_dataset
from codesign.workers import (HARDWARE_DB, PHYSICAL_FIELDS, PROTOCOL_VERSION, SIMULATION, Endpoint, EvalRequest,
                              EvalResult, HardwareDbWorker, InProcessEndpoint, Master, MasterEvaluator,
                              MasterServer, PhysicalWorker, SimulationWorker, SocketEndpoint, WorkerDescriptor,
                              WorkerServer, decode, encode, run_worker)
from codesign.workers.protocol import ProtocolError

A10 = get_target("arria10")
XOR = synth_dataset("xor", 40, seed=1)


def candidate(n_in=2, grid=(4, 4, 2), cid="c0"):
    return Candidate(MlpGenome(n_in, 2, (LayerGene(6, "relu"),)), GridConfig(*grid), 8, id=cid)


def request(job="j0", objectives=("accuracy", "outputs_per_s"), **kw):
    base = dict(candidate=candidate().to_dict(), dataset="xor", target="arria10",
                train={"epochs": 5, "batch_size": 8}, total_inputs=1000)
    base.update(kw)
    return EvalRequest(job, objectives=tuple(objectives), **base)


def sim(wid="sim-0", **kw):
    return SimulationWorker(wid, {"xor": XOR}, **kw)


def hwdb(wid="hw-0", **kw):
    return HardwareDbWorker(wid, {"arria10": A10}, **kw)


def fake_clock():
    c = itertools.count()
    return lambda: float(next(c))


@pytest.fixture
def master():
    m = Master(retries=2)
    yield m
    m.close()


def add(m, w, endpoint=None):
    return m.register(w.descriptor, endpoint or InProcessEndpoint(w))


class Crashing(Endpoint):
    def __init__(self):
        self.calls = 0

    def call(self, req):
        self.calls += 1
        raise ConnectionError("worker died mid-job")


class Blocking(Endpoint):
    """Holds a job until released, then answers with the wrapped worker."""

    def __init__(self, worker):
        self.worker = worker
        self.release = threading.Event()
        self.started = threading.Event()

    def call(self, req):
        self.started.set()
        self.release.wait(10)
        return self.worker.handle(req)


class Counting(InProcessEndpoint):
    def __init__(self, worker):
        super().__init__(worker)
        self.calls = 0

    def call(self, req):
        self.calls += 1
        return super().call(req)


# -- protocol ---------------------------------------------------------------------------

def test_codec_roundtrip_and_framing():
    frame = encode("eval", request().to_dict())
    assert int.from_bytes(frame[:4], "big") == len(frame) - 4
    typ, body = decode(frame)
    assert typ == "eval"
    assert EvalRequest.from_dict(body) == request()
    with pytest.raises(ProtocolError):
        decode(frame[:-1])
    with pytest.raises(ProtocolError):
        decode(len(b"xx").to_bytes(4, "big") + b"xx")


def test_codec_rejects_other_versions():
    import json

    doc = json.dumps({"type": "eval", "body": {}, "protocol_version": PROTOCOL_VERSION + 1}).encode()
    with pytest.raises(ProtocolError):
        decode(len(doc).to_bytes(4, "big") + doc)


def test_for_kind_splits_objectives():
    r = request(objectives=("accuracy", "outputs_per_s", "latency_s"))
    assert r.for_kind(SIMULATION).objectives == ("accuracy",)
    assert r.for_kind(HARDWARE_DB).objectives == ("outputs_per_s", "latency_s")
    assert r.for_kind(HARDWARE_DB).job_id == "j0/hardware_db"


# -- workers ---------------------------------------------------------------------------

def test_simulation_worker_deterministic():
    w = sim()
    a, b = w.handle(request(objectives=("accuracy",))), w.handle(request(objectives=("accuracy",)))
    assert a.ok and a.objectives == b.objectives
    assert 0 <= a.objectives["accuracy"] <= 1


def test_simulation_shape_mismatch_and_unknown_dataset():
    r = sim().handle(request(objectives=("accuracy",), candidate=candidate(n_in=3).to_dict()))
    assert not r.ok and "shape mismatch" in r.reason
    r = sim().handle(request(objectives=("accuracy",), dataset="mnist"))
    assert not r.ok and "unknown dataset" in r.reason


def test_simulation_kfold_payload():
    r = sim().handle(request(objectives=("accuracy",), split={"mode": "kfold", "k": 10, "seed": 0}))
    assert r.ok and len(r.payload["per_fold"]) == 10


def test_hwdb_worker():
    r = hwdb().handle(request(objectives=("outputs_per_s", "efficiency")))
    assert r.ok and set(r.objectives) == {"outputs_per_s", "efficiency"}
    assert r.payload["effective_gops"] <= r.payload["potential_gops"]
    assert hwdb("hw-1").handle(request(objectives=("outputs_per_s",))).objectives == \
        hwdb("hw-2").handle(request(objectives=("outputs_per_s",))).objectives
    assert "unknown target" in hwdb().handle(request(objectives=("outputs_per_s",), target="virtex")).reason
    bad = request(objectives=("outputs_per_s",), candidate=candidate(grid=(40, 40, 4)).to_dict())
    r = hwdb().handle(bad)
    assert not r.ok and r.payload["violations"]


def test_hwdb_applies_overrides():
    one = hwdb().handle(request(objectives=("outputs_per_s",)))
    four = hwdb().handle(request(objectives=("outputs_per_s",), target_overrides={"ddr_banks": 4}))
    assert four.payload["bandwidth_available_bytes_per_s"] == pytest.approx(76.8e9)
    assert four.objectives["outputs_per_s"] >= one.objectives["outputs_per_s"]


def test_physical_stub():
    r = PhysicalWorker("ph").handle(request(objectives=("alm",)))
    assert not r.ok and r.reason.startswith("unsupported")
    assert set(r.payload["fields"]) == set(PHYSICAL_FIELDS) == {"alm", "m20k", "dsp", "fmax"}


# -- master --------------------------------------------------------------------------------

def test_split_and_merge(master):
    add(master, sim())
    add(master, hwdb())
    res = master.dispatch(request()).result(10)
    assert res.ok
    assert set(res.objectives) == {"accuracy", "outputs_per_s"}
    assert set(res.payload) == {SIMULATION, HARDWARE_DB}
    assert res.worker_kind == "hardware_db+simulation"


def test_model_only_goes_to_hwdb(master):
    s, h = Counting(sim()), Counting(hwdb())
    master.register(sim().descriptor, s)
    master.register(hwdb().descriptor, h)
    assert master.dispatch(request(objectives=("outputs_per_s",))).result(10).ok
    assert (s.calls, h.calls) == (0, 1)


def test_physical_never_routed_for_standard_objectives(master):
    ph = Counting(PhysicalWorker("ph"))
    master.register(PhysicalWorker("ph").descriptor, ph)
    add(master, sim())
    add(master, hwdb())
    for i in range(5):
        assert master.dispatch(request(f"j{i}")).result(10).ok
    assert ph.calls == 0


def test_no_capable_worker_fails_immediately(master):
    add(master, hwdb())
    res = master.dispatch(request()).result(1)
    assert not res.ok and "no capable worker" in res.reason
    res = master.dispatch(request("j1", objectives=("bogus",))).result(1)
    assert not res.ok


def test_zero_slot_worker_never_scheduled(master):
    idle = Counting(hwdb("idle"))
    master.register(hwdb("idle", slots=0).descriptor, idle)
    assert "idle" in [d.worker_id for d in master.workers()]
    assert not master.dispatch(request(objectives=("outputs_per_s",))).result(1).ok
    add(master, hwdb("busy"))
    assert master.dispatch(request("j1", objectives=("outputs_per_s",))).result(5).ok
    assert idle.calls == 0


def test_registration_rules(master):
    add(master, hwdb())
    with pytest.raises(ValueError):
        add(master, hwdb())
    with pytest.raises(ValueError):
        master.register(WorkerDescriptor("old", HARDWARE_DB, protocol_version=0), InProcessEndpoint(hwdb()))
    with pytest.raises(ValueError):
        master.dispatch(request("dup", objectives=("outputs_per_s",)))
        master.dispatch(request("dup", objectives=("outputs_per_s",)))


def test_crash_retries_on_other_worker(master):
    crash = Crashing()
    master.register(hwdb("bad").descriptor, crash)
    add(master, hwdb("good"))
    futs = [master.dispatch(request(f"j{i}", objectives=("outputs_per_s",))) for i in range(20)]
    assert all(f.result(10).ok for f in futs)
    assert all(master.deliveries[f"j{i}"] == 1 for i in range(20))


def test_retries_exhausted(master):
    crash = Crashing()
    master.register(hwdb("bad").descriptor, crash)
    res = master.dispatch(request(objectives=("outputs_per_s",))).result(10)
    assert not res.ok and "retries exhausted" in res.reason
    assert crash.calls == 3  # first attempt plus R=2 retries


def test_heartbeat_expiry_requeues_once():
    now = [0.0]
    m = Master(retries=2, lease_timeout_s=15, clock=lambda: now[0])
    try:
        slow = Blocking(hwdb("slow"))
        m.register(hwdb("slow").descriptor, slow)
        fut = m.dispatch(request(objectives=("outputs_per_s",)))
        assert slow.started.wait(5)
        add(m, hwdb("fresh"))
        m.heartbeat("fresh")
        now[0] = 10.0
        m.heartbeat("fresh")
        assert m.expire() == []
        now[0] = 16.0
        assert m.expire() == ["slow"]
        assert m.expire() == []
        res = fut.result(5)
        assert res.ok and res.worker_id == "fresh"
        slow.release.set()  # the late answer from the expired lease is stale
        time.sleep(0.1)
        assert m.deliveries["j0"] == 1
        with pytest.raises(KeyError):
            m.heartbeat("slow")
    finally:
        m.close()


def test_master_evaluator(master):
    add(master, sim())
    add(master, hwdb())
    ev = MasterEvaluator(master, (Objective("accuracy"), Objective("outputs_per_s")), "xor", "arria10",
                         train={"epochs": 3}, total_inputs=500, run_id="t")
    fv = ev.submit(candidate(cid="c3")).result(10)
    assert fv.ok and set(fv.values) == {"accuracy", "outputs_per_s"}
    assert fv.payload["job_id"] == "t-0-c3"
    assert fv.eval_seconds > 0


# -- transport ------------------------------------------------------------------------------

def test_socket_and_inprocess_byte_identical():
    w_local, w_remote = sim("w", clock=fake_clock()), sim("w", clock=fake_clock())
    server = WorkerServer(w_remote).start()
    try:
        req = request(objectives=("accuracy",))
        local = InProcessEndpoint(w_local).call(req)
        remote = SocketEndpoint(*server.address, timeout=10).call(req)
        assert encode("result", local.to_dict()) == encode("result", remote.to_dict())
        h1, h2 = hwdb("h", clock=fake_clock()), hwdb("h", clock=fake_clock())
        hs = WorkerServer(h2).start()
        r = request(objectives=("outputs_per_s", "latency_s"))
        assert encode("result", InProcessEndpoint(h1).call(r).to_dict()) == \
            encode("result", SocketEndpoint(*hs.address, timeout=10).call(r).to_dict())
        hs.close()
    finally:
        server.close()


def test_remote_worker_registration_and_dispatch():
    m = Master(heartbeat_s=0.2, lease_timeout_s=2)
    ms = MasterServer(m).start()
    stop = threading.Event()
    try:
        ws = run_worker(hwdb("remote"), ms.address, stop=stop)
        assert [d.worker_id for d in m.workers()] == ["remote"]
        res = m.dispatch(request(objectives=("outputs_per_s",))).result(10)
        assert res.ok and res.worker_id == "remote"
        time.sleep(0.5)
        m.expire()
        assert [d.worker_id for d in m.workers()] == ["remote"]  # heartbeats keep the lease alive
        assert ws.address[1] > 0
    finally:
        stop.set()
        ms.close()
        m.close()


def test_unreachable_worker_counts_as_failure():
    m = Master(retries=1)
    try:
        m.register(hwdb("ghost").descriptor, SocketEndpoint("127.0.0.1", 1, timeout=1))
        res = m.dispatch(request(objectives=("outputs_per_s",))).result(10)
        assert not res.ok and "retries exhausted" in res.reason
    finally:
        m.close()


def test_eval_result_roundtrip():
    r = EvalResult("j", "ok", {"accuracy": 0.5}, "", {"t": 1.0}, "w", "simulation", {"x": [1, 2]})
    assert EvalResult.from_dict(decode(encode("result", r.to_dict()))[1]) == r
