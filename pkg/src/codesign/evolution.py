"""Steady-state evolutionary co-design search.

A candidate couples an :class:`~codesign.mlp.MlpGenome` with a
:class:`~codesign.hw.GridConfig` and a batch size. Each step selects a parent
by size-3 tournament, mutates it, evaluates the child (through the cache) and
inserts it in place of the worst member (one objective) or the most crowded
member of the last non-dominated rank (several objectives).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import random
import time
from concurrent.futures import FIRST_COMPLETED, Future, wait
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .hw.model import validate_grid
from .hw.target import GridConfig, HardwareTarget
from .mlp import ACTIVATIONS, LayerGene, MlpGenome

logger = logging.getLogger(__name__)

MUTATION_OPS = (
    "add_layer", "remove_layer", "resize_layer", "activation", "bias",
    "grid_rows", "grid_cols", "grid_vec", "grid_ir", "grid_ic", "batch",
)
_GRID_OP_FIELD = {
    "grid_rows": "rows", "grid_cols": "cols", "grid_vec": "vec_width",
    "grid_ir": "interleave_rows", "grid_ic": "interleave_cols",
}


class SearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class Bounds:
    input_size: int
    output_size: int
    min_layers: int = 1
    max_layers: int = 3
    min_neurons: int = 4
    max_neurons: int = 128
    activations: Tuple[str, ...] = ACTIVATIONS
    bias_choices: Tuple[bool, ...] = (True, False)
    rows: Tuple[int, int] = (1, 32)
    cols: Tuple[int, int] = (1, 32)
    vec_width: Tuple[int, int] = (1, 16)
    interleave_rows: Tuple[int, int] = (1, 16)
    interleave_cols: Tuple[int, int] = (1, 16)
    batch_m: Tuple[int, int] = (1, 64)

    def __post_init__(self):
        for name in ("activations", "bias_choices", "rows", "cols", "vec_width",
                     "interleave_rows", "interleave_cols", "batch_m"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        problems = []
        if not 0 <= self.min_layers <= self.max_layers:
            problems.append("min_layers <= max_layers")
        if not 1 <= self.min_neurons <= self.max_neurons:
            problems.append("1 <= min_neurons <= max_neurons")
        for name in ("rows", "cols", "vec_width", "interleave_rows", "interleave_cols", "batch_m"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                problems.append(f"1 <= {name}[0] <= {name}[1]")
        if not self.activations or any(a not in ACTIVATIONS for a in self.activations):
            problems.append(f"activations within {ACTIVATIONS}")
        if not self.bias_choices:
            problems.append("at least one bias choice")
        if problems:
            raise ValueError("inconsistent bounds: " + ", ".join(problems))

    def violations(self, c: "Candidate") -> List[str]:
        out = []
        g = c.genome
        if (g.input_size, g.output_size) != (self.input_size, self.output_size):
            out.append("input/output size changed")
        if not self.min_layers <= len(g.hidden) <= self.max_layers:
            out.append(f"{len(g.hidden)} hidden layers outside [{self.min_layers}, {self.max_layers}]")
        for i, layer in enumerate(g.hidden):
            if not self.min_neurons <= layer.neurons <= self.max_neurons:
                out.append(f"layer {i} width {layer.neurons} out of bounds")
            if layer.activation not in self.activations:
                out.append(f"layer {i} activation {layer.activation} not allowed")
            if layer.has_bias not in self.bias_choices:
                out.append(f"layer {i} bias flag not allowed")
        for f, name in _GRID_OP_FIELD.items():
            lo, hi = getattr(self, name)
            if not lo <= getattr(c.grid, name) <= hi:
                out.append(f"grid {name} out of bounds")
        if not self.batch_m[0] <= c.batch_m <= self.batch_m[1]:
            out.append("batch_m out of bounds")
        return out


@dataclass(frozen=True)
class Candidate:
    genome: MlpGenome
    grid: GridConfig
    batch_m: int
    id: str = ""
    parent_id: Optional[str] = None
    mutated: bool = True

    def key(self) -> str:
        """Structural identity: same layers, activations, bias flags, grid and batch."""
        return json.dumps([self.genome.to_dict(), self.grid.to_dict(), self.batch_m], sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha1(self.key().encode()).hexdigest()[:12]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "parent_id": self.parent_id,
            "genome": self.genome.to_dict(),
            "grid": self.grid.to_dict(),
            "batch_m": self.batch_m,
            "mutated": self.mutated,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Candidate":
        return cls(MlpGenome.from_dict(d["genome"]), GridConfig(**d["grid"]), int(d["batch_m"]),
                   d.get("id", ""), d.get("parent_id"), d.get("mutated", True))

    def label(self) -> str:
        return f"{self.genome.spec()}|{self.grid.spec()}|b{self.batch_m}"


@dataclass(frozen=True)
class Objective:
    name: str
    sense: str = "max"
    weight: float = 1.0
    scale: float = 1.0

    def __post_init__(self):
        if self.sense not in ("max", "min"):
            raise ValueError(f"objective sense must be 'max' or 'min', got {self.sense!r}")
        if self.scale <= 0:
            raise ValueError("objective scale must be positive")

    @property
    def sign(self) -> float:
        return 1.0 if self.sense == "max" else -1.0


@dataclass
class FitnessVector:
    values: Dict[str, float]
    senses: Dict[str, str]
    status: str = "ok"
    reason: str = ""
    payload: Dict = field(default_factory=dict)
    eval_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def oriented(self, names: Sequence[str]) -> List[float]:
        return [v if self.senses[n] == "max" else -v for n, v in ((n, self.values[n]) for n in names)]

    def to_dict(self) -> dict:
        return {"values": self.values, "senses": self.senses, "status": self.status, "reason": self.reason,
                "payload": self.payload, "eval_seconds": self.eval_seconds}

    @classmethod
    def from_dict(cls, d: dict) -> "FitnessVector":
        return cls(dict(d["values"]), dict(d["senses"]), d.get("status", "ok"), d.get("reason", ""),
                   d.get("payload", {}), d.get("eval_seconds", 0.0))

    @classmethod
    def failed(cls, objectives: Sequence[Objective], reason: str, eval_seconds: float = 0.0) -> "FitnessVector":
        return cls({}, {o.name: o.sense for o in objectives}, "failed", reason, {}, eval_seconds)


def dominates(a: FitnessVector, b: FitnessVector) -> bool:
    if a.senses != b.senses:
        raise ValueError(f"objective schema mismatch: {a.senses} vs {b.senses}")
    better = False
    for name, sense in a.senses.items():
        x, y = a.values[name], b.values[name]
        if sense == "min":
            x, y = -x, -y
        if x < y:
            return False
        if x > y:
            better = True
    return better


def _oriented_matrix(fvs: Sequence[FitnessVector]) -> np.ndarray:
    names = list(fvs[0].senses)
    return np.array([fv.oriented(names) for fv in fvs], dtype=np.float64).reshape(len(fvs), len(names))


def nondominated_mask(points: np.ndarray) -> np.ndarray:
    """Boolean mask of rows of a maximize-oriented matrix that no other row dominates."""
    ge = (points[:, None, :] >= points[None, :, :]).all(axis=2)
    gt = (points[:, None, :] > points[None, :, :]).any(axis=2)
    dominated_by = ge & gt  # [j, i]: j dominates i
    return ~dominated_by.any(axis=0)


def pareto_front(archive: Sequence[Tuple[Candidate, FitnessVector]]) -> List[Tuple[Candidate, FitnessVector]]:
    ok = [(c, fv) for c, fv in archive if fv.ok]
    if not ok:
        return []
    mask = nondominated_mask(_oriented_matrix([fv for _, fv in ok]))
    return [item for item, keep in zip(ok, mask) if keep]


def nondominated_ranks(points: np.ndarray) -> np.ndarray:
    ranks = np.full(len(points), -1)
    remaining = np.arange(len(points))
    r = 0
    while remaining.size:
        mask = nondominated_mask(points[remaining])
        ranks[remaining[mask]] = r
        remaining = remaining[~mask]
        r += 1
    return ranks


def crowding_distance(points: np.ndarray) -> np.ndarray:
    n, d = points.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for j in range(d):
        order = np.argsort(points[:, j], kind="stable")
        col = points[order, j]
        dist[order[0]] = dist[order[-1]] = np.inf
        span = col[-1] - col[0]
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


FITNESS_FUNCTIONS: Dict[str, Callable[[FitnessVector, Sequence[Objective]], float]] = {}


def register_fitness(name: str):
    """Decorator registering a custom scalar fitness usable via ``fitness: <name>`` in the config."""
    def deco(fn):
        FITNESS_FUNCTIONS[name] = fn
        return fn
    return deco


def scalarize(fv: FitnessVector, objectives: Sequence[Objective]) -> float:
    if not fv.ok:
        return -math.inf
    total = 0.0
    for o in objectives:
        if o.name not in fv.values:
            raise KeyError(f"objective {o.name!r} missing from fitness vector")
        total += o.weight * o.sign * fv.values[o.name] / o.scale
    return total


@register_fitness("weighted_sum")
def _weighted_sum(fv: FitnessVector, objectives: Sequence[Objective]) -> float:
    return scalarize(fv, objectives)


# -- variation ---------------------------------------------------------------

def _rand_genome(rng: random.Random, b: Bounds) -> MlpGenome:
    layers = tuple(
        LayerGene(rng.randint(b.min_neurons, b.max_neurons), rng.choice(b.activations), rng.choice(b.bias_choices))
        for _ in range(rng.randint(b.min_layers, b.max_layers))
    )
    return MlpGenome(b.input_size, b.output_size, layers)


def _rand_grid(rng: random.Random, b: Bounds) -> GridConfig:
    return GridConfig(*(rng.randint(*getattr(b, f)) for f in
                        ("rows", "cols", "vec_width", "interleave_rows", "interleave_cols")))


def init_population(bounds: Bounds, size: int, seed: int, target: HardwareTarget,
                    max_tries: int = 1000) -> List[Candidate]:
    rng = random.Random(seed)
    out = []
    for i in range(size):
        genome = _rand_genome(rng, bounds)
        for _ in range(max_tries):
            grid = _rand_grid(rng, bounds)
            if not validate_grid(grid, target):
                break
        else:
            raise SearchError(f"no valid grid for {target.name} found in {max_tries} samples; check grid bounds")
        out.append(Candidate(genome, grid, rng.randint(*bounds.batch_m), id=f"c{i}"))
    return out


def _step_pow2(rng: random.Random, value: int, lo: int, hi: int) -> int:
    up = value * 2 if value * 2 <= hi else None
    down = max(lo, value // 2) if value > lo else None
    choices = [v for v in (up, down) if v is not None]
    return rng.choice(choices) if choices else value


def _applicable(op: str, c: Candidate, b: Bounds) -> bool:
    n = len(c.genome.hidden)
    if op == "add_layer":
        return n < b.max_layers
    if op == "remove_layer":
        return n > b.min_layers
    if op == "resize_layer":
        return n > 0 and b.min_neurons < b.max_neurons
    if op == "activation":
        return n > 0 and len(b.activations) > 1
    if op == "bias":
        return n > 0 and len(b.bias_choices) > 1
    if op in _GRID_OP_FIELD:
        lo, hi = getattr(b, _GRID_OP_FIELD[op])
        return lo < hi
    if op == "batch":
        return b.batch_m[0] < b.batch_m[1]
    raise ValueError(f"unknown mutation operator {op!r}")


def _apply(op: str, c: Candidate, b: Bounds, rng: random.Random) -> Candidate:
    layers = list(c.genome.hidden)
    if op == "add_layer":
        gene = LayerGene(rng.randint(b.min_neurons, b.max_neurons), rng.choice(b.activations),
                         rng.choice(b.bias_choices))
        layers.insert(rng.randint(0, len(layers)), gene)
    elif op == "remove_layer":
        layers.pop(rng.randrange(len(layers)))
    elif op == "resize_layer":
        i = rng.randrange(len(layers))
        old = layers[i].neurons
        new = int(round(old * 2.0 ** rng.uniform(-1.0, 1.0)))
        if new == old:
            new = old + rng.choice((-1, 1))
        layers[i] = replace(layers[i], neurons=min(b.max_neurons, max(b.min_neurons, new)))
    elif op == "activation":
        i = rng.randrange(len(layers))
        layers[i] = replace(layers[i], activation=rng.choice([a for a in b.activations if a != layers[i].activation]
                                                             or list(b.activations)))
    elif op == "bias":
        i = rng.randrange(len(layers))
        layers[i] = replace(layers[i], has_bias=not layers[i].has_bias)
    elif op in _GRID_OP_FIELD:
        name = _GRID_OP_FIELD[op]
        lo, hi = getattr(b, name)
        return replace(c, grid=replace(c.grid, **{name: _step_pow2(rng, getattr(c.grid, name), lo, hi)}))
    elif op == "batch":
        return replace(c, batch_m=_step_pow2(rng, c.batch_m, *b.batch_m))
    return replace(c, genome=replace(c.genome, hidden=tuple(layers)))


def mutate(c: Candidate, rates: Dict[str, float], bounds: Bounds, rng: random.Random,
           target: HardwareTarget, new_id: str = "", max_tries: int = 50) -> Candidate:
    """Apply at least one operator; every operator fires with its own probability.

    The child is clamped to ``bounds`` and must fit ``target``. If no valid,
    structurally different child turns up within ``max_tries``, a clone of the
    parent flagged ``mutated=False`` is returned.
    """
    parent_key = c.key()
    for _ in range(max_tries):
        usable = [op for op in MUTATION_OPS if rates.get(op, 0.0) > 0 and _applicable(op, c, bounds)]
        if not usable:
            break
        chosen = [op for op in usable if rng.random() < rates[op]]
        if not chosen:
            chosen = [rng.choices(usable, weights=[rates[op] for op in usable])[0]]
        child = c
        for op in chosen:
            if _applicable(op, child, bounds):
                child = _apply(op, child, bounds, rng)
        if child.key() == parent_key or bounds.violations(child) or validate_grid(child.grid, target):
            continue
        return replace(child, id=new_id, parent_id=c.id, mutated=True)
    return replace(c, id=new_id, parent_id=c.id, mutated=False)


# -- engine ------------------------------------------------------------------

class Evaluator:
    """Turns candidates into fitness vectors. ``submit`` may complete asynchronously."""

    def submit(self, c: Candidate) -> Future:
        raise NotImplementedError

    def close(self):
        pass


class FunctionEvaluator(Evaluator):
    def __init__(self, fn: Callable[[Candidate], FitnessVector]):
        self.fn = fn
        self.calls = 0

    def submit(self, c: Candidate) -> Future:
        fut: Future = Future()
        self.calls += 1
        t0 = time.perf_counter()
        try:
            fv = self.fn(c)
            if not fv.eval_seconds:
                fv.eval_seconds = time.perf_counter() - t0
            fut.set_result(fv)
        except Exception as e:  # a failing evaluator marks the candidate failed
            fut.set_exception(e)
        return fut


@dataclass
class SearchConfig:
    bounds: Bounds
    objectives: Tuple[Objective, ...]
    target: HardwareTarget
    population: int = 32
    rates: Dict[str, float] = field(default_factory=lambda: {op: 0.2 for op in MUTATION_OPS})
    tournament: int = 3
    seed: int = 0
    parallelism: int = 1
    mode: str = "auto"  # auto | scalar | pareto
    fitness: str = "weighted_sum"

    @property
    def multi_objective(self) -> bool:
        if self.mode == "auto":
            return len(self.objectives) > 1
        return self.mode == "pareto"


@dataclass
class Budget:
    steps: int = 0
    max_evaluations: Optional[int] = None
    max_seconds: Optional[float] = None


@dataclass
class RunStats:
    models_evaluated: int = 0
    total_eval_s: float = 0.0
    cache_hits: int = 0
    failed: int = 0
    steps: int = 0
    wall_s: float = 0.0

    @property
    def avg_eval_s(self) -> float:
        return self.total_eval_s / self.models_evaluated if self.models_evaluated else 0.0

    def table(self) -> dict:
        return {"models_evaluated": self.models_evaluated, "avg_eval_s": self.avg_eval_s,
                "total_eval_s": self.total_eval_s}


@dataclass
class SearchResult:
    archive: List[Tuple[Candidate, FitnessVector]]
    front: List[Tuple[Candidate, FitnessVector]]
    stats: RunStats
    population: List[Tuple[Candidate, FitnessVector]]
    best_history: List[float]


class EvalCache:
    def __init__(self):
        self._done: Dict[str, FitnessVector] = {}
        self._pending: Dict[str, Future] = {}

    def __contains__(self, key: str) -> bool:
        return key in self._done or key in self._pending

    def __len__(self) -> int:
        return len(self._done)

    def get(self, key: str) -> Optional[FitnessVector]:
        return self._done.get(key)

    def pending(self, key: str) -> Optional[Future]:
        return self._pending.get(key)

    def put(self, key: str, fv: FitnessVector):
        if key in self._done:
            raise RuntimeError(f"candidate evaluated twice: {key}")
        self._pending.pop(key, None)
        self._done[key] = fv

    def mark_pending(self, key: str, fut: Future):
        self._pending[key] = fut


class SteadyStateSearch:
    """Owns the population; every insertion goes through :meth:`_insert`."""

    def __init__(self, cfg: SearchConfig, evaluator: Evaluator,
                 on_record: Optional[Callable[[dict], None]] = None):
        self.cfg = cfg
        self.evaluator = evaluator
        self.on_record = on_record
        self.rng = random.Random(cfg.seed)
        self.cache = EvalCache()
        self.archive: List[Tuple[Candidate, FitnessVector]] = []
        self.population: List[Tuple[Candidate, FitnessVector]] = []
        self.stats = RunStats()
        self.best_history: List[float] = []
        self._next_id = 0
        self._seq = 0
        if cfg.fitness not in FITNESS_FUNCTIONS:
            raise SearchError(f"unknown fitness function {cfg.fitness!r}")
        self._fitness = FITNESS_FUNCTIONS[cfg.fitness]

    # evaluation ----------------------------------------------------------
    def _new_id(self) -> str:
        i = self._next_id
        self._next_id += 1
        return f"c{i}"

    def _dispatch(self, c: Candidate) -> Tuple[Future, bool]:
        key = c.key()
        done = self.cache.get(key)
        if done is not None:
            fut: Future = Future()
            fut.set_result(done)
            return fut, False
        pend = self.cache.pending(key)
        if pend is not None:
            return pend, False
        fut = self.evaluator.submit(c)
        self.cache.mark_pending(key, fut)
        return fut, True

    def _resolve(self, c: Candidate, fut: Future, fresh: bool) -> FitnessVector:
        if not fresh:
            self.stats.cache_hits += 1
            return self.cache.get(c.key())
        try:
            fv = fut.result()
        except Exception as e:
            logger.warning("evaluation of %s failed: %s", c.id, e)
            fv = FitnessVector.failed(self.cfg.objectives, f"{type(e).__name__}: {e}")
        if fv.ok:
            missing = [o.name for o in self.cfg.objectives if o.name not in fv.values
                       or not math.isfinite(fv.values[o.name])]
            if missing:
                fv = FitnessVector.failed(self.cfg.objectives, f"missing or non-finite objectives {missing}",
                                          fv.eval_seconds)
        # keep only the configured objectives in the comparable part
        fv.senses = {o.name: o.sense for o in self.cfg.objectives}
        if fv.ok:
            extra = {k: v for k, v in fv.values.items() if k not in fv.senses}
            if extra:
                fv.payload = {**fv.payload, "metrics": {**fv.payload.get("metrics", {}), **extra}}
            fv.values = {o.name: float(fv.values[o.name]) for o in self.cfg.objectives}
        self.cache.put(c.key(), fv)
        self.archive.append((c, fv))
        self.stats.models_evaluated += 1
        self.stats.total_eval_s += fv.eval_seconds
        if not fv.ok:
            self.stats.failed += 1
        if self.on_record is not None:
            self.on_record({"seq": self._seq, "candidate": c.to_dict(), "fitness": fv.to_dict(),
                            "worker": fv.payload.get("worker", "")})
        self._seq += 1
        return fv

    # ranking -------------------------------------------------------------
    def scalar(self, fv: FitnessVector) -> float:
        return self._fitness(fv, self.cfg.objectives) if fv.ok else -math.inf

    def _mo_keys(self, members: List[Tuple[Candidate, FitnessVector]]):
        ok_idx = [i for i, (_, fv) in enumerate(members) if fv.ok]
        ranks = np.full(len(members), np.iinfo(np.int64).max // 2)
        crowd = np.zeros(len(members))
        if ok_idx:
            pts = _oriented_matrix([members[i][1] for i in ok_idx])
            r = nondominated_ranks(pts)
            for rank in np.unique(r):
                sel = np.flatnonzero(r == rank)
                cd = crowding_distance(pts[sel])
                for s, d in zip(sel, cd):
                    crowd[ok_idx[s]] = d
            ranks[ok_idx] = r
        return ranks, crowd

    def _tournament(self) -> Candidate:
        pop = self.population
        k = min(self.cfg.tournament, len(pop))
        idx = self.rng.sample(range(len(pop)), k)
        if self.cfg.multi_objective:
            ranks, crowd = self._mo_keys(pop)
            best = min(idx, key=lambda i: (ranks[i], -crowd[i], i))
        else:
            best = max(idx, key=lambda i: (self.scalar(pop[i][1]), -i))
        return pop[best][0]

    def _insert(self, c: Candidate, fv: FitnessVector):
        if not fv.ok:
            return  # failed children never displace members
        pop = self.population
        if self.cfg.multi_objective:
            pool = pop + [(c, fv)]
            ranks, crowd = self._mo_keys(pool)
            worst_rank = ranks.max()
            cands = [i for i in range(len(pool)) if ranks[i] == worst_rank]
            # most crowded first; among ties drop the newcomer, then the oldest member
            victim = min(cands, key=lambda i: (crowd[i], 0 if i == len(pop) else 1, i))
            if victim != len(pop):
                pop[victim] = (c, fv)
        else:
            s = self.scalar(fv)
            worst = min(range(len(pop)), key=lambda i: (self.scalar(pop[i][1]), i))
            if s >= self.scalar(pop[worst][1]):
                pop[worst] = (c, fv)

    def best(self) -> float:
        return max(self.scalar(fv) for _, fv in self.population)

    # driver --------------------------------------------------------------
    def initialize(self):
        cands = init_population(self.cfg.bounds, self.cfg.population, self.cfg.seed, self.cfg.target)
        self._next_id = len(cands)
        futs = [(c, *self._dispatch(c)) for c in cands]
        for c, fut, fresh in futs:
            self.population.append((c, self._resolve(c, fut, fresh)))
        self.best_history.append(self.best())

    def _spawn(self) -> Candidate:
        parent = self._tournament()
        return mutate(parent, self.cfg.rates, self.cfg.bounds, self.rng, self.cfg.target, self._new_id())

    def _complete(self, child: Candidate, fut: Future, fresh: bool):
        self._insert(child, self._resolve(child, fut, fresh))
        self.stats.steps += 1
        self.best_history.append(self.best())

    def run(self, budget: Budget) -> SearchResult:
        t0 = time.perf_counter()
        if not self.population:
            self.initialize()

        inflight: Dict[Future, List[Tuple[Candidate, bool]]] = {}
        n_inflight = 0
        fresh_inflight = 0
        par = max(1, self.cfg.parallelism)

        def may_issue() -> bool:
            if self.stats.steps + n_inflight >= budget.steps:
                return False
            if (budget.max_evaluations is not None
                    and self.stats.models_evaluated + fresh_inflight >= budget.max_evaluations):
                return False
            return budget.max_seconds is None or time.perf_counter() - t0 < budget.max_seconds

        while True:
            while n_inflight < par and may_issue():
                child = self._spawn()
                fut, fresh = self._dispatch(child)
                if not fresh and fut.done():
                    self._complete(child, fut, fresh)
                    continue
                inflight.setdefault(fut, []).append((child, fresh))
                n_inflight += 1
                fresh_inflight += fresh
            if not n_inflight:
                break
            done, _ = wait(list(inflight), return_when=FIRST_COMPLETED)
            # completion order is not reproducible above parallelism 1; merge in id order within a wake-up
            for fut in sorted(done, key=lambda f: int(inflight[f][0][0].id[1:])):
                for child, fresh in inflight.pop(fut):
                    self._complete(child, fut, fresh)
                    n_inflight -= 1
                    fresh_inflight -= fresh
        self.stats.wall_s = time.perf_counter() - t0
        return SearchResult(list(self.archive), pareto_front(self.archive), self.stats,
                            list(self.population), list(self.best_history))


def run_search(cfg: SearchConfig, evaluator: Evaluator, budget: Budget,
               on_record: Optional[Callable[[dict], None]] = None) -> SearchResult:
    return SteadyStateSearch(cfg, evaluator, on_record).run(budget)
