import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import load_fixture
from codesign.evolution import (MUTATION_OPS, Bounds, Budget, Candidate, FitnessVector, FunctionEvaluator, Objective,
                                SearchConfig, SearchError, SteadyStateSearch, crowding_distance, dominates,
                                init_population, mutate, nondominated_ranks, pareto_front, register_fitness,
                                run_search, scalarize)
from codesign.hw import GridConfig, get_target, model_run, validate_grid
from codesign.mlp import LayerGene, MlpGenome
from codesign.oracles import brute_force_front, enumerate_front, make_toy_space, toy_fitness

A10 = get_target("arria10")
ACC_TPUT = (Objective("accuracy"), Objective("outputs_per_s"))


def fv(*vals, names=("accuracy", "outputs_per_s"), senses=("max", "max")):
    return FitnessVector(dict(zip(names, vals)), dict(zip(names, senses)))


def cand(hidden=((8, "relu"),), grid=(2, 2, 2), batch=4, cid="c0"):
    genome = MlpGenome(4, 2, tuple(LayerGene(n, a) for n, a in hidden))
    return Candidate(genome, GridConfig(*grid), batch, id=cid)


def test_dominance_examples():
    assert dominates(fv(0.9, 1e6), fv(0.8, 9e5))
    assert not dominates(fv(0.9, 9e5), fv(0.8, 1e6))
    assert not dominates(fv(0.8, 1e6), fv(0.9, 9e5))
    assert not dominates(fv(0.9, 1e6), fv(0.9, 1e6))
    lat = dict(names=("accuracy", "latency_s"), senses=("max", "min"))
    assert dominates(fv(0.9, 1.0, **lat), fv(0.9, 2.0, **lat))
    with pytest.raises(ValueError):
        dominates(fv(0.9, 1.0), fv(0.9, 1.0, **lat))


def test_front_hand_example():
    archive = [(cand(cid=f"c{i}"), fv(*p)) for i, p in enumerate([(1, 1), (2, 0), (0, 2), (1, 0)])]
    front = pareto_front(archive)
    assert sorted(tuple(f.values.values()) for _, f in front) == [(0, 2), (1, 1), (2, 0)]
    assert pareto_front(archive[:1]) == archive[:1]
    assert pareto_front([]) == []


def test_front_ignores_failed():
    archive = [(cand(), fv(0.5, 1.0)), (cand(cid="c1"), FitnessVector.failed(ACC_TPUT, "boom"))]
    assert len(pareto_front(archive)) == 1


@pytest.mark.parametrize("case", load_fixture("pareto_fronts.json"))
def test_front_matches_frozen_oracle(case):
    names = tuple(f"o{i}" for i in range(len(case["maximize"])))
    senses = tuple("max" if m else "min" for m in case["maximize"])
    archive = [(cand(cid=f"c{i}"), fv(*p, names=names, senses=senses)) for i, p in enumerate(case["points"])]
    got = sorted(int(c.id[1:]) for c, _ in pareto_front(archive))
    assert got == case["front"]


def test_identical_points_all_kept():
    archive = [(cand(cid=f"c{i}"), fv(1.0, 1.0)) for i in range(5)]
    assert len(pareto_front(archive)) == 5


def test_ranks_and_crowding():
    pts = np.array([[2.0, 0.0], [1.0, 1.0], [0.0, 2.0], [0.5, 0.5], [0.0, 0.0]])
    assert nondominated_ranks(pts).tolist() == [0, 0, 0, 1, 2]
    cd = crowding_distance(pts[:3])
    assert np.isinf(cd[0]) and np.isinf(cd[2]) and np.isfinite(cd[1])


def test_scalarize():
    assert scalarize(fv(0.7, names=("accuracy",), senses=("max",)), [Objective("accuracy")]) == 0.7
    lat = FitnessVector({"latency_s": 3.0}, {"latency_s": "min"})
    assert scalarize(lat, [Objective("latency_s", "min")]) == -3.0
    both = [Objective("accuracy", weight=0.5), Objective("outputs_per_s", weight=0.5)]
    assert scalarize(fv(0.8, 0.6), both) == pytest.approx(0.7)
    assert scalarize(FitnessVector.failed(both, "x"), both) == float("-inf")
    with pytest.raises(KeyError):
        scalarize(fv(0.8, names=("accuracy",), senses=("max",)), both)


def test_custom_fitness_registration():
    @register_fitness("acc_only_test")
    def _acc(f, objs):
        return f.values["accuracy"]

    cfg = SearchConfig(Bounds(4, 2), (Objective("accuracy"),), A10, population=4, fitness="acc_only_test")
    SteadyStateSearch(cfg, FunctionEvaluator(lambda c: fv(0.5, names=("accuracy",), senses=("max",))))
    with pytest.raises(SearchError):
        SteadyStateSearch(SearchConfig(Bounds(4, 2), ACC_TPUT, A10, fitness="nope"), FunctionEvaluator(lambda c: None))


def test_init_population():
    b = Bounds(4, 2)
    pop = init_population(b, 10, 3, A10)
    assert len(pop) == 10
    assert pop == init_population(b, 10, 3, A10)
    for c in pop:
        assert not b.violations(c) and not validate_grid(c.grid, A10)
    fixed = Bounds(4, 2, 1, 1, 8, 8, ("relu",), (True,))
    pop = init_population(fixed, 10, 0, A10)
    assert len({c.genome for c in pop}) == 1
    assert len({c.grid for c in pop}) > 1
    impossible = Bounds(4, 2, rows=(40, 40), cols=(40, 40))
    with pytest.raises(SearchError):
        init_population(impossible, 2, 0, A10, max_tries=20)


def test_bounds_validation():
    with pytest.raises(ValueError):
        Bounds(4, 2, min_layers=3, max_layers=1)
    with pytest.raises(ValueError):
        Bounds(4, 2, activations=("swish",))


def test_mutate_remove_layer_clamped():
    b = Bounds(4, 2, min_layers=1, max_layers=3)
    parent = cand()
    only_remove = {"remove_layer": 1.0}
    child = mutate(parent, only_remove, b, random.Random(0), A10, "c1")
    assert not child.mutated and child.key() == parent.key()
    child = mutate(parent, {"remove_layer": 1.0, "resize_layer": 0.5}, b, random.Random(0), A10, "c1")
    assert child.mutated and len(child.genome.hidden) == 1 and child.parent_id == "c0"


def test_mutate_deterministic():
    b = Bounds(4, 2)
    rates = {op: 0.2 for op in MUTATION_OPS}
    a = mutate(cand(), rates, b, random.Random(42), A10, "c9")
    assert a == mutate(cand(), rates, b, random.Random(42), A10, "c9")


def test_mutation_property_10k():
    b = Bounds(4, 2, max_layers=3, max_neurons=64)
    rates = {op: 0.2 for op in MUTATION_OPS}
    rng = random.Random(1)
    parent = init_population(b, 1, 0, A10)[0]
    mutated = 0
    for i in range(10_000):
        child = mutate(parent, rates, b, rng, A10, f"c{i + 1}")
        assert b.violations(child) == []
        assert validate_grid(child.grid, A10) == []
        assert child.genome.input_size == 4 and child.genome.output_size == 2
        mutated += child.mutated
        assert child.key() != parent.key() or not child.mutated
    assert mutated == 10_000


def test_candidate_roundtrip():
    c = cand(hidden=((3, "tanh"), (5, "sigmoid")), grid=(1, 2, 3, 4, 5), batch=7, cid="c5")
    assert Candidate.from_dict(c.to_dict()) == c
    assert c.key() == cand(hidden=((3, "tanh"), (5, "sigmoid")), grid=(1, 2, 3, 4, 5), batch=7, cid="c99").key()


def hw_fitness(c):
    rep = model_run(c.genome, c.grid, A10, c.batch_m, 1000)
    return FitnessVector({"outputs_per_s": rep.outputs_per_s, "efficiency": rep.efficiency},
                         {"outputs_per_s": "max", "efficiency": "max"})


HW_OBJ = (Objective("outputs_per_s"), Objective("efficiency"))


def test_budget_zero_is_initial_population():
    cfg = SearchConfig(Bounds(4, 2), HW_OBJ, A10, population=7)
    res = run_search(cfg, FunctionEvaluator(hw_fitness), Budget(steps=0))
    assert len(res.population) == 7
    assert res.stats.models_evaluated + res.stats.cache_hits == 7


def test_clone_population_hits_cache():
    clone = cand()
    ev = FunctionEvaluator(hw_fitness)
    cfg = SearchConfig(Bounds(4, 2), HW_OBJ, A10, population=5)
    s = SteadyStateSearch(cfg, ev)
    futs = [s._dispatch(Candidate(clone.genome, clone.grid, clone.batch_m, id=f"c{i}")) for i in range(5)]
    for i, (fut, fresh) in enumerate(futs):
        s._resolve(clone, fut, fresh)
    assert ev.calls == 1
    assert s.stats.cache_hits == 4


def test_same_seed_identical_archives():
    cfg = SearchConfig(Bounds(4, 2), HW_OBJ, A10, population=8, seed=5)
    a = run_search(cfg, FunctionEvaluator(hw_fitness), Budget(steps=60))
    b = run_search(cfg, FunctionEvaluator(hw_fitness), Budget(steps=60))
    assert [(c.to_dict(), f.values) for c, f in a.archive] == [(c.to_dict(), f.values) for c, f in b.archive]


def test_population_size_constant_and_invariants():
    b = Bounds(4, 2)
    cfg = SearchConfig(b, HW_OBJ, A10, population=6, seed=2)
    s = SteadyStateSearch(cfg, FunctionEvaluator(hw_fitness))
    s.initialize()
    for _ in range(40):
        s.run(Budget(steps=s.stats.steps + 1))
        assert len(s.population) == 6
    for c, _ in s.archive:
        assert not b.violations(c) and not validate_grid(c.grid, A10)


def test_failed_evaluations_do_not_enter_population():
    calls = {"n": 0}

    def flaky(c):
        calls["n"] += 1
        if calls["n"] > 4 and calls["n"] % 2:
            raise RuntimeError("worker exploded")
        return hw_fitness(c)

    cfg = SearchConfig(Bounds(4, 2), HW_OBJ, A10, population=4, seed=1)
    res = run_search(cfg, FunctionEvaluator(flaky), Budget(steps=30))
    assert res.stats.failed > 0
    assert all(f.ok for _, f in res.population)


def test_parallel_dispatch_uses_budget():
    from concurrent.futures import ThreadPoolExecutor

    pool = ThreadPoolExecutor(4)

    class Threaded(FunctionEvaluator):
        def submit(self, c):
            self.calls += 1
            return pool.submit(hw_fitness, c)

    cfg = SearchConfig(Bounds(4, 2), HW_OBJ, A10, population=6, seed=3, parallelism=4)
    res = run_search(cfg, Threaded(hw_fitness), Budget(steps=40))
    assert res.stats.steps == 40
    assert len({c.key() for c, _ in res.archive}) == len(res.archive)
    pool.shutdown()


def test_max_evaluations_budget():
    cfg = SearchConfig(Bounds(4, 2), HW_OBJ, A10, population=5, seed=3)
    res = run_search(cfg, FunctionEvaluator(hw_fitness), Budget(steps=10_000, max_evaluations=25))
    assert res.stats.models_evaluated <= 25


def test_single_objective_elitism():
    cfg = SearchConfig(Bounds(4, 2), (Objective("outputs_per_s"),), A10, population=6, seed=4)
    res = run_search(cfg, FunctionEvaluator(lambda c: FitnessVector(
        {"outputs_per_s": hw_fitness(c).values["outputs_per_s"]}, {"outputs_per_s": "max"})), Budget(steps=150))
    assert all(b >= a for a, b in zip(res.best_history, res.best_history[1:]))


def toy_bounds():
    return Bounds(2, 2, 1, 1, 1, 4, ("relu", "tanh"), (True,), (1, 2), (1, 2), (1, 2), (1, 1), (1, 1), (1, 1))


def toy_eval(c):
    item = dict(neurons=[l.neurons for l in c.genome.hidden], activation=c.genome.hidden[0].activation,
                rows=c.grid.rows, cols=c.grid.cols, vec_width=c.grid.vec_width)
    acc, rate = toy_fitness(item)
    return FitnessVector({"accuracy": acc, "outputs_per_s": rate}, {"accuracy": "max", "outputs_per_s": "max"})


def test_toy_space_front_matches_fixture():
    frozen = load_fixture("toy_front.json")
    got = enumerate_front(make_toy_space())
    assert [list(f) for _, f in got] == [e["fitness"] for e in frozen["front"]]


def test_multi_objective_converges_on_toy_space():
    space = make_toy_space(widths=(1, 2, 3, 4), max_layers=1, activations=("relu", "tanh"), grid_dims=(1, 2))
    assert len(space.items) == 64
    truth = {tuple(f) for _, f in enumerate_front(space)}
    cfg = SearchConfig(toy_bounds(), ACC_TPUT, A10, population=8, seed=0, rates={op: 0.3 for op in MUTATION_OPS})
    res = run_search(cfg, FunctionEvaluator(toy_eval), Budget(steps=400))
    found = {(f.values["accuracy"], f.values["outputs_per_s"]) for _, f in res.front}
    # every reported point is globally non-dominated, and the whole true front was reached
    assert found <= truth
    assert found == truth


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=60),
       st.lists(st.booleans(), min_size=3, max_size=3))
def test_front_property(points, maximize):
    names = ("a", "b", "c")
    senses = tuple("max" if m else "min" for m in maximize)
    archive = [(cand(cid=f"c{i}"), fv(*map(float, p), names=names, senses=senses)) for i, p in enumerate(points)]
    got = sorted(int(c.id[1:]) for c, _ in pareto_front(archive))
    assert got == brute_force_front(points, maximize)
