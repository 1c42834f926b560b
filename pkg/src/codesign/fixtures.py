"""Freeze oracle outputs as JSON fixtures.

    python3 -m codesign.fixtures --out tests/fixtures/v1

Every value here comes from :mod:`codesign.oracles` only, so the frozen files
stay independent of the analytical model and the search code they check.
"""

from __future__ import annotations

import argparse
import json
import random
from pathlib import Path

from .hw.target import GridConfig
from .oracles import brute_force_front, enumerate_front, make_toy_space, oracle_simulate

FIXTURE_VERSION = "v1"


def simulator_cases(n: int = 40, seed: int = 1234) -> list:
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        m, k, n_ = rng.randint(1, 12), rng.randint(1, 40), rng.randint(1, 12)
        g = GridConfig(rng.randint(1, 4), rng.randint(1, 4), rng.randint(1, 8), rng.randint(1, 3), rng.randint(1, 3))
        r = oracle_simulate(m, k, n_, g)
        out.append({"m": m, "k": k, "n": n_, "grid": g.to_dict(), "cycles": r.cycles,
                    "bytes_loaded": r.bytes_loaded, "bytes_stored": r.bytes_stored, "true_macs": r.true_macs})
    return out


def front_cases(n: int = 10, seed: int = 99) -> list:
    rng = random.Random(seed)
    out = []
    for _ in range(n):
        dims = rng.choice([2, 3])
        size = rng.randint(1, 120)
        # coarse values so ties and duplicates occur
        pts = [[float(rng.randint(0, 9)) for _ in range(dims)] for _ in range(size)]
        maximize = [rng.random() < 0.5 for _ in range(dims)]
        out.append({"points": pts, "maximize": maximize, "front": brute_force_front(pts, maximize)})
    return out


def toy_front() -> dict:
    space = make_toy_space()
    front = enumerate_front(space)
    return {"n_items": len(space.items), "front": [{"item": item, "fitness": list(f)} for item, f in front]}


def write_fixtures(out: Path):
    out.mkdir(parents=True, exist_ok=True)
    files = {"simulator_cycles.json": simulator_cases(), "pareto_fronts.json": front_cases(),
             "toy_front.json": toy_front()}
    for name, data in files.items():
        (out / name).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    (out / "VERSION").write_text(FIXTURE_VERSION + "\n")
    return sorted(files)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default=f"tests/fixtures/{FIXTURE_VERSION}")
    args = p.parse_args(argv)
    for name in write_fixtures(Path(args.out)):
        print(Path(args.out) / name)


if __name__ == "__main__":
    main()
