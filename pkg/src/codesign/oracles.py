"""Independent reference implementations used to check the fast paths.

Nothing here calls into ``codesign.hw.model`` or ``codesign.evolution``; the
simulator steps the PE grid register by register and the front filter is a
plain double loop.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .dataset import Dataset
from .hw.target import GridConfig


class SimulationTooLarge(ValueError):
    pass


@dataclass
class SimResult:
    cycles: int
    bytes_loaded: int
    bytes_stored: int
    true_macs: int
    lane_macs: int
    output: np.ndarray

    @property
    def bytes_moved(self) -> int:
        return self.bytes_loaded + self.bytes_stored


def _sim_tile(a_tile: np.ndarray, b_tile: np.ndarray, valid: np.ndarray, k: int, g: GridConfig, max_cycles: int):
    """Run one output tile through the grid; returns (cycles, acc, true_macs, lane_macs).

    ``a_tile`` is ``(rows*ir, kp)``, ``b_tile`` is ``(kp, cols*ic)``, both zero-filled
    beyond the real data. Row ``r`` of the grid is fed with a skew of ``r`` cycles,
    column ``c`` with a skew of ``c``; operands hop one PE per cycle.
    """
    R, C, V, IR, IC = g.rows, g.cols, g.vec_width, g.interleave_rows, g.interleave_cols
    kp = a_tile.shape[1]
    n_chunks = kp // V
    beats = [(kc, i, j) for kc in range(n_chunks) for i in range(IR) for j in range(IC)]
    nb = len(beats)
    beat_kc = np.array([b[0] for b in beats])
    beat_i = np.array([b[1] for b in beats])
    beat_j = np.array([b[2] for b in beats])

    a_reg = np.zeros((R, C, V))
    b_reg = np.zeros((R, C, V))
    a_tag = np.full((R, C), -1)
    b_tag = np.full((R, C), -1)
    acc = np.zeros((R, C, IR, IC))
    lane_k = np.arange(V)
    true_macs = 0
    lane_macs = 0
    last_inject = nb - 1 + max(R - 1, C - 1)
    rr, cc = np.arange(R), np.arange(C)

    cycle = 0
    while True:
        if cycle > max_cycles:
            raise SimulationTooLarge(f"tile exceeds {max_cycles} cycles")
        live = a_tag >= 0
        if cycle > last_inject and not live.any() and not (b_tag >= 0).any():
            cycle += 1  # write accumulators back
            break
        # MAC stage
        if live.any():
            if not np.array_equal(a_tag[live], b_tag[live]) or not np.array_equal(live, b_tag >= 0):
                raise AssertionError("operand skew mismatch inside the grid")
            pr, pc = np.nonzero(live)
            t = a_tag[pr, pc]
            prod = np.einsum("pv,pv->p", a_reg[pr, pc], b_reg[pr, pc])
            np.add.at(acc, (pr, pc, beat_i[t], beat_j[t]), prod)
            lane_macs += pr.size * V
            # a lane is real work when its k index, output row and output column are in range
            in_k = (beat_kc[t][:, None] * V + lane_k[None, :]) < k
            true_macs += int(np.sum(in_k.sum(axis=1) * valid[beat_i[t] * R + pr, beat_j[t] * C + pc]))
        # shift: A moves right, B moves down
        a_reg[:, 1:] = a_reg[:, :-1]
        a_tag[:, 1:] = a_tag[:, :-1]
        b_reg[1:, :] = b_reg[:-1, :]
        b_tag[1:, :] = b_tag[:-1, :]
        # inject at the edges with skew
        t_rows = cycle - rr
        ok = (t_rows >= 0) & (t_rows < nb)
        a_tag[:, 0] = np.where(ok, t_rows, -1)
        for r in np.nonzero(ok)[0]:
            kc, i, _ = beats[t_rows[r]]
            a_reg[r, 0] = a_tile[i * R + r, kc * V:(kc + 1) * V]
        t_cols = cycle - cc
        ok = (t_cols >= 0) & (t_cols < nb)
        b_tag[0, :] = np.where(ok, t_cols, -1)
        for c in np.nonzero(ok)[0]:
            kc, _, j = beats[t_cols[c]]
            b_reg[0, c] = b_tile[kc * V:(kc + 1) * V, j * C + c]
        cycle += 1
    return cycle, acc, true_macs, lane_macs


def oracle_simulate(m: int, k: int, n: int, g: GridConfig, a: Optional[np.ndarray] = None,
                    b: Optional[np.ndarray] = None, max_cycles: int = 10 ** 7, seed: int = 0) -> SimResult:
    """Cycle-step the grid over every output tile of an ``m x k`` by ``k x n`` product."""
    rng = np.random.default_rng(seed)
    if a is None:
        a = rng.integers(-4, 5, size=(m, k)).astype(np.float64)
    if b is None:
        b = rng.integers(-4, 5, size=(k, n)).astype(np.float64)
    R, C, V, IR, IC = g.rows, g.cols, g.vec_width, g.interleave_rows, g.interleave_cols
    tm, tn = R * IR, C * IC
    kp = k
    while kp % V:
        kp += 1
    # rough upper bound before committing to the stepping loop
    tiles_est = len(range(0, m, tm)) * len(range(0, n, tn))
    if tiles_est * (kp // V * IR * IC + R + C) > max_cycles:
        raise SimulationTooLarge("instance exceeds the simulation budget")

    out = np.zeros((m, n))
    cycles = loaded = stored = true_macs = lane_macs = 0
    for r0 in range(0, m, tm):
        for c0 in range(0, n, tn):
            a_tile = np.zeros((tm, kp))
            b_tile = np.zeros((kp, tn))
            rows_here = min(tm, m - r0)
            cols_here = min(tn, n - c0)
            a_tile[:rows_here, :k] = a[r0:r0 + rows_here]
            b_tile[:k, :cols_here] = b[:, c0:c0 + cols_here]
            loaded += 4 * (a_tile.size + b_tile.size)
            valid = np.zeros((tm, tn), dtype=bool)
            valid[:rows_here, :cols_here] = True
            cyc, acc, tmacs, lmacs = _sim_tile(a_tile, b_tile, valid, k, g, max_cycles)
            cycles += cyc
            true_macs += tmacs
            lane_macs += lmacs
            tile_out = np.zeros((tm, tn))
            for i in range(IR):
                for j in range(IC):
                    tile_out[i * R:(i + 1) * R, j * C:(j + 1) * C] = acc[:, :, i, j]
            stored += 4 * tile_out.size
            out[r0:r0 + rows_here, c0:c0 + cols_here] = tile_out[:rows_here, :cols_here]
            if cycles > max_cycles:
                raise SimulationTooLarge(f"simulation exceeded {max_cycles} cycles")
    return SimResult(cycles, loaded, stored, true_macs, lane_macs, out)


# -- Pareto oracle ----------------------------------------------------------

def brute_force_front(points: Sequence[Sequence[float]], maximize: Sequence[bool]) -> List[int]:
    """Indices of points not dominated by any other point (O(n^2))."""
    signs = [1.0 if mx else -1.0 for mx in maximize]
    oriented = [[s * v for s, v in zip(signs, p)] for p in points]
    keep = []
    for i, p in enumerate(oriented):
        dominated = False
        for j, q in enumerate(oriented):
            if i == j:
                continue
            if all(qv >= pv for qv, pv in zip(q, p)) and any(qv > pv for qv, pv in zip(q, p)):
                dominated = True
                break
        if not dominated:
            keep.append(i)
    return keep


@dataclass
class ToySearchSpace:
    """Exhaustively enumerable candidates with closed-form objective values."""

    items: List[dict]
    fitness: Callable[[dict], Tuple[float, ...]]
    maximize: Tuple[bool, ...]
    names: Tuple[str, ...] = ("accuracy", "outputs_per_s")

    def enumerate(self):
        for item in self.items:
            yield item, self.fitness(item)


def enumerate_front(space: ToySearchSpace) -> List[Tuple[dict, Tuple[float, ...]]]:
    evaluated = list(space.enumerate())
    idx = brute_force_front([f for _, f in evaluated], space.maximize)
    return [evaluated[i] for i in idx]


def toy_fitness(item: dict) -> Tuple[float, float]:
    neurons = sum(item["neurons"])
    acc = 1.0 - 1.0 / (1.0 + neurons / 4.0) + (0.01 if item["activation"] == "tanh" else 0.0)
    rate = item["rows"] * item["cols"] * item["vec_width"] / (neurons * (1 + len(item["neurons"])))
    return acc, rate


def make_toy_space(widths=(2, 4, 8), max_layers: int = 2, activations=("relu", "tanh"),
                   grid_dims=(1, 2)) -> ToySearchSpace:
    items = []
    for n_layers in range(1, max_layers + 1):
        for neurons in itertools.product(widths, repeat=n_layers):
            for act in activations:
                for rows, cols, vec in itertools.product(grid_dims, repeat=3):
                    items.append(dict(neurons=list(neurons), activation=act, rows=rows, cols=cols, vec_width=vec))
    return ToySearchSpace(items, toy_fitness, (True, True))


# -- synthetic datasets -----------------------------------------------------

def synth_dataset(kind: str, n: int, seed: int = 0) -> Dataset:
    """Labelled 2-D data that a suitable MLP can classify perfectly.

    blobs: separable by ``x0 + x1 > 0``; xor: label ``(x0 > 0) != (x1 > 0)``;
    rings: inner disc (r < 1) against an annulus (2 < r < 3).
    """
    if n < 4:
        raise ValueError("n must be >= 4")
    rng = np.random.default_rng(seed)
    if kind == "blobs":
        y = np.arange(n) % 2
        centers = np.where(y[:, None] == 1, 2.0, -2.0)
        x = centers + rng.uniform(-1.0, 1.0, size=(n, 2))
    elif kind == "xor":
        if n == 4:
            x = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
            y = np.array([0, 1, 1, 0])
            return Dataset("xor", x, y, 2)
        quad = np.arange(n) % 4
        sx = np.where(quad & 1, 1.0, -1.0)
        sy = np.where(quad & 2, 1.0, -1.0)
        x = np.stack([sx * rng.uniform(0.2, 1.0, n), sy * rng.uniform(0.2, 1.0, n)], axis=1)
        y = ((x[:, 0] > 0) != (x[:, 1] > 0)).astype(int)
    elif kind == "rings":
        y = np.arange(n) % 2
        r = np.where(y == 0, rng.uniform(0.0, 1.0, n), rng.uniform(2.0, 3.0, n))
        theta = rng.uniform(0, 2 * np.pi, n)
        x = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}")
    return Dataset(kind, x, y, 2)
