"""Analytical performance model of an output-stationary systolic GEMM grid.

Each MLP layer becomes one GEMM (m = batch, k = fan-in, n = neurons). The
output is cut into ``Tm x Tn`` tiles with ``Tm = rows * interleave_rows`` and
``Tn = cols * interleave_cols``. A tile takes
``ceil(k / vec_width) * interleave_rows * interleave_cols`` compute cycles plus
``rows + cols`` cycles of pipeline fill and drain. Tiles, layers and batches
run back to back with no overlap. When the DRAM traffic a tile needs exceeds
what the banks supply, the layer is stretched by that ratio.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional

from ..mlp import MlpGenome
from .target import K_TILE, SRAM_BLOCK_BYTES, WORD_BYTES, GridConfig, HardwareTarget


class GridError(ValueError):
    def __init__(self, violations: List[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class GemmWorkload:
    m: int
    k: int
    n: int
    has_bias: bool = False
    activation: Optional[str] = None

    def __post_init__(self):
        if min(self.m, self.k, self.n) < 1:
            raise ValueError("GEMM dimensions must be >= 1")

    @property
    def gemm_ops(self) -> int:
        return 2 * self.m * self.k * self.n

    @property
    def extra_ops(self) -> int:
        return self.m * self.n * (int(self.has_bias) + int(self.activation is not None))


@dataclass(frozen=True)
class BlockSchedule:
    tile_m: int
    tile_n: int
    m_pad: int
    k_pad: int
    n_pad: int
    tiles: int
    compute_cycles_per_tile: int
    drain_cycles: int
    cycles_per_tile: int
    total_cycles: int
    bytes_loaded_per_tile: int
    bytes_stored_per_tile: int
    true_macs: int
    padded_macs: int

    @property
    def bytes_per_tile(self) -> int:
        return self.bytes_loaded_per_tile + self.bytes_stored_per_tile

    @property
    def total_bytes(self) -> int:
        return self.tiles * self.bytes_per_tile


@dataclass
class LayerPerf:
    m: int
    k: int
    n: int
    tiles: int
    cycles: int
    time_s: float
    bandwidth_needed_bytes_per_s: float
    bandwidth_ratio: float
    potential_gops: float
    gemm_ops: int
    extra_ops: int


@dataclass
class PerfReport:
    device_roofline_gops: float
    grid_peak_gops: float
    potential_gops: float
    effective_gops: float
    total_time_s: float
    outputs_per_s: float
    latency_s: float
    efficiency: float
    bandwidth_available_bytes_per_s: float
    bandwidth_needed_bytes_per_s: float
    bandwidth_bound: bool
    total_ops: float
    gemm_ops: float
    batches: int
    per_layer: List[LayerPerf] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def objectives(self) -> dict:
        return {
            "outputs_per_s": self.outputs_per_s,
            "latency_s": self.latency_s,
            "effective_gops": self.effective_gops,
            "potential_gops": self.potential_gops,
            "efficiency": self.efficiency,
            "total_time_s": self.total_time_s,
            "flops": self.total_ops,
        }


def _ceil_to(x: int, q: int) -> int:
    return -(-x // q) * q


def device_roofline(t: HardwareTarget) -> float:
    """Device compute ceiling in GOP/s."""
    return t.dsp_count * t.flops_per_dsp_per_cycle * t.clock_hz / 1e9


def grid_compute_peak(g: GridConfig, t: HardwareTarget) -> float:
    violations = validate_grid(g, t)
    if violations:
        raise GridError(violations)
    return g.dsps * t.flops_per_dsp_per_cycle * t.clock_hz / 1e9


def bandwidth_available(t: HardwareTarget) -> float:
    return t.ddr_banks * t.bank_bandwidth_bytes_per_s


def validate_grid(g: GridConfig, t: HardwareTarget) -> List[str]:
    """Return resource violations of ``g`` on ``t``; an empty list means it fits."""
    out = []
    if g.dsps > t.dsp_count:
        out.append(f"DSP: grid needs {g.dsps} ({g.rows}x{g.cols}x{g.vec_width}) > {t.dsp_count} available")
    cache_bytes = 2 * (g.tile_m * K_TILE + K_TILE * g.tile_n) * WORD_BYTES
    budget = t.sram_blocks * SRAM_BLOCK_BYTES
    if cache_bytes > budget:
        out.append(f"SRAM: double-buffered caches need {cache_bytes} B > {budget} B ({t.sram_blocks} blocks)")
    return out


def decompose_mlp(genome: MlpGenome, batch_m: int) -> List[GemmWorkload]:
    sizes = genome.layer_sizes
    out = []
    for i, (k, n) in enumerate(zip(sizes[:-1], sizes[1:])):
        if i < len(genome.hidden):
            gene = genome.hidden[i]
            out.append(GemmWorkload(batch_m, k, n, gene.has_bias, gene.activation))
        else:
            out.append(GemmWorkload(batch_m, k, n, True, "softmax"))
    return out


def block_schedule(w: GemmWorkload, g: GridConfig) -> BlockSchedule:
    tm, tn = g.tile_m, g.tile_n
    m_pad, n_pad, k_pad = _ceil_to(w.m, tm), _ceil_to(w.n, tn), _ceil_to(w.k, g.vec_width)
    tiles = (m_pad // tm) * (n_pad // tn)
    compute = (k_pad // g.vec_width) * g.interleave_rows * g.interleave_cols
    drain = g.rows + g.cols
    return BlockSchedule(
        tile_m=tm,
        tile_n=tn,
        m_pad=m_pad,
        k_pad=k_pad,
        n_pad=n_pad,
        tiles=tiles,
        compute_cycles_per_tile=compute,
        drain_cycles=drain,
        cycles_per_tile=compute + drain,
        total_cycles=tiles * (compute + drain),
        bytes_loaded_per_tile=WORD_BYTES * (tm * k_pad + k_pad * tn),
        bytes_stored_per_tile=WORD_BYTES * tm * tn,
        true_macs=w.m * w.k * w.n,
        padded_macs=m_pad * k_pad * n_pad,
    )


def bandwidth_needed(sched: BlockSchedule, t: HardwareTarget) -> float:
    return sched.bytes_per_tile / sched.cycles_per_tile * t.clock_hz


def potential_performance(g: GridConfig, t: HardwareTarget, sched: BlockSchedule):
    """Grid peak derated by available/needed bandwidth.

    Returns ``(potential_gops, bandwidth_needed, bandwidth_bound)``.
    """
    need = bandwidth_needed(sched, t)
    ratio = min(1.0, bandwidth_available(t) / need)
    return grid_compute_peak(g, t) * ratio, need, ratio < 1.0


def model_run(genome: MlpGenome, g: GridConfig, t: HardwareTarget, batch_m: int, total_inputs: int) -> PerfReport:
    if batch_m < 1 or total_inputs < 1:
        raise ValueError("batch_m and total_inputs must be >= 1")
    violations = validate_grid(g, t)
    if violations:
        raise GridError(violations)
    peak = grid_compute_peak(g, t)
    avail = bandwidth_available(t)

    layers = []
    batch_time = 0.0
    potential_time = 0.0  # sum of potential_l * time_l
    for w in decompose_mlp(genome, batch_m):
        sched = block_schedule(w, g)
        pot, need, _ = potential_performance(g, t, sched)
        ratio = min(1.0, avail / need)
        time_s = sched.total_cycles / t.clock_hz / ratio
        batch_time += time_s
        potential_time += pot * time_s
        layers.append(LayerPerf(w.m, w.k, w.n, sched.tiles, sched.total_cycles, time_s, need, ratio, pot,
                                w.gemm_ops, w.extra_ops))

    batches = math.ceil(total_inputs / batch_m)
    total_time = batches * batch_time
    per_input_gemm = sum(l.gemm_ops for l in layers) / batch_m
    per_input_extra = sum(l.extra_ops for l in layers) / batch_m
    gemm_ops = per_input_gemm * total_inputs
    total_ops = (per_input_gemm + per_input_extra) * total_inputs
    # Effective rate counts the GEMM work the DSP grid executes; bias and activation run fused in the drain path.
    effective = gemm_ops / total_time / 1e9
    potential = potential_time / batch_time
    return PerfReport(
        device_roofline_gops=device_roofline(t),
        grid_peak_gops=peak,
        potential_gops=potential,
        effective_gops=effective,
        total_time_s=total_time,
        outputs_per_s=total_inputs / total_time,
        latency_s=batch_time,
        efficiency=effective / potential,
        bandwidth_available_bytes_per_s=avail,
        bandwidth_needed_bytes_per_s=max(l.bandwidth_needed_bytes_per_s for l in layers),
        bandwidth_bound=any(l.bandwidth_ratio < 1.0 for l in layers),
        total_ops=total_ops,
        gemm_ops=gemm_ops,
        batches=batches,
        per_layer=layers,
    )
