from .model import (
    BlockSchedule,
    GemmWorkload,
    GridError,
    LayerPerf,
    PerfReport,
    bandwidth_available,
    block_schedule,
    decompose_mlp,
    device_roofline,
    grid_compute_peak,
    model_run,
    potential_performance,
    validate_grid,
)
from .target import GridConfig, HardwareTarget, get_target, load_catalog


def oracle_simulate(w: GemmWorkload, g: GridConfig, **kw):
    """Cycle-level reference for :func:`block_schedule` (see :mod:`codesign.oracles`)."""
    from ..oracles import oracle_simulate as _sim

    return _sim(w.m, w.k, w.n, g, **kw)
