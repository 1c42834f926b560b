"""Device envelopes, grid instantiations and the preset catalog."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, Optional, Union

import yaml

SRAM_BLOCK_BYTES = 2560  # 20-kilobit blocks
K_TILE = 256  # working-set depth used for SRAM accounting
WORD_BYTES = 4  # fp32


@dataclass(frozen=True)
class HardwareTarget:
    name: str
    dsp_count: int
    sram_blocks: int
    clock_hz: float
    ddr_banks: int
    bank_bandwidth_bytes_per_s: float
    flops_per_dsp_per_cycle: int = 2

    def __post_init__(self):
        for f in ("dsp_count", "sram_blocks", "ddr_banks", "flops_per_dsp_per_cycle"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        if self.clock_hz <= 0 or self.bank_bandwidth_bytes_per_s <= 0:
            raise ValueError("clock and bank bandwidth must be positive")

    def with_overrides(self, ddr_banks: Optional[int] = None, clock_hz: Optional[float] = None) -> "HardwareTarget":
        changes = {}
        if ddr_banks is not None:
            changes["ddr_banks"] = int(ddr_banks)
        if clock_hz is not None:
            changes["clock_hz"] = float(clock_hz)
        return dataclasses.replace(self, **changes) if changes else self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class GridConfig:
    rows: int
    cols: int
    vec_width: int
    interleave_rows: int = 1
    interleave_cols: int = 1

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if getattr(self, f.name) < 1:
                raise ValueError(f"grid {f.name} must be >= 1")

    @property
    def dsps(self) -> int:
        return self.rows * self.cols * self.vec_width

    @property
    def tile_m(self) -> int:
        return self.rows * self.interleave_rows

    @property
    def tile_n(self) -> int:
        return self.cols * self.interleave_cols

    def spec(self) -> str:
        return f"{self.rows}x{self.cols}x{self.vec_width}x{self.interleave_rows}x{self.interleave_cols}"

    @classmethod
    def parse(cls, text: str) -> "GridConfig":
        """``RxCxV`` or ``RxCxVxIRxIC``."""
        parts = re.split(r"[x,]", text.strip().lower())
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise ValueError(f"bad grid spec {text!r}") from None
        if len(vals) not in (3, 5):
            raise ValueError(f"bad grid spec {text!r}: expected 3 or 5 fields")
        return cls(*vals)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def load_catalog(path: Optional[Union[str, Path]] = None) -> Dict[str, HardwareTarget]:
    if path is None:
        text = resources.files("codesign.hw").joinpath("targets.yaml").read_text()
    else:
        text = Path(path).read_text()
    raw = yaml.safe_load(text) or {}
    return {name: HardwareTarget(name=name, **fields) for name, fields in raw.get("targets", {}).items()}


def get_target(name: str, catalog: Optional[Dict[str, HardwareTarget]] = None) -> HardwareTarget:
    catalog = catalog if catalog is not None else load_catalog()
    try:
        return catalog[name]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; known: {sorted(catalog)}") from None
