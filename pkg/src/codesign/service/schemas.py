"""Request and response bodies shared by the HTTP API and the local client."""

from __future__ import annotations

from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field


class ErrorBody(BaseModel):
    kind: str  # config | data | worker
    message: str


class TargetInfo(BaseModel):
    name: str
    dsp_count: int
    sram_blocks: int
    clock_hz: float
    ddr_banks: int
    bank_bandwidth_bytes_per_s: float
    flops_per_dsp_per_cycle: int
    roofline_gops: float
    bandwidth_bytes_per_s: float


class ModelRequest(BaseModel):
    genome: str = Field(description="IN:HIDDEN:OUT, e.g. 784:64/relu,32/tanh:10")
    grid: str = Field(description="RxCxV or RxCxVxIRxIC")
    target: str = "arria10"
    batch: int = Field(1, ge=1)
    inputs: int = Field(10000, ge=1)
    ddr_banks: Optional[int] = Field(None, ge=1)
    clock_hz: Optional[float] = Field(None, gt=0)


class LayerRecord(BaseModel):
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


class ModelResponse(BaseModel):
    genome: str
    grid: str
    target: TargetInfo
    batch: int
    inputs: int
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
    per_layer: List[LayerRecord]


class GridCheckRequest(BaseModel):
    grid: str
    target: str = "arria10"


class GridCheckResponse(BaseModel):
    grid: str
    target: str
    ok: bool
    violations: List[str]


class GenerateConfigRequest(BaseModel):
    dataset: str
    template: Optional[dict] = None
    label_column: Optional[Union[str, int]] = None
    has_header: Optional[bool] = None


class GenerateConfigResponse(BaseModel):
    yaml: str
    input_size: int
    output_size: int
    dataset_name: str


class SearchRequest(BaseModel):
    config: dict
    out_dir: Optional[str] = None
    seed: Optional[int] = None
    parallelism: Optional[int] = Field(None, ge=1)


class SearchSummary(BaseModel):
    run_id: str
    out_dir: str
    log: str
    pareto: str
    stats: str
    report: str
    models_evaluated: int
    avg_eval_s: float
    total_eval_s: float
    cache_hits: int
    failed: int
    front_size: int


class SearchJob(BaseModel):
    job_id: str
    state: str  # queued | running | done | failed
    evaluated: int = 0
    summary: Optional[SearchSummary] = None
    error: Optional[ErrorBody] = None


class LogRequest(BaseModel):
    log: str
    out: Optional[str] = None
    target: Optional[str] = None


class ParetoResponse(BaseModel):
    path: Optional[str]
    header: List[str]
    rows: List[List[str]]
    evaluations: int
    warning: Optional[str] = None


class ReportResponse(BaseModel):
    path: str
    rows: int
    failed: int


class Health(BaseModel):
    status: str = "ok"
    version: str
    extra: Dict[str, str] = {}
