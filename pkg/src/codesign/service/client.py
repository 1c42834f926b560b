"""Clients used by the CLI: in-process calls or HTTP against a running service."""

from __future__ import annotations

from typing import List, Optional, Type, TypeVar

import httpx
from pydantic import BaseModel

from . import core
from . import schemas as S

M = TypeVar("M", bound=BaseModel)


class LocalClient:
    def health(self) -> S.Health:
        return core.health()

    def targets(self) -> List[S.TargetInfo]:
        return core.targets()

    def model(self, req: S.ModelRequest) -> S.ModelResponse:
        return core.model(req)

    def check_grid(self, req: S.GridCheckRequest) -> S.GridCheckResponse:
        return core.check_grid(req)

    def gen_config(self, req: S.GenerateConfigRequest) -> S.GenerateConfigResponse:
        return core.gen_config(req)

    def search(self, req: S.SearchRequest) -> S.SearchSummary:
        return core.search(req)

    def pareto(self, req: S.LogRequest) -> S.ParetoResponse:
        return core.pareto(req)

    def report(self, req: S.LogRequest) -> S.ReportResponse:
        return core.report(req)


class HttpClient:
    """Same surface as :class:`LocalClient`; file paths are resolved on the server."""

    def __init__(self, base_url: str, timeout: Optional[float] = None, transport: Optional[httpx.BaseTransport] = None):
        self._http = httpx.Client(base_url=base_url, timeout=timeout, transport=transport)

    def _call(self, method: str, path: str, model: Type[M], body: Optional[BaseModel] = None):
        try:
            r = self._http.request(method, path, json=body.model_dump(mode="json") if body is not None else None)
        except httpx.TransportError as e:
            raise core.ServiceError("worker", f"cannot reach service at {self._http.base_url}: {e}") from None
        if r.status_code >= 400:
            try:
                err = r.json()["error"]
                raise core.ServiceError(err["kind"], err["message"])
            except (ValueError, KeyError, TypeError):
                kind = "config" if r.status_code == 422 else "worker"
                raise core.ServiceError(kind, f"HTTP {r.status_code}: {r.text}") from None
        data = r.json()
        if isinstance(data, list):
            return [model.model_validate(d) for d in data]
        return model.model_validate(data)

    def health(self) -> S.Health:
        return self._call("GET", "/health", S.Health)

    def targets(self) -> List[S.TargetInfo]:
        return self._call("GET", "/targets", S.TargetInfo)

    def model(self, req: S.ModelRequest) -> S.ModelResponse:
        return self._call("POST", "/model", S.ModelResponse, req)

    def check_grid(self, req: S.GridCheckRequest) -> S.GridCheckResponse:
        return self._call("POST", "/validate-grid", S.GridCheckResponse, req)

    def gen_config(self, req: S.GenerateConfigRequest) -> S.GenerateConfigResponse:
        return self._call("POST", "/config/generate", S.GenerateConfigResponse, req)

    def search(self, req: S.SearchRequest) -> S.SearchSummary:
        return self._call("POST", "/search", S.SearchSummary, req)

    def start_search(self, req: S.SearchRequest) -> S.SearchJob:
        return self._call("POST", "/searches", S.SearchJob, req)

    def search_status(self, job_id: str) -> S.SearchJob:
        return self._call("GET", f"/searches/{job_id}", S.SearchJob)

    def pareto(self, req: S.LogRequest) -> S.ParetoResponse:
        return self._call("POST", "/pareto", S.ParetoResponse, req)

    def report(self, req: S.LogRequest) -> S.ReportResponse:
        return self._call("POST", "/report", S.ReportResponse, req)

    def close(self):
        self._http.close()
