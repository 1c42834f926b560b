"""FastAPI wrapper around :mod:`codesign.service.core`."""

from __future__ import annotations

from typing import List

from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse

from .. import __version__
from . import core
from . import schemas as S

HTTP_STATUS = {"config": 422, "data": 400, "worker": 503}


def create_app() -> FastAPI:
    app = FastAPI(title="codesign", version=__version__)
    jobs = core.SearchJobs()
    app.state.jobs = jobs

    @app.exception_handler(core.ServiceError)
    async def _service_error(_request, exc: core.ServiceError):
        return JSONResponse(status_code=HTTP_STATUS.get(exc.kind, 500), content={"error": exc.body().model_dump()})

    @app.get("/health", response_model=S.Health)
    def health():
        return core.health()

    @app.get("/targets", response_model=List[S.TargetInfo])
    def targets():
        return core.targets()

    @app.post("/model", response_model=S.ModelResponse)
    def model(req: S.ModelRequest):
        return core.model(req)

    @app.post("/validate-grid", response_model=S.GridCheckResponse)
    def validate_grid(req: S.GridCheckRequest):
        return core.check_grid(req)

    @app.post("/config/generate", response_model=S.GenerateConfigResponse)
    def generate(req: S.GenerateConfigRequest):
        return core.gen_config(req)

    @app.post("/search", response_model=S.SearchSummary)
    def search_blocking(req: S.SearchRequest):
        return core.search(req)

    @app.post("/searches", response_model=S.SearchJob, status_code=202)
    def search_start(req: S.SearchRequest):
        return jobs.start(req)

    @app.get("/searches", response_model=List[S.SearchJob])
    def search_list():
        return jobs.list()

    @app.get("/searches/{job_id}", response_model=S.SearchJob)
    def search_status(job_id: str):
        try:
            return jobs.get(job_id)
        except KeyError:
            raise HTTPException(404, f"no search {job_id!r}") from None

    @app.post("/pareto", response_model=S.ParetoResponse)
    def pareto(req: S.LogRequest):
        return core.pareto(req)

    @app.post("/report", response_model=S.ReportResponse)
    def report(req: S.LogRequest):
        return core.report(req)

    return app
