"""HTTP front end: the planner, fitting, BER and campaign stages as JSON endpoints.

Run with ``uvicorn uwocsim.service:app``. Requests are validated by pydantic
and mapped onto the same core calls the CLI uses. Validation problems give
422, numerical failures 500 with the stage-tagged message.
"""
from __future__ import annotations

import math
from dataclasses import replace
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .ber import ber_curve
from .campaign import EXIT_VALIDATION, CampaignConfig, ConfigError, StageError, run_campaign
from .fading.distributions import ALL_FAMILIES, WGGParams
from .fading.fitting import fit_all
from .fading.gof import SampleSet
from .planner import GridSpec, PlanError, plan_screens


class PlanRequest(BaseModel):
    N: int = Field(1024, ge=2)
    delta1: float = Field(0.25e-3, gt=0)
    delta2: float = Field(0.25e-3, gt=0)
    wavelength: float = Field(532e-9, gt=0)
    w0: float = Field(0.03, gt=0)
    d_T: float = Field(20.0, ge=0)
    d_L: float = Field(70.0, gt=0)
    N_p: int = Field(10, ge=1)


class PlanResponse(BaseModel):
    delta_d_max: float
    n_min: int
    screen_depths: list[float]
    step_lengths: list[float]
    magnifications: list[float]
    report: str


class FitRequest(BaseModel):
    samples: list[float] = Field(min_length=1, description="received powers or intensities; renormalized to unit mean")
    models: list[str] = Field(default_factory=lambda: list(ALL_FAMILIES))
    seed: int = 0
    n_bins: int | None = Field(None, ge=1)


class ModelFitOut(BaseModel):
    family: str
    params: dict[str, float] | None
    loglik: float | None
    r2: float | None
    mse: float | None
    n_iter: int
    converged: bool
    flagged: bool
    message: str


class FitResponse(BaseModel):
    n_samples: int
    n_bins: int
    best_by_r2: str | None
    models: list[ModelFitOut]


class WGGIn(BaseModel):
    model_config = ConfigDict(extra="forbid")

    varpi: float = Field(gt=0, lt=1)
    beta: float = Field(gt=0)
    eta: float = Field(gt=0)
    a: float = Field(gt=0)
    d: float = Field(gt=0)
    p: float = Field(gt=0)


class BERRequest(BaseModel):
    params: WGGIn
    snr_db: tuple[float, float, float] = (0.0, 50.0, 1.0)
    method: Literal["series", "quadrature"] = "series"


class BERResponse(BaseModel):
    snr_db: list[float]
    average_ber: list[float]
    methods: list[str]
    flagged: list[bool]


class CampaignRequest(BaseModel):
    config: dict[str, object] = Field(default_factory=dict, description="key/value overrides of the campaign defaults")
    out_dir: str | None = None


class CampaignResponse(BaseModel):
    output_dir: str
    files: list[str]
    n_samples: int
    scintillation_index: float | None
    best_by_r2: str | None
    fit: FitResponse
    provenance: dict


def _fit_response(report) -> FitResponse:
    return FitResponse(
        n_samples=report.n_samples,
        n_bins=report.n_bins,
        best_by_r2=report.best(),
        models=[ModelFitOut(**f.to_dict()) for f in report.fits.values()],
    )


def _finite(v: float) -> float | None:
    return v if math.isfinite(v) else None


app = FastAPI(title="uwocsim", version=__version__)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__, "models": list(ALL_FAMILIES)}


@app.post("/plan", response_model=PlanResponse)
def plan(req: PlanRequest) -> PlanResponse:
    try:
        grid = GridSpec.for_beam(req.N, req.delta1, req.wavelength, req.w0, req.delta2)
        p = plan_screens(grid, req.d_T, req.d_L, req.N_p)
    except (PlanError, ValueError) as exc:
        raise HTTPException(422, str(exc)) from None
    return PlanResponse(
        delta_d_max=p.delta_d_max,
        n_min=p.n_min,
        screen_depths=list(p.screen_depths),
        step_lengths=list(p.step_lengths),
        magnifications=list(p.magnifications),
        report=p.report(),
    )


@app.post("/fit", response_model=FitResponse)
def fit(req: FitRequest) -> FitResponse:
    bad = [m for m in req.models if m not in ALL_FAMILIES]
    if bad:
        raise HTTPException(422, f"unknown models {bad}; choose from {', '.join(ALL_FAMILIES)}")
    try:
        samples = SampleSet.from_powers(np.asarray(req.samples, dtype=float))
    except ValueError as exc:
        raise HTTPException(422, str(exc)) from None
    report = fit_all(samples, tuple(req.models), n_bins=req.n_bins, seed=req.seed)
    return _fit_response(report)


@app.post("/ber", response_model=BERResponse)
def ber(req: BERRequest) -> BERResponse:
    start, stop, step = req.snr_db
    if not (start < stop and step > 0):
        raise HTTPException(422, "snr_db needs start < stop and step > 0")
    try:
        params = WGGParams(**req.params.model_dump())
        curve = ber_curve(params, req.snr_db, method=req.method)
    except ValueError as exc:
        raise HTTPException(422, str(exc)) from None
    except ArithmeticError as exc:
        raise HTTPException(500, str(exc)) from None
    return BERResponse(
        snr_db=[float(v) for v in curve.snr_db],
        average_ber=[float(v) for v in curve.average_ber],
        methods=list(curve.methods),
        flagged=[bool(v) for v in curve.flagged],
    )


@app.post("/campaign", response_model=CampaignResponse)
def campaign(req: CampaignRequest) -> CampaignResponse:
    """Run a whole campaign synchronously; meant for desk-scale configurations."""
    try:
        cfg = CampaignConfig.from_mapping(req.config)
        if req.out_dir is not None:
            cfg = replace(cfg, output_dir=req.out_dir)
        res = run_campaign(cfg)
    except ConfigError as exc:
        raise HTTPException(422, str(exc)) from None
    except StageError as exc:
        raise HTTPException(422 if exc.exit_code == EXIT_VALIDATION else 500, str(exc)) from None
    return CampaignResponse(
        output_dir=str(res.output_dir),
        files=[p.name for p in res.files],
        n_samples=res.samples.count,
        scintillation_index=_finite(res.samples.variance()),
        best_by_r2=res.report.best(),
        fit=_fit_response(res.report),
        provenance=res.provenance,
    )
