"""HTTP facade over the single-shot geometry operations.

The handler functions in the middle of this module are pure: validated
request model in, response model out. The FastAPI endpoints and the
command-line client both dispatch through them, so a CLI invocation and
a POST with the same payload produce identical JSON.
"""

import math
from typing import Literal, Optional, Union

import numpy as np
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from . import __version__
from .conditioning import cond_image, cond_world_5pt, cond_world_7pt
from .errors import InvalidInput, MinstabError
from .illposed import (
    curve_scan,
    distance_to_illposed,
    illposed_world_calibrated,
    illposed_world_projective,
)
from .scene import CalibratedScene, CorrespondenceSet
from .serialize import scene_from_dict
from .solvers import solve_5pt, solve_7pt

Number = Union[float, str]


def json_num(x):
    """JSON-safe number: infinities and NaN become strings so the payload
    stays strict JSON."""
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return x


# ---------------------------------------------------------------- models


Quad = list[float]


class CorrespondencesMixin(BaseModel):
    correspondences: list[Quad] = Field(min_length=1)
    unit: Literal["normalized", "pixels"] = "normalized"

    def to_set(self):
        arr = np.asarray(self.correspondences, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 4:
            raise InvalidInput("correspondences must be rows of [x1, y1, x2, y2]")
        return CorrespondenceSet(arr[:, :2], arr[:, 2:], unit=self.unit)


class SolveRequest(CorrespondencesMixin):
    pass


class SolveResponse(BaseModel):
    solutions: list[list[float]]
    poly: list[float]
    count: int


class CondRequest(BaseModel):
    kind: Literal["essential", "fundamental"]
    correspondences: Optional[list[Quad]] = None
    unit: Literal["normalized", "pixels"] = "normalized"
    scene: Optional[dict] = None


class SolutionConditionOut(BaseModel):
    model: list[float]
    cond: Optional[Number] = None
    sigma_min_dphi: Number
    error: Optional[str] = None


class CondResponse(BaseModel):
    value: Number
    sigma_min_dphi: Number
    per_solution: Optional[list[SolutionConditionOut]] = None


class CurveRequest(CorrespondencesMixin):
    viewport: list[float] = Field(min_length=4, max_length=4)
    columns: int = Field(default=640, ge=2)
    rows: Optional[int] = Field(default=None, ge=2)
    refine_tol: float = Field(default=1e-3, gt=0)


class CurveVertexOut(BaseModel):
    branch: int
    x: float
    y: float
    residual: float
    confirmed: Optional[bool] = None


class CurveResponse(BaseModel):
    vertices: list[CurveVertexOut]
    branches: int
    unit: str
    viewport: list[float]


class WorldRequest(BaseModel):
    scene: dict


class WorldResponse(BaseModel):
    kind: Literal["essential", "fundamental"]
    sigma_min: Number
    tol: Number
    is_illposed: bool
    quadric: Optional[list[float]] = None
    checks: Optional[dict[str, Number]] = None


class DistanceRequest(CorrespondencesMixin):
    kind: Literal["essential", "fundamental"]
    max_radius: float = Field(default=1.0, gt=0)
    refine_tol: float = Field(default=1e-3, gt=0)


class DistanceResponse(BaseModel):
    distance: Number
    capped: bool


# -------------------------------------------------------------- handlers


def handle_solve(kind, req: SolveRequest) -> SolveResponse:
    c = req.to_set()
    if kind == "essential":
        result = solve_5pt(c)
        poly = result.poly10
    else:
        result = solve_7pt(c)
        poly = result.cubic
    return SolveResponse(
        solutions=[[float(v) for v in m.M.ravel()] for m in result.solutions],
        poly=[float(v) for v in poly.coefficients],
        count=len(result.solutions),
    )


def handle_cond(req: CondRequest) -> CondResponse:
    if req.scene is not None:
        scene = scene_from_dict(req.scene)
        calibrated = isinstance(scene, CalibratedScene)
        if calibrated != (req.kind == "essential"):
            raise InvalidInput("scene type does not match the requested kind")
        report = cond_world_5pt(scene) if calibrated else cond_world_7pt(scene)
    else:
        if req.correspondences is None:
            raise InvalidInput("provide correspondences or a scene")
        c = CorrespondencesMixin(correspondences=req.correspondences,
                                 unit=req.unit).to_set()
        report = cond_image(c, req.kind)
    per = None
    if report.per_solution is not None:
        per = [
            SolutionConditionOut(
                model=[float(v) for v in p.model.M.ravel()],
                cond=None if p.cond is None else json_num(p.cond),
                sigma_min_dphi=json_num(p.sigma_min_dphi),
                error=p.error,
            )
            for p in report.per_solution
        ]
    return CondResponse(value=json_num(report.value),
                        sigma_min_dphi=json_num(report.sigma_min_dphi),
                        per_solution=per)


def handle_curve(kind, req: CurveRequest) -> CurveResponse:
    trace = curve_scan(kind, req.to_set(), tuple(req.viewport), req.columns,
                       refine_tol=req.refine_tol, rows=req.rows)
    vertices = []
    for bi, br in enumerate(trace.branches):
        flags = trace.confirmed[bi] if trace.confirmed is not None else None
        for vi in range(br.shape[0]):
            vertices.append(CurveVertexOut(
                branch=bi,
                x=float(br[vi, 0]),
                y=float(br[vi, 1]),
                residual=float(br[vi, 2]),
                confirmed=None if flags is None else bool(flags[vi]),
            ))
    return CurveResponse(vertices=vertices, branches=len(trace.branches),
                         unit=trace.unit, viewport=list(trace.viewport))


def handle_illposed_world(req: WorldRequest) -> WorldResponse:
    scene = scene_from_dict(req.scene)
    if isinstance(scene, CalibratedScene):
        kind = "essential"
        report = illposed_world_calibrated(scene)
    else:
        kind = "fundamental"
        report = illposed_world_projective(scene)
    return WorldResponse(
        kind=kind,
        sigma_min=json_num(report.sigma_min),
        tol=json_num(report.tol),
        is_illposed=bool(report.is_illposed),
        quadric=(None if report.quadric is None
                 else [float(v) for v in report.quadric.ravel()]),
        checks=(None if report.checks is None
                else {k: json_num(v) for k, v in report.checks.items()}),
    )


def handle_distance(req: DistanceRequest) -> DistanceResponse:
    d, info = distance_to_illposed(req.to_set(), req.kind,
                                   refine_tol=req.refine_tol,
                                   max_radius=req.max_radius,
                                   return_info=True)
    return DistanceResponse(distance=json_num(d),
                            capped=bool(info.get("capped", False)))


# ------------------------------------------------------------------ app


def create_app():
    app = FastAPI(title="minstab", version=__version__)

    @app.exception_handler(MinstabError)
    async def minstab_error(request, exc):
        return JSONResponse(status_code=422,
                            content={"error": type(exc).__name__,
                                     "detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/solve/5pt", response_model=SolveResponse)
    def solve5(req: SolveRequest):
        return handle_solve("essential", req)

    @app.post("/solve/7pt", response_model=SolveResponse)
    def solve7(req: SolveRequest):
        return handle_solve("fundamental", req)

    @app.post("/cond", response_model=CondResponse)
    def cond(req: CondRequest):
        return handle_cond(req)

    @app.post("/curve/65", response_model=CurveResponse)
    def curve65(req: CurveRequest):
        return handle_curve("fundamental", req)

    @app.post("/curve/45", response_model=CurveResponse)
    def curve45(req: CurveRequest):
        return handle_curve("essential", req)

    @app.post("/illposed/world", response_model=WorldResponse)
    def illposed_world(req: WorldRequest):
        return handle_illposed_world(req)

    @app.post("/distance", response_model=DistanceResponse)
    def distance(req: DistanceRequest):
        return handle_distance(req)

    return app


app = create_app()
