from .backend import Backend, HighsBackend, ScipyBackend, SolveOutput, get_backend
from .mode import SolveMode
from .mtz import ExtractionError, build_mtz_model, extract_mtz_plan
from .spec import LinExpr, ModelSpec
from .ti import build_ti_model, encode_plan, extract_ti_plan

__all__ = [
    "Backend",
    "ExtractionError",
    "HighsBackend",
    "LinExpr",
    "ModelSpec",
    "ScipyBackend",
    "SolveMode",
    "SolveOutput",
    "build_mtz_model",
    "build_ti_model",
    "encode_plan",
    "extract_mtz_plan",
    "extract_ti_plan",
    "get_backend",
]
