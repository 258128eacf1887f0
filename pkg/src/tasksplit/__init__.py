"""Routing and scheduling of home healthcare visits with optional task splitting."""
from .model import (
    DependencySpec,
    Instance,
    InstanceError,
    Plan,
    PlanError,
    Qualification,
    Route,
    Stop,
    SyncType,
    Visit,
    VisitKind,
    plan_cost,
    plan_travel_time,
    sync_params,
)

__all__ = [
    "DependencySpec",
    "Instance",
    "InstanceError",
    "Plan",
    "PlanError",
    "Qualification",
    "Route",
    "Stop",
    "SyncType",
    "Visit",
    "VisitKind",
    "plan_cost",
    "plan_travel_time",
    "sync_params",
]
