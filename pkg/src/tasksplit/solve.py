"""End-to-end solve pipeline and batch runner."""
from __future__ import annotations

import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .heuristics import HeuristicBudget, improve_timing, mtz_primal_heuristic, ti_primal_heuristic
from .milp.backend import ERROR, FEASIBLE, INFEASIBLE, NO_SOLUTION, OPTIMAL, get_backend, relative_gap
from .milp.mode import SolveMode
from .milp.mtz import ExtractionError, build_mtz_model, extract_mtz_plan
from .milp.ti import build_ti_model, encode_plan, extract_ti_plan
from .model import Instance, Plan, VisitKind, plan_objective
from .preprocess import preprocess, tighten_time_windows
from .routing import build_routing_graph
from .tigraph import build_ti_graph
from .verify import care_share, check_plan, level_shares, utilized_splits

log = logging.getLogger(__name__)

VARIANTS = ("TI", "TI+HTI", "TI+HMTZ", "MTZ")
STATUSES = (OPTIMAL, FEASIBLE, INFEASIBLE, NO_SOLUTION, ERROR)
REL_GAP = 1e-6


@dataclass(frozen=True)
class SolveConfig:
    variant: str = "TI+HMTZ"
    mode: SolveMode = SolveMode()
    wall_limit: float = 60.0
    heuristic_fraction: float = 0.1
    backend: str | None = None
    seed: int = 0
    interval_scope: str = "star"
    stop_at_first: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0.0 <= self.heuristic_fraction <= 1.0:
            raise ValueError("heuristic_fraction must lie in [0, 1]")
        if self.wall_limit <= 0:
            raise ValueError("wall_limit must be positive")


@dataclass
class SolveResult:
    status: str
    plan: Plan | None = None
    objective: float | None = None
    bound: float | None = None
    gap: float | None = None
    stats: dict = field(default_factory=dict)
    message: str = ""
    instance: str = ""

    def to_obj(self) -> dict:
        from .io import plan_to_obj

        return {
            "status": self.status,
            "instance": self.instance,
            "objective": self.objective,
            "bound": self.bound,
            "gap": self.gap,
            "plan": None if self.plan is None else plan_to_obj(self.plan),
            "stats": self.stats,
            "message": self.message,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "SolveResult":
        from .io import plan_from_obj

        return cls(
            status=obj["status"],
            plan=None if obj.get("plan") is None else plan_from_obj(obj["plan"]),
            objective=obj.get("objective"),
            bound=obj.get("bound"),
            gap=obj.get("gap"),
            stats=obj.get("stats") or {},
            message=obj.get("message", ""),
            instance=obj.get("instance", ""),
        )


def _objective_name(mode: SolveMode) -> str:
    return "travel-time" if mode.travel_time else "cost"


def solve(inst: Instance, config: SolveConfig = SolveConfig()) -> SolveResult:
    """Pre-process, build, search with heuristics, extract and verify."""
    t0 = time.perf_counter()
    try:
        return _solve(inst, config, t0)
    except Exception as exc:  # reported, never raised
        log.exception("solve failed")
        return SolveResult(
            ERROR,
            message=f"{type(exc).__name__}: {exc}",
            stats={"runtime": time.perf_counter() - t0, "traceback": traceback.format_exc()},
            instance=inst.name,
        )


def _solve(inst: Instance, config: SolveConfig, t0: float) -> SolveResult:
    backend = get_backend(config.backend)
    mode = config.mode
    stats: dict = {"variant": config.variant, "backend": backend.name, "mode": mode.split_policy, "objective": mode.objective}
    stats["instance_meta"] = {k: v for k, v in inst.meta.items() if isinstance(v, (str, int, float, bool))}
    stats["size"] = sum(1 for v in inst.visits if v.kind != VisitKind.PART)
    heuristics_on = config.variant in ("TI+HTI", "TI+HMTZ")
    budget = HeuristicBudget(config.heuristic_fraction * config.wall_limit if heuristics_on else 0.0)
    if heuristics_on and not backend.supports_hooks:
        log.warning("backend %s has no callback hooks; heuristics disabled", backend.name)
        stats["degraded"] = True

    if config.variant == "MTZ":
        windows, infeasible_pairs = tighten_time_windows(inst)
        model = build_mtz_model(inst, build_routing_graph(inst, windows), mode, windows)
        extract = extract_mtz_plan
        stats["infeasible_pairs"] = [list(p) for p in infeasible_pairs]
    else:
        if mode.preprocessed:
            pr = preprocess(inst, interval_scope=config.interval_scope)
            stats["reductions"] = pr.stats_dicts()
            stats["interval_visits"] = sorted(pr.interval)
            stats["induced"] = len(pr.induced)
            source = pr
        else:
            source = build_ti_graph(inst)
        model = build_ti_model(inst, source, mode)
        extract = extract_ti_plan
    stats["model"] = model.summary()
    stats["build_time"] = time.perf_counter() - t0

    objective = _objective_name(mode)

    def improve(plan: Plan) -> Plan:
        return improve_timing(plan, inst, budget, backend, mode)

    def on_relaxation(x_frac):
        heur = ti_primal_heuristic if config.variant == "TI+HTI" else mtz_primal_heuristic
        plan = heur(x_frac, model, inst, budget, backend)
        if plan is None:
            return None
        plan = improve(plan)
        return encode_plan(plan, model, inst)

    def on_incumbent(x):
        if budget.exhausted:
            return None
        try:
            plan = extract(model, x, inst)
        except ExtractionError:
            return None
        if not check_plan(plan, inst).ok:
            return None
        better = improve(plan)
        if better is plan:
            return None
        vec = encode_plan(better, model, inst)
        if vec is None or model.objective_value(vec) >= model.objective_value(x) - 1e-9:
            return None
        return vec

    hooks = {}
    if heuristics_on and backend.supports_hooks:
        hooks = {"on_relaxation": on_relaxation, "on_incumbent": on_incumbent}
    remaining = config.wall_limit - (time.perf_counter() - t0)
    out = backend.solve(
        model,
        max(remaining, 1e-3),
        rel_gap=REL_GAP,
        seed=config.seed,
        stop_at_first=config.stop_at_first,
        **hooks,
    )
    stats.update(
        nodes=out.nodes,
        solver_runtime=out.runtime,
        first_solution_time=None if out.first_solution_time is None else out.first_solution_time + stats["build_time"],
        injected=out.injected,
        heuristics=budget.as_dict(),
    )
    if out.status == ERROR:
        stats["runtime"] = time.perf_counter() - t0
        return SolveResult(ERROR, message=out.message, stats=stats, instance=inst.name)
    if out.x is None:
        stats["runtime"] = time.perf_counter() - t0
        status = INFEASIBLE if out.status == INFEASIBLE else NO_SOLUTION
        return SolveResult(status, bound=out.bound, stats=stats, instance=inst.name)

    try:
        plan = extract(model, out.x, inst)
    except ExtractionError as exc:
        stats["runtime"] = time.perf_counter() - t0
        return SolveResult(ERROR, message=f"extraction failed: {exc}", stats=stats, instance=inst.name)
    if mode.travel_time:
        # starts of a travel-time optimum are arbitrary; re-time for cost on the fixed routes
        plan = improve_timing(plan, inst, None, backend, mode, fixed_routes=True)
    report = check_plan(plan, inst)
    if not report.ok:
        stats["runtime"] = time.perf_counter() - t0
        stats["violations"] = report.to_obj()["violations"]
        return SolveResult(ERROR, message="extracted plan failed verification", stats=stats, instance=inst.name)

    value = plan_objective(plan, inst, objective)
    obj = float(value)
    bound = out.bound
    if bound is not None:
        bound = min(bound, obj)
        if _integral_costs(inst, mode):
            bound = float(np.ceil(bound - 1e-6))  # integer data: bound can be rounded up
            bound = min(bound, obj)
    gap = relative_gap(obj, bound)
    status = OPTIMAL if gap is not None and gap <= REL_GAP else FEASIBLE
    if out.status == OPTIMAL and status != OPTIMAL:
        log.debug("solver optimal but gap %s after extraction", gap)
    stats["runtime"] = time.perf_counter() - t0
    stats["cost"] = float(plan_objective(plan, inst, "cost"))
    stats["travel_time"] = float(plan_objective(plan, inst, "travel-time"))
    share = care_share(plan, inst)
    splits_used = utilized_splits(plan, inst)
    stats["metrics"] = {
        "caregivers_used": len(plan.routes),
        "care_pct": None if share is None else 100 * share,
        "utilized_splits_pct": None if splits_used is None else 100 * splits_used,
        "level_shares": {str(q): v for q, v in level_shares(plan, inst).items()},
    }
    plan = plan.with_status(objective=obj, bound=bound, gap=gap, status=status)
    return SolveResult(status, plan, obj, bound, gap, stats, instance=inst.name)


def _integral_costs(inst: Instance, mode: SolveMode) -> bool:
    if mode.travel_time:
        return True
    return all(Fraction(w).denominator == 1 for w in inst.wages.values())


def _solve_one(args):
    inst, config = args
    return solve(inst, config)


def batch_solve(instances, config: SolveConfig = SolveConfig(), jobs: int = 1) -> list[SolveResult]:
    """Independent solves, results in input order; failures stay per instance."""
    instances = list(instances)
    if jobs <= 1 or len(instances) <= 1:
        return [solve(i, config) for i in instances]
    results: list[SolveResult | None] = [None] * len(instances)
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        futures = [ex.submit(_solve_one, (inst, config)) for inst in instances]
        for k, fut in enumerate(futures):
            try:
                results[k] = fut.result()
            except Exception as exc:
                results[k] = SolveResult(ERROR, message=f"worker failed: {exc}", instance=instances[k].name)
    return results  # type: ignore[return-value]


def with_policy(config: SolveConfig, split_policy: str) -> SolveConfig:
    return replace(config, mode=replace(config.mode, split_policy=split_policy))
