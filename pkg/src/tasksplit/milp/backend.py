"""MILP backends.

A backend takes a :class:`ModelSpec` and returns a :class:`SolveOutput`.
Two optional hooks let callers run heuristics during the search:

* ``on_relaxation(x_frac)`` (H1) fires at most once, while no incumbent
  exists, with a fractional LP solution. It may return a full solution
  vector to inject.
* ``on_incumbent(x)`` (H2) fires on each new incumbent and may return an
  improved vector to inject.

HiGHS supports both (the relaxation is the root LP, solved on a side
instance when the hook first fires). The scipy backend has no hooks and
runs in degraded mode.
"""
from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .spec import ModelSpec

log = logging.getLogger(__name__)

RelaxationHook = Callable[[np.ndarray], Optional[np.ndarray]]
IncumbentHook = Callable[[np.ndarray], Optional[np.ndarray]]

OPTIMAL, FEASIBLE, INFEASIBLE, NO_SOLUTION, ERROR = "optimal", "feasible", "infeasible", "no-solution", "error"


@dataclass
class SolveOutput:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    bound: float | None = None
    gap: float | None = None
    nodes: int | None = None
    first_solution_time: float | None = None
    runtime: float = 0.0
    message: str = ""
    injected: int = 0
    stats: dict = field(default_factory=dict)


def relative_gap(obj, bound) -> float | None:
    if obj is None or bound is None or not np.isfinite(bound):
        return None
    if abs(obj - bound) <= 1e-9:
        return 0.0
    return abs(obj - bound) / max(abs(obj), 1e-9)


class Backend:
    name = "abstract"
    supports_hooks = False

    def solve(
        self,
        model: ModelSpec,
        time_limit: float = 60.0,
        *,
        rel_gap: float = 1e-6,
        seed: int = 0,
        stop_at_first: bool = False,
        on_relaxation: RelaxationHook | None = None,
        on_incumbent: IncumbentHook | None = None,
        initial: np.ndarray | None = None,
    ) -> SolveOutput:
        raise NotImplementedError

    def solve_lp(self, model: ModelSpec, time_limit: float = 60.0, interior: bool = False) -> np.ndarray | None:
        """LP relaxation values, or None."""
        from scipy.optimize import linprog

        c, lb, ub, _, lo, hi = model.arrays()
        A = model.matrix()
        fin_hi, fin_lo = np.isfinite(hi), np.isfinite(lo)
        import scipy.sparse as sp

        A_ub = sp.vstack([A[fin_hi], -A[fin_lo]]).tocsr()
        b_ub = np.concatenate([hi[fin_hi], -lo[fin_lo]])
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=np.c_[lb, ub], method="highs", options={"time_limit": time_limit})
        return res.x if res.status == 0 else None


def _finish(out: SolveOutput, model: ModelSpec, candidates, rel_gap: float) -> SolveOutput:
    """Pick the best model-feasible vector among solver result and injected ones."""
    best_x, best_obj = out.x, out.objective
    for x in candidates:
        if x is None or model.violation(x):
            continue
        obj = model.objective_value(x)
        if best_obj is None or obj < best_obj - 1e-9:
            best_x, best_obj = x, obj
    out.x, out.objective = best_x, best_obj
    if best_x is not None and out.status in (NO_SOLUTION, INFEASIBLE):
        out.status = FEASIBLE
    if out.bound is not None and best_obj is not None and out.bound > best_obj:
        out.bound = best_obj
    out.gap = relative_gap(best_obj, out.bound)
    if out.status == OPTIMAL and out.gap is not None and out.gap > rel_gap:
        out.status = FEASIBLE
    if out.status == FEASIBLE and out.gap is not None and out.gap <= rel_gap:
        out.status = OPTIMAL
    return out


# Presolve probing can take seconds on time-indexed flow models that then
# solve at the root node; it is off unless overridden.
DEFAULT_HIGHS_OPTIONS = {"presolve_rule_off": 1 << 15}
LARGE_MODEL_VARS = 20_000  # above this, LPs go to the interior point solver


class HighsBackend(Backend):
    name = "highs"
    supports_hooks = True

    def __init__(self, options: dict | None = None):
        self.options = dict(DEFAULT_HIGHS_OPTIONS if options is None else options)

    def _highs(self, model: ModelSpec, time_limit, seed, relax=False):
        import highspy

        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", 1)
        h.setOptionValue("random_seed", int(seed) % (2**31 - 1))
        h.setOptionValue("time_limit", max(float(time_limit), 1e-3))
        for k, v in self.options.items():
            h.setOptionValue(k, v)
        c, lb, ub, integ, lo, hi = model.arrays()
        A = model.matrix().tocsc()
        lp = highspy.HighsLp()
        lp.num_col_ = model.n_vars
        lp.num_row_ = model.n_rows
        lp.col_cost_ = c
        lp.col_lower_ = lb
        lp.col_upper_ = ub
        lp.row_lower_ = lo
        lp.row_upper_ = hi
        lp.offset_ = model.obj_offset
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        lp.a_matrix_.num_col_ = model.n_vars
        lp.a_matrix_.num_row_ = model.n_rows
        if model.n_vars > LARGE_MODEL_VARS and "mip_lp_solver" not in self.options:
            h.setOptionValue("mip_lp_solver", "ipm")
        if not relax:
            lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous for f in integ]
        h.passModel(lp)
        return h

    def solve_lp(self, model: ModelSpec, time_limit: float = 60.0, interior: bool = False) -> np.ndarray | None:
        """LP relaxation; ``interior`` skips crossover and may return a non-vertex optimum."""
        import highspy

        h = self._highs(model, time_limit, 0, relax=True)
        if interior or model.n_vars > LARGE_MODEL_VARS:
            h.setOptionValue("solver", "ipm")
            h.setOptionValue("run_crossover", "off" if interior else "on")
        h.run()
        if h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
            return None
        return np.asarray(h.getSolution().col_value, dtype=float)

    def solve(self, model, time_limit=60.0, *, rel_gap=1e-6, seed=0, stop_at_first=False, on_relaxation=None, on_incumbent=None, initial=None):
        import highspy

        t0 = time.perf_counter()
        if model.n_vars == 0:
            infeasible = any(lo > 1e-9 or hi < -1e-9 for lo, hi in zip(model.row_lo, model.row_hi))
            if infeasible:
                return SolveOutput(INFEASIBLE, runtime=time.perf_counter() - t0)
            return SolveOutput(OPTIMAL, np.zeros(0), model.obj_offset, model.obj_offset, 0.0, 0, 0.0, time.perf_counter() - t0)
        h = self._highs(model, time_limit, seed)
        h.setOptionValue("mip_rel_gap", rel_gap)
        if stop_at_first:
            h.setOptionValue("mip_max_improving_sols", 1)
        if initial is not None:
            h.setSolution(_solution(initial))
        state = {"first": None, "relaxed": False, "pending": [], "candidates": [], "injected": 0}

        def deadline_left():
            return time_limit - (time.perf_counter() - t0)

        def improving(e):
            if state["first"] is None:
                state["first"] = time.perf_counter() - t0
            if on_incumbent is None:
                return
            x = np.asarray(e.data_out.mip_solution, dtype=float)
            try:
                better = on_incumbent(x)
            except Exception:  # a failing heuristic must not kill the search
                log.exception("incumbent hook failed")
                better = None
            if better is not None:
                state["pending"].append(better)
                state["candidates"].append(better)

        def user_solution(e):
            if on_relaxation is not None and not state["relaxed"] and not np.isfinite(e.data_out.mip_primal_bound):
                state["relaxed"] = True
                xf = self.solve_lp(model, max(deadline_left(), 0.01), interior=True)
                if xf is not None:
                    try:
                        sol = on_relaxation(xf)
                    except Exception:
                        log.exception("relaxation hook failed")
                        sol = None
                    if sol is not None:
                        state["pending"].append(sol)
                        state["candidates"].append(sol)
                        if state["first"] is None:
                            state["first"] = time.perf_counter() - t0
            if state["pending"]:
                sol = state["pending"].pop()
                state["pending"].clear()
                if np.isfinite(e.data_out.mip_primal_bound) and model.objective_value(sol) >= e.data_out.mip_primal_bound - 1e-9:
                    return
                e.data_in.setSolution(np.asarray(sol, dtype=float))
                state["injected"] += 1

        h.cbMipImprovingSolution.subscribe(improving)
        if on_relaxation is not None or on_incumbent is not None:
            h.cbMipUserSolution.subscribe(user_solution)
        try:
            h.run()
        except Exception as exc:  # pragma: no cover - backend failure
            return SolveOutput(ERROR, message=str(exc), runtime=time.perf_counter() - t0)
        ms = h.getModelStatus()
        info = h.getInfo()
        S = highspy.HighsModelStatus
        out = SolveOutput(NO_SOLUTION, runtime=time.perf_counter() - t0)
        out.nodes = int(getattr(info, "mip_node_count", 0) or 0)
        has_sol = info.primal_solution_status == 2
        if ms == S.kInfeasible:
            out.status = INFEASIBLE
        elif ms in (S.kOptimal,):
            out.status = OPTIMAL
        elif has_sol:
            out.status = FEASIBLE
        elif ms in (S.kTimeLimit, S.kInterrupt, S.kSolutionLimit, S.kIterationLimit, S.kObjectiveBound, S.kObjectiveTarget):
            out.status = NO_SOLUTION
        elif ms == S.kModelEmpty:
            out.status = OPTIMAL
        else:
            out.status = ERROR
            out.message = h.modelStatusToString(ms)
        if has_sol:
            out.x = np.asarray(h.getSolution().col_value, dtype=float)
            out.objective = float(info.objective_function_value)
        bound = getattr(info, "mip_dual_bound", None)
        out.bound = float(bound) if bound is not None and np.isfinite(bound) else None
        if out.status == OPTIMAL and out.bound is None:
            out.bound = out.objective
        out.first_solution_time = state["first"]
        out.injected = state["injected"]
        if out.status == INFEASIBLE and state["candidates"]:
            # an injected feasible point contradicts an infeasibility claim
            out.status = NO_SOLUTION
        cands = state["candidates"] + ([initial] if initial is not None else [])
        out = _finish(out, model, cands, rel_gap)
        if out.first_solution_time is None and out.x is not None:
            out.first_solution_time = out.runtime
        return out


def _solution(x):
    import highspy

    sol = highspy.HighsSolution()
    sol.col_value = list(np.asarray(x, dtype=float))
    sol.value_valid = True
    return sol


class ScipyBackend(Backend):
    """``scipy.optimize.milp``; no callback hooks (degraded mode)."""

    name = "scipy"

    def solve(self, model, time_limit=60.0, *, rel_gap=1e-6, seed=0, stop_at_first=False, on_relaxation=None, on_incumbent=None, initial=None):
        from scipy.optimize import Bounds, LinearConstraint, milp

        t0 = time.perf_counter()
        c, lb, ub, integ, lo, hi = model.arrays()
        cons = [LinearConstraint(model.matrix(), lo, hi)] if model.n_rows else []
        res = milp(
            c,
            integrality=integ.astype(int),
            bounds=Bounds(lb, ub),
            constraints=cons,
            options={"time_limit": max(float(time_limit), 1e-3), "mip_rel_gap": rel_gap, "disp": False},
        )
        out = SolveOutput(NO_SOLUTION, runtime=time.perf_counter() - t0)
        if res.x is not None:
            out.x = np.asarray(res.x, dtype=float)
            out.objective = float(res.fun) + model.obj_offset
            out.first_solution_time = out.runtime
        out.nodes = getattr(res, "mip_node_count", None)
        bound = getattr(res, "mip_dual_bound", None)
        out.bound = float(bound) + model.obj_offset if bound is not None and np.isfinite(bound) else None
        if res.status == 0:
            out.status = OPTIMAL
            if out.bound is None:
                out.bound = out.objective
        elif res.status == 2:
            out.status = INFEASIBLE
        elif res.status == 1:
            out.status = FEASIBLE if out.x is not None else NO_SOLUTION
        else:
            out.status = ERROR
            out.message = str(res.message)
        return _finish(out, model, [initial] if initial is not None else [], rel_gap)


_BACKENDS = {"highs": HighsBackend, "scipy": ScipyBackend}


def get_backend(name: str | None = None) -> Backend:
    """Backend by name; defaults to ``$TASKSPLIT_BACKEND`` or highs."""
    name = (name or os.environ.get("TASKSPLIT_BACKEND") or "highs").lower()
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(_BACKENDS)}")
    if name == "highs":
        try:
            import highspy  # noqa: F401
        except ImportError:  # pragma: no cover
            log.warning("highspy not installed; using scipy backend without hooks")
            return ScipyBackend()
    return _BACKENDS[name]()
