"""Command-line entry point: ``tasksplit generate|solve|validate|compare|report``."""
from __future__ import annotations

import csv
import glob
import io
import json
import logging
import sys
from pathlib import Path

import click

from .generate import SCENARIO_GRID, STAFF_PROFILES, VISIT_PROFILES, BaseInstance, ScenarioConfig, generate_scenarios, random_base_instance, synthesize_splits
from .io import dumps, parse_plan, read_instance, serialize_instance, write_atomic
from .milp.mode import OBJECTIVES, SPLIT_POLICIES, SolveMode
from .model import InstanceError, PlanError
from .solve import VARIANTS, SolveConfig, SolveResult, batch_solve
from .verify import check_plan

EXIT_OK, EXIT_FEASIBLE, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NO_SOLUTION, EXIT_ERROR = range(6)
STATUS_EXIT = {
    "optimal": EXIT_OK,
    "feasible": EXIT_FEASIBLE,
    "infeasible": EXIT_INFEASIBLE,
    "no-solution": EXIT_NO_SOLUTION,
    "error": EXIT_ERROR,
}

# bump when columns change; documented in README
REPORT_SCHEMA_VERSION = 1
RESULT_COLUMNS = [
    "schema_version",
    "file",
    "instance",
    "size",
    "visit_profile",
    "staff_profile",
    "variant",
    "split_policy",
    "objective_kind",
    "backend",
    "status",
    "objective",
    "bound",
    "gap",
    "cost",
    "travel_time",
    "caregivers_used",
    "care_pct",
    "utilized_splits_pct",
    "level1_pct",
    "level2_pct",
    "level3_pct",
    "runtime",
    "first_solution_time",
    "nodes",
]
GAP_THRESHOLDS = (0.0, 0.01, 0.02, 0.05, 0.1, 0.2)
FORMATS = click.Choice(["text", "json"])


def _fail(msg: str, code: int = EXIT_INPUT):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load_instance(path):
    try:
        return read_instance(path)
    except OSError as exc:
        _fail(f"{path}: {exc.strerror or exc}")
    except InstanceError as exc:
        _fail(f"{path}: {exc}")


def _load_result(path) -> SolveResult:
    try:
        return SolveResult.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))
    except OSError as exc:
        _fail(f"{path}: {exc.strerror or exc}")
    except (ValueError, KeyError, TypeError, PlanError) as exc:
        _fail(f"{path}: not a result file ({exc})")


@click.group()
@click.option("-v", "--verbose", count=True, help="More logging (repeatable).")
def main(verbose):
    """Routing and scheduling with task-splitting."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


@main.command("base")
@click.option("--visits", "-n", type=click.IntRange(1), default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def cli_base(visits, seed, out):
    """Write a random base instance (locations on a grid, random windows)."""
    base = random_base_instance(visits, seed)
    write_atomic(out, base.to_json())
    click.echo(f"wrote {out} ({visits} visits, {base.caregivers} caregivers)")


@main.command("generate")
@click.argument("base_path", metavar="BASE", type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--visit-profile", type=click.Choice(sorted(VISIT_PROFILES)), default=None, help="Only this visit profile.")
@click.option("--staff-profile", type=click.Choice(sorted(STAFF_PROFILES)), default=None, help="Only this staff profile.")
def cli_generate(base_path, seed, out_dir, visit_profile, staff_profile):
    """Write the scenario instances of a base instance (ten by default)."""
    try:
        base = BaseInstance.from_json(Path(base_path).read_bytes())
    except OSError as exc:
        _fail(f"{base_path}: {exc.strerror or exc}")
    except InstanceError as exc:
        _fail(f"{base_path}: {exc}")
    grid = [(vp, sp) for vp, sp in SCENARIO_GRID if visit_profile in (None, vp) and staff_profile in (None, sp)]
    if not grid and visit_profile and staff_profile:
        grid = [(visit_profile, staff_profile)]
    stem = base.name or Path(base_path).stem
    written = []
    for vp, sp in grid:
        try:
            inst = synthesize_splits(generate_scenarios(base, ScenarioConfig(vp, sp, seed)), seed)
        except InstanceError as exc:
            _fail(f"{base_path}: {exc}")
        path = Path(out_dir) / f"{stem}-{vp}-{sp}-s{seed}.json"
        write_atomic(path, serialize_instance(inst))
        written.append(path)
    for p in written:
        click.echo(str(p))


def _result_text(res: SolveResult) -> str:
    st = res.stats
    lines = [f"{res.instance or '?'}: {res.status}"]
    if res.objective is not None:
        gap = "n/a" if res.gap is None else f"{100 * res.gap:.2f}%"
        lines.append(f"  objective {res.objective:g}  bound {res.bound}  gap {gap}")
    if st.get("variant"):
        lines.append(f"  variant {st['variant']}  policy {st.get('mode')}  backend {st.get('backend')}")
    if res.plan is not None:
        for r in res.plan.routes:
            stops = " ".join(f"{s.visit}@{s.start}" for s in r.stops)
            lines.append(f"  caregiver L{r.qual}: {stops}")
    if "runtime" in st:
        fst = st.get("first_solution_time")
        lines.append(f"  runtime {st['runtime']:.2f}s  first solution {'-' if fst is None else f'{fst:.2f}s'}")
    if res.message:
        lines.append(f"  {res.message}")
    return "\n".join(lines)


@main.command("solve")
@click.argument("instances", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("--variant", type=click.Choice(VARIANTS), default="TI+HMTZ", show_default=True)
@click.option("--mode", "split_policy", type=click.Choice(SPLIT_POLICIES), default="optimize", show_default=True, help="Task-splitting policy.")
@click.option("--objective", type=click.Choice(OBJECTIVES), default="operational-cost", show_default=True)
@click.option("--time-limit", type=click.FloatRange(min=0, min_open=True), default=60.0, show_default=True, help="Wall-clock seconds per instance.")
@click.option("--heuristic-fraction", type=click.FloatRange(0, 1), default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--backend", type=click.Choice(["highs", "scipy"]), default=None, help="Overrides TASKSPLIT_BACKEND.")
@click.option("--raw", is_flag=True, help="Time-indexed graph without reductions.")
@click.option("--interval-scope", type=click.Choice(["star", "all", "none"]), default="star", show_default=True)
@click.option("--stop-at-first", is_flag=True, help="Stop at the first feasible solution.")
@click.option("--jobs", "-j", type=click.IntRange(1), default=1, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Result file (one instance) or directory (several).")
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def cli_solve(instances, variant, split_policy, objective, time_limit, heuristic_fraction, seed, backend, raw, interval_scope, stop_at_first, jobs, out, fmt):
    """Solve instances; the exit code reflects the worst status."""
    insts = [_load_instance(p) for p in instances]
    config = SolveConfig(
        variant=variant,
        mode=SolveMode(split_policy=split_policy, objective=objective, preprocessed=not raw),
        wall_limit=time_limit,
        heuristic_fraction=heuristic_fraction,
        backend=backend,
        seed=seed,
        interval_scope=interval_scope,
        stop_at_first=stop_at_first,
    )
    results = batch_solve(insts, config, jobs)
    many = len(instances) > 1
    for path, res in zip(instances, results):
        if not res.instance:
            res.instance = Path(path).stem
        data = dumps(res.to_obj())
        if out is not None:
            target = Path(out) / f"{Path(path).stem}.result.json" if many or Path(out).is_dir() else Path(out)
            write_atomic(target, data)
        if fmt == "json":
            click.echo(data.decode())
        else:
            click.echo(_result_text(res))
    sys.exit(max(STATUS_EXIT.get(r.status, EXIT_ERROR) for r in results))


@main.command("validate")
@click.argument("instance_path", metavar="INSTANCE", type=click.Path(dir_okay=False))
@click.argument("plan_path", metavar="PLAN", type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def cli_validate(instance_path, plan_path, fmt):
    """Check a plan (or a result file holding one) against an instance."""
    inst = _load_instance(instance_path)
    try:
        obj = json.loads(Path(plan_path).read_text(encoding="utf-8"))
        if isinstance(obj, dict) and "stats" in obj and "status" in obj:
            if obj.get("plan") is None:
                _fail(f"{plan_path}: result file holds no plan")
            obj = obj["plan"]
        plan = parse_plan(json.dumps(obj))
    except OSError as exc:
        _fail(f"{plan_path}: {exc.strerror or exc}")
    except (ValueError, PlanError) as exc:
        _fail(f"{plan_path}: {exc}")
    try:
        report = check_plan(plan, inst)
    except PlanError as exc:
        _fail(f"{plan_path}: {exc}")
    if fmt == "json":
        click.echo(dumps(report.to_obj()).decode())
    else:
        click.echo(str(report))
    sys.exit(EXIT_OK if report.ok else EXIT_INFEASIBLE)


def _metrics(res: SolveResult) -> dict:
    st = res.stats
    m = st.get("metrics") or {}
    shares = m.get("level_shares") or {}
    return {
        "status": res.status,
        "objective": res.objective,
        "bound": res.bound,
        "gap": res.gap,
        "cost": st.get("cost"),
        "travel_time": st.get("travel_time"),
        "caregivers_used": m.get("caregivers_used"),
        "care_pct": m.get("care_pct"),
        "utilized_splits_pct": m.get("utilized_splits_pct"),
        "level1_pct": _pct(shares.get("1")),
        "level2_pct": _pct(shares.get("2")),
        "level3_pct": _pct(shares.get("3")),
        "runtime": st.get("runtime"),
        "first_solution_time": st.get("first_solution_time"),
        "nodes": st.get("nodes"),
    }


def _pct(x):
    return None if x is None else 100 * float(x)


def compare_results(a: SolveResult, b: SolveResult) -> list[dict]:
    """Per-metric rows with values of both results and the difference b - a."""
    ma, mb = _metrics(a), _metrics(b)
    rows = []
    for key in ma:
        va, vb = ma[key], mb[key]
        if isinstance(va, (int, float)) and isinstance(vb, (int, float)) and not isinstance(va, bool):
            delta = vb - va
        elif key == "status":
            delta = None if va == vb else f"{va} -> {vb}"
        else:
            delta = None
        rows.append({"metric": key, "a": va, "b": vb, "delta": delta})
    return rows


@main.command("compare")
@click.argument("result_a", type=click.Path(dir_okay=False))
@click.argument("result_b", type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def cli_compare(result_a, result_b, fmt):
    """Metric table of two result files (B minus A)."""
    rows = compare_results(_load_result(result_a), _load_result(result_b))
    if fmt == "json":
        click.echo(dumps(rows).decode())
        return
    click.echo(f"{'metric':<22}{'A':>14}{'B':>14}{'delta':>14}")
    for r in rows:
        click.echo(f"{r['metric']:<22}{_fmt(r['a']):>14}{_fmt(r['b']):>14}{_fmt(r['delta']):>14}")


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.4g}"
    return str(x)


def result_row(path: str, res: SolveResult) -> dict:
    st = res.stats
    meta = st.get("instance_meta") or {}
    row = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "file": path,
        "instance": res.instance,
        "size": st.get("size"),
        "visit_profile": meta.get("visit_profile"),
        "staff_profile": meta.get("staff_profile"),
        "variant": st.get("variant"),
        "split_policy": st.get("mode"),
        "objective_kind": st.get("objective"),
        "backend": st.get("backend"),
    }
    row.update(_metrics(res))
    return row


def gap_distribution(rows, thresholds=GAP_THRESHOLDS) -> list[dict]:
    """Share of results per (split policy, size) with a gap at or below each threshold.

    Results without a plan count as gap infinity.
    """
    groups: dict[tuple, list] = {}
    for r in rows:
        groups.setdefault((r["split_policy"], r["size"]), []).append(r["gap"])
    out = []
    for (policy, size), gaps in sorted(groups.items(), key=lambda kv: (str(kv[0][0]), kv[0][1] or 0)):
        rec = {"schema_version": REPORT_SCHEMA_VERSION, "split_policy": policy, "size": size, "count": len(gaps)}
        for t in thresholds:
            rec[f"gap_le_{t:g}"] = sum(1 for g in gaps if g is not None and g <= t + 1e-12) / len(gaps)
        out.append(rec)
    return out


def _scenario_key(r):
    return (r["size"], r["visit_profile"], r["staff_profile"])


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return sum(xs) / len(xs) if xs else None


def scenario_tables(rows) -> list[dict]:
    """One row per (size, visit profile, staff profile): feasible counts per split policy,
    average care percentage, and cost decrease and utilized splits of the optimized split
    against the no-split baseline on instances both solved."""
    by_scn: dict[tuple, list] = {}
    for r in rows:
        by_scn.setdefault(_scenario_key(r), []).append(r)
    out = []
    for key in sorted(by_scn, key=lambda k: tuple("" if x is None else str(x).zfill(6) for x in k)):
        rs = by_scn[key]
        rec = {"schema_version": REPORT_SCHEMA_VERSION, "size": key[0], "visit_profile": key[1], "staff_profile": key[2]}
        instances = {r["instance"] for r in rs}
        rec["instances"] = len(instances)
        for policy, label in (("forbid", "no_split"), ("optimize", "split"), ("force", "full_split")):
            feas = {r["instance"] for r in rs if r["split_policy"] == policy and r["status"] in ("optimal", "feasible")}
            rec[f"feasible_{label}"] = len(feas)
        base = {r["instance"]: r for r in rs if r["split_policy"] == "forbid" and r["cost"] is not None}
        split = {r["instance"]: r for r in rs if r["split_policy"] == "optimize" and r["cost"] is not None}
        both = sorted(set(base) & set(split))
        rec["care_pct_no_split"] = _mean(base[i]["care_pct"] for i in both)
        rec["care_pct_split"] = _mean(split[i]["care_pct"] for i in both)
        rec["cost_decrease_pct"] = _mean(
            100 * (base[i]["cost"] - split[i]["cost"]) / base[i]["cost"] for i in both if base[i]["cost"]
        )
        rec["utilized_splits_pct"] = _mean(r["utilized_splits_pct"] for r in split.values())
        out.append(rec)
    return out


def _csv_bytes(rows, columns=None) -> bytes:
    buf = io.StringIO()
    columns = columns or (list(rows[0]) if rows else ["schema_version"])
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: "" if r.get(k) is None else r.get(k) for k in columns})
    return buf.getvalue().encode("utf-8")


def _text_table(rows) -> str:
    if not rows:
        return "(empty)"
    cols = list(rows[0])
    cells = [[_fmt(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


@main.command("report")
@click.argument("patterns", nargs=-1, required=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True, help="CSV with one row per result.")
@click.option("--tables-dir", type=click.Path(file_okay=False), default=None, help="Also write gaps.csv and scenarios.csv here.")
@click.option("--format", "fmt", type=FORMATS, default="text", show_default=True)
def cli_report(patterns, out, tables_dir, fmt):
    """Summarize result files matched by glob patterns."""
    paths = sorted({p for pat in patterns for p in glob.glob(pat, recursive=True)})
    if not paths:
        _fail("no result files matched")
    rows = [result_row(p, _load_result(p)) for p in paths]
    gaps = gap_distribution(rows)
    scenarios = scenario_tables(rows)
    write_atomic(out, _csv_bytes(rows, RESULT_COLUMNS))
    if tables_dir:
        write_atomic(Path(tables_dir) / "gaps.csv", _csv_bytes(gaps))
        write_atomic(Path(tables_dir) / "scenarios.csv", _csv_bytes(scenarios))
    if fmt == "json":
        click.echo(dumps({"results": rows, "gaps": gaps, "scenarios": scenarios}).decode())
        return
    click.echo(f"{len(rows)} results -> {out}")
    click.echo("\ngap distribution (share of results with gap <= threshold)")
    click.echo(_text_table(gaps))
    click.echo("\nscenarios")
    click.echo(_text_table(scenarios))


if __name__ == "__main__":  # pragma: no cover
    main()
