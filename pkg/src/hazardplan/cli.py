"""Command-line driver.

Subcommands:
  plan      value and policy for one robot on an explicit target list
  allocate  full pipeline: field, allocators, ratios, guarantees, rollouts
  simulate  Monte-Carlo policy rollouts against the planned success value
  bounds    guarantee floors and theorem checks, from a scenario or raw numbers
  render    SVG or PGM drawings: heatmap, paths, region-map

Exit codes: 0 success, 2 validation error, 3 cap exceeded, 4 numeric
invariant violation. All randomness is seeded; --threads never changes any
reported number.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Dict, Optional, Sequence, Tuple

from ._version import VERSION
from .errors import (
    CapExceededError,
    HazardPlanError,
    NumericViolationError,
    ValidationError,
    VacuousBoundError,
)
from .guarantees import guarantee_values, region_map
from .hazard import (
    ContaminationField,
    contamination_heatmap,
    exact_contamination_marginals,
)
from .planner import ObjectiveCache, rollout
from .render import heat_pgm, region_svg, scenario_svg
from .report import (
    DEFAULT_SAMPLES,
    PipelineOptions,
    build_field,
    derive_seed,
    run_pipeline,
)
from .scenario import Scenario, load_scenario, scenario_hash

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CAP = 3
EXIT_NUMERIC = 4

_ERROR_EXITS = {
    "ValidationError": EXIT_VALIDATION,
    "CapExceededError": EXIT_CAP,
    "NumericViolationError": EXIT_NUMERIC,
}


def _add_common(p: argparse.ArgumentParser, scenario_optional: bool = False) -> None:
    if scenario_optional:
        p.add_argument("scenario", nargs="?", help="scenario JSON file")
    else:
        p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=None,
                   help="master seed (default: scenario monte_carlo.seed or 0)")
    p.add_argument("--samples", type=int, default=None,
                   help="Monte-Carlo field samples (default: scenario value or "
                        f"{DEFAULT_SAMPLES})")
    p.add_argument("--threads", type=int, default=1,
                   help="worker threads; results never depend on this")
    p.add_argument("--out", default=None, help="write output here instead of stdout")
    p.add_argument("--exact-field", action="store_true",
                   help="propagate the hazard distribution exactly (small grids)")
    p.add_argument("--field-cache", default=None,
                   help="npz path: reuse the contamination field if present, "
                        "else compute and store it")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hazardplan",
        description="Mission planning under a spreading hazard: single-robot "
                    "success-probability policies and multi-robot task allocation "
                    "with suboptimality guarantees.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="solve one robot's plan on listed targets")
    _add_common(p)
    p.add_argument("--robot", default="0", help="robot name or index (default 0)")
    p.add_argument("--targets", default="all",
                   help="comma-separated target names/indices, or all/none")

    p = sub.add_parser("allocate", help="run the allocation pipeline")
    _add_common(p)
    p.add_argument("--method", default="all",
                   help="comma list from forward,reverse,brute or 'all'")
    p.add_argument("--ratios", default="auto",
                   choices=("auto", "exact", "greedy", "none"),
                   help="how to obtain curvature/submodularity ratios")
    p.add_argument("--rollout-trials", type=int, default=0,
                   help="validate each allocation with this many rollouts")
    p.add_argument("--rollout-mode", default="model", choices=("model", "joint"))
    p.add_argument("--region", type=int, default=0, metavar="RES",
                   help="attach a RES x RES guarantee region map")
    p.add_argument("--heatmap", action="store_true",
                   help="attach a contamination heatmap to the report")

    p = sub.add_parser("simulate", help="roll out one robot's policy")
    _add_common(p)
    p.add_argument("--robot", default="0", help="robot name or index")
    p.add_argument("--targets", default="all",
                   help="comma-separated target names/indices, or all/none")
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--mode", default="model", choices=("model", "joint"),
                   help="model: per-step hazard field; joint: full hazard paths")

    p = sub.add_parser("bounds", help="guarantee floors and theorem checks")
    _add_common(p, scenario_optional=True)
    flavor = p.add_mutually_exclusive_group()
    flavor.add_argument("--exact", action="store_true",
                        help="exact ratios by enumeration (capped)")
    flavor.add_argument("--greedy", action="store_true",
                        help="one-sided ratio estimates from greedy traces")
    p.add_argument("--f-star", type=float, default=None,
                   help="evaluate floors for this optimum without a scenario")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--region", type=int, default=0, metavar="RES")

    p = sub.add_parser("render", help="draw the scenario, heat, paths, or region map")
    _add_common(p, scenario_optional=True)
    p.add_argument("--what", required=True,
                   choices=("heatmap", "paths", "region-map"))
    p.add_argument("--format", default=None, choices=("svg", "pgm"),
                   help="output format (default: from --out suffix, else svg)")
    p.add_argument("--method", default="forward",
                   choices=("forward", "reverse", "brute"),
                   help="whose allocation to draw for --what paths")
    p.add_argument("--f-star", type=float, default=None,
                   help="draw the region map for this optimum directly")
    return ap


def _resolve_sampling(args, scenario: Optional[Scenario]) -> Tuple[int, int]:
    samples = args.samples
    seed = args.seed
    if scenario is not None:
        if samples is None:
            samples = scenario.mc_samples
        if seed is None:
            seed = scenario.mc_seed
    return (samples if samples is not None else DEFAULT_SAMPLES,
            seed if seed is not None else 0)


def _load(args) -> Scenario:
    if not args.scenario:
        raise ValidationError("this command needs a scenario file")
    return load_scenario(args.scenario)


def _cached_field(scenario: Scenario, args, samples: int, seed: int) -> Optional[ContaminationField]:
    path = args.field_cache
    if not path:
        return None
    if os.path.exists(path):
        fld = ContaminationField.load(path)
        if fld.n_free != scenario.gridmap.n_free or fld.horizon < scenario.horizon:
            raise ValidationError(
                f"field cache {path} does not match the scenario "
                f"(cells {fld.n_free}, horizon {fld.horizon})"
            )
        if fld.scenario_hash and fld.scenario_hash != scenario_hash(scenario):
            raise ValidationError(
                f"field cache {path} was built for a different scenario"
            )
        return fld
    fld = build_field(scenario, _field_options(scenario, args, samples, seed))
    fld.scenario_hash = scenario_hash(scenario)
    fld.save(path)
    return fld


def _field_options(scenario: Scenario, args, samples: int, seed: int) -> PipelineOptions:
    base = dict(
        samples=samples,
        seed=seed,
        threads=args.threads,
        field_kind="exact" if args.exact_field else "estimate",
    )
    if scenario.cap_exact_hazard is not None:
        base["exact_cap"] = scenario.cap_exact_hazard
    return PipelineOptions(**base)


def _pipeline_options(scenario: Scenario, args, **extra) -> PipelineOptions:
    samples, seed = _resolve_sampling(args, scenario)
    base = dict(
        samples=samples,
        seed=seed,
        threads=args.threads,
        field_kind="exact" if args.exact_field else "estimate",
        field=_cached_field(scenario, args, samples, seed),
    )
    if scenario.cap_brute is not None:
        base["brute_cap"] = scenario.cap_brute
    if scenario.cap_exact_hazard is not None:
        base["exact_cap"] = scenario.cap_exact_hazard
    base.update(extra)
    return PipelineOptions(**base)


def _parse_target_list(scenario: Scenario, text: str) -> int:
    """Comma list of target names or indices to a bitmask; all/none keywords."""
    text = text.strip()
    if text.lower() == "all":
        return (1 << scenario.n_tasks) - 1
    if text.lower() == "none" or text == "":
        return 0
    mask = 0
    by_name = {nm: i for i, nm in enumerate(scenario.target_names)}
    for raw in text.split(","):
        token = raw.strip()
        if token in by_name:
            b = by_name[token]
        elif token.isdigit() and int(token) < scenario.n_tasks:
            b = int(token)
        else:
            raise ValidationError(
                f"unknown target {token!r}; names are "
                f"{', '.join(scenario.target_names)}"
            )
        if mask >> b & 1:
            raise ValidationError(f"target {token!r} listed twice")
        mask |= 1 << b
    return mask


def _parse_robot(scenario: Scenario, text: str) -> int:
    token = text.strip()
    if token in scenario.robot_names:
        return scenario.robot_names.index(token)
    if token.isdigit() and int(token) < scenario.n_robots:
        return int(token)
    raise ValidationError(
        f"unknown robot {token!r}; names are {', '.join(scenario.robot_names)}"
    )


def _emit(payload, out: Optional[str]) -> None:
    if isinstance(payload, (dict, list)):
        payload = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        mode = "wb" if isinstance(payload, bytes) else "w"
        with open(out, mode) as fh:
            fh.write(payload)
    else:
        if isinstance(payload, bytes):
            raise ValidationError("binary output needs --out FILE")
        sys.stdout.write(payload)


def _make_cache(scenario: Scenario, fld: ContaminationField) -> ObjectiveCache:
    return ObjectiveCache(
        scenario.gridmap, scenario.kernel(), fld,
        scenario.starts, scenario.targets, scenario.horizon,
    )


def _cmd_plan(args) -> int:
    scenario = _load(args)
    samples, seed = _resolve_sampling(args, scenario)
    fld = _cached_field(scenario, args, samples, seed)
    if fld is None:
        fld = build_field(scenario, _field_options(scenario, args, samples, seed))
    cache = _make_cache(scenario, fld)
    robot = _parse_robot(scenario, args.robot)
    mask = _parse_target_list(scenario, args.targets)
    result = cache.solve(robot, mask)
    out = {
        "robot": scenario.robot_names[robot],
        "start": list(scenario.starts[robot]),
        "targets": [scenario.target_names[t]
                    for t in range(scenario.n_tasks) if mask >> t & 1],
        "horizon": scenario.horizon,
        "field": {"kind": fld.kind, "samples": fld.samples, "seed": fld.seed},
        "success": result.success,
        "diagnostics": list(result.diagnostics),
        "path": [list(c) for c in result.greedy_path()],
    }
    _emit(out, args.out)
    return EXIT_OK


def _cmd_allocate(args) -> int:
    scenario = _load(args)
    if args.method == "all":
        methods: Tuple[str, ...] = ("forward", "reverse", "brute")
    else:
        methods = tuple(m.strip() for m in args.method.split(",") if m.strip())
    opts = _pipeline_options(
        scenario, args,
        methods=methods,
        ratio_source=args.ratios,
        rollout_trials=args.rollout_trials,
        rollout_mode=args.rollout_mode,
        region_resolution=args.region,
        heatmap=args.heatmap,
    )
    result = run_pipeline(scenario, opts)
    _emit(result.report, args.out)
    code = EXIT_OK
    for entry_ in result.report["methods"].values():
        if "error_kind" in entry_:
            code = max(code, _ERROR_EXITS.get(entry_["error_kind"], EXIT_NUMERIC))
    return code


def _cmd_simulate(args) -> int:
    scenario = _load(args)
    samples, seed = _resolve_sampling(args, scenario)
    if args.trials < 1:
        raise ValidationError(f"trial count must be >= 1, got {args.trials}")
    fld = _cached_field(scenario, args, samples, seed)
    if fld is None:
        fld = build_field(scenario, _field_options(scenario, args, samples, seed))
    cache = _make_cache(scenario, fld)
    robot = _parse_robot(scenario, args.robot)
    mask = _parse_target_list(scenario, args.targets)
    result = cache.solve(robot, mask)
    rr = rollout(
        result, mode=args.mode, trials=args.trials,
        seed=derive_seed(seed, 0, robot),
        model=scenario.hazard if args.mode == "joint" else None,
    )
    out = {
        "robot": scenario.robot_names[robot],
        "targets": [scenario.target_names[t]
                    for t in range(scenario.n_tasks) if mask >> t & 1],
        "planned": result.success,
        "mode": rr.mode,
        "trials": rr.trials,
        "successes": rr.successes,
        "rate": rr.rate,
        "ci_low": rr.ci_low,
        "ci_high": rr.ci_high,
        "planned_in_ci": bool(rr.ci_low <= result.success <= rr.ci_high),
    }
    _emit(out, args.out)
    return EXIT_OK


def _cmd_bounds(args) -> int:
    if args.scenario is None:
        if args.f_star is None or args.alpha is None or args.gamma is None:
            raise ValidationError(
                "bounds without a scenario needs --f-star, --alpha and --gamma"
            )
        out: Dict = {"alpha": args.alpha, "gamma": args.gamma, "f_star": args.f_star}
        try:
            g_fwd, g_rev = guarantee_values(args.f_star, args.alpha, args.gamma)
            out["g_forward"] = g_fwd
            out["g_reverse"] = g_rev
        except VacuousBoundError as exc:
            out["vacuous"] = True
            out["reason"] = str(exc)
        if args.region > 0:
            out["region_map"] = region_map(args.f_star, args.region).to_dict()
        _emit(out, args.out)
        return EXIT_OK

    scenario = _load(args)
    source = "exact" if args.exact else "greedy" if args.greedy else "auto"
    opts = _pipeline_options(
        scenario, args,
        methods=("forward", "reverse", "brute"),
        ratio_source=source,
        region_resolution=args.region,
    )
    result = run_pipeline(scenario, opts)
    rep = result.report
    out = {
        "scenario": rep["scenario"]["name"],
        "baselines": rep["baselines"],
        "objectives": {
            name: block.get("objective")
            for name, block in rep["methods"].items()
        },
        "ratios": rep.get("ratios"),
        "guarantees": rep.get("guarantees"),
    }
    if "region_map" in rep:
        out["region_map"] = rep["region_map"]
    _emit(out, args.out)
    code = EXIT_OK
    for entry_ in rep["methods"].values():
        if "error_kind" in entry_:
            code = max(code, _ERROR_EXITS.get(entry_["error_kind"], EXIT_NUMERIC))
    return code


def _render_format(args) -> str:
    if args.format:
        return args.format
    if args.out and args.out.lower().endswith(".pgm"):
        return "pgm"
    return "svg"


def _cmd_render(args) -> int:
    fmt = _render_format(args)
    if args.what == "region-map":
        if args.f_star is not None:
            rm = region_map(args.f_star, args.region if getattr(args, "region", 0) else 100)
            mark = None
        else:
            scenario = _load(args)
            opts = _pipeline_options(
                scenario, args, methods=("forward", "reverse", "brute"),
                ratio_source="auto",
            )
            result = run_pipeline(scenario, opts)
            f_star = result.report["methods"].get("brute", {}).get("objective")
            if f_star is None:
                raise ValidationError(
                    "region map needs the optimum; brute force failed or was capped"
                )
            rm = region_map(f_star, 100)
            g = result.report.get("guarantees", {})
            mark = (
                (g["alpha"], g["gamma"]) if "alpha" in g and "gamma" in g else None
            )
        if fmt != "svg":
            raise ValidationError("region-map renders as SVG only")
        _emit(region_svg(rm, mark=mark), args.out)
        return EXIT_OK

    scenario = _load(args)
    samples, seed = _resolve_sampling(args, scenario)
    if args.exact_field:
        cap = {}
        if scenario.cap_exact_hazard is not None:
            cap["cell_cap"] = scenario.cap_exact_hazard
        heat = exact_contamination_marginals(
            scenario.gridmap, scenario.hazard, scenario.horizon, **cap
        )
    else:
        heat = contamination_heatmap(
            scenario.gridmap, scenario.hazard, scenario.horizon,
            samples=samples, seed=seed, threads=args.threads,
        )
    if args.what == "heatmap":
        if fmt == "pgm":
            _emit(heat_pgm(scenario.gridmap, heat), args.out)
        else:
            _emit(scenario_svg(scenario, heat=heat,
                               title=f"{scenario.name}: contamination by step "
                                     f"{scenario.horizon}"), args.out)
        return EXIT_OK

    # paths: draw the chosen allocator's greedy trajectories over the heat.
    if fmt != "svg":
        raise ValidationError("paths render as SVG only")
    opts = _pipeline_options(
        scenario, args, methods=(args.method,), ratio_source="none",
    )
    result = run_pipeline(scenario, opts)
    block = result.report["methods"][args.method]
    if "error" in block:
        raise ValidationError(
            f"{args.method} allocation failed: {block['error']}"
        )
    paths = []
    for r in range(scenario.n_robots):
        plan = result.cache.solve(r, block["masks"][r])
        paths.append((scenario.robot_names[r], plan.greedy_path()))
    title = (
        f"{scenario.name}: {args.method} allocation, F = {block['objective']:.3f}"
    )
    _emit(scenario_svg(scenario, heat=heat, paths=paths, title=title), args.out)
    return EXIT_OK


_COMMANDS = {
    "plan": _cmd_plan,
    "allocate": _cmd_allocate,
    "simulate": _cmd_simulate,
    "bounds": _cmd_bounds,
    "render": _cmd_render,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


def entry(argv: Optional[Sequence[str]] = None) -> int:
    try:
        return main(argv)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except NumericViolationError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except HazardPlanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(entry())
