"""Command-line front end.

Thin orchestration over the library: every verb reads an INI config (CLI
flags override file keys), builds a preset case, runs it and writes the
run artifacts (JSON-lines history with a provenance header, VTK and CSV
snapshots, a cost report). Thread counts are pinned before the numerical
stack loads so runs are reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time


def _pin_threads(n: int):
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, str(n))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="convtopo",
                                description="natural-convection heat sink optimization")
    p.add_argument("--config", required=True, help="INI run configuration")
    p.add_argument("--preset", help="problem preset (heatsink, cavity)")
    p.add_argument("--gr", type=float, help="a-priori Grashof number")
    p.add_argument("--output", help="output directory")
    sub = p.add_subparsers(dest="verb", required=True)
    sub.add_parser("optimize", help="run the topology optimization loop")
    fw = sub.add_parser("forward", help="single forward solve of a preset")
    fw.add_argument("--solid-box", action="store_true",
                    help="fill the design region with solid (calibration layout)")
    fw.add_argument("--write-reference", help="write the nodal temperatures as a reference JSON")
    fw.add_argument("--mobility", type=float, help="fluid mobility override")
    cc = sub.add_parser("cross-check", help="evaluate stored designs at several conditions")
    cc.add_argument("--designs", nargs="+", required=True,
                    help="run directories holding snapshot_cells.csv")
    cc.add_argument("--gr-list", required=True, help="comma-separated Grashof numbers")
    cal = sub.add_parser("calibrate", help="sweep the fluid mobility against a reference")
    cal.add_argument("--reference", required=True)
    cal.add_argument("--lo", type=float, default=0.01)
    cal.add_argument("--hi", type=float, default=0.2)
    cal.add_argument("--step", type=float, default=0.01)
    sub.add_parser("simplified", help="optimize under the surface-convection model")
    rep = sub.add_parser("report", help="print the cost summary of a finished run")
    rep.add_argument("--run-dir", required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point for the CLI
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _dispatch(args) -> int:
    from .io import parse_config

    overrides = {"run.mode": args.verb if args.verb != "report" else "report"}
    if args.preset:
        overrides["run.preset"] = args.preset
    if args.gr is not None:
        overrides["run.gr"] = args.gr
    if args.output:
        overrides["run.output_dir"] = args.output
    cfg = parse_config(args.config, overrides)
    _pin_threads(cfg.threads)

    handler = {
        "optimize": _run_optimize,
        "forward": _run_forward,
        "cross-check": _run_cross_check,
        "calibrate": _run_calibrate,
        "simplified": _run_simplified,
        "report": _run_report,
    }[args.verb]
    return handler(args, cfg)


def _geometry_kwargs(cfg):
    geo = {}
    for key in ("nx", "ny"):
        val = cfg.get("problem", key, cast=int)
        if val is not None:
            geo[key] = val
    return geo


def _schedule_overrides(cfg, base):
    from dataclasses import replace

    updates = {}
    for key, cast in (("move_limit", float), ("switch_every", int),
                      ("change_tol", float), ("max_outer_iter", int),
                      ("v_star", float)):
        val = cfg.get("optimization", key, cast=cast)
        if val is not None:
            updates[key] = val
    for key in ("p_k_seq", "p_mobility_seq"):
        raw = cfg.get("optimization", key, cast=str)
        if raw is not None:
            updates[key] = tuple(float(v) for v in raw.split(","))
    return replace(base, **updates) if updates else base


def _newton_config(cfg):
    from .newton import NewtonConfig

    kwargs = {}
    for key, cast in (("rel_tol", float), ("max_iter", int), ("damping", str),
                      ("fixed_lambda", float)):
        val = cfg.get("newton", key, cast=cast)
        if val is not None:
            kwargs[key] = val
    return NewtonConfig(**kwargs) if kwargs else None


def _build_case(cfg, evaluation=False):
    from dataclasses import replace

    from . import presets
    from .errors import SetupError

    if cfg.preset is None:
        raise SetupError("a [run] preset is required (heatsink or cavity)")
    gr = cfg.gr if cfg.gr is not None else (6400.0 if cfg.preset == "heatsink" else 51200.0)
    kwargs = {}
    v_star = cfg.get("optimization", "v_star")
    if v_star is not None:
        kwargs["v_star"] = v_star
    r_min = cfg.get("optimization", "r_min")
    if r_min is not None:
        kwargs["r_min"] = r_min
    mob = cfg.get("problem", "mobility_fluid")
    if mob is not None:
        kwargs["mobility_fluid"] = mob
    newton = _newton_config(cfg)
    if newton is not None:
        kwargs["newton"] = newton
    geo = _geometry_kwargs(cfg)
    if cfg.preset == "heatsink":
        if geo:
            kwargs["geom"] = presets.HeatsinkGeometry(**geo)
        case = presets.heatsink_case(gr=gr, evaluation=evaluation, **kwargs)
    elif cfg.preset == "cavity":
        if geo:
            kwargs["geom"] = presets.CavityGeometry(**geo)
        case = presets.cavity_case(gr=gr, evaluation=evaluation, **kwargs)
    else:
        raise SetupError(f"unknown preset {cfg.preset!r}")
    sched = _schedule_overrides(cfg, case.schedule)
    if sched is not case.schedule:
        case = replace(case, schedule=sched)
    return case


def _case_provenance(cfg, case):
    from dataclasses import asdict

    from .io import provenance_record

    mats = asdict(case.problem.mats)
    mats["g"] = list(mats["g"])
    echo = {
        "preset": cfg.preset,
        "gr": cfg.gr,
        "name": case.name,
        "mesh": [case.problem.mesh.nx, case.problem.mesh.ny,
                 case.problem.mesh.width, case.problem.mesh.height],
        "materials": mats,
        "r_min": case.r_min,
        "v_star": case.schedule.v_star if hasattr(case.schedule, "v_star") else None,
        "threads": cfg.threads,
    }
    assumptions = {
        "geometry": "heater extent and design box are ASSUMED (source figure unavailable)",
    }
    return provenance_record(echo, assumptions)


def _write_outputs(outdir, cfg, case, result, snapshot, reports):
    from .io import report_cost, write_history

    os.makedirs(outdir, exist_ok=True)
    write_history(os.path.join(outdir, "history.jsonl"),
                  _case_provenance(cfg, case), result.history)
    from .io import export_snapshot

    export_snapshot(snapshot, "vtk", os.path.join(outdir, "snapshot.vtk"))
    export_snapshot(snapshot, "csv", os.path.join(outdir, "snapshot"))
    summary = report_cost(reports)
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump({
            "newton_iterations": sum(r.iterations for r in reports),
            "nonlinear_solves": len(reports),
            "dof_count": reports[0].dof_count if reports else 0,
            "wall_time": sum(r.wall_time for r in reports),
            "text": summary,
        }, fh, indent=2)
    print(summary)


def _snapshot_from_result(case, result):
    from .io import FieldSnapshot
    from .physics import element_velocities

    problem = result.final_problem
    full_gamma = case.full_gamma(result.design.gamma)
    full_phys = case.full_gamma(result.design.gamma_phys)
    vel = element_velocities(problem, result.final_state, full_phys)
    rec = result.history[-1]
    return FieldSnapshot(
        mesh=problem.mesh,
        iteration=rec["iter"],
        gamma=full_gamma,
        gamma_phys=full_phys,
        pressure=result.final_state.p,
        temperature=result.final_state.t,
        velocity=vel,
        psi=rec["psi"],
        constraint=rec["constraint"],
        dT_max=float(result.final_state.t.max() - problem.mats.T0),
    )


def _run_optimize(args, cfg) -> int:
    from .io import threshold_design
    from .optimize import run_optimization

    import numpy as np

    case = _build_case(cfg)
    t0 = time.perf_counter()
    result = run_optimization(case)
    snapshot = _snapshot_from_result(case, result)
    _write_outputs(cfg.output_dir, cfg, case, result, snapshot, result.solve_reports)
    _, frac = threshold_design(result.design.gamma_phys, 0.5)
    print(f"final objective: {result.objective:.6g} "
          f"(scaled {result.objective * case.report_scale:.6g})")
    print(f"solid fraction at 0.5 threshold: {frac:.3f}")
    speed = np.hypot(snapshot.velocity[:, 0], snapshot.velocity[:, 1])
    where = case.problem.mesh.element_centroids()[int(np.argmax(speed))]
    print(f"peak speed {speed.max():.4g} at ({where[0]:.3g}, {where[1]:.3g})")
    print(f"total wall time: {time.perf_counter() - t0:.1f} s")
    return 0


def _run_forward(args, cfg) -> int:
    import numpy as np

    from . import presets
    from .adjoint import thermal_compliance
    from .calibrate import ReferenceField, save_reference
    from .newton import solve_state
    from .physics import heat_balance

    if args.solid_box:
        kwargs = _geometry_kwargs(cfg)
        gr = cfg.gr if cfg.gr is not None else 6400.0
        mob = args.mobility if args.mobility is not None else presets.MOBILITY_HEATSINK
        problem, gamma = presets.calibration_case(gr=gr, mobility_fluid=mob, **kwargs)
    else:
        case = _build_case(cfg, evaluation=True)
        problem = case.problem
        gamma = case.full_gamma(np.full(len(case.design_elements), case.gamma0))
    state, rep = solve_state(problem, gamma, None)
    psi = thermal_compliance(problem, state)
    heat_in, heat_out, rel = heat_balance(problem, state, gamma)
    print(f"compliance: {psi:.6g}  Newton iterations: {rep.iterations}")
    print(f"heat balance: in {heat_in:.6g}, out {heat_out:.6g}, imbalance {rel:.2e}")
    if args.write_reference:
        ref = ReferenceField(nx=problem.mesh.nx, ny=problem.mesh.ny,
                             width=problem.mesh.width, height=problem.mesh.height,
                             temperatures=state.t.copy(), label="solver-generated",
                             gr=cfg.gr or float("nan"))
        save_reference(args.write_reference, ref)
        print(f"reference written to {args.write_reference}")
    return 0


def _run_cross_check(args, cfg) -> int:
    import numpy as np

    from .io import read_csv
    from .optimize import DesignField, cross_check

    gr_values = [float(v) for v in args.gr_list.split(",")]
    setups = []
    designs = []
    for d in args.designs:
        case = _build_case(cfg, evaluation=True)
        snap = read_csv(os.path.join(d, "snapshot"), case.problem.mesh)
        gamma_phys = snap.gamma_phys[case.design_elements]
        designs.append(DesignField(snap.gamma[case.design_elements], gamma_phys, case.r_min))
        setups.append(case)

    def builder(gr):
        sub_cfg = cfg
        sub_cfg.gr = gr
        return _build_case(sub_cfg, evaluation=True)

    result = cross_check(builder, gr_values, designs, setups)
    print("compliance matrix (rows: designs in given order, cols: Gr "
          f"{args.gr_list}; scaled by report factor):")
    for row in result.psi_scaled:
        print("  " + "  ".join(f"{v:10.4g}" for v in row))
    print("max temperature rise per evaluation:")
    for row in result.dT_max:
        print("  " + "  ".join(f"{v:10.4g}" for v in row))
    print(f"dominance (each design best at its own condition): {result.dominance_holds()}")
    with open(os.path.join(cfg.output_dir, "crosscheck.json"), "w") as fh:
        json.dump({"gr": gr_values, "psi": result.psi.tolist(),
                   "psi_scaled": result.psi_scaled.tolist(),
                   "dT_max": result.dT_max.tolist(),
                   "heat_imbalance": result.heat_imbalance.tolist(),
                   "dominance": result.dominance_holds()}, fh, indent=2)
    return 0 if result.dominance_holds() else 1


def _run_calibrate(args, cfg) -> int:
    from . import presets
    from .calibrate import load_reference, sweep_mobility

    kwargs = _geometry_kwargs(cfg)
    gr = cfg.gr if cfg.gr is not None else 6400.0
    problem, gamma = presets.calibration_case(gr=gr, **kwargs)
    ref = load_reference(args.reference)
    result = sweep_mobility(problem, gamma, ref, args.lo, args.hi, args.step)
    os.makedirs(cfg.output_dir, exist_ok=True)
    with open(os.path.join(cfg.output_dir, "sweep.csv"), "w") as fh:
        fh.write("mobility,mse,converged\n")
        for v, e, c in zip(result.values, result.errors, result.converged):
            fh.write(f"{v!r},{e!r},{int(c)}\n")
    print(f"best mobility: {result.best_value} (mse {result.best_error:.6g})")
    if result.at_boundary:
        print("warning: minimum sits on the sweep boundary")
    if not result.unique:
        print("warning: flat error curve, minimum not unique")
    return 0


def _run_simplified(args, cfg) -> int:
    from . import presets
    from .io import write_history
    from .simplified import run_simplified_optimization

    gr = cfg.gr if cfg.gr is not None else 6400.0
    kwargs = {}
    geo = _geometry_kwargs(cfg)
    if geo:
        kwargs["geom"] = presets.HeatsinkGeometry(**geo)
    h_bar = cfg.get("simplified", "h_bar")
    if h_bar is not None:
        kwargs["h_bar"] = h_bar
    case = presets.simplified_heatsink_case(gr=gr, **kwargs)
    result = run_simplified_optimization(case)
    os.makedirs(cfg.output_dir, exist_ok=True)
    write_history(os.path.join(cfg.output_dir, "history.jsonl"),
                  _case_provenance_simplified(cfg, case), result.history)
    print(f"final objective: {result.objective:.6g} "
          f"(scaled {result.objective * case.report_scale:.6g})")
    return 0


def _case_provenance_simplified(cfg, case):
    from .io import provenance_record

    echo = {
        "preset": "simplified-" + (cfg.preset or "heatsink"),
        "gr": cfg.gr,
        "name": case.name,
        "h": case.problem.mats.h,
        "radius_schedule": list(case.schedule.r_min_seq),
        "threads": cfg.threads,
    }
    return provenance_record(echo)


def _run_report(args, cfg) -> int:
    path = os.path.join(args.run_dir, "report.json")
    with open(path) as fh:
        data = json.load(fh)
    print(data.get("text", ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
