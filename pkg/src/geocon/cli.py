"""Scenario-driven command line front end.

Loads a JSON scenario, runs one analysis and emits either a JSON report
(deterministic byte-for-byte for a fixed scenario: fixed key order, floats
at 17 significant digits) or a CSV curve.  Exit codes: 0 success, 2 for
analysis verdicts that fail (audit or identity failures, degenerate
requests), 1 for tool errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from importlib import resources

import jsonschema
import numpy as np

from . import __version__
from .cone import assemble_cone, find_supporting_covector
from .expr import ExprError, parse_expression
from .fields import DivergenceError, FieldError
from .mech import ConnectionSpec, MechError, build_acc_system, connection_spec, generator_families
from .ocp import (
    ControlSchedule,
    DegenerateMomentumError,
    OcpError,
    audit_necessary_conditions,
    build_control_affine,
    classify_extremal,
    expression_schedule,
    extend_system,
    integrate_biextremal,
    integrate_trajectory,
    piecewise_schedule,
    search_normal_lift,
)
from .pca import PcaError, abnormal_verdict, annihilator_at, ladder_pairings, run_algorithm
from .variations import (
    VariationError,
    bracket_variation,
    needle_variation,
)

log = logging.getLogger("geocon")

SCHEMA_VERSION = "1"
COMMANDS = ("bracket", "flow", "variation", "cone", "pca", "extremal", "audit", "mech-check")


class ScenarioError(Exception):
    pass


class VerdictFailure(Exception):
    """Analysis completed but the mathematical verdict is negative."""


# ---------------------------------------------------------------------------
# Scenario loading.
# ---------------------------------------------------------------------------


def load_schema() -> dict:
    with resources.files("geocon").joinpath("schema.json").open("rb") as fh:
        return json.load(fh)


@dataclass
class Scenario:
    name: str
    chart: tuple[str, ...]
    control_names: tuple[str, ...]
    system: object  # ControlAffineSystem
    extended: object | None
    connection: ConnectionSpec | None
    initial: np.ndarray | None
    interval: tuple[float, float] | None
    step: float
    schedule: ControlSchedule | None
    analysis: dict
    digest: str
    raw: dict

    def require_reference(self, command: str):
        if self.schedule is None:
            raise ScenarioError(
                f"missing /reference block (required by the {command!r} command)"
            )


def _pointer(path_iterable) -> str:
    parts = [str(p) for p in path_iterable]
    return "/" + "/".join(parts) if parts else ""


def _bound(value, where: str) -> float:
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("inf", "+inf", "infinity"):
            return math.inf
        if text in ("-inf", "-infinity"):
            return -math.inf
        raise ScenarioError(f"{where}: bound {value!r} is not a number or inf")
    return float(value)


def _parse_block(exprs, variables, where: str):
    out = []
    for i, src in enumerate(exprs):
        try:
            out.append(parse_expression(src, variables))
        except ExprError as exc:
            raise ScenarioError(f"{where}/{i}: {exc}") from exc
    return out


def load_scenario(path: str) -> Scenario:
    """Parse and validate a scenario file; defaults are filled here."""
    try:
        with open(path, "rb") as fh:
            raw_bytes = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from exc
    digest = "sha256:" + hashlib.sha256(raw_bytes).hexdigest()
    try:
        data = json.loads(raw_bytes)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario is not valid JSON: {exc}") from exc

    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ScenarioError(f"schema violation at {_pointer(e.absolute_path) or '/'}: {e.message}")

    if ("system" in data) == ("mechanics" in data):
        raise ScenarioError("exactly one of /system or /mechanics must be present")

    chart = tuple(data["chart"])
    controls = tuple(data["controls"])
    if len(set(chart + controls)) != len(chart) + len(controls):
        raise ScenarioError("/chart and /controls names must be distinct")

    connection = None
    if "system" in data:
        block = data["system"]
        drift = _parse_block(block["drift"], chart, "/system/drift")
        if len(drift) != len(chart):
            raise ScenarioError("/system/drift: one component per chart variable required")
        inputs = []
        for c, comps in enumerate(block["inputs"]):
            parsed = _parse_block(comps, chart, f"/system/inputs/{c}")
            if len(parsed) != len(chart):
                raise ScenarioError(f"/system/inputs/{c}: wrong component count")
            inputs.append(parsed)
        box = [
            (_bound(lo, f"/system/control_box/{i}"), _bound(hi, f"/system/control_box/{i}"))
            for i, (lo, hi) in enumerate(block["control_box"])
        ]
        try:
            system = build_control_affine(chart, drift, inputs, box, controls)
        except OcpError as exc:
            raise ScenarioError(f"/system: {exc}") from exc
    else:
        block = data["mechanics"]
        coords = tuple(block["coordinates"])
        vels = tuple(block["velocities"])
        if chart != coords + vels:
            raise ScenarioError(
                "/chart must equal /mechanics/coordinates followed by /mechanics/velocities"
            )
        n = len(coords)
        gamma = block["christoffel"]
        if len(gamma) != n or any(len(r) != n or any(len(c) != n for c in r) for r in gamma):
            raise ScenarioError(f"/mechanics/christoffel must be {n}x{n}x{n}")
        parsed_gamma = [
            [
                _parse_block(gamma[i][j], coords, f"/mechanics/christoffel/{i}/{j}")
                for j in range(n)
            ]
            for i in range(n)
        ]
        inputs = []
        for c, comps in enumerate(block["inputs"]):
            parsed = _parse_block(comps, coords, f"/mechanics/inputs/{c}")
            if len(parsed) != n:
                raise ScenarioError(f"/mechanics/inputs/{c}: wrong component count")
            inputs.append(parsed)
        box = [
            (_bound(lo, f"/mechanics/control_box/{i}"), _bound(hi, f"/mechanics/control_box/{i}"))
            for i, (lo, hi) in enumerate(block["control_box"])
        ]
        try:
            connection = connection_spec(coords, vels, parsed_gamma)
            from .fields import VectorField

            q_fields = [VectorField(coords, tuple(comps)) for comps in inputs]
            system = build_acc_system(connection, q_fields, box, controls)
        except (MechError, OcpError) as exc:
            raise ScenarioError(f"/mechanics: {exc}") from exc

    extended = None
    if "cost" in data:
        try:
            extended = extend_system(system, data["cost"])
        except (OcpError, ExprError) as exc:
            raise ScenarioError(f"/cost: {exc}") from exc

    initial = interval = schedule = None
    step = 1e-3
    if "reference" in data:
        ref = data["reference"]
        initial = np.asarray(ref["initial"], dtype=float)
        if len(initial) != len(chart):
            raise ScenarioError("/reference/initial: one value per chart variable required")
        interval = (float(ref["interval"][0]), float(ref["interval"][1]))
        if not interval[0] < interval[1]:
            raise ScenarioError("/reference/interval: must run forward")
        step = float(ref.get("step", 1e-3))
        ctrl = ref["controls"]
        if ctrl["type"] == "piecewise":
            if "breaks" not in ctrl or "values" not in ctrl:
                raise ScenarioError("/reference/controls: piecewise needs breaks and values")
            if any(len(row) != len(controls) for row in ctrl["values"]):
                raise ScenarioError(
                    "/reference/controls/values: one value per control required"
                )
            try:
                schedule = piecewise_schedule(ctrl["breaks"], ctrl["values"])
            except OcpError as exc:
                raise ScenarioError(f"/reference/controls: {exc}") from exc
        else:
            if "exprs" not in ctrl:
                raise ScenarioError("/reference/controls: expressions need exprs")
            try:
                schedule = expression_schedule(ctrl["exprs"], len(controls))
            except (OcpError, ExprError) as exc:
                raise ScenarioError(f"/reference/controls/exprs: {exc}") from exc

    analysis = dict(data.get("analysis", {}))
    analysis.setdefault("per_time_budget", 16)
    analysis.setdefault("max_levels", 6)
    analysis.setdefault("hamiltonian_grid_check", False)
    analysis.setdefault("tolerances", {})
    if "sample_times" not in analysis and interval is not None:
        a, b = interval
        switches = schedule.interior_breakpoints(interval)
        times = []
        for q in (0.25, 0.5, 0.75, 1.0):
            t = a + q * (b - a)
            while any(abs(t - s) <= 1e-9 for s in switches):
                t += 1e-3 * (b - a)
            times.append(round(t, 12))
        analysis["sample_times"] = times

    return Scenario(
        name=data["name"],
        chart=chart,
        control_names=controls,
        system=system,
        extended=extended,
        connection=connection,
        initial=initial,
        interval=interval,
        step=step,
        schedule=schedule,
        analysis=analysis,
        digest=digest,
        raw=data,
    )


# ---------------------------------------------------------------------------
# Deterministic JSON rendering: 17 significant digits, fixed key order.
# ---------------------------------------------------------------------------


def _float_text(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        return json.dumps(str(x))
    return format(float(x), ".17g")


def render_json(value, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = []
        for k, v in value.items():
            items.append(f'{pad}  {json.dumps(str(k))}: {render_json(v, indent + 1)}')
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if len(value) == 0:
            return "[]"
        items = [f"{pad}  {render_json(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return _float_text(float(value))
    if isinstance(value, np.ndarray):
        return render_json(value.tolist(), indent)
    return json.dumps(str(value))


def report_envelope(command: str, scenario: Scenario, options: dict, results: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "scenario": {"name": scenario.name, "digest": scenario.digest},
        "options": options,
        "results": results,
    }


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_plain_number(v) for v in row))
    return "\n".join(lines) + "\n"


def _plain_number(v) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# Command implementations.  Each returns (exit_code, text_payload).
# ---------------------------------------------------------------------------


def _reference(scenario: Scenario, step: float | None = None, command: str = "analysis"):
    scenario.require_reference(command)
    return integrate_trajectory(
        scenario.system,
        scenario.initial,
        scenario.schedule,
        scenario.interval,
        step or scenario.step,
    )


def _extended_reference(scenario: Scenario, step: float | None = None):
    x0 = np.concatenate([[0.0], scenario.initial])
    return integrate_trajectory(
        scenario.extended, x0, scenario.schedule, scenario.interval, step or scenario.step
    )


def _rendered_field(vf) -> list[str]:
    from .expr import render

    return [render(c) for c in vf.components]


def cmd_bracket(scenario: Scenario, args) -> tuple[int, str]:
    from .fields import is_zero_field, lie_bracket

    sys_ = scenario.system
    results = {"chart": list(scenario.chart), "brackets": []}
    fields = [("X0", sys_.drift)] + [
        (f"X{c + 1}", vf) for c, vf in enumerate(sys_.inputs)
    ]
    for i in range(len(fields)):
        for j in range(i + 1, len(fields)):
            name_a, a = fields[i]
            name_b, b = fields[j]
            if name_a == "X0" and is_zero_field(a):
                continue
            br = lie_bracket(a, b)
            results["brackets"].append(
                {
                    "pair": f"[{name_a},{name_b}]",
                    "components": _rendered_field(br),
                    "zero": is_zero_field(br),
                }
            )
    report = report_envelope("bracket", scenario, _echo(args), results)
    return 0, render_json(report) + "\n"


def cmd_flow(scenario: Scenario, args) -> tuple[int, str]:
    traj = _reference(scenario, args.step)
    header = ["t", *scenario.chart]
    rows = [[t, *xs] for t, xs in zip(traj.ts, traj.xs)]
    return 0, _csv(header, rows)


def cmd_variation(scenario: Scenario, args) -> tuple[int, str]:
    traj = _reference(scenario, args.step)
    a, b = scenario.interval
    t0 = args.time if args.time is not None else 0.5 * (a + b)
    x = traj.point_at(t0)
    u_ref = traj.control_at(t0)
    if args.template == "needle":
        if args.u1 is None:
            raise ScenarioError("the needle template needs --u1")
        u1 = _parse_covector(args.u1)
        if len(u1) != scenario.system.k:
            raise ScenarioError(f"--u1 needs {scenario.system.k} values")
        pv = needle_variation(scenario.system, u_ref, u1, args.l1, x, t0=t0)
    else:
        c = args.input - 1
        if not 0 <= c < scenario.system.k:
            raise ScenarioError(f"--input must be in 1..{scenario.system.k}")
        xi0 = scenario.system.slice_field(u_ref)
        pv = bracket_variation(xi0, scenario.system.inputs[c], x, t0=t0)
    if pv is None:
        return 2, "degenerate variation: the template produces no perturbation vector\n"
    svals = np.linspace(0.0, args.s_max, args.samples)
    rows = []
    for s in svals:
        nu = pv.curve(float(s))
        rows.append([s, *np.asarray(nu.coords, dtype=float)])
    return 0, _csv(["s", *scenario.chart], rows)


def _cone_for(scenario: Scenario, args, mode: str):
    if mode == "extended":
        reference = _extended_reference(scenario, args.step)
        system = scenario.extended
    else:
        reference = _reference(scenario, args.step)
        system = scenario.system
    t = args.time if args.time is not None else scenario.interval[1]
    times = [t0 for t0 in scenario.analysis["sample_times"] if t0 <= t]
    if not times:
        times = [t]
    return (
        assemble_cone(
            system,
            reference,
            t,
            times,
            per_time_budget=scenario.analysis["per_time_budget"],
        ),
        reference,
    )


def _support_block(support) -> dict:
    return {
        "feasible": support.feasible,
        "covector": None if support.covector is None else support.covector.components,
        "max_pairing": support.max_pairing,
        "separating_margin": support.separating_margin,
    }


def cmd_cone(scenario: Scenario, args) -> tuple[int, str]:
    cone, _ = _cone_for(scenario, args, "reduced")
    support = find_supporting_covector(cone)
    results = {
        "time": cone.time,
        "base": cone.base.coords,
        "generators": [
            {
                "components": g.components,
                "t0": p.t0,
                "order": p.order,
                "recipe": p.recipe,
            }
            for g, p in zip(cone.generators, cone.provenance)
        ],
        "support": _support_block(support),
    }
    if scenario.extended is not None:
        # on the cost-augmented chart the decrease direction is -d/dx0 and
        # the separating margin equals -lambda0 of the reported covector
        from .fields import TangentVector

        ext_cone, _ = _cone_for(scenario, args, "extended")
        d = np.zeros(ext_cone.dim)
        d[0] = -1.0
        ext_support = find_supporting_covector(ext_cone, TangentVector(ext_cone.base, d))
        results["extended"] = {
            "generators": len(ext_cone.generators),
            "support": _support_block(ext_support),
        }
    report = report_envelope("cone", scenario, _echo(args), results)
    return 0, render_json(report) + "\n"


def cmd_pca(scenario: Scenario, args) -> tuple[int, str]:
    reference = _reference(scenario, args.step)
    sample_times = [
        t for t in scenario.analysis["sample_times"] if t < scenario.interval[1]
    ] or None
    ladder = run_algorithm(
        scenario.system,
        reference,
        sample_times=sample_times,
        max_levels=scenario.analysis["max_levels"],
    )
    levels = []
    for lvl in ladder.levels:
        levels.append(
            {
                "index": lvl.index,
                "generators": [
                    {
                        "name": g.name,
                        "components": g.rendered(),
                        "parent": g.parent,
                        "bracket_with": g.bracket_with,
                    }
                    for g in lvl.generators
                ],
                "span_dims": {str(t): d for t, d in sorted(lvl.span_dims.items())},
                "controls_could_determine": lvl.branch_flag,
            }
        )
    annihilators = {}
    for t in ladder.sample_times:
        basis = annihilator_at(reference.point_at(t), ladder)
        annihilators[str(t)] = [b.components for b in basis]
    results = {
        "stabilized_at": ladder.stabilized_at,
        "levels": levels,
        "sample_times": list(ladder.sample_times),
        "annihilators": annihilators,
        "verdict": abnormal_verdict(ladder),
    }
    if args.covector is not None:
        lam0 = _parse_covector(args.covector)
        bx = integrate_biextremal(
            scenario.system,
            scenario.initial,
            lam0,
            scenario.schedule,
            scenario.interval,
            "reduced",
            args.step or scenario.step,
        )
        pairings = ladder_pairings(ladder, bx)
        results["covector_transport"] = {
            "initial": list(lam0),
            "max_abs_pairings": pairings,
            "worst": max(pairings.values()) if pairings else 0.0,
        }
    report = report_envelope("pca", scenario, _echo(args), results)
    return 0, render_json(report) + "\n"


def _parse_covector(text) -> np.ndarray:
    if isinstance(text, np.ndarray):
        return text
    try:
        return np.asarray([float(v) for v in str(text).split(",")], dtype=float)
    except ValueError as exc:
        raise ScenarioError(f"bad covector {text!r}: {exc}") from exc


def _mode_for_covector(scenario: Scenario, lam0) -> str:
    m = scenario.system.m
    if len(lam0) == m:
        return "reduced"
    if len(lam0) == m + 1:
        if scenario.extended is None:
            raise ScenarioError("extended covector given but the scenario has no cost")
        return "extended"
    raise ScenarioError(f"covector needs {m} (reduced) or {m + 1} (extended) components")


def _integrate_candidate(scenario: Scenario, lam0, mode: str, step):
    if mode == "extended":
        x0 = np.concatenate([[0.0], scenario.initial])
        system = scenario.extended
    else:
        x0 = scenario.initial
        system = scenario.system
    return integrate_biextremal(
        system, x0, lam0, scenario.schedule, scenario.interval, mode, step or scenario.step
    )


def cmd_extremal(scenario: Scenario, args) -> tuple[int, str]:
    if args.covector is None:
        raise ScenarioError("extremal needs --covector")
    lam0 = _parse_covector(args.covector)
    mode = _mode_for_covector(scenario, lam0)
    bx = _integrate_candidate(scenario, lam0, mode, args.step)
    results = {
        "mode": mode,
        "initial_covector": list(lam0),
        "final_state": bx.trajectory.xs[-1],
        "final_momentum": bx.momenta[-1],
        "momentum_norm_range": [
            float(np.min(np.linalg.norm(bx.momenta, axis=1))),
            float(np.max(np.linalg.norm(bx.momenta, axis=1))),
        ],
    }
    idx = np.linspace(0, len(bx.momentum_ts) - 1, min(21, len(bx.momentum_ts))).astype(int)
    results["samples"] = [
        {
            "t": float(bx.momentum_ts[i]),
            "state": bx.trajectory.xs[i],
            "momentum": bx.momenta[i],
        }
        for i in idx
    ]
    if mode == "extended":
        search = None
        if abs(bx.lambda0) <= 1e-12:
            reference = _reference(scenario, args.step)
            search = search_normal_lift(scenario.extended, reference)
        cls = classify_extremal(bx, search)
        results["classification"] = {
            "kind": cls.kind,
            "label": cls.label,
            "lambda0": cls.lambda0,
        }
        if search is not None:
            results["normal_lift_search"] = {
                "found": None if search.found is None else search.found,
                "candidates": search.candidates,
                "tolerance": search.tol,
                "best_residual": search.best_residual,
                "grid": search.grid_description,
            }
    report = report_envelope("extremal", scenario, _echo(args), results)
    return 0, render_json(report) + "\n"


def cmd_audit(scenario: Scenario, args) -> tuple[int, str]:
    if args.covector is None:
        raise ScenarioError("audit needs --covector")
    lam0 = _parse_covector(args.covector)
    mode = _mode_for_covector(scenario, lam0)
    bx = _integrate_candidate(scenario, lam0, mode, args.step)
    cone, _ = _cone_for(scenario, args, mode)
    tol = scenario.analysis["tolerances"].get("stationarity", 1e-8)
    report_data = audit_necessary_conditions(
        bx,
        cone,
        scenario.extended if mode == "extended" else scenario.system,
        mode,
        stationarity_tol=tol,
        hamiltonian_grid_check=scenario.analysis["hamiltonian_grid_check"],
    )
    results = {
        "mode": mode,
        "passed": report_data.passed,
        "conditions": [
            {
                "id": c.id,
                "description": c.description,
                "passed": c.passed,
                "detail": c.detail,
            }
            for c in report_data.conditions
        ],
    }
    report = report_envelope("audit", scenario, _echo(args), results)
    return (0 if report_data.passed else 2), render_json(report) + "\n"


def cmd_mech_check(scenario: Scenario, args) -> tuple[int, str]:
    if scenario.connection is None:
        raise ScenarioError("mech-check needs a mechanics scenario")
    reference = _reference(scenario, args.step)
    rep = generator_families(scenario.system, reference, sample_time=args.time)
    results = {
        "passed": rep.passed,
        "lift_generators": [_rendered_field(vf) for vf in rep.z0],
        "bracket_generators": [_rendered_field(vf) for vf in rep.z1],
        "reduction_max_error": rep.reduction_max_error,
        "identities": [
            {
                "name": c.name,
                "input": c.input_index + 1,
                "lhs": c.lhs,
                "rhs": c.rhs,
                "error": c.error,
                "passed": c.passed,
            }
            for c in rep.checks
        ],
    }
    report = report_envelope("mech-check", scenario, _echo(args), results)
    return (0 if rep.passed else 2), render_json(report) + "\n"


def _echo(args) -> dict:
    out = {}
    for key in ("time", "step", "seed", "covector", "template", "input", "u1", "l1"):
        v = getattr(args, key, None)
        if v is not None:
            out[key] = v
    return out


_HANDLERS = {
    "bracket": cmd_bracket,
    "flow": cmd_flow,
    "variation": cmd_variation,
    "cone": cmd_cone,
    "pca": cmd_pca,
    "extremal": cmd_extremal,
    "audit": cmd_audit,
    "mech-check": cmd_mech_check,
}


def run_command(command: str, scenario: Scenario, args) -> tuple[int, str]:
    """Dispatch one analysis; returns (exit_code, payload text)."""
    if command not in _HANDLERS:
        raise ScenarioError(f"unknown command {command!r}")
    if command != "bracket":
        scenario.require_reference(command)
    return _HANDLERS[command](scenario, args)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geocon",
        description="Geometric control workbench: brackets, variations, cones, "
        "constraint ladders and necessary-condition audits.",
    )
    parser.add_argument("--version", action="version", version=f"geocon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("bracket", "print the Lie brackets of the system fields"),
        ("flow", "emit the reference trajectory as CSV"),
        ("variation", "emit a variation curve as CSV"),
        ("cone", "assemble the perturbation cone and report a supporting covector"),
        ("pca", "run the constraint ladder and report annihilators"),
        ("extremal", "integrate a biextremal from an initial covector"),
        ("audit", "check the necessary conditions for a candidate covector"),
        ("mech-check", "verify the mechanical generator families and jet identities"),
    ):
        p = sub.add_parser(name, help=doc)
        p.add_argument("scenario", help="path to the scenario JSON file")
        p.add_argument("--out", help="write the report/CSV here instead of stdout")
        p.add_argument("--covector", help="comma-separated initial covector components")
        p.add_argument("--time", type=float, help="analysis time (cone time, sample time...)")
        p.add_argument("--step", type=float, help="override the integrator step")
        p.add_argument("--seed", type=int, help="seed echoed into the report")
        if name == "variation":
            p.add_argument(
                "--template", choices=("needle", "commutator"), default="commutator"
            )
            p.add_argument("--input", type=int, default=1, help="input index (1-based)")
            p.add_argument("--u1", help="needle control value, comma separated")
            p.add_argument("--l1", type=float, default=1.0)
            p.add_argument("--s-max", dest="s_max", type=float, default=0.4)
            p.add_argument("--samples", type=int, default=33)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("GEOCON_LOG", "WARNING").upper()
    if level not in ("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG"):
        level = "WARNING"
    logging.basicConfig(level=level)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scenario = load_scenario(args.scenario)
        log.info("loaded scenario %s (%s)", scenario.name, scenario.digest)
        code, payload = run_command(args.command, scenario, args)
    except (
        ScenarioError,
        ExprError,
        FieldError,
        OcpError,
        PcaError,
        MechError,
        VariationError,
    ) as exc:
        print(f"geocon: error: {exc}", file=sys.stderr)
        return 1
    except (DivergenceError, DegenerateMomentumError) as exc:
        print(f"geocon: verdict: {exc}", file=sys.stderr)
        return 2
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)
    return code


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
