"""Control-affine systems, their cost extensions and biextremal machinery.

A control-affine system is a drift field plus input fields with an open box
of admissible control values.  Fixing a control value slices out an ordinary
vector field; a cost function extends the state with a running-cost
coordinate x0 (kept first).  Momenta evolve by the cotangent lift (the
adjoint of the state linearization), and the audit checks the weak
first-order necessary conditions plus the supporting-hyperplane condition
against an externally assembled cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import (
    Expr,
    add as expr_add,
    compile_expression,
    differentiate,
    free_variables,
    mul as expr_mul,
    parse_expression,
    substitute,
    var as expr_var,
)
from .fields import (
    Covector,
    FieldError,
    Point,
    TangentVector,
    VectorField,
    as_point,
    combine_fields,
    rk4_path,
    vector_field,
)

DEFAULT_STEP = 1e-3
COST_COORDINATE = "x0"


class OcpError(Exception):
    pass


class DegenerateMomentumError(OcpError):
    def __init__(self, time: float, norm: float):
        super().__init__(f"momentum norm {norm:.3e} fell below 1e-12 at t = {time:.6g}")
        self.time = time


class InvariantViolationError(OcpError):
    pass


# ---------------------------------------------------------------------------
# Control schedules and trajectories.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    """Piecewise-constant (`breaks`/`values`) or expression-in-t controls."""

    breaks: tuple[float, ...] | None = None
    values: tuple[tuple[float, ...], ...] | None = None
    exprs: tuple[Expr, ...] | None = None

    def __post_init__(self):
        if (self.breaks is None) == (self.exprs is None):
            raise OcpError("exactly one of piecewise breaks or expressions required")
        if self.breaks is not None:
            if len(self.breaks) != len(self.values) or not self.breaks:
                raise OcpError("breaks and values must align and be nonempty")
            if any(b >= a for a, b in zip(self.breaks[1:], self.breaks[:-1])):
                raise OcpError("breakpoints must increase strictly")

    @property
    def k(self) -> int:
        if self.values is not None:
            return len(self.values[0])
        return len(self.exprs)

    def value_at(self, t: float) -> np.ndarray:
        if self.breaks is not None:
            i = int(np.searchsorted(self.breaks, t, side="right")) - 1
            i = max(i, 0)
            return np.asarray(self.values[i], dtype=float)
        fns = self.__dict__.get("_compiled")
        if fns is None:
            fns = tuple(compile_expression(e, ("t",)) for e in self.exprs)
            object.__setattr__(self, "_compiled", fns)
        return np.asarray([fn([t]) for fn in fns], dtype=float)

    def interior_breakpoints(self, interval: tuple[float, float]) -> tuple[float, ...]:
        if self.breaks is None:
            return ()
        a, b = interval
        return tuple(t for t in self.breaks if a < t < b)

    def segments(self, interval: tuple[float, float]):
        """(t_start, t_end) pieces on which the control law has no switch."""
        a, b = interval
        cuts = [a, *self.interior_breakpoints((a, b)), b]
        return list(zip(cuts[:-1], cuts[1:]))


def piecewise_schedule(breaks: Sequence[float], values: Sequence[Sequence[float]]) -> ControlSchedule:
    return ControlSchedule(
        breaks=tuple(float(t) for t in breaks),
        values=tuple(tuple(float(u) for u in row) for row in values),
    )


def expression_schedule(exprs: Sequence, control_count: int | None = None) -> ControlSchedule:
    parsed = tuple(
        parse_expression(e, ("t",)) if isinstance(e, str) else e for e in exprs
    )
    if control_count is not None and len(parsed) != control_count:
        raise OcpError(f"{len(parsed)} control expressions for {control_count} inputs")
    return ControlSchedule(exprs=parsed)


@dataclass(frozen=True, eq=False)
class Trajectory:
    interval: tuple[float, float]
    ts: np.ndarray
    xs: np.ndarray  # row i is the state at ts[i]
    schedule: ControlSchedule

    def __post_init__(self):
        ts = np.asarray(self.ts, dtype=float)
        xs = np.asarray(self.xs, dtype=float)
        object.__setattr__(self, "ts", ts)
        object.__setattr__(self, "xs", xs)
        if len(ts) != len(xs) or len(ts) == 0:
            raise OcpError("trajectory samples are inconsistent")
        if np.any(np.diff(ts) < 0.0):
            raise OcpError("trajectory times must be nondecreasing")
        if not np.all(np.isfinite(xs)):
            raise OcpError("trajectory contains non-finite states")

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def point_at(self, t: float) -> Point:
        return as_point(self.state_at(t))

    def state_at(self, t: float) -> np.ndarray:
        ts = self.ts
        if t <= ts[0]:
            return self.xs[0].copy()
        if t >= ts[-1]:
            return self.xs[-1].copy()
        i = int(np.searchsorted(ts, t, side="right")) - 1
        t0, t1 = ts[i], ts[i + 1]
        if t1 == t0:
            return self.xs[i].copy()
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.xs[i] + w * self.xs[i + 1]

    def control_at(self, t: float) -> np.ndarray:
        return self.schedule.value_at(t)


# ---------------------------------------------------------------------------
# Systems.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ControlAffineSystem:
    variables: tuple[str, ...]
    drift: VectorField
    inputs: tuple[VectorField, ...]
    control_box: tuple[tuple[float, float], ...]
    control_names: tuple[str, ...]

    @property
    def m(self) -> int:
        return len(self.variables)

    @property
    def k(self) -> int:
        return len(self.inputs)

    @property
    def contains_zero(self) -> bool:
        return all(lo < 0.0 < hi for lo, hi in self.control_box)

    def slice_field(self, u: Sequence[float]) -> VectorField:
        """The ordinary field drift + sum_c u^c X_c."""
        u = tuple(float(v) for v in u)
        if len(u) != self.k:
            raise OcpError(f"{len(u)} control values for {self.k} inputs")
        return combine_fields(self.drift, self.inputs, u)

    def state_rhs(self):
        """Compiled f(x, u) and df/dx over chart + control variables."""
        cached = self.__dict__.get("_rhs")
        if cached is None:
            names = self.variables + self.control_names
            comps = []
            for i in range(self.m):
                terms = self.drift.components[i]
                for c, vf in enumerate(self.inputs):
                    terms = expr_add(
                        terms, expr_mul(expr_var(self.control_names[c]), vf.components[i])
                    )
                comps.append(terms)
            f = tuple(compile_expression(e, names) for e in comps)
            jac = tuple(
                tuple(
                    compile_expression(differentiate(e, v), names)
                    for v in self.variables
                )
                for e in comps
            )
            cached = (f, jac)
            object.__setattr__(self, "_rhs", cached)
        return cached


def build_control_affine(
    variables: Sequence[str],
    drift,
    inputs: Sequence,
    control_box: Sequence[Sequence[float]],
    control_names: Sequence[str] | None = None,
) -> ControlAffineSystem:
    """Validated system from component strings or expression trees."""
    chart = tuple(variables)
    if len(set(chart)) != len(chart):
        raise OcpError("chart variable names must be distinct")
    try:
        drift_vf = drift if isinstance(drift, VectorField) else vector_field(chart, drift)
        input_vfs = tuple(
            vf if isinstance(vf, VectorField) else vector_field(chart, vf) for vf in inputs
        )
    except FieldError as exc:
        raise OcpError(str(exc)) from exc
    if drift_vf.dim != len(chart):
        raise OcpError(f"drift has dimension {drift_vf.dim}, chart has {len(chart)}")
    for c, vf in enumerate(input_vfs):
        if vf.dim != len(chart) or vf.variables != chart:
            raise OcpError(f"input field {c + 1} does not live on the declared chart")
    box = tuple((float(lo), float(hi)) for lo, hi in control_box)
    if len(box) != len(input_vfs):
        raise OcpError(f"{len(box)} control bounds for {len(input_vfs)} inputs")
    for lo, hi in box:
        if not lo < hi:
            raise OcpError(f"control bound ({lo}, {hi}) is not an interval")
    if control_names is None:
        control_names = tuple(f"u{c + 1}" for c in range(len(input_vfs)))
    else:
        control_names = tuple(control_names)
        if len(control_names) != len(input_vfs):
            raise OcpError("one control name per input field required")
    overlap = set(control_names) & set(chart)
    if overlap:
        raise OcpError(f"control names collide with chart variables: {sorted(overlap)}")
    return ControlAffineSystem(chart, drift_vf, input_vfs, box, control_names)


@dataclass(frozen=True, eq=False)
class ExtendedSystem:
    """State extended by the running-cost coordinate, kept first."""

    base: ControlAffineSystem
    cost: Expr

    @property
    def variables(self) -> tuple[str, ...]:
        return (COST_COORDINATE,) + self.base.variables

    @property
    def m(self) -> int:
        return self.base.m + 1

    @property
    def k(self) -> int:
        return self.base.k

    @property
    def control_box(self):
        return self.base.control_box

    @property
    def control_names(self):
        return self.base.control_names

    def slice_field(self, u: Sequence[float]) -> VectorField:
        u = tuple(float(v) for v in u)
        subs = dict(zip(self.base.control_names, u))
        comps = (substitute(self.cost, subs),) + self.base.slice_field(u).components
        return VectorField(self.variables, comps)

    def state_rhs(self):
        cached = self.__dict__.get("_rhs")
        if cached is None:
            names = self.variables + self.base.control_names
            comps = [self.cost]
            for i in range(self.base.m):
                e = self.base.drift.components[i]
                for c, vf in enumerate(self.base.inputs):
                    e = expr_add(
                        e, expr_mul(expr_var(self.base.control_names[c]), vf.components[i])
                    )
                comps.append(e)
            f = tuple(compile_expression(e, names) for e in comps)
            jac = tuple(
                tuple(compile_expression(differentiate(e, v), names) for v in self.variables)
                for e in comps
            )
            cached = (f, jac)
            object.__setattr__(self, "_rhs", cached)
        return cached

    def cost_control_gradient(self):
        cached = self.__dict__.get("_dcost_du")
        if cached is None:
            names = self.base.variables + self.base.control_names
            cached = tuple(
                compile_expression(differentiate(self.cost, u), names)
                for u in self.base.control_names
            )
            object.__setattr__(self, "_dcost_du", cached)
        return cached


def extend_system(sys: ControlAffineSystem, cost) -> ExtendedSystem:
    if COST_COORDINATE in sys.variables:
        raise OcpError(f"chart name {COST_COORDINATE!r} is reserved for the cost coordinate")
    cost_expr = (
        parse_expression(cost, sys.variables + sys.control_names)
        if isinstance(cost, str)
        else cost
    )
    extra = free_variables(cost_expr) - set(sys.variables) - set(sys.control_names)
    if extra:
        raise OcpError(f"cost uses undeclared names: {sorted(extra)}")
    return ExtendedSystem(sys, cost_expr)


# ---------------------------------------------------------------------------
# Reference trajectories.
# ---------------------------------------------------------------------------


def _scheduled_rhs(system, schedule: ControlSchedule):
    f, _ = system.state_rhs()

    if schedule.breaks is not None:

        def make_fixed(uvals):
            tail = [float(v) for v in uvals]

            def rhs(_t, x):
                args = list(x) + tail
                return [fn(args) for fn in f]

            return rhs

        return ("piecewise", make_fixed)

    def rhs(t, x):
        u = schedule.value_at(float(t))
        args = list(x) + [float(v) for v in u]
        return [fn(args) for fn in f]

    return ("expressions", rhs)


def integrate_trajectory(
    system,
    x0,
    schedule: ControlSchedule,
    interval: tuple[float, float],
    step: float = DEFAULT_STEP,
) -> Trajectory:
    """Integrate the controlled state over the interval, restarting at
    control breakpoints so each switch lands exactly on a sample."""
    a, b = float(interval[0]), float(interval[1])
    if b < a:
        raise OcpError("interval must run forward")
    x = [float(v) for v in np.asarray(x0, dtype=float)]
    ts = [a]
    xs = [list(x)]

    def record(t, state):
        # the trailing partial step can land a rounding residue behind the
        # last full step; the landing point is authoritative, so replace
        if t <= ts[-1]:
            if t == ts[-1] and state == xs[-1]:
                return
            ts[-1] = max(t, ts[-1])
            xs[-1] = list(state)
            return
        ts.append(t)
        xs.append(list(state))

    kind, rhs_factory = _scheduled_rhs(system, schedule)
    for t0, t1 in schedule.segments((a, b)):
        if kind == "piecewise":
            rhs = rhs_factory(schedule.value_at(0.5 * (t0 + t1)))
        else:
            rhs = rhs_factory
        x = rk4_path(rhs, x, t0, t1 - t0, step, record=record)
    return Trajectory((a, b), np.asarray(ts), np.asarray(xs), schedule)


# ---------------------------------------------------------------------------
# Hamiltonian, its control gradient and Hamilton's equations.
# ---------------------------------------------------------------------------


def _check_mode(mode: str):
    if mode not in ("reduced", "extended"):
        raise OcpError(f"mode must be 'reduced' or 'extended', got {mode!r}")


def _system_for_mode(sys, mode: str):
    _check_mode(mode)
    if mode == "extended":
        if not isinstance(sys, ExtendedSystem):
            raise OcpError("extended mode needs an ExtendedSystem (attach a cost)")
        return sys
    return sys.base if isinstance(sys, ExtendedSystem) else sys


def hamiltonian(lam, x, u, sys, mode: str = "reduced") -> float:
    """<lambda, f(x, u)>; the p0 * cost term participates in extended mode."""
    system = _system_for_mode(sys, mode)
    lam = np.asarray(lam.components if isinstance(lam, Covector) else lam, dtype=float)
    xv = np.asarray(x.coords if isinstance(x, Point) else x, dtype=float)
    if len(lam) != len(system.variables) or len(xv) != len(system.variables):
        raise OcpError("covector/state dimension does not match the mode")
    f, _ = system.state_rhs()
    args = list(xv) + [float(v) for v in u]
    return float(sum(li * fn(args) for li, fn in zip(lam, f)))


def hamiltonian_control_gradient(lam, x, u, sys, mode: str = "reduced") -> np.ndarray:
    """dH/du per control: <lambda, X_c(x)>, plus p0 dF/du_c in extended mode."""
    system = _system_for_mode(sys, mode)
    lam = np.asarray(lam.components if isinstance(lam, Covector) else lam, dtype=float)
    xv = np.asarray(x.coords if isinstance(x, Point) else x, dtype=float)
    if mode == "reduced":
        out = []
        for vf in system.inputs:
            vals = vf(list(xv))
            out.append(float(np.dot(lam, np.asarray(vals, dtype=float))))
        return np.asarray(out)
    base = system.base
    p0, p = lam[0], lam[1:]
    xbase = xv[1:]
    args = list(xbase) + [float(v) for v in u]
    grads = system.cost_control_gradient()
    out = []
    for c, vf in enumerate(base.inputs):
        vals = np.asarray(vf(list(xbase)), dtype=float)
        out.append(float(p0 * grads[c](args) + np.dot(p, vals)))
    return np.asarray(out)


def hamilton_rhs(x, lam, u, sys, mode: str = "reduced"):
    """Right-hand side of Hamilton's equations at fixed control value.

    dx/dt = f(x, u) and dlambda/dt = -(df/dx)^T lambda, the cotangent lift.
    With the symplectic form written dx^i ^ dp_i these are exactly
    dx/dt = dH/dp, dp/dt = -dH/dx for H = <lambda, f>.  In extended mode
    the cost coordinate is first and dp0/dt vanishes structurally (nothing
    depends on x0).
    """
    system = _system_for_mode(sys, mode)
    f, jac = system.state_rhs()
    xv = list(np.asarray(x.coords if isinstance(x, Point) else x, dtype=float))
    lv = list(np.asarray(lam.components if isinstance(lam, Covector) else lam, dtype=float))
    n = len(system.variables)
    if len(xv) != n or len(lv) != n:
        raise OcpError("state/momentum dimension does not match the mode")
    args = xv + [float(v) for v in u]
    dx = [fn(args) for fn in f]
    dlam = []
    for j in range(n):
        acc = 0.0
        for i in range(n):
            acc -= jac[i][j](args) * lv[i]
        dlam.append(acc)
    return np.asarray(dx), np.asarray(dlam)


# ---------------------------------------------------------------------------
# Biextremals.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Biextremal:
    trajectory: Trajectory
    momentum_ts: np.ndarray
    momenta: np.ndarray  # row i pairs with momentum_ts[i]
    mode: str
    lambda0: float | None  # p0 in extended mode, None in reduced mode

    def covector_at(self, t: float) -> Covector:
        ts = self.momentum_ts
        if t <= ts[0]:
            comp = self.momenta[0]
        elif t >= ts[-1]:
            comp = self.momenta[-1]
        else:
            i = int(np.searchsorted(ts, t, side="right")) - 1
            t0, t1 = ts[i], ts[i + 1]
            w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            comp = (1.0 - w) * self.momenta[i] + w * self.momenta[i + 1]
        return Covector(self.trajectory.point_at(t), comp.copy())


def integrate_biextremal(
    sys,
    x0,
    lam0,
    schedule: ControlSchedule,
    interval: tuple[float, float],
    mode: str = "reduced",
    step: float = DEFAULT_STEP,
) -> Biextremal:
    """RK4 on the coupled state/momentum system along a control schedule.

    Piecewise-constant schedules restart the integrator on their switch
    times so those land exactly on samples.  A momentum norm below 1e-12
    anywhere raises :class:`DegenerateMomentumError`.
    """
    system = _system_for_mode(sys, mode)
    n = len(system.variables)
    lam0 = np.asarray(lam0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if len(x0) != n or len(lam0) != n:
        raise OcpError(f"state/momentum must have dimension {n} in {mode} mode")
    if float(np.linalg.norm(lam0)) < 1e-12:
        raise DegenerateMomentumError(float(interval[0]), float(np.linalg.norm(lam0)))
    f, jac = system.state_rhs()
    a, b = float(interval[0]), float(interval[1])

    ts = [a]
    states = [list(x0) + list(lam0)]

    def record(t, state):
        lam_norm = math.sqrt(sum(v * v for v in state[n:]))
        if lam_norm < 1e-12:
            raise DegenerateMomentumError(t, lam_norm)
        if t <= ts[-1]:
            if t == ts[-1] and state == states[-1]:
                return
            ts[-1] = max(t, ts[-1])
            states[-1] = list(state)
            return
        ts.append(t)
        states.append(list(state))

    def make_rhs(u_of_t):
        def rhs(t, state):
            u = u_of_t(t)
            args = list(state[:n]) + u
            dx = [fn(args) for fn in f]
            dlam = []
            for j in range(n):
                acc = 0.0
                for i in range(n):
                    acc -= jac[i][j](args) * state[n + i]
                dlam.append(acc)
            return dx + dlam

        return rhs

    cur = states[0]
    for t0, t1 in schedule.segments((a, b)):
        if schedule.breaks is not None:
            uvals = [float(v) for v in schedule.value_at(0.5 * (t0 + t1))]
            rhs = make_rhs(lambda _t, _u=uvals: _u)
        else:
            rhs = make_rhs(lambda t: [float(v) for v in schedule.value_at(float(t))])
        cur = rk4_path(rhs, cur, t0, t1 - t0, step, record=record)

    arr = np.asarray(states)
    traj = Trajectory((a, b), np.asarray(ts), arr[:, :n], schedule)
    momenta = arr[:, n:]
    lambda0 = float(lam0[0]) if mode == "extended" else None
    if mode == "extended":
        drift0 = float(np.max(np.abs(momenta[:, 0] - lam0[0])))
        if drift0 > 1e-12:
            raise InvariantViolationError(
                f"cost multiplier drifted by {drift0:.3e}; it must stay constant"
            )
        if lambda0 > 1e-12:
            raise InvariantViolationError(f"cost multiplier must be <= 0, got {lambda0}")
    return Biextremal(traj, np.asarray(ts), momenta, mode, lambda0)


# ---------------------------------------------------------------------------
# Vector transport along a reference (the linearized flow across switches).
# ---------------------------------------------------------------------------


def transport_vector(
    system,
    reference: Trajectory,
    t0: float,
    t1: float,
    v: TangentVector,
    step: float = DEFAULT_STEP,
) -> TangentVector:
    """Pushforward of `v` from gamma(t0) to gamma(t1) along the reference
    field, chaining the variational equation across control switches."""
    sys = system
    f, jac = sys.state_rhs()
    n = len(sys.variables)
    if v.base.dim != n:
        raise OcpError("vector dimension does not match the system")
    schedule = reference.schedule

    def make_rhs(u_of_t):
        def rhs(t, state):
            u = u_of_t(t)
            args = list(state[:n]) + u
            dx = [fn(args) for fn in f]
            ddelta = []
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += jac[i][j](args) * state[n + j]
                ddelta.append(acc)
            return dx + ddelta

        return rhs

    state = [float(c) for c in v.base.coords] + [float(c) for c in v.components]
    a, b = min(t0, t1), max(t0, t1)
    pieces = [seg for seg in schedule.segments((a, b))]
    if t1 < t0:
        pieces = [(y, x) for x, y in reversed(pieces)]
    for seg_a, seg_b in pieces:
        if schedule.breaks is not None:
            uvals = [float(u) for u in schedule.value_at(0.5 * (seg_a + seg_b))]
            rhs = make_rhs(lambda _t, _u=uvals: _u)
        else:
            rhs = make_rhs(lambda t: [float(u) for u in schedule.value_at(float(t))])
        state = rk4_path(rhs, state, seg_a, seg_b - seg_a, step)
    base = Point(np.asarray(state[:n], dtype=float))
    return TangentVector(base, np.asarray(state[n:], dtype=float))


# ---------------------------------------------------------------------------
# Extremal classification and the normal-lift grid search.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalLiftSearch:
    found: np.ndarray | None
    candidates: int
    tol: float
    best_residual: float
    grid_description: str


@dataclass(frozen=True)
class Classification:
    kind: str  # "normal" | "abnormal"
    label: str
    lambda0: float
    search: NormalLiftSearch | None = None


def classify_extremal(bx: Biextremal, normal_lift_search: NormalLiftSearch | None = None) -> Classification:
    """Normal for negative cost multiplier, abnormal for (numerically) zero.

    Strict abnormality is never asserted; with a failed lift search the
    label reads "normal lift not found (inconclusive)".
    """
    if bx.lambda0 is None:
        raise OcpError("classification needs an extended-mode biextremal")
    lam0 = bx.lambda0
    if lam0 > 1e-12:
        raise InvariantViolationError(f"cost multiplier {lam0} violates lambda0 <= 0")
    if lam0 < -1e-12:
        return Classification("normal", "normal", lam0, normal_lift_search)
    if normal_lift_search is None:
        return Classification("abnormal", "abnormal", lam0, None)
    if normal_lift_search.found is not None:
        return Classification(
            "abnormal",
            "abnormal (a normal lift exists: not strictly abnormal)",
            lam0,
            normal_lift_search,
        )
    return Classification(
        "abnormal",
        "abnormal; normal lift not found (inconclusive)",
        lam0,
        normal_lift_search,
    )


def search_normal_lift(
    ext: ExtendedSystem,
    reference: Trajectory,
    grid_per_axis: int = 10,
    momentum_bound: float = 1.0,
    sample_count: int = 11,
    tol: float = 1e-6,
    step: float = DEFAULT_STEP,
) -> NormalLiftSearch:
    """Grid search for a normal lift satisfying the stationarity constraints.

    Candidate initial momenta run over linspace(-bound, bound, grid_per_axis)
    per state coordinate with the cost multiplier pinned to -1.  Momenta
    evolve linearly, so one integration of the extended adjoint transition
    matrix along the reference covers the whole grid; a candidate passes
    when max_c |dH/du_c| stays within `tol` at the sampled times.
    """
    base = ext.base
    m = base.m
    n = m + 1
    f, jac = ext.state_rhs()
    schedule = reference.schedule
    a, b = reference.interval

    # state = extended coordinates (m+1) followed by Psi (n x n, row major)
    def make_rhs(uvals):
        def rhs(_t, state):
            args = list(state[:n]) + uvals
            dx = [fn(args) for fn in f]
            J = [[jac[i][j](args) for j in range(n)] for i in range(n)]
            dPsi = []
            for r in range(n):
                for c in range(n):
                    acc = 0.0
                    for i in range(n):
                        acc -= J[i][r] * state[n + i * n + c]
                    dPsi.append(acc)
            return dx + dPsi

        return rhs

    x0 = [0.0] + [float(v) for v in reference.xs[0]]
    state = x0 + [1.0 if r == c else 0.0 for r in range(n) for c in range(n)]
    times = np.linspace(a, b, sample_count)
    snapshots = []  # (t, x_ext, Psi)

    t_cursor = a
    snap_idx = 0
    recorded: list[tuple[float, list]] = [(a, list(state))]

    def record(t, s):
        recorded.append((t, list(s)))

    for t0, t1 in schedule.segments((a, b)):
        uvals = [float(u) for u in schedule.value_at(0.5 * (t0 + t1))]
        state = rk4_path(make_rhs(uvals), state, t0, t1 - t0, step, record=record)
    del t_cursor, snap_idx

    rts = np.asarray([t for t, _ in recorded])
    for t in times:
        i = int(np.argmin(np.abs(rts - t)))
        st = recorded[i][1]
        snapshots.append(
            (
                float(rts[i]),
                np.asarray(st[:n]),
                np.asarray(st[n:]).reshape(n, n),
            )
        )

    grads = ext.cost_control_gradient()
    rows = []
    for t, xext, Psi in snapshots:
        u = [float(v) for v in schedule.value_at(t)]
        xbase = list(xext[1:])
        args = xbase + u
        for c in range(base.k):
            a_vec = np.empty(n)
            a_vec[0] = grads[c](args)
            vals = base.inputs[c](xbase)
            a_vec[1:] = np.asarray(vals, dtype=float)
            rows.append(Psi.T @ a_vec)
    if not rows:  # no inputs: the stationarity constraints are vacuous
        axis = np.linspace(-momentum_bound, momentum_bound, grid_per_axis)
        return NormalLiftSearch(
            found=np.concatenate([[-1.0], np.full(m, axis[0])]),
            candidates=grid_per_axis**m,
            tol=tol,
            best_residual=0.0,
            grid_description=(
                f"p0 = -1; p in linspace(-{momentum_bound}, {momentum_bound}, {grid_per_axis})^{m}"
            ),
        )
    W = np.asarray(rows)  # (times*k, n)

    axis = np.linspace(-momentum_bound, momentum_bound, grid_per_axis)
    mesh = np.meshgrid(*([axis] * m), indexing="ij")
    P = np.stack([g.ravel() for g in mesh], axis=0)  # (m, grid^m)
    cand = np.vstack([-np.ones((1, P.shape[1])), P])  # p0 = -1 pinned
    residuals = np.max(np.abs(W @ cand), axis=0)
    best = int(np.argmin(residuals))
    found = cand[:, best].copy() if residuals[best] <= tol else None
    return NormalLiftSearch(
        found=found,
        candidates=cand.shape[1],
        tol=tol,
        best_residual=float(residuals[best]),
        grid_description=(
            f"p0 = -1; p in linspace(-{momentum_bound}, {momentum_bound}, {grid_per_axis})^{m}"
        ),
    )


# ---------------------------------------------------------------------------
# Necessary-condition audit.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditCondition:
    id: str
    description: str
    passed: bool
    detail: dict


@dataclass(frozen=True)
class AuditReport:
    conditions: tuple[AuditCondition, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)


def _decimate(ts: np.ndarray, max_points: int = 201) -> np.ndarray:
    if len(ts) <= max_points:
        return np.arange(len(ts))
    stride = max(1, len(ts) // max_points)
    idx = np.arange(0, len(ts), stride)
    if idx[-1] != len(ts) - 1:
        idx = np.append(idx, len(ts) - 1)
    return idx


def audit_necessary_conditions(
    bx: Biextremal,
    cone,
    sys,
    mode: str = "reduced",
    stationarity_tol: float = 1e-8,
    hamiltonian_grid_check: bool = False,
) -> AuditReport:
    """Per-condition pass/fail for the weak necessary conditions.

    Checks Hamiltonian constancy, pointwise stationarity in the controls,
    the supporting-hyperplane condition against `cone` (skipped when no cone
    is supplied), momentum nonvanishing, and constancy/sign of the cost
    multiplier (extended mode).
    """
    from .cone import is_supporting  # local import keeps the module graph acyclic

    system = _system_for_mode(sys, mode)
    traj = bx.trajectory
    idx = _decimate(bx.momentum_ts)
    ts = bx.momentum_ts[idx]
    xs = traj.xs[idx]
    lams = bx.momenta[idx]

    conditions = []

    H_vals = np.asarray(
        [
            hamiltonian(lams[i], xs[i], traj.control_at(float(ts[i])), sys, mode)
            for i in range(len(ts))
        ]
    )
    tol_H = 1e-8 * (1.0 + abs(float(H_vals[0])))
    drift = float(np.max(np.abs(H_vals - H_vals[0])))
    conditions.append(
        AuditCondition(
            "H-constant",
            "Hamiltonian constant along the biextremal",
            drift <= tol_H,
            {"drift": drift, "tolerance": tol_H, "H_initial": float(H_vals[0])},
        )
    )

    worst_stat = 0.0
    for i in range(len(ts)):
        g = hamiltonian_control_gradient(
            lams[i], xs[i], traj.control_at(float(ts[i])), sys, mode
        )
        worst_stat = max(worst_stat, float(np.max(np.abs(g))) if len(g) else 0.0)
    conditions.append(
        AuditCondition(
            "stationarity",
            "dH/du vanishes at sampled times",
            worst_stat <= stationarity_tol,
            {"max_abs_dHdu": worst_stat, "tolerance": stationarity_tol},
        )
    )

    if cone is not None:
        lam_at_cone = bx.covector_at(cone.time)
        check = is_supporting(lam_at_cone, cone)
        conditions.append(
            AuditCondition(
                "supporting",
                "momentum supports the perturbation cone",
                bool(check.supported),
                {
                    "max_pairing": check.max_pairing,
                    "cone_time": cone.time,
                    "generators": len(cone.generators),
                    "error": check.error,
                },
            )
        )
    else:
        conditions.append(
            AuditCondition(
                "supporting",
                "momentum supports the perturbation cone",
                True,
                {"note": "no cone supplied; condition not exercised"},
            )
        )

    norms = np.linalg.norm(bx.momenta, axis=1)
    min_norm = float(np.min(norms))
    conditions.append(
        AuditCondition(
            "momentum-nonzero",
            "momentum never vanishes",
            min_norm >= 1e-12,
            {"min_norm": min_norm},
        )
    )

    if mode == "extended":
        p0 = bx.momenta[:, 0]
        drift0 = float(np.max(np.abs(p0 - p0[0])))
        ok = drift0 <= 1e-15 and p0[0] <= 1e-12
        conditions.append(
            AuditCondition(
                "lambda0",
                "cost multiplier constant and nonpositive",
                ok,
                {"lambda0": float(p0[0]), "drift": drift0},
            )
        )
    else:
        conditions.append(
            AuditCondition(
                "lambda0",
                "cost multiplier constant and nonpositive",
                True,
                {"note": "reduced mode: multiplier identically zero by convention"},
            )
        )

    if hamiltonian_grid_check and system.k > 0:
        worst = -math.inf
        grid = _box_grid(system.control_box)
        for i in range(0, len(ts), max(1, len(ts) // 20)):
            H_ref = float(H_vals[i])
            for w in grid:
                Hw = hamiltonian(lams[i], xs[i], w, sys, mode)
                worst = max(worst, Hw - H_ref)
        conditions.append(
            AuditCondition(
                "grid-maximum",
                "reference control maximizes H over a control grid",
                worst <= 1e-8,
                {"max_excess": worst},
            )
        )

    return AuditReport(tuple(conditions))


def _box_grid(box, points_per_axis: int = 3):
    axes = []
    for lo, hi in box:
        if math.isfinite(lo) and math.isfinite(hi):
            w = hi - lo
            axes.append([lo + 0.25 * w, lo + 0.5 * w, lo + 0.75 * w][:points_per_axis])
        else:
            axes.append([-1.0, 0.0, 1.0])
    grid = [[]]
    for ax in axes:
        grid = [g + [v] for g in grid for v in ax]
    return [np.asarray(g) for g in grid]
