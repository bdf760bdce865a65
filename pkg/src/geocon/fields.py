"""Vector fields on a single global chart, Lie brackets and numerical flows.

Everything lives on one chart of R^m per scenario, so tangent vectors and
covectors are plain coordinate arrays and the pairing is the dot product.
Fields are expression-backed, which keeps brackets exact (symbolic) while
flows are classical fixed-step RK4.  The integrator core works on lists of
generic scalars, so flow durations and states may carry Dual parts; that is
how jets of flow compositions are computed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .expr import (
    Expr,
    add,
    compile_expression,
    const,
    differentiate,
    expr_sum,
    is_zero,
    mul,
    neg,
    parse_expression,
    real_part,
    render,
    sub,
)

MAX_FLOW_STEPS = 10_000_000
DEFAULT_STEP = 1e-3


class FieldError(Exception):
    pass


class DivergenceError(FieldError):
    """The integrated state left the finite range."""

    def __init__(self, time: float):
        super().__init__(f"flow diverged (non-finite state) near t = {time:.6g}")
        self.time = time


def _as_scalar_list(values) -> list:
    out = []
    for v in values:
        out.append(v if not isinstance(v, (int, float, np.floating, np.integer)) else float(v))
    return out


def _finite(values) -> bool:
    for v in values:
        r = real_part(v)
        if r != r or r in (float("inf"), float("-inf")):
            return False
    return True


@dataclass(frozen=True, eq=False)
class Point:
    coords: np.ndarray

    def __post_init__(self):
        arr = self.coords
        if not isinstance(arr, np.ndarray):
            try:
                arr = np.asarray(arr, dtype=float)
            except (TypeError, ValueError):
                arr = np.asarray(arr, dtype=object)
            object.__setattr__(self, "coords", arr)
        elif arr.dtype != object and arr.dtype != np.float64:
            object.__setattr__(self, "coords", arr.astype(float))
        if not _finite(self.coords):
            raise FieldError(f"point has non-finite coordinates: {self.coords!r}")

    @property
    def dim(self) -> int:
        return len(self.coords)

    def __repr__(self):
        return f"Point({np.array2string(self.coords, separator=', ')})"


def as_point(x) -> Point:
    return x if isinstance(x, Point) else Point(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: Point
    components: np.ndarray

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=float)
        object.__setattr__(self, "components", comp)
        if comp.shape != (self.base.dim,):
            raise FieldError(
                f"component dimension {comp.shape} does not match base dimension {self.base.dim}"
            )

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components))


@dataclass(frozen=True, eq=False)
class Covector:
    base: Point
    components: np.ndarray

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=float)
        object.__setattr__(self, "components", comp)
        if comp.shape != (self.base.dim,):
            raise FieldError(
                f"component dimension {comp.shape} does not match base dimension {self.base.dim}"
            )

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.components))


def pair(lam: Covector, v: TangentVector | np.ndarray) -> float:
    """Coordinate pairing <lambda, v>."""
    comp = v.components if isinstance(v, TangentVector) else np.asarray(v, dtype=float)
    return float(np.dot(lam.components, comp))


@dataclass(frozen=True, eq=True)
class VectorField:
    variables: tuple[str, ...]
    components: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.variables) != len(self.components):
            raise FieldError(
                f"{len(self.components)} components on a {len(self.variables)}-variable chart"
            )

    @property
    def dim(self) -> int:
        return len(self.components)

    def compiled(self) -> tuple[Callable, ...]:
        cached = self.__dict__.get("_compiled")
        if cached is None:
            cached = tuple(compile_expression(c, self.variables) for c in self.components)
            object.__setattr__(self, "_compiled", cached)
        return cached

    def jacobian(self) -> tuple[tuple[Expr, ...], ...]:
        """Symbolic Jacobian rows d(component_i)/d(variable_j)."""
        cached = self.__dict__.get("_jacobian")
        if cached is None:
            cached = tuple(
                tuple(differentiate(c, v) for v in self.variables) for c in self.components
            )
            object.__setattr__(self, "_jacobian", cached)
        return cached

    def compiled_jacobian(self):
        cached = self.__dict__.get("_compiled_jac")
        if cached is None:
            cached = tuple(
                tuple(compile_expression(e, self.variables) for e in row)
                for row in self.jacobian()
            )
            object.__setattr__(self, "_compiled_jac", cached)
        return cached

    def __call__(self, values: Sequence) -> list:
        return [fn(values) for fn in self.compiled()]

    def __repr__(self):
        comps = ", ".join(render(c) for c in self.components)
        return f"VectorField[{', '.join(self.variables)}]({comps})"


def vector_field(variables: Sequence[str], components: Sequence) -> VectorField:
    """Build a field from strings or expression trees over `variables`."""
    vs = tuple(variables)
    comps = tuple(
        parse_expression(c, vs) if isinstance(c, str) else c for c in components
    )
    return VectorField(vs, comps)


def is_zero_field(vf: VectorField) -> bool:
    return all(is_zero(c) for c in vf.components)


def negate_field(vf: VectorField) -> VectorField:
    return VectorField(vf.variables, tuple(neg(c) for c in vf.components))


def scale_field(vf: VectorField, factor: float) -> VectorField:
    f = const(factor)
    return VectorField(vf.variables, tuple(mul(f, c) for c in vf.components))


def combine_fields(base: VectorField, addends: Sequence[VectorField], coefficients) -> VectorField:
    """base + sum_c coefficients[c] * addends[c], folded symbolically."""
    comps = []
    for i in range(base.dim):
        terms = [base.components[i]]
        for coeff, vf in zip(coefficients, addends):
            if vf.variables != base.variables:
                raise FieldError("cannot combine fields on different charts")
            terms.append(mul(const(float(coeff)), vf.components[i]))
        comps.append(expr_sum(terms))
    return VectorField(base.variables, tuple(comps))


def eval_vector_field(vf: VectorField, x: Point) -> TangentVector:
    if x.dim != vf.dim:
        raise FieldError(f"point dimension {x.dim} does not match field dimension {vf.dim}")
    values = vf(_as_scalar_list(x.coords))
    return TangentVector(x, np.asarray(values, dtype=float))


def lie_bracket(a: VectorField, b: VectorField) -> VectorField:
    """[a, b]^i = sum_j (a^j db^i/dx^j - b^j da^i/dx^j), built symbolically.

    The two product groups are assembled in the same node order for (a, b)
    and (b, a), which makes antisymmetry exact in floating point as well.
    """
    if a.variables != b.variables:
        raise FieldError("bracket of fields on different charts")
    da = a.jacobian()
    db = b.jacobian()
    comps = []
    for i in range(a.dim):
        acc: Expr = const(0.0)
        for j in range(a.dim):
            t_ab = mul(a.components[j], db[i][j])
            t_ba = mul(b.components[j], da[i][j])
            acc = add(acc, sub(t_ab, t_ba))
        comps.append(acc)
    return VectorField(a.variables, tuple(comps))


# ---------------------------------------------------------------------------
# Flows: classical RK4 with a fixed step and one trailing partial step that
# lands exactly on the requested duration.  Durations may carry Dual parts;
# step counts come from the real part only.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlowSpec:
    field: VectorField
    duration: float
    step: float = DEFAULT_STEP

    def __post_init__(self):
        if self.step <= 0.0:
            raise FieldError(f"step must be positive, got {self.step}")
        if abs(real_part(self.duration)) / self.step > MAX_FLOW_STEPS:
            raise FieldError(
                f"|duration|/step = {abs(real_part(self.duration)) / self.step:.3g} "
                f"exceeds the {MAX_FLOW_STEPS:.0e} step guard"
            )


def _rk4_step(rhs, t, x: list, h):
    k1 = rhs(t, x)
    half = 0.5 * h
    x2 = [xi + half * ki for xi, ki in zip(x, k1)]
    k2 = rhs(t + half, x2)
    x3 = [xi + half * ki for xi, ki in zip(x, k2)]
    k3 = rhs(t + half, x3)
    x4 = [xi + h * ki for xi, ki in zip(x, k3)]
    k4 = rhs(t + h, x4)
    sixth = h * (1.0 / 6.0)
    return [
        xi + sixth * (a + 2.0 * b + 2.0 * c + d)
        for xi, a, b, c, d in zip(x, k1, k2, k3, k4)
    ]


def rk4_path(rhs, x0: list, t0: float, duration, step: float, record=None) -> list:
    """Integrate dx/dt = rhs(t, x) over `duration` starting at (t0, x0).

    `record(t, x)` is called after every accepted step when provided.
    `duration` may be any generic scalar; the trailing partial step keeps
    the landing exact.
    """
    total = real_part(duration)
    if abs(total) / step > MAX_FLOW_STEPS:
        raise FieldError(
            f"|duration|/step = {abs(total) / step:.3g} exceeds the step guard"
        )
    n_full = int(abs(total) / step)
    h = step if total >= 0.0 else -step
    x = list(x0)
    t = t0
    for i in range(n_full):
        x = _rk4_step(rhs, t, x, h)
        t = t0 + (i + 1) * h
        if not _finite(x):
            raise DivergenceError(t)
        if record is not None:
            record(t, x)
    rem = duration - n_full * h
    x = _rk4_step(rhs, t, x, rem)
    t_end = t0 + real_part(duration)
    if not _finite(x):
        raise DivergenceError(t_end)
    if record is not None:
        record(t_end, x)
    return x


def integrate_flow(spec: FlowSpec, x0: Point) -> Point:
    """Endpoint of the flow of `spec.field` after `spec.duration`."""
    fns = spec.field.compiled()

    def rhs(_t, x):
        return [fn(x) for fn in fns]

    out = rk4_path(rhs, _as_scalar_list(x0.coords), 0.0, spec.duration, spec.step)
    return Point(np.asarray(out, dtype=object) if any(not isinstance(v, float) for v in out) else np.asarray(out, dtype=float))


def composite_flow(
    seq: Sequence[VectorField], times: Sequence, x0: Point, step: float = DEFAULT_STEP
) -> Point:
    """Apply the flows of `seq` in order: the first field acts first."""
    if len(seq) != len(times):
        raise FieldError(f"{len(seq)} fields but {len(times)} durations")
    x = x0
    for vf, t in zip(seq, times):
        x = integrate_flow(FlowSpec(vf, t, step), x)
    return x


def pushforward_along_flow(
    xi0: VectorField, dt, v: TangentVector, step: float = DEFAULT_STEP
) -> TangentVector:
    """Transport `v` by the linearization of the flow of `xi0` over `dt`.

    Solves the variational equation d(delta)/dt = D(xi0)(x(t)) delta along
    the base flow and returns delta(dt) based at the transported point.
    """
    m = xi0.dim
    if v.base.dim != m:
        raise FieldError("vector dimension does not match the flow field")
    fns = xi0.compiled()
    jac = xi0.compiled_jacobian()

    def rhs(_t, state):
        x = state[:m]
        delta = state[m:]
        dx = [fn(x) for fn in fns]
        ddelta = []
        for row in jac:
            acc = 0.0
            for j in range(m):
                acc = acc + row[j](x) * delta[j]
            ddelta.append(acc)
        return dx + ddelta

    state0 = _as_scalar_list(v.base.coords) + _as_scalar_list(v.components)
    out = rk4_path(rhs, state0, 0.0, dt, step)
    new_base = Point(np.asarray(out[:m], dtype=float))
    return TangentVector(new_base, np.asarray(out[m:], dtype=float))
