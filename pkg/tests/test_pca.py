import numpy as np
import pytest

from geocon.fields import as_point, lie_bracket
from geocon.ocp import (
    build_control_affine,
    integrate_biextremal,
    integrate_trajectory,
    piecewise_schedule,
)
from geocon.pca import (
    PcaError,
    abnormal_verdict,
    annihilator_at,
    ladder_pairings,
    ladder_step,
    primary_constraints,
    run_algorithm,
)


def test_primary_constraints_martinet(martinet):
    ladder = primary_constraints(martinet)
    gens = ladder.levels[0].generators
    assert [g.name for g in gens] == ["X1", "X2"]
    assert gens[1].rendered() == ["0", "1", "x1^2"]


def test_primary_constraints_extended_records_cost_terms(martinet_extended):
    ladder = primary_constraints(martinet_extended, mode="extended")
    assert ladder.cost_terms is not None
    from geocon.expr import evaluate

    env = {"u1": 0.3, "u2": -0.7, "x1": 0.0, "x2": 0.0, "x3": 0.0}
    assert evaluate(ladder.cost_terms[0], env) == pytest.approx(0.3)
    assert evaluate(ladder.cost_terms[1], env) == pytest.approx(-0.7)


def test_primary_constraints_no_inputs():
    sys = build_control_affine(("x",), ["x"], [], [])
    ladder = primary_constraints(sys)
    assert ladder.stabilized_at == 0
    assert ladder.levels[0].generators == []


def test_ladder_step_martinet_off_line(martinet):
    # away from the x1 = 0 plane the bracket direction is adopted
    sched = piecewise_schedule([0.0], [[0.0, 1.0]])
    ref = integrate_trajectory(martinet, [0.5, 0.0, 0.0], sched, (0.0, 1.0), 1e-2)
    ladder = primary_constraints(martinet)
    import geocon.pca as pca

    pca._attach_samples(ladder, ref, None)
    ladder_step(ladder, martinet, ref)
    level1 = ladder.levels[1]
    names = [g.name for g in level1.generators]
    assert names == ["[X1,X2]"]
    assert level1.branch_flag  # control coefficients were nonzero
    assert level1.generators[0].rendered() == ["0", "0", "2*x1"]


def test_ladder_step_heisenberg(heisenberg, heisenberg_reference):
    ladder = primary_constraints(heisenberg)
    import geocon.pca as pca

    pca._attach_samples(ladder, heisenberg_reference, None)
    ladder_step(ladder, heisenberg, heisenberg_reference)
    gens = ladder.levels[1].generators
    assert [g.name for g in gens] == ["[X1,X2]"]
    assert gens[0].rendered() == ["0", "0", "1"]


def test_run_algorithm_heisenberg_full_span(heisenberg, heisenberg_reference):
    ladder = run_algorithm(heisenberg, heisenberg_reference)
    assert ladder.stabilized_at == 1
    assert all(d == 3 for d in ladder.levels[-1].span_dims.values())
    for t in ladder.sample_times:
        x = heisenberg_reference.point_at(t)
        assert annihilator_at(x, ladder) == []
    assert "no abnormal biextremal" in abnormal_verdict(ladder)


def test_run_algorithm_martinet_line(martinet, martinet_reference):
    ladder = run_algorithm(martinet, martinet_reference)
    assert ladder.stabilized_at == 1
    assert ladder.levels[1].generators == []  # bracket vanishes on the line
    for t in ladder.sample_times:
        assert ladder.levels[-1].span_dims[t] == 2
        basis = annihilator_at(martinet_reference.point_at(t), ladder)
        assert len(basis) == 1
        assert np.allclose(basis[0].components, [0.0, 0.0, 1.0], atol=1e-12)
    assert "abnormal candidates exist" in abnormal_verdict(ladder)


def test_run_algorithm_flat_connection_chain():
    # two-level chain: vertical lift, then its drift bracket, then nothing
    chart = ("x1", "x2", "v1", "v2")
    sys = build_control_affine(
        chart,
        ["v1", "v2", "0", "0"],
        [["0", "0", "1", "0"]],
        [(-1.0, 1.0)],
    )
    sched = piecewise_schedule([0.0], [[0.0]])
    ref = integrate_trajectory(sys, [0.0, 0.0, 1.0, 0.0], sched, (0.0, 1.0), 1e-2)
    ladder = run_algorithm(sys, ref)
    assert ladder.stabilized_at == 2
    names = [g.name for g in ladder.all_generators()]
    assert names == ["X1", "[X0,X1]"]
    assert ladder.all_generators()[1].rendered() == ["-1", "0", "0", "0"]
    basis = annihilator_at(ref.point_at(0.5), ladder)
    assert len(basis) == 2
    span = np.stack([b.components for b in basis])
    # annihilator of span{e3, e1} is span{e2, e4}
    assert np.allclose(span @ np.array([1.0, 0.0, 0.0, 0.0]), 0.0, atol=1e-12)
    assert np.allclose(span @ np.array([0.0, 0.0, 1.0, 0.0]), 0.0, atol=1e-12)


def test_annihilator_with_empty_ladder():
    sys = build_control_affine(("x", "y"), ["x", "y"], [], [])
    ladder = primary_constraints(sys)
    basis = annihilator_at(as_point([0.0, 0.0]), ladder)
    assert len(basis) == 2
    assert np.allclose(np.stack([b.components for b in basis]), np.eye(2))


def test_nested_spans_nondecreasing(heisenberg, heisenberg_reference):
    ladder = run_algorithm(heisenberg, heisenberg_reference)
    for t in ladder.sample_times:
        dims = [lvl.span_dims[t] for lvl in ladder.levels]
        assert dims == sorted(dims)


def test_level1_generators_parallel_to_bracket_variations(martinet):
    # the adopted level-1 field agrees in direction with the commutator jet
    from geocon.variations import bracket_variation

    sched = piecewise_schedule([0.0], [[0.0, 1.0]])
    ref = integrate_trajectory(martinet, [0.5, 0.0, 0.0], sched, (0.0, 1.0), 1e-2)
    ladder = run_algorithm(martinet, ref)
    gen = next(g for g in ladder.all_generators() if g.level == 1)
    x = ref.point_at(0.5)
    xi0 = martinet.slice_field(ref.control_at(0.5))
    pv = bracket_variation(xi0, martinet.inputs[0], x)
    gen_val = np.asarray(gen.field(list(x.coords)), dtype=float)
    jet = pv.vector.components
    cos = abs(np.dot(gen_val, jet)) / (np.linalg.norm(gen_val) * np.linalg.norm(jet))
    assert cos >= 1.0 - 1e-6


def test_level0_generators_are_needle_directions(martinet, martinet_reference):
    # every input field shows up among the sampled order-1 needle vectors
    from geocon.variations import sample_perturbation_set

    ladder = primary_constraints(martinet)
    t0 = 0.5
    x = martinet_reference.point_at(t0)
    needles = [
        pv.vector.components
        for pv in sample_perturbation_set(martinet, martinet_reference, t0, budget=12)
        if pv.order == 1
    ]
    for g in ladder.levels[0].generators:
        val = np.asarray(g.field(list(x.coords)), dtype=float)
        cosines = [
            abs(np.dot(val, n)) / (np.linalg.norm(val) * np.linalg.norm(n))
            for n in needles
        ]
        assert max(cosines) >= 1.0 - 1e-9


def test_transported_annihilator_keeps_pairings_small(martinet, martinet_reference):
    ladder = run_algorithm(martinet, martinet_reference)
    sched = piecewise_schedule([0.0], [[0.0, 1.0]])
    bx = integrate_biextremal(
        martinet, [0.0, 0.0, 0.0], [0.0, 0.0, 1.0], sched, (0.0, 1.0), "reduced"
    )
    pairings = ladder_pairings(ladder, bx)
    assert pairings
    assert max(pairings.values()) <= 1e-7


def test_derivative_identity_along_reference():
    # d/dt <lambda, Z(gamma)> equals <lambda, [xi_u, Z](gamma)> for adjoint momenta
    rng = np.random.default_rng(12)
    from tests.conftest import random_control_affine, random_polynomial_field

    for _ in range(5):
        sys = random_control_affine(rng, m=3, k=1)
        u = (float(rng.uniform(-0.5, 0.5)),)
        sched = piecewise_schedule([0.0], [list(u)])
        x0 = rng.uniform(-0.2, 0.2, size=3)
        lam0 = rng.uniform(-1.0, 1.0, size=3)
        bx = integrate_biextremal(sys, x0, lam0, sched, (0.0, 0.5), "reduced", 1e-3)
        Z = random_polynomial_field(rng, sys.variables)
        xi_u = sys.slice_field(u)
        br = lie_bracket(xi_u, Z)
        ts = bx.momentum_ts
        g = np.array(
            [
                float(
                    np.dot(
                        bx.momenta[i],
                        np.asarray(Z(list(bx.trajectory.xs[i])), dtype=float),
                    )
                )
                for i in range(len(ts))
            ]
        )
        h = ts[1] - ts[0]
        for i in range(2, len(ts) - 2, 97):
            dg = (-g[i + 2] + 8 * g[i + 1] - 8 * g[i - 1] + g[i - 2]) / (12 * h)
            lhs = float(
                np.dot(
                    bx.momenta[i],
                    np.asarray(br(list(bx.trajectory.xs[i])), dtype=float),
                )
            )
            assert abs(dg - lhs) <= 1e-6 * max(1.0, abs(lhs))


def test_polar_connection_ladder_chain():
    # rational Christoffel coefficients: the bracket chain stays tractable
    # and stabilizes with a one-dimensional annihilator along the geodesic
    from geocon.mech import build_acc_system, connection_spec
    from geocon.fields import vector_field

    polar = connection_spec(
        ("r", "th"),
        ("vr", "vth"),
        [
            [["0", "0"], ["0", "-r"]],
            [["0", "1/r"], ["1/r", "0"]],
        ],
    )
    sys_ = build_acc_system(polar, [vector_field(("r", "th"), ["1", "0"])], [(-2.0, 2.0)])
    sched = piecewise_schedule([0.0], [[0.2]])
    ref = integrate_trajectory(sys_, [1.0, 0.0, 0.3, 0.5], sched, (0.0, 1.0), 1e-2)
    ladder = run_algorithm(sys_, ref)
    assert ladder.stabilized_at == 3
    names = [g.name for g in ladder.all_generators()]
    assert names == ["X1", "[X0,X1]", "[X0,[X0,X1]]"]
    for t in ladder.sample_times:
        basis = annihilator_at(ref.point_at(t), ladder)
        assert len(basis) == 1


def test_sample_on_switch_rejected(martinet):
    sched = piecewise_schedule([0.0, 0.5], [[0.0, 1.0], [1.0, 0.0]])
    ref = integrate_trajectory(martinet, [0.0, 0.0, 0.0], sched, (0.0, 1.0), 1e-2)
    with pytest.raises(PcaError):
        run_algorithm(martinet, ref, sample_times=[0.5])
