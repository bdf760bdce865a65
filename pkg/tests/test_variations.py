import numpy as np
import pytest

from geocon.fields import as_point, eval_vector_field, lie_bracket, vector_field
from geocon.ocp import build_control_affine
from geocon.variations import (
    KAPPA,
    ConventionError,
    VariationError,
    bracket_variation,
    commutator_schedule,
    end_time_variation,
    estimate_jets,
    needle_variation,
    order_and_vector,
    residual_slope,
    resolve_bracket_ratio,
    sample_perturbation_set,
    variation_curve,
)

XYZ = ("x1", "x2", "x3")
HEIS_X1 = vector_field(XYZ, ["1", "0", "-x2/2"])
HEIS_X2 = vector_field(XYZ, ["0", "1", "x1/2"])


def test_schedule_must_vanish_at_zero():
    with pytest.raises(VariationError):
        end_time_variation("s + 1", "0", ["s"])
    with pytest.raises(VariationError):
        end_time_variation("0", "0", ["s - 0.2"])


def test_variation_curve_at_zero_is_identity():
    tau2 = end_time_variation("-s", "0", ["s"])
    x = as_point([0.3, -0.1, 0.7])
    out = variation_curve(HEIS_X1, [HEIS_X2], tau2, x, 0.0)
    assert np.allclose(out.coords, x.coords, atol=0.0)


def test_needle_with_reference_control_cancels_exactly():
    # xi1 equals xi0, so the back-flow undoes the needle at every s
    sys = build_control_affine(("x",), ["0"], [["1"]], [(-2.0, 2.0)])
    xi0 = sys.slice_field((1.0,))
    tau2 = end_time_variation("-s", "0", ["s"])
    out = variation_curve(xi0, [xi0], tau2, as_point([0.4]), 0.1)
    assert abs(out.coords[0] - 0.4) <= 1e-12


def test_heisenberg_commutator_curve_displacement():
    x = as_point([0.0, 0.0, 0.0])
    tau2 = commutator_schedule()
    from geocon.fields import negate_field

    seq = [negate_field(HEIS_X2), HEIS_X1, HEIS_X2]
    out = variation_curve(HEIS_X1, seq, tau2, x, 0.1)
    assert abs(out.coords[2] - 0.01) <= 1e-6
    assert abs(out.coords[0]) <= 1e-6
    assert abs(out.coords[1]) <= 1e-6


def test_estimate_jets_polynomial_curves():
    jets = estimate_jets(lambda s: np.array([s * s / 2.0, 0.0 * s]), 2)
    assert np.allclose(jets[0], [0.0, 0.0], atol=1e-9)
    assert np.allclose(jets[1], [1.0, 0.0], atol=1e-7)

    jets = estimate_jets(lambda s: np.array([1.0 * s, s * s * s]), 1)
    assert np.allclose(jets[0], [1.0, 0.0], atol=1e-9)


def test_estimate_jets_heisenberg_commutator():
    x = as_point([0.0, 0.0, 0.0])
    tau2 = commutator_schedule()
    from geocon.fields import negate_field

    seq = [negate_field(HEIS_X2), HEIS_X1, HEIS_X2]

    def curve(s):
        return variation_curve(HEIS_X1, seq, tau2, x, s, step=1e-2)

    jets = estimate_jets(curve, 2)
    assert np.linalg.norm(jets[0]) <= 1e-6
    assert np.allclose(jets[1], [0.0, 0.0, 2.0], atol=1e-4)


def test_order_and_vector_needle():
    sys = build_control_affine(("x",), ["0"], [["1"]], [(-3.0, 3.0)])
    xi0 = sys.slice_field((0.0,))
    xi1 = sys.slice_field((1.0,))
    tau2 = end_time_variation("-2*s", "0", ["2*s"])
    pv = order_and_vector(xi0, [xi1], tau2, as_point([0.0]))
    assert pv.order == 1
    assert np.allclose(pv.vector.components, [2.0], atol=1e-9)


def test_order_and_vector_flat_curve_reports_infinity():
    sys = build_control_affine(("x",), ["0"], [["1"]], [(-3.0, 3.0)])
    xi1 = sys.slice_field((1.0,))
    tau2 = end_time_variation("0", "0", ["s^5"])
    pv = order_and_vector(sys.slice_field((0.0,)), [xi1], tau2, as_point([0.0]))
    assert pv is None


def test_order_and_vector_commutator():
    tau2 = commutator_schedule()
    from geocon.fields import negate_field

    seq = [negate_field(HEIS_X2), HEIS_X1, HEIS_X2]
    pv = order_and_vector(HEIS_X1, seq, tau2, as_point([0.0, 0.0, 0.0]), l_max=2)
    assert pv.order == 2
    direction = pv.vector.components / np.linalg.norm(pv.vector.components)
    assert np.allclose(direction, [0.0, 0.0, 1.0], atol=1e-9)


def test_needle_variation_martinet(martinet):
    pv = needle_variation(martinet, (0.0, 1.0), (1.0, 1.0), 1.0, as_point([0.0, 0.0, 0.0]))
    assert pv.order == 1
    assert np.allclose(pv.vector.components, [1.0, 0.0, 0.0], atol=1e-9)


def test_needle_variation_degenerate(martinet):
    pv = needle_variation(martinet, (0.0, 1.0), (0.0, 1.0), 1.0, as_point([0.0, 0.0, 0.0]))
    assert pv is None


def test_needle_variation_scales_with_l1(martinet):
    x = as_point([0.0, 0.0, 0.0])
    pv1 = needle_variation(martinet, (0.0, 1.0), (1.0, 1.0), 1.0, x)
    pv3 = needle_variation(martinet, (0.0, 1.0), (1.0, 1.0), 3.0, x)
    assert np.allclose(pv3.vector.components, 3.0 * pv1.vector.components, atol=0.0)


def test_bracket_variation_commuting_fields_degenerate():
    dx = vector_field(("x", "y"), ["1", "0"])
    dy = vector_field(("x", "y"), ["0", "1"])
    assert bracket_variation(dx, dy, as_point([0.0, 0.0])) is None


def test_bracket_variation_heisenberg():
    pv = bracket_variation(HEIS_X1, HEIS_X2, as_point([0.0, 0.0, 0.0]))
    assert pv.order == 2
    assert np.allclose(pv.vector.components, [0.0, 0.0, KAPPA], atol=1e-6)


def test_bracket_variation_flat_connection_pair():
    Z = vector_field(("x", "v"), ["v", "0"])
    YV = vector_field(("x", "v"), ["0", "1"])
    pv = bracket_variation(Z, YV, as_point([0.2, -0.4]))
    assert np.allclose(pv.vector.components, [-KAPPA, 0.0], atol=1e-6)


def test_bracket_ratio_constant_across_pairs():
    rng = np.random.default_rng(3)
    from tests.conftest import random_polynomial_field

    ratios = []
    for _ in range(3):
        a = random_polynomial_field(rng, XYZ)
        b = random_polynomial_field(rng, XYZ)
        x = as_point(rng.uniform(-0.3, 0.3, size=3))
        br = eval_vector_field(lie_bracket(a, b), x).components
        if np.linalg.norm(br) < 1e-4:
            continue
        pv = bracket_variation(a, b, x)
        ratios.append(resolve_bracket_ratio(pv.vector.components, br))
    assert ratios, "no informative pairs drawn"
    for r in ratios:
        assert abs(r - KAPPA) <= 1e-6 * KAPPA


def test_sample_perturbation_set_martinet_origin(martinet, martinet_reference):
    pvs = sample_perturbation_set(
        martinet,
        martinet_reference,
        0.5,
        control_grid=[(a, b) for a in (-1.0, 0.0, 1.0) for b in (-1.0, 0.0, 1.0)],
    )
    # the degenerate brackets (2 x1 dz vanishes on the reference line) are omitted
    assert all(pv.order == 1 for pv in pvs)
    dirs = {tuple(np.sign(pv.vector.components).astype(int)) for pv in pvs}
    assert (1, 0, 0) in dirs and (-1, 0, 0) in dirs


def test_sample_perturbation_set_driftless_single_input_no_order2():
    sys = build_control_affine(("x", "y"), ["0", "0"], [["1", "x"]], [(-2.0, 2.0)])
    from geocon.ocp import integrate_trajectory, piecewise_schedule

    ref = integrate_trajectory(
        sys, [0.0, 0.0], piecewise_schedule([0.0], [[1.0]]), (0.0, 1.0), 1e-2
    )
    pvs = sample_perturbation_set(sys, ref, 0.5)
    assert all(pv.order == 1 for pv in pvs)


def test_sample_perturbation_set_budget(martinet, martinet_reference):
    pvs = sample_perturbation_set(martinet, martinet_reference, 0.5, budget=1)
    assert len(pvs) == 1


def test_residual_slopes_match_orders(martinet, martinet_reference):
    pvs = sample_perturbation_set(martinet, martinet_reference, 0.5, budget=6)
    assert pvs
    for pv in pvs:
        assert residual_slope(pv) >= pv.order + 0.5
    pv2 = bracket_variation(HEIS_X1, HEIS_X2, as_point([0.0, 0.0, 0.0]))
    assert residual_slope(pv2) >= 2.5


def test_convention_error_reports_both_sides(monkeypatch):
    import geocon.variations as V

    monkeypatch.setattr(V, "KAPPA", 3.0)  # wrong constant must be caught
    with pytest.raises(ConventionError):
        V.bracket_variation(HEIS_X1, HEIS_X2, as_point([0.0, 0.0, 0.0]))


def test_extended_system_sampling_carries_cost_components(martinet_extended):
    # extended needles use the general slice-difference form on the
    # cost-augmented chart; their first component is the cost difference
    from geocon.ocp import integrate_trajectory, piecewise_schedule

    sched = piecewise_schedule([0.0], [[0.0, 1.0]])
    ref = integrate_trajectory(
        martinet_extended, [0.0, 0.0, 0.0, 0.0], sched, (0.0, 1.0), 1e-2
    )
    pvs = sample_perturbation_set(martinet_extended, ref, 0.5, budget=12)
    assert pvs
    order1 = [pv for pv in pvs if pv.order == 1]
    assert order1
    # cost 0.5|u|^2 with u_ref = (0, 1): u1 = (0, 1.5) gives dF = 0.625
    found = False
    for pv in order1:
        v = pv.vector.components
        if np.allclose(v[1:], [0.0, 0.5, 0.0], atol=1e-9):
            assert abs(v[0] - (0.5 * 1.5**2 - 0.5)) <= 1e-9
            found = True
    assert found


def test_sampled_set_closed_under_cone_operations(martinet, martinet_reference):
    # positive scalings and sums of sampled vectors stay in the sampled cone
    from geocon.cone import GeneratorProvenance, Cone, cone_contains
    from geocon.fields import TangentVector

    pvs = sample_perturbation_set(martinet, martinet_reference, 0.5, budget=12)
    base = pvs[0].base
    cone = Cone(
        base,
        0.5,
        tuple(TangentVector(base, pv.vector.components) for pv in pvs),
        tuple(GeneratorProvenance(0.5, pv.order, pv.recipe[0]) for pv in pvs),
    )
    v, w = pvs[0].vector.components, pvs[-1].vector.components
    assert cone_contains(cone, 2.5 * v)
    assert cone_contains(cone, 0.1 * w)
    assert cone_contains(cone, v + w)
    # the sampled cone lies in the degenerate plane: dz escapes it
    assert not cone_contains(cone, np.array([0.0, 0.0, 1.0]))
