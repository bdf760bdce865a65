"""Contract checks for the documented error conditions."""

import numpy as np
import pytest

from geocon.cone import Cone, ConeError, GeneratorProvenance, is_supporting
from geocon.expr import DomainEvalError, evaluate, parse_expression
from geocon.fields import (
    Covector,
    FieldError,
    FlowSpec,
    TangentVector,
    as_point,
    composite_flow,
    vector_field,
)
from geocon.ocp import OcpError, hamiltonian, hamilton_rhs, build_control_affine
from geocon.variations import VariationError, end_time_variation, estimate_jets, variation_curve


def test_sqrt_of_negative_reports_domain_error():
    with pytest.raises(DomainEvalError):
        evaluate(parse_expression("sqrt(x)"), {"x": -4.0})


def test_zero_to_negative_power_reports_domain_error():
    with pytest.raises(DomainEvalError):
        evaluate(parse_expression("x^-2"), {"x": 0.0})


def test_flowspec_rejects_nonpositive_step():
    vf = vector_field(("x",), ["1"])
    with pytest.raises(FieldError):
        FlowSpec(vf, 1.0, 0.0)
    with pytest.raises(FieldError):
        FlowSpec(vf, 1.0, -1e-3)


def test_composite_flow_length_mismatch():
    vf = vector_field(("x",), ["1"])
    with pytest.raises(FieldError):
        composite_flow([vf, vf], [1.0], as_point([0.0]))


def test_variation_curve_rejects_negative_parameter():
    vf = vector_field(("x",), ["1"])
    tau2 = end_time_variation("0", "0", ["s"])
    with pytest.raises(VariationError):
        variation_curve(vf, [vf], tau2, as_point([0.0]), -0.1)


def test_variation_curve_sequence_length_mismatch():
    vf = vector_field(("x",), ["1"])
    tau2 = end_time_variation("0", "0", ["s", "s"])
    with pytest.raises(VariationError):
        variation_curve(vf, [vf], tau2, as_point([0.0]), 0.1)


def test_estimate_jets_order_cap():
    with pytest.raises(VariationError):
        estimate_jets(lambda s: np.array([s]), 5)


def test_needle_rejects_out_of_box_controls(martinet):
    from geocon.variations import needle_variation

    with pytest.raises(VariationError):
        needle_variation(martinet, (0.0, 1.0), (5.0, 0.0), 1.0, as_point([0.0, 0.0, 0.0]))


def test_is_supporting_dimension_mismatch():
    base3 = as_point([0.0, 0.0, 0.0])
    cone = Cone(
        base3,
        1.0,
        (TangentVector(base3, np.array([1.0, 0.0, 0.0])),),
        (GeneratorProvenance(1.0, 1, "t"),),
    )
    lam2 = Covector(as_point([0.0, 0.0]), np.array([1.0, 0.0]))
    with pytest.raises(ConeError):
        is_supporting(lam2, cone)


def test_cone_rejects_mismatched_generator_base():
    base = as_point([0.0, 0.0])
    other = as_point([1.0, 0.0])
    with pytest.raises(ConeError):
        Cone(
            base,
            1.0,
            (TangentVector(other, np.array([1.0, 0.0])),),
            (GeneratorProvenance(1.0, 1, "t"),),
        )


def test_hamiltonian_dimension_mismatch(martinet):
    with pytest.raises(OcpError):
        hamiltonian([0.0, 0.0], [0.0, 0.0, 0.0], (0.0, 1.0), martinet)
    with pytest.raises(OcpError):
        hamilton_rhs([0.0, 0.0], [0.0, 0.0, 0.0], (0.0, 1.0), martinet)


def test_mode_validation(martinet):
    with pytest.raises(OcpError):
        hamiltonian([0.0, 0.0, 0.0], [0.0, 0.0, 0.0], (0.0, 1.0), martinet, "weird")
    with pytest.raises(OcpError):
        # extended mode needs a cost attached
        hamiltonian([0.0] * 4, [0.0] * 4, (0.0, 1.0), martinet, "extended")


def test_control_name_collision_rejected():
    with pytest.raises(OcpError):
        build_control_affine(("x", "u1"), ["0", "0"], [["1", "0"]], [(-1, 1)])


def test_cli_bad_covector(tmp_path, capsys):
    from geocon.cli import main
    from pathlib import Path

    scenario = Path(__file__).resolve().parents[1] / "scenarios" / "martinet.json"
    assert main(["audit", str(scenario), "--covector", "0,zz,1"]) == 1
    assert "bad covector" in capsys.readouterr().err
