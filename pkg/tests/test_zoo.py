"""Each documented zoo fact is re-derived by the module that owns it."""

import math

import numpy as np
import pytest

from conewatch import get_model
from conewatch.cooperativity import grid_points, minimal_constant_lambda, smith_lmi_check
from conewatch.dynamics import find_equilibria, integrate
from conewatch.errors import UnknownModel, ValidationError
from conewatch.zoo import MODEL_NAMES, lambda_function


def test_registry_names():
    assert set(MODEL_NAMES) == {"linear_diag", "limit_cycle_3d", "cyclic_feedback_3d",
                                "may_leonard", "rotation_counterexample"}
    with pytest.raises(UnknownModel, match="unknown model"):
        get_model("lorenz")
    with pytest.raises(ValidationError):
        get_model("linear_diag", gain=2.0)


def test_linear_diag_equilibria(linear_diag):
    assert len(linear_diag.facts["equilibria"]) == 1
    np.testing.assert_array_equal(linear_diag.facts["equilibria"][0], np.zeros(3))


def test_limit_cycle_period_and_radius(limit_cycle):
    assert limit_cycle.facts["period"] == 2 * math.pi
    traj = integrate(limit_cycle.model, [0.0, 1.0, 0.0], 2 * math.pi)
    assert np.linalg.norm(traj.final - [0.0, 1.0, 0.0]) <= 1e-4
    np.testing.assert_allclose(np.linalg.norm(traj.states[:, :2], axis=1),
                               limit_cycle.facts["cycle_radius"], atol=1e-8)


def test_may_leonard_interior_equilibrium(may_leonard):
    s = 1 / (1 + 0.8 + 1.3)
    np.testing.assert_allclose(may_leonard.facts["interior_equilibrium"], [s, s, s])
    np.testing.assert_allclose(may_leonard.model.F(np.full(3, s)), 0.0, atol=1e-15)
    found = find_equilibria(may_leonard.model, may_leonard.default_box)
    assert len(found) == len(may_leonard.facts["equilibria"])


def test_may_leonard_parameter_checks():
    with pytest.raises(ValidationError):
        get_model("may_leonard", alpha=0.5, beta=1.2)  # alpha + beta < 2


def test_may_leonard_cone_axis(may_leonard):
    cone = may_leonard.recommended_cone
    np.testing.assert_allclose(np.abs(cone.pos_frame[:, 0]), np.ones(3) / math.sqrt(3))


def test_cyclic_feedback_origin_spectrum():
    for g in (1.0, 4.0):
        entry = get_model("cyclic_feedback_3d", g=g)
        eig = np.sort_complex(np.linalg.eigvals(entry.model.DF(np.zeros(3))))
        np.testing.assert_allclose(eig, np.sort_complex(entry.facts["origin_eigenvalues"]),
                                   atol=1e-12)
    # the complex pair crosses the imaginary axis at g = 2
    fact = get_model("cyclic_feedback_3d", g=2.0).facts["origin_eigenvalues"]
    assert max(z.real for z in fact) == pytest.approx(0.0)


def test_rotation_violating_vector(rotation):
    v = rotation.facts["violating_boundary_vector"]
    cone = rotation.recommended_cone
    assert cone.form(v) == pytest.approx(0.0, abs=1e-15)
    a = rotation.model.DF(np.zeros(3))
    # d/dt v^T Q v along x' = Ax is v^T (QA + A^T Q) v; for e1 + e3 it is zero and the
    # rotation then carries v outside the cone
    w = integrate(rotation.model, v, 0.5).final
    assert cone.form(w) > 0
    assert np.allclose(a, [[0, 0, -1], [0, 0, 0], [1, 0, 0]])


def test_linear_diag_smith_eigenvalues(linear_diag):
    rep = smith_lmi_check(linear_diag.recommended_cone, linear_diag.model,
                          linear_diag.recommended_lambda, np.zeros((1, 3)))
    from conewatch.cooperativity import smith_matrix
    s = smith_matrix(linear_diag.recommended_cone, linear_diag.model.DF(np.zeros(3)), 2.5)
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(s)),
                               np.sort(linear_diag.facts["smith_eigenvalues"]), atol=1e-12)
    assert rep.passed


@pytest.mark.parametrize("name", ["linear_diag", "limit_cycle_3d"])
def test_recommended_lambda_validated_on_grid(name):
    """Build-time check: the recommended constant passes on the 21^3 grid of the default box."""
    entry = get_model(name)
    pts = grid_points(entry.default_box, 21)
    rep = smith_lmi_check(entry.recommended_cone, entry.model,
                          lambda_function(entry.recommended_lambda), pts)
    if not rep.passed:
        window = minimal_constant_lambda(entry.recommended_cone, entry.model, pts)
        pytest.fail(f"lambda={entry.recommended_lambda} fails (worst eigenvalue "
                    f"{rep.worst_eigenvalue:.4g} at {rep.worst_point}); passing constants: "
                    f"{window}")
    assert rep.points_checked == 21 ** 3


def test_limit_cycle_lambda_window(limit_cycle):
    pts = grid_points(limit_cycle.default_box, 21)
    lo, hi = minimal_constant_lambda(limit_cycle.recommended_cone, limit_cycle.model, pts)
    want_lo, want_hi = limit_cycle.facts["lambda_window"]
    assert lo == pytest.approx(want_lo, abs=1e-4)
    assert hi == pytest.approx(want_hi, abs=1e-4)
    assert lo < limit_cycle.recommended_lambda < hi


def test_limit_cycle_lambda_40_fails(limit_cycle):
    pts = grid_points(limit_cycle.default_box, 21)
    assert not smith_lmi_check(limit_cycle.recommended_cone, limit_cycle.model, 40.0, pts).passed
