import numpy as np
import pytest

from conewatch.cone import build_cone
from conewatch.cooperativity import (averaged_jacobian, averaged_jacobian_between,
                                     empirical_monotonicity, fundamental_cone_invariance,
                                     grid_points, smith_lmi_check, smith_matrix)
from conewatch.errors import JacobianUnavailable, ValidationError
from conewatch.models import callable_model, linear_model, polynomial_model


def test_smith_examples(linear_diag):
    cone, model = linear_diag.recommended_cone, linear_diag.model
    pts = grid_points(linear_diag.default_box, 5)
    rep = smith_lmi_check(cone, model, 2.5, pts)
    assert rep.passed and rep.worst_eigenvalue == pytest.approx(-0.5, abs=1e-9)
    rep = smith_lmi_check(cone, model, 0.0, pts)
    assert not rep.passed and rep.worst_eigenvalue == pytest.approx(2.0, abs=1e-9)
    assert rep.to_dict()["pass"] is False


def test_zero_field_always_fails():
    model = linear_model("zero", np.zeros((3, 3)))
    cone = build_cone([-1.0, 2.0, 0.5])
    for lam in (0.1, 1.0, 10.0):
        rep = smith_lmi_check(cone, model, lam, np.zeros((1, 3)))
        assert not rep.passed


def test_smith_symmetric_and_scaling(limit_cycle, rng):
    cone = limit_cycle.recommended_cone
    for x in rng.uniform(-2, 2, (20, 3)):
        s = smith_matrix(cone, limit_cycle.model.DF(x), 48.0)
        assert np.linalg.norm(s - s.T) <= 1e-12 * np.linalg.norm(s)
        s3 = smith_matrix(cone.scaled(3.0), limit_cycle.model.DF(x), 48.0)
        np.testing.assert_allclose(np.linalg.eigvalsh(s3), 3 * np.linalg.eigvalsh(s), atol=1e-9)
    pts = rng.uniform(-2, 2, (200, 3))
    for lam in (20.0, 48.0):
        a = smith_lmi_check(cone, limit_cycle.model, lam, pts)
        b = smith_lmi_check(cone.scaled(3.0), limit_cycle.model, lam, pts)
        assert a.passed == b.passed


def test_lambda_callable(linear_diag):
    rep = smith_lmi_check(linear_diag.recommended_cone, linear_diag.model,
                          lambda x: 2.5 + 0.1 * x[0], np.array([[1.0, 0.0, 0.0]]))
    assert rep.worst_eigenvalue == pytest.approx(-0.6)


def test_jacobian_required():
    model = callable_model("opaque", 3, lambda x: -x)
    cone = build_cone([-1.0, -1.0, 1.0])
    with pytest.raises(JacobianUnavailable):
        smith_lmi_check(cone, model, 1.0, np.zeros((1, 3)))
    rep = smith_lmi_check(cone, model, 1.0, np.zeros((1, 3)), allow_finite_difference=True)
    assert rep.points_checked == 1


def test_averaged_jacobian_examples(linear_diag, limit_cycle):
    a = linear_diag.model.DF(np.zeros(3))
    np.testing.assert_allclose(averaged_jacobian(linear_diag.model, [1, 2, 3], [-1, 0, 2], 0.7), a)
    x = np.array([0.3, -0.4, 0.2])
    traj_end = averaged_jacobian(limit_cycle.model, x, x, 0.5)
    from conewatch.dynamics import integrate
    np.testing.assert_allclose(traj_end,
                               limit_cycle.model.DF(integrate(limit_cycle.model, x, 0.5).final),
                               atol=1e-10)
    quad = polynomial_model("quad", [[2, 0, 0]], [[1.0], [0.0], [0.0]])
    q = averaged_jacobian_between(quad, np.zeros(3), np.array([1.0, 0.0, 0.0]))
    assert q[0, 0] == pytest.approx(1.0)
    assert np.count_nonzero(q) == 1


def test_invariance_linear_diag(linear_diag):
    rep = fundamental_cone_invariance(linear_diag.recommended_cone, linear_diag.model,
                                      [1.0, 0.5, -0.3], [-0.2, 0.4, 0.9], horizon=20.0)
    assert rep.passed and rep.n_violations == 0 and rep.boundary_samples == 200


def test_invariance_at_equilibrium(linear_diag):
    rep = fundamental_cone_invariance(linear_diag.recommended_cone, linear_diag.model,
                                      np.zeros(3), np.zeros(3), horizon=0.5, m_boundary=50)
    assert rep.passed


def test_invariance_rotation_fails(rotation):
    rep = fundamental_cone_invariance(rotation.recommended_cone, rotation.model,
                                      [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], horizon=5.0)
    assert not rep.passed and rep.violations
    t, v, form = rep.violations[0]
    assert t > 0 and form >= 0


def test_invariance_limit_cycle_consistency(limit_cycle):
    # the LMI passes on the whole box, so the cone must be invariant for any pair in it
    rep = fundamental_cone_invariance(limit_cycle.recommended_cone, limit_cycle.model,
                                      [0.5, 0.0, 0.5], [-1.0, 0.3, -0.2], horizon=10.0,
                                      m_boundary=100)
    assert rep.passed


def test_empirical_monotonicity(linear_diag, rotation, limit_cycle):
    rep = empirical_monotonicity(linear_diag.recommended_cone, linear_diag.model, 200, 20.0,
                                 rng_seed=1, box=linear_diag.default_box)
    assert rep.violations == 0 and rep.pairs_tested == 200
    rep = empirical_monotonicity(limit_cycle.recommended_cone, limit_cycle.model, 50, 10.0,
                                 rng_seed=1, box=limit_cycle.default_box)
    assert rep.violations == 0
    rep = empirical_monotonicity(rotation.recommended_cone, rotation.model, 50, 5.0,
                                 rng_seed=1, box=rotation.default_box)
    assert rep.violations > 0 and rep.first_violation["relation"] == "Unordered"


def test_input_validation(linear_diag):
    with pytest.raises(ValidationError):
        fundamental_cone_invariance(linear_diag.recommended_cone, linear_diag.model,
                                    np.zeros(3), np.zeros(3), horizon=0.0)
    with pytest.raises(ValidationError):
        empirical_monotonicity(linear_diag.recommended_cone, linear_diag.model, 0, 1.0, 0,
                               linear_diag.default_box)
