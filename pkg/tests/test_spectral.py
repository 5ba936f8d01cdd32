import math

import numpy as np
import pytest

from conewatch import get_model
from conewatch.cone import build_cone
from conewatch.dynamics import integrate, propagate_frame
from conewatch.errors import GapTooSmall, ValidationError
from conewatch.models import linear_model
from conewatch.spectral import (SpectralConfig, SubspaceFrame, estimate_bundles,
                                fit_separation_constant, k_lyapunov_exponent, lyapunov_spectrum,
                                principal_angles, separation_estimate, separation_ratios,
                                trace_average, verify_separation)

E12 = np.eye(3)[:, :2]
E3 = np.eye(3)[:, 2:]


@pytest.fixture(scope="module")
def lin_estimate():
    return separation_estimate(get_model("linear_diag").model, [1.0, 0.5, 0.3], 2)


def test_linear_diag_spectrum(linear_diag):
    lyap = lyapunov_spectrum(linear_diag.model, [1.0, 0.5, 0.3], 3, horizon=100.0)
    np.testing.assert_allclose(lyap.exponents, [-1.0, -1.0, -3.0], atol=1e-2)
    assert lyap.convergence < 1e-2
    assert np.all(np.diff(lyap.exponents) <= 0)


def test_limit_cycle_spectrum(limit_cycle):
    lyap = lyapunov_spectrum(limit_cycle.model, [1.0, 0.0, 0.0], 3, horizon=100.0)
    np.testing.assert_allclose(lyap.exponents, [0.0, -2.0, -25.0], atol=5e-2)


def test_spectrum_at_equilibrium(linear_diag):
    lyap = lyapunov_spectrum(linear_diag.model, np.zeros(3), 3, horizon=100.0)
    real_parts = np.sort(np.linalg.eigvals(linear_diag.model.DF(np.zeros(3))).real)[::-1]
    np.testing.assert_allclose(lyap.exponents, real_parts, atol=1e-2)


@pytest.mark.parametrize("name, x0", [("linear_diag", [1.0, 0.5, 0.3]),
                                      ("limit_cycle_3d", [0.5, 0.0, 0.5]),
                                      ("cyclic_feedback_3d", [0.5, 0.0, 0.5])])
def test_exponent_sum_matches_trace(name, x0):
    model = get_model(name).model
    lyap = lyapunov_spectrum(model, x0, 3, horizon=100.0)
    assert lyap.exponents.sum() == pytest.approx(trace_average(model, x0, 100.0), abs=5e-2)


@pytest.mark.parametrize("name, x0", [("linear_diag", [1.0, 0.5, 0.3]),
                                      ("limit_cycle_3d", [1.0, 0.0, 0.0])])
def test_seed_independence(name, x0):
    model = get_model(name).model
    a = lyapunov_spectrum(model, x0, 3, rng_seed=1).exponents
    b = lyapunov_spectrum(model, x0, 3, rng_seed=2).exponents
    np.testing.assert_allclose(a, b, atol=1e-2)


def test_k_exponent_examples(linear_diag, limit_cycle):
    assert k_lyapunov_exponent(linear_diag.model, [1.0, 0.5, 0.3], 2) == pytest.approx(-1, abs=1e-2)
    assert k_lyapunov_exponent(linear_diag.model, [1.0, 0.5, 0.3], 1) == pytest.approx(-1, abs=1e-2)
    assert k_lyapunov_exponent(limit_cycle.model, [1.0, 0.0, 0.0], 2) == pytest.approx(-2, abs=5e-2)


def test_spectrum_validation(linear_diag):
    with pytest.raises(ValidationError):
        lyapunov_spectrum(linear_diag.model, np.zeros(3), 4)
    with pytest.raises(ValidationError):
        lyapunov_spectrum(linear_diag.model, np.zeros(3), 2, horizon=1.0, qr_interval=0.5)


def test_bundles_linear_diag(lin_estimate):
    assert principal_angles(lin_estimate.E.frame, E12).max() <= 1e-4
    assert principal_angles(lin_estimate.F.frame, E3).max() <= 1e-4
    assert lin_estimate.gap == pytest.approx(2.0, abs=1e-2)
    assert lin_estimate.gamma_est == pytest.approx(math.exp(-2.0), rel=2e-2)


def test_bundles_expanding_linear():
    model = linear_model("expanding", np.diag([2.0, 1.0, -1.0]))
    e, f = estimate_bundles(model, np.zeros(3), 2)
    assert principal_angles(e.frame, E12).max() <= 1e-4
    assert principal_angles(f.frame, E3).max() <= 1e-4


def test_bundles_non_diagonal_linear(rng):
    # A = V diag(-0.5, -1, -4) V^-1 with a non-orthogonal V: E and F are not orthogonal
    v = np.array([[1.0, 0.3, 0.2], [0.0, 1.0, 0.5], [0.4, 0.0, 1.0]])
    a = v @ np.diag([-0.5, -1.0, -4.0]) @ np.linalg.inv(v)
    model = linear_model("skewed", a)
    e, f = estimate_bundles(model, [0.3, -0.2, 0.1], 2)
    assert principal_angles(e.frame, v[:, :2]).max() <= 1e-4
    assert principal_angles(f.frame, v[:, 2:]).max() <= 1e-4


def test_full_rank_bundle(linear_diag):
    est = separation_estimate(linear_diag.model, [1.0, 0.5, 0.3], 3)
    assert est.E.dim == 3 and est.F.dim == 0 and est.F.frame.shape == (3, 0)


def test_gap_too_small():
    model = linear_model("flat", np.diag([-1.0, -1.0, -1.0]))
    with pytest.raises(GapTooSmall):
        estimate_bundles(model, [1.0, 1.0, 1.0], 2)


def test_verify_separation(linear_diag, lin_estimate):
    rep = verify_separation(linear_diag.recommended_cone, lin_estimate)
    assert rep.E_in_interior and rep.F_misses_cone


def test_verify_separation_mismatched_cone(lin_estimate):
    # rotate the cone by 60 degrees in the e1-e3 plane: e1 now has a positive form
    c, s = math.cos(math.pi / 3), math.sin(math.pi / 3)
    rot = np.array([[c, 0, -s], [0, 1, 0], [s, 0, c]])
    rep = verify_separation(build_cone([-1.0, -1.0, 1.0], rot), lin_estimate)
    assert not (rep.E_in_interior and rep.F_misses_cone)


def test_invariance_of_E(linear_diag, lin_estimate):
    x0 = lin_estimate.E.base_point
    x1, pushed = propagate_frame(linear_diag.model, x0, lin_estimate.E.frame, 2.0)
    later = separation_estimate(linear_diag.model, x1, 2, SpectralConfig(rng_seed=9))
    assert principal_angles(np.linalg.qr(pushed)[0], later.E.frame).max() <= 1e-3


def test_separation_ratio_exact_bundles(linear_diag, lin_estimate):
    exact = lin_estimate.__class__(**{**lin_estimate.__dict__,
                                      "E": SubspaceFrame(lin_estimate.E.base_point, E12),
                                      "F": SubspaceFrame(lin_estimate.E.base_point, E3)})
    times = np.linspace(1.0, 20.0, 20)
    ratios = separation_ratios(linear_diag.model, exact, times)
    bound = np.exp(-lin_estimate.gap * times)
    assert np.all(ratios <= 3 * bound) and np.all(ratios >= bound / 3)


def test_separation_ratio_estimated_bundles(linear_diag, lin_estimate):
    # estimated F carries a rounding-level component along E that the flow
    # amplifies like exp(gap t); it reaches order one near t = 18
    times = np.linspace(1.0, 15.0, 15)
    ratios = separation_ratios(linear_diag.model, lin_estimate, times)
    bound = np.exp(-lin_estimate.gap * times)
    assert np.all(ratios <= 3 * bound) and np.all(ratios >= bound / 3)
    m, gamma = fit_separation_constant(linear_diag.model, lin_estimate, times)
    assert gamma == pytest.approx(math.exp(-2.0), rel=1e-2)
    assert m == pytest.approx(1.0, rel=1e-2)


def test_estimate_serialises(lin_estimate):
    import json
    data = json.loads(json.dumps(lin_estimate.to_dict()))
    assert len(data["E"]) == 2 and len(data["F"]) == 1
    assert data["gap"] == pytest.approx(2.0, abs=1e-2)


def test_principal_angles_basic():
    a = np.eye(3)[:, :1]
    b = np.array([[1.0], [1.0], [0.0]])
    assert principal_angles(a, b)[0] == pytest.approx(math.pi / 4)


def test_limit_cycle_bundles(limit_cycle):
    x0 = np.array([1.0, 0.0, 0.0])
    est = separation_estimate(limit_cycle.model, x0, 2)
    assert principal_angles(est.E.frame, E12).max() <= 1e-4
    assert principal_angles(est.F.frame, E3).max() <= 1e-4
    rep = verify_separation(limit_cycle.recommended_cone, est)
    assert rep.E_in_interior and rep.F_misses_cone
    assert integrate(limit_cycle.model, x0, 1.0).final[2] == 0.0
