"""Cone-cooperativity checks for ``x' = F(x)`` and a quadratic cone.

Three independent views of the same property:

* :func:`smith_lmi_check` evaluates the pointwise matrix inequality
  ``Q DF(x) + DF(x)^T Q + lambda(x) Q < 0`` on a point set;
* :func:`fundamental_cone_invariance` integrates the fundamental matrix of
  the averaged-Jacobian system for one pair of initial points and checks that
  it maps the cone boundary into the interior;
* :func:`empirical_monotonicity` integrates ordered pairs of the nonlinear
  flow and looks for pairs that become unordered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from conewatch import _pykernels
from conewatch.cone import (QuadraticCone, classify_many, order_relation, sample_boundary,
                            sample_interior)
from conewatch.dynamics import DEFAULT_CONFIG, Box, IntegratorConfig, integrate
from conewatch.errors import (DimensionMismatch, JacobianUnavailable, NumericalFailure,
                              ValidationError)
from conewatch.models import VectorFieldModel

LambdaArg = Union[float, Callable[[np.ndarray], float]]


@dataclass
class LmiReport:
    points_checked: int
    worst_eigenvalue: float
    worst_point: np.ndarray
    passed: bool
    margin: float

    def to_dict(self) -> dict:
        return {
            "points_checked": self.points_checked,
            "worst_eigenvalue": self.worst_eigenvalue,
            "worst_point": [float(v) for v in self.worst_point],
            "pass": self.passed,
            "margin": self.margin,
        }


@dataclass
class InvarianceReport:
    pair: tuple
    horizon: float
    boundary_samples: int
    checkpoints: int
    n_violations: int
    violations: list = field(default_factory=list)  # (t, v, form_value), capped
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "pair": [[float(v) for v in p] for p in self.pair],
            "horizon": self.horizon,
            "boundary_samples": self.boundary_samples,
            "checkpoints": self.checkpoints,
            "n_violations": self.n_violations,
            "violations": [{"t": t, "v": [float(a) for a in v], "form_value": f}
                           for t, v, f in self.violations],
            "pass": self.passed,
        }


@dataclass
class MonotonicityReport:
    pairs_requested: int
    pairs_tested: int
    pairs_failed_integration: int
    violations: int
    first_violation: dict | None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _as_lambda(lambda_fn: LambdaArg) -> Callable[[np.ndarray], float]:
    if callable(lambda_fn):
        return lambda_fn
    const = float(lambda_fn)
    return lambda x: const


def smith_matrix(cone: QuadraticCone, jac: np.ndarray, lam: float) -> np.ndarray:
    q = cone.q_matrix
    s = q @ jac + jac.T @ q + lam * q
    return 0.5 * (s + s.T)


def smith_lmi_check(cone: QuadraticCone, model: VectorFieldModel, lambda_fn: LambdaArg,
                    points, margin: float = 1e-8,
                    allow_finite_difference: bool = False) -> LmiReport:
    """Largest eigenvalue of the Smith matrix over ``points``; pass iff it is below ``-margin``."""
    if margin < 0:
        raise ValidationError("margin must be non-negative")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[0] == 0:
        raise ValidationError("points must be nonempty")
    if pts.shape[1] != cone.dim or model.dim != cone.dim:
        raise DimensionMismatch("points, model and cone dimensions differ")
    if not model.has_jacobian and not allow_finite_difference:
        raise JacobianUnavailable(f"{model.name} has no analytic Jacobian")
    lam = _as_lambda(lambda_fn)
    mats = np.stack([smith_matrix(cone, model.DF(x), float(lam(x))) for x in pts])
    top = np.linalg.eigvalsh(mats)[:, -1]
    worst = int(np.argmax(top))
    return LmiReport(
        points_checked=len(pts),
        worst_eigenvalue=float(top[worst]),
        worst_point=pts[worst].copy(),
        passed=bool(top[worst] < -margin),
        margin=margin,
    )


def grid_points(box, per_axis: int) -> np.ndarray:
    box = Box.from_spec(box)
    axes = [np.linspace(a, b, per_axis) for a, b in zip(box.lo, box.hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.dim)


def minimal_constant_lambda(cone: QuadraticCone, model: VectorFieldModel, points,
                            lo: float = -1e3, hi: float = 1e3, tol: float = 1e-6):
    """Interval ``(lambda_min, lambda_max)`` of constants passing on ``points``.

    The worst eigenvalue is a maximum of functions convex in ``lambda``, so
    the feasible set is an interval: locate its minimiser by ternary search,
    then bisect both edges.  Returns ``None`` if no constant in ``[lo, hi]``
    passes.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    q = cone.q_matrix
    base = np.stack([smith_matrix(cone, model.DF(x), 0.0) for x in pts])

    def worst(lam):
        return float(np.linalg.eigvalsh(base + lam * q)[:, -1].max())

    a, b = lo, hi
    while b - a > tol:
        m1, m2 = a + (b - a) / 3, b - (b - a) / 3
        if worst(m1) < worst(m2):
            b = m2
        else:
            a = m1
    best = 0.5 * (a + b)
    if worst(best) >= 0:
        return None

    def edge(inside, outside):
        if worst(outside) < 0:
            return outside
        while abs(outside - inside) > tol:
            mid = 0.5 * (inside + outside)
            if worst(mid) < 0:
                inside = mid
            else:
                outside = mid
        return inside

    return edge(best, lo), edge(best, hi)


_GL_CACHE: dict = {}


def _gauss_legendre01(nodes: int):
    if nodes not in _GL_CACHE:
        x, w = np.polynomial.legendre.leggauss(nodes)
        _GL_CACHE[nodes] = (0.5 * (x + 1.0), 0.5 * w)
    return _GL_CACHE[nodes]


def averaged_jacobian_between(model: VectorFieldModel, a, b, nodes: int = 6) -> np.ndarray:
    """``∫_0^1 DF(tau a + (1 - tau) b) dtau`` by Gauss-Legendre quadrature."""
    if nodes < 2:
        raise ValidationError("nodes must be at least 2")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    taus, weights = _gauss_legendre01(nodes)
    out = np.zeros((model.dim, model.dim))
    for tau, w in zip(taus, weights):
        out += w * model.DF(tau * a + (1.0 - tau) * b)
    return out


def averaged_jacobian(model: VectorFieldModel, x_i, x_j, t: float, nodes: int = 6,
                      cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Averaged Jacobian on the segment between ``Phi_t(x_i)`` and ``Phi_t(x_j)``."""
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if t > 0:
        x_i = integrate(model, x_i, t, cfg.with_(sample_dt=0.0)).final
        x_j = integrate(model, x_j, t, cfg.with_(sample_dt=0.0)).final
    elif t < 0:
        raise ValidationError("t must be non-negative")
    return averaged_jacobian_between(model, x_i, x_j, nodes)


def fundamental_cone_invariance(cone: QuadraticCone, model: VectorFieldModel, x_i, x_j,
                                horizon: float, m_boundary: int = 200, rng_seed: int = 0,
                                checkpoints: int = 200, nodes: int = 6,
                                t_skip: float | None = None, max_recorded: int = 50,
                                cfg: IntegratorConfig = DEFAULT_CONFIG) -> InvarianceReport:
    """Check ``X(t) v`` is interior for boundary ``v`` and checkpoints ``t > t_skip``.

    ``X`` solves ``X' = Q_ij(t) X``, ``X(0) = I`` with ``Q_ij(t)`` the averaged
    Jacobian between the two trajectories; both trajectories are integrated
    jointly with ``X`` so no interpolation enters the generator.
    """
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    if m_boundary < 1:
        raise ValidationError("m_boundary must be at least 1")
    n = model.dim
    if cone.dim != n:
        raise DimensionMismatch("cone and model dimensions differ")
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    t_skip = 1e-3 * horizon if t_skip is None else t_skip

    def rhs(t, y):
        a, b = y[:n], y[n:2 * n]
        x_mat = y[2 * n:].reshape(n, n)
        out = np.empty_like(y)
        out[:n] = model.F(a)
        out[n:2 * n] = model.F(b)
        out[2 * n:] = (averaged_jacobian_between(model, a, b, nodes) @ x_mat).ravel()
        return out

    y0 = np.concatenate([x_i, x_j, np.eye(n).ravel()])
    times, states, status, t_reached = _pykernels.dopri5(
        rhs, y0, 0.0, horizon, horizon / checkpoints, cfg.rel_tol, cfg.abs_tol,
        cfg.max_step, cfg.norm_cap, cfg.max_steps, 2 * n)
    if status != _pykernels.STATUS_OK:
        raise NumericalFailure(f"fundamental matrix integration failed at t={t_reached:.6g}",
                               t_reached)
    vs = sample_boundary(cone, m_boundary, rng_seed)
    n_viol = 0
    recorded = []
    n_checked = 0
    for t, y in zip(times, states):
        if t <= t_skip:
            continue
        n_checked += 1
        images = vs @ y[2 * n:].reshape(n, n).T
        codes, forms = classify_many(cone, images)
        bad = np.nonzero(codes != -1)[0]
        n_viol += bad.size
        for idx in bad[:max(0, max_recorded - len(recorded))]:
            recorded.append((float(t), vs[idx].copy(), float(forms[idx])))
    return InvarianceReport(
        pair=(x_i.copy(), x_j.copy()),
        horizon=float(horizon),
        boundary_samples=m_boundary,
        checkpoints=n_checked,
        n_violations=int(n_viol),
        violations=recorded,
        passed=n_viol == 0,
    )


def empirical_monotonicity(cone: QuadraticCone, model: VectorFieldModel, n_pairs: int,
                           horizon: float, rng_seed: int, box, r_max: float | None = None,
                           tol: float = 1e-6, checkpoints: int = 100,
                           cfg: IntegratorConfig = DEFAULT_CONFIG) -> MonotonicityReport:
    """Integrate ordered pairs ``(x, x + r v)`` and count pairs that become unordered.

    Even-indexed pairs use a boundary direction ``v``, odd ones an interior
    direction.  ``r`` is drawn from ``[0.1, 1] * r_max`` so ``y != x``.
    """
    if n_pairs < 1:
        raise ValidationError("n_pairs must be at least 1")
    box = Box.from_spec(box)
    r_max = 0.05 * box.diameter if r_max is None else r_max
    rng = np.random.default_rng(rng_seed)
    xs = box.sample(rng, n_pairs)
    radii = r_max * (0.1 + 0.9 * rng.random(n_pairs))
    sub = rng.integers(0, 2**62, size=2)
    boundary = sample_boundary(cone, n_pairs, int(sub[0]))
    interior = sample_interior(cone, n_pairs, int(sub[1]))
    step_cfg = cfg.with_(sample_dt=horizon / checkpoints)
    tested = failed = violations = 0
    first = None
    for p in range(n_pairs):
        v = boundary[p] if p % 2 == 0 else interior[p]
        x = xs[p]
        y = x + radii[p] * v
        try:
            tx = integrate(model, x, horizon, step_cfg)
            ty = integrate(model, y, horizon, step_cfg)
        except NumericalFailure:
            failed += 1
            continue
        tested += 1
        diffs = ty.states[1:] - tx.states[1:]
        codes, forms = classify_many(cone, diffs, tol)
        bad = np.nonzero(codes == 1)[0]
        if bad.size:
            violations += 1
            if first is None:
                i = int(bad[0])
                first = {
                    "pair_index": p,
                    "t": float(tx.times[i + 1]),
                    "x": x.tolist(),
                    "y": y.tolist(),
                    "form_value": float(forms[i]),
                    "relation": order_relation(cone, ty.states[i + 1], tx.states[i + 1], tol).value,
                }
    return MonotonicityReport(n_pairs, tested, failed, violations, first)
