"""Built-in example systems with closed-form facts.

=========================  =================================================
name                       system
=========================  =================================================
``linear_diag``            ``x' = diag(-1, -1, -3) x``
``limit_cycle_3d``         planar Hopf normal form plus ``z' = -c z``
``cyclic_feedback_3d``     three-node tanh loop with one negative link
``may_leonard``            symmetric competitive Lotka-Volterra (May-Leonard)
``rotation_counterexample``  rotation generator mixing ``e1`` and ``e3``
=========================  =================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from conewatch.cone import QuadraticCone, build_cone
from conewatch.dynamics import Box
from conewatch.errors import UnknownModel, ValidationError
from conewatch.models import VectorFieldModel, linear_model, polynomial_model, cyclic_tanh_model

LambdaLike = Union[float, Callable[[np.ndarray], float], None]


@dataclass(frozen=True, eq=False)
class ZooEntry:
    model: VectorFieldModel
    recommended_cone: QuadraticCone
    recommended_lambda: LambdaLike
    facts: dict
    default_box: Box
    notes: str = ""
    params: dict = field(default_factory=dict)


def _standard_cone() -> QuadraticCone:
    return build_cone([-1.0, -1.0, 1.0])


def _linear_diag() -> ZooEntry:
    model = linear_model("linear_diag", np.diag([-1.0, -1.0, -3.0]))
    return ZooEntry(
        model=model,
        recommended_cone=_standard_cone(),
        recommended_lambda=2.5,
        facts={
            "equilibria": [np.zeros(3)],
            "lyapunov_exponents": [-1.0, -1.0, -3.0],
            "smith_eigenvalues": [-0.5, -0.5, -3.5],
            "dominant_bundle": "span{e1, e2}",
            "complementary_bundle": "span{e3}",
        },
        default_box=Box.cube(-2.0, 2.0, 3),
    )


def limit_cycle_monomials(c: float):
    monomials = [[1, 0, 0], [0, 1, 0], [3, 0, 0], [1, 2, 0], [2, 1, 0], [0, 3, 0], [0, 0, 1]]
    coefficients = [
        [1, -1, -1, -1, 0, 0, 0],   # x - y - x^3 - x y^2
        [1, 1, 0, 0, -1, -1, 0],    # x + y - x^2 y - y^3
        [0, 0, 0, 0, 0, 0, -c],     # -c z
    ]
    return monomials, coefficients


def _limit_cycle_3d(c: float = 25.0, lam: float = 48.0) -> ZooEntry:
    if c <= 0:
        raise ValidationError("c must be positive")
    monomials, coefficients = limit_cycle_monomials(c)
    model = polynomial_model("limit_cycle_3d", monomials, coefficients, params={"c": float(c)})
    return ZooEntry(
        model=model,
        recommended_cone=_standard_cone(),
        recommended_lambda=float(lam),
        facts={
            "equilibria": [np.zeros(3)],
            "period": 2 * math.pi,
            "cycle_radius": 1.0,
            "lyapunov_exponents": [0.0, -2.0, -float(c)],
            # Smith matrix is block diagonal; the xy block needs lambda > 46 on
            # the 21^3 grid of [-2, 2]^3 and the z block needs lambda < 2c
            "lambda_window": [46.0, 2.0 * c],
        },
        default_box=Box.cube(-2.0, 2.0, 3),
        params={"c": float(c)},
    )


def _cyclic_feedback_3d(g: float = 4.0) -> ZooEntry:
    if g <= 0:
        raise ValidationError("gain g must be positive")
    base = cyclic_tanh_model("cyclic_feedback_3d", g, [-1.0, 1.0, 1.0])
    model = VectorFieldModel(dim=3, name=base.name, native=base.native, params={"g": float(g)})
    # linearisation at 0 is -I + g P with P^3 = -I: eigenvalues -1 - g and
    # -1 + g (1/2 ± i sqrt(3)/2); the origin loses stability at g = 2
    return ZooEntry(
        model=model,
        recommended_cone=_standard_cone(),
        recommended_lambda=None,
        facts={
            "equilibria": [np.zeros(3)],
            "hopf_gain": 2.0,
            "origin_eigenvalues": [complex(-1 - g), complex(-1 + g / 2, g * math.sqrt(3) / 2),
                                   complex(-1 + g / 2, -g * math.sqrt(3) / 2)],
            "cooperativity": "not asserted; report empirically",
        },
        default_box=Box.cube(-2.0, 2.0, 3),
        params={"g": float(g)},
    )


def may_leonard_monomials(alpha: float, beta: float):
    # x_i' = x_i (1 - x_i - alpha x_{i+1} - beta x_{i+2})
    monomials = [[1, 0, 0], [0, 1, 0], [0, 0, 1],
                 [2, 0, 0], [0, 2, 0], [0, 0, 2],
                 [1, 1, 0], [0, 1, 1], [1, 0, 1]]
    coefficients = [
        [1, 0, 0, -1, 0, 0, -alpha, 0, -beta],
        [0, 1, 0, 0, -1, 0, -beta, -alpha, 0],
        [0, 0, 1, 0, 0, -1, 0, -beta, -alpha],
    ]
    return monomials, coefficients


def _may_leonard(alpha: float = 0.8, beta: float = 1.3) -> ZooEntry:
    if not (0 < alpha < 1 < beta and alpha + beta > 2):
        raise ValidationError("may_leonard needs 0 < alpha < 1 < beta and alpha + beta > 2")
    monomials, coefficients = may_leonard_monomials(alpha, beta)
    model = polynomial_model("may_leonard", monomials, coefficients,
                             params={"alpha": float(alpha), "beta": float(beta)})
    s = 1.0 / (1.0 + alpha + beta)
    diag = np.ones(3) / math.sqrt(3.0)
    # orthonormal basis whose last column is the diagonal direction
    basis = np.linalg.qr(np.column_stack([diag, np.eye(3)[:, :2]]))[0]
    basis = np.column_stack([basis[:, 1], basis[:, 2], basis[:, 0]])
    return ZooEntry(
        model=model,
        recommended_cone=build_cone([-1.0, -1.0, 1.0], basis),
        recommended_lambda=None,
        facts={
            "equilibria": [np.zeros(3), np.eye(3)[0], np.eye(3)[1], np.eye(3)[2], s * np.ones(3)],
            "interior_equilibrium": s * np.ones(3),
            "heteroclinic": True,
            "cooperativity": "not asserted; report empirically",
        },
        default_box=Box.cube(0.0, 2.0, 3),
        params={"alpha": float(alpha), "beta": float(beta)},
    )


def _rotation_counterexample() -> ZooEntry:
    a = np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    return ZooEntry(
        model=linear_model("rotation_counterexample", a),
        recommended_cone=_standard_cone(),
        recommended_lambda=0.0,
        facts={
            "equilibria": "the e2 axis",
            "violating_boundary_vector": np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0),
        },
        default_box=Box.cube(-2.0, 2.0, 3),
    )


_REGISTRY = {
    "linear_diag": _linear_diag,
    "limit_cycle_3d": _limit_cycle_3d,
    "cyclic_feedback_3d": _cyclic_feedback_3d,
    "may_leonard": _may_leonard,
    "rotation_counterexample": _rotation_counterexample,
}

MODEL_NAMES = tuple(_REGISTRY)


def get_model(name: str, **params) -> ZooEntry:
    """Zoo entry by name; keyword arguments override model parameters."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownModel(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {name}: {exc}") from None


def lambda_function(value: LambdaLike) -> Optional[Callable[[np.ndarray], float]]:
    if value is None:
        return None
    if callable(value):
        return value
    const = float(value)
    return lambda x: const
