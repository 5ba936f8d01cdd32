"""Vector-field models.

A model either carries a *native* description (polynomial or cyclic-tanh),
which the compiled kernels can evaluate without calling back into Python,
or plain Python callables.  Native models are picklable and therefore usable
from worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from conewatch import _pykernels
from conewatch.errors import DimensionMismatch, ValidationError

FD_REL_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class NativeSpec:
    kind: int
    exps: np.ndarray  # (terms, n) int64
    coefs: np.ndarray  # (terms, n): coefs[t, i] multiplies monomial t in F_i
    params: np.ndarray


@dataclass(frozen=True, eq=False)
class VectorFieldModel:
    """Autonomous vector field ``x' = F(x)`` on ``R^dim``."""

    dim: int
    name: str
    field_eval: Optional[Callable] = None
    jacobian_eval: Optional[Callable] = None
    native: Optional[NativeSpec] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.native is None and self.field_eval is None:
            raise ValidationError("model needs a native spec or a field callable")

    @property
    def has_jacobian(self) -> bool:
        return self.native is not None or self.jacobian_eval is not None

    def F(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"state of shape {x.shape} for model in R^{self.dim}")
        if self.native is not None:
            s = self.native
            return _pykernels.native_field(s.kind, s.exps, s.coefs, s.params, x)
        return np.asarray(self.field_eval(x), dtype=float)

    def DF(self, x) -> np.ndarray:
        """Jacobian; central differences when no analytic form is known."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"state of shape {x.shape} for model in R^{self.dim}")
        if self.native is not None:
            s = self.native
            return _pykernels.native_jacobian(s.kind, s.exps, s.coefs, s.params, x)
        if self.jacobian_eval is not None:
            return np.asarray(self.jacobian_eval(x), dtype=float)
        return finite_difference_jacobian(self.F, x)


def finite_difference_jacobian(f: Callable, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = FD_REL_STEP * (1.0 + np.linalg.norm(x))
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.column_stack(cols)


def polynomial_model(name: str, monomials, coefficients, params=None) -> VectorFieldModel:
    """Polynomial field from exponent tuples and per-output coefficients.

    ``monomials`` is ``(terms, n)``; ``coefficients`` is ``(n, terms)`` with
    row ``i`` holding the coefficients of ``F_i``.
    """
    exps = np.asarray(monomials, dtype=np.int64)
    coefs = np.asarray(coefficients, dtype=float)
    if exps.ndim != 2:
        raise ValidationError("monomials must be a list of exponent tuples")
    n = exps.shape[1]
    if coefs.shape != (n, exps.shape[0]):
        raise ValidationError(
            f"coefficients must have shape ({n}, {exps.shape[0]}), got {coefs.shape}")
    if np.any(exps < 0):
        raise ValidationError("exponents must be non-negative")
    spec = NativeSpec(_pykernels.KIND_POLY, exps, np.ascontiguousarray(coefs.T), np.zeros(1))
    return VectorFieldModel(dim=n, name=name, native=spec, params=dict(params or {}))


def linear_model(name: str, a) -> VectorFieldModel:
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValidationError("linear model needs a square matrix")
    return polynomial_model(name, np.eye(n, dtype=np.int64), a, params={"A": a.tolist()})


def cyclic_tanh_model(name: str, gain: float, signs) -> VectorFieldModel:
    """``x_i' = -x_i + signs[i] * tanh(gain * x_{i-1})`` (indices mod n)."""
    signs = np.asarray(signs, dtype=float)
    spec = NativeSpec(_pykernels.KIND_CYCLIC, np.zeros((0, signs.size), dtype=np.int64),
                      np.zeros((0, signs.size)), np.concatenate([[gain], signs]))
    return VectorFieldModel(dim=signs.size, name=name, native=spec,
                            params={"g": float(gain), "signs": signs.tolist()})


def callable_model(name: str, dim: int, field_eval: Callable,
                   jacobian_eval: Optional[Callable] = None) -> VectorFieldModel:
    return VectorFieldModel(dim=dim, name=name, field_eval=field_eval, jacobian_eval=jacobian_eval)


def model_from_dict(data: dict) -> VectorFieldModel:
    """Ingest a model spec ``{"name", "kind", "coefficients", ...}``."""
    kind = data.get("kind", "builtin")
    name = data.get("name")
    if not name:
        raise ValidationError("model spec requires 'name'")
    if kind == "builtin":
        from conewatch.zoo import get_model
        return get_model(name, **(data.get("coefficients") or {})).model
    if kind == "polynomial":
        for key in ("monomials", "coefficients"):
            if key not in data:
                raise ValidationError(f"polynomial model requires '{key}'")
        return polynomial_model(name, data["monomials"], data["coefficients"])
    raise ValidationError(f"unknown model kind {kind!r}")


def model_to_dict(model: VectorFieldModel) -> dict:
    """Export a native model; polynomial models round-trip exactly."""
    if model.native is None:
        raise ValidationError("only native models can be exported")
    s = model.native
    if s.kind == _pykernels.KIND_POLY:
        return {
            "name": model.name,
            "kind": "polynomial",
            "monomials": s.exps.tolist(),
            "coefficients": s.coefs.T.tolist(),
        }
    return {"name": model.name, "kind": "builtin", "coefficients": dict(model.params)}
