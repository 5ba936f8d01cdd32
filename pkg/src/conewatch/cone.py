"""Quadratic rank-k cones ``C = {x : x^T Q x <= 0}``.

A nonsingular symmetric ``Q`` with ``k`` negative and ``n - k`` positive
eigenvalues defines a closed cone that contains the ``k``-dimensional
negative eigenspace in its interior and meets the positive eigenspace only
at the origin.  Membership is decided with a tolerance relative to
``|x|**2`` because the form is quadratic.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from conewatch.errors import DimensionMismatch, SignatureError, ValidationError

DEFAULT_TOL = 1e-9


class MembershipClass(enum.Enum):
    INTERIOR = "Interior"
    BOUNDARY = "Boundary"
    EXTERIOR = "Exterior"


class Membership(NamedTuple):
    cls: MembershipClass
    form_value: float


class Order(enum.Enum):
    STRONGLY_ORDERED = "StronglyOrdered"
    ORDERED = "Ordered"
    UNORDERED = "Unordered"


@dataclass(frozen=True, eq=False)
class QuadraticCone:
    """Cone ``{x : x^T q_matrix x <= 0}``; build with :func:`build_cone`."""

    dim: int
    rank: int
    q_matrix: np.ndarray
    neg_frame: np.ndarray
    pos_frame: np.ndarray
    eigenvalues: np.ndarray
    basis: np.ndarray = field(repr=False)  # columns match ``eigenvalues``
    tol: float = DEFAULT_TOL

    def form(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.q_matrix @ x)

    def scaled(self, factor: float) -> "QuadraticCone":
        """Same cone described by ``factor * Q`` (``factor > 0``)."""
        if factor <= 0:
            raise ValidationError("scale factor must be positive")
        return build_cone(self.eigenvalues * factor, self.basis, tol=self.tol)


def build_cone(eigenvalues, basis=None, tol: float = DEFAULT_TOL) -> QuadraticCone:
    """Build ``Q = B diag(eigenvalues) B^T``.

    ``basis`` must be orthogonal (identity when omitted).  The rank is the
    number of negative eigenvalues.
    """
    lam = np.asarray(eigenvalues, dtype=float).ravel()
    n = lam.size
    if n < 2:
        raise ValidationError("cone dimension must be at least 2")
    if not np.all(np.isfinite(lam)):
        raise ValidationError("eigenvalues must be finite")
    if np.any(lam == 0.0):
        raise ValidationError("eigenvalues must be nonzero (Q must be nonsingular)")
    k = int(np.sum(lam < 0))
    if k == 0 or k == n:
        raise SignatureError(
            f"eigenvalues share one sign ({k} negative of {n}); the cone would be "
            "{0} or the whole space")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    if basis is None:
        b = np.eye(n)
    else:
        b = np.asarray(basis, dtype=float)
        if b.shape != (n, n):
            raise DimensionMismatch(f"basis shape {b.shape} does not match n={n}")
        if not np.allclose(b.T @ b, np.eye(n), atol=1e-10, rtol=0):
            raise ValidationError("basis must be orthogonal")
    order = np.argsort(lam, kind="stable")
    lam_sorted = lam[order]
    b_sorted = b[:, order]
    q = (b * lam) @ b.T
    q = 0.5 * (q + q.T)
    return QuadraticCone(
        dim=n,
        rank=k,
        q_matrix=q,
        neg_frame=b_sorted[:, :k].copy(),
        pos_frame=b_sorted[:, k:].copy(),
        eigenvalues=lam_sorted,
        basis=b_sorted,
        tol=float(tol),
    )


def cone_from_matrix(q, tol: float = DEFAULT_TOL) -> QuadraticCone:
    """Build a cone from an explicit symmetric matrix."""
    q = np.asarray(q, dtype=float)
    if q.ndim != 2 or q.shape[0] != q.shape[1]:
        raise DimensionMismatch("Q must be square")
    scale = max(np.abs(q).max(), 1e-300)
    if np.abs(q - q.T).max() > 1e-12 * scale:
        raise ValidationError("Q must be symmetric")
    lam, b = np.linalg.eigh(0.5 * (q + q.T))
    return build_cone(lam, b, tol=tol)


def _check_dim(cone: QuadraticCone, x: np.ndarray) -> None:
    if x.shape[-1] != cone.dim:
        raise DimensionMismatch(f"vector of length {x.shape[-1]} for cone in R^{cone.dim}")


def classify_point(cone: QuadraticCone, x, tol: float | None = None) -> Membership:
    """Classify ``x`` as interior, boundary or exterior of the cone."""
    tol = cone.tol if tol is None else tol
    x = np.asarray(x, dtype=float)
    _check_dim(cone, x)
    value = float(x @ cone.q_matrix @ x)
    scale = tol * float(x @ x)
    if value < -scale:
        return Membership(MembershipClass.INTERIOR, value)
    if abs(value) <= scale:
        return Membership(MembershipClass.BOUNDARY, value)
    return Membership(MembershipClass.EXTERIOR, value)


def classify_many(cone: QuadraticCone, xs, tol: float | None = None):
    """Vectorised :func:`classify_point`; returns ``(codes, forms)``.

    Codes are -1 (interior), 0 (boundary), +1 (exterior).
    """
    tol = cone.tol if tol is None else tol
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    _check_dim(cone, xs)
    forms = np.einsum("ij,jk,ik->i", xs, cone.q_matrix, xs)
    scale = tol * np.einsum("ij,ij->i", xs, xs)
    codes = np.where(forms < -scale, -1, np.where(np.abs(forms) <= scale, 0, 1))
    return codes, forms


def order_relation(cone: QuadraticCone, x, y, tol: float | None = None) -> Order:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_dim(cone, x)
    _check_dim(cone, y)
    cls = classify_point(cone, x - y, tol).cls
    if cls is MembershipClass.INTERIOR:
        return Order.STRONGLY_ORDERED
    if cls is MembershipClass.BOUNDARY:
        return Order.ORDERED
    return Order.UNORDERED


def sets_ordered(cone: QuadraticCone, u, v, strict: bool = False,
                 tol: float | None = None) -> bool:
    """Whether every ``x`` in ``u`` and ``y`` in ``v`` have ``x - y`` in C.

    With ``strict=True`` every difference must lie in the interior instead.
    Both readings of set-wise strong order are offered; neither is the default
    meaning of ``U ≈ V``.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    diffs = (u[:, None, :] - v[None, :, :]).reshape(-1, cone.dim)
    codes, _ = classify_many(cone, diffs, tol)
    if strict:
        return bool(np.all(codes == -1))
    return bool(np.all(codes <= 0))


def probe_subspace(cone: QuadraticCone) -> np.ndarray:
    """Orthonormal ``n x k`` frame of a k-probe (the negative eigenspace)."""
    return cone.neg_frame.copy()


def _unit_rows(rng: np.random.Generator, m: int, d: int) -> np.ndarray:
    g = rng.standard_normal((m, d))
    norms = np.linalg.norm(g, axis=1)
    while np.any(norms == 0.0):  # pragma: no cover - probability zero
        bad = norms == 0.0
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]


def sample_boundary(cone: QuadraticCone, m: int, rng_seed: int) -> np.ndarray:
    """``m`` unit vectors on the boundary of the cone, deterministic in the seed."""
    if m < 1:
        raise ValidationError("m must be at least 1")
    rng = np.random.default_rng(rng_seed)
    k = cone.rank
    lam_neg = -cone.eigenvalues[:k]
    lam_pos = cone.eigenvalues[k:]
    u = _unit_rows(rng, m, k)
    w = _unit_rows(rng, m, cone.dim - k)
    a = (u * u) @ lam_neg
    b = (w * w) @ lam_pos
    # weights make the negative and positive contributions cancel exactly
    vecs = (np.sqrt(b)[:, None] * (u @ cone.neg_frame.T)
            + np.sqrt(a)[:, None] * (w @ cone.pos_frame.T))
    return vecs / np.linalg.norm(vecs, axis=1)[:, None]


def sample_interior(cone: QuadraticCone, m: int, rng_seed: int,
                    max_ratio: float = 0.9) -> np.ndarray:
    """``m`` unit vectors strictly inside the cone.

    The positive-eigenspace share is drawn so that its form contribution is at
    most ``max_ratio`` times the negative one.
    """
    rng = np.random.default_rng(rng_seed)
    k = cone.rank
    u = _unit_rows(rng, m, k)
    w = _unit_rows(rng, m, cone.dim - k)
    a = (u * u) @ (-cone.eigenvalues[:k])
    b = (w * w) @ cone.eigenvalues[k:]
    share = max_ratio * rng.random(m)
    vecs = (u @ cone.neg_frame.T) + np.sqrt(share * a / b)[:, None] * (w @ cone.pos_frame.T)
    return vecs / np.linalg.norm(vecs, axis=1)[:, None]


def probe_neighborhood(cone: QuadraticCone, x, eps: float, m: int,
                       rng_seed: int) -> np.ndarray:
    """``m`` points of the punctured probe disc ``(x + P) ∩ B(x, eps) \\ {x}``."""
    if eps <= 0:
        raise ValidationError("eps must be positive")
    x = np.asarray(x, dtype=float)
    _check_dim(cone, x)
    if m <= 0:
        return np.empty((0, cone.dim))
    rng = np.random.default_rng(rng_seed)
    k = cone.rank
    directions = _unit_rows(rng, m, k)
    u = rng.random(m)
    while np.any(u == 0.0):  # pragma: no cover - probability ~2**-53
        u[u == 0.0] = rng.random(int(np.sum(u == 0.0)))
    radii = eps * u ** (1.0 / k)  # uniform in the k-disc
    return x + (radii[:, None] * directions) @ cone.neg_frame.T


def cone_to_dict(cone: QuadraticCone) -> dict:
    return {
        "eigenvalues": cone.eigenvalues.tolist(),
        "basis": cone.basis.tolist(),
        "tol": cone.tol,
    }


def cone_from_dict(data: dict) -> QuadraticCone:
    unknown = set(data) - {"eigenvalues", "basis", "tol"}
    if unknown:
        raise ValidationError(f"unknown cone keys: {sorted(unknown)}")
    if "eigenvalues" not in data:
        raise ValidationError("cone spec requires 'eigenvalues'")
    return build_cone(data["eigenvalues"], data.get("basis"), tol=data.get("tol", DEFAULT_TOL))


def cone_to_json(cone: QuadraticCone) -> str:
    return json.dumps(cone_to_dict(cone))


def cone_from_json(text: str) -> QuadraticCone:
    return cone_from_dict(json.loads(text))
