"""Orbit classification from sampled trajectories.

An orbit is *pseudo-ordered* when two of its points, separated by more than
``delta_sep``, differ by a vector in the cone.  Its omega-limit set is
classified on a tail window as convergence to a known equilibrium, a set
passing near a known equilibrium, a periodic orbit (closest-return analysis),
or left unresolved.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from conewatch import _backend
from conewatch.cone import QuadraticCone
from conewatch.dynamics import DEFAULT_CONFIG, IntegratorConfig, Trajectory, run_augmented
from conewatch.errors import HorizonTooShort, NumericalFailure, ValidationError
from conewatch.models import VectorFieldModel

TAIL_KEEP = 400  # tail points kept on a record for later equilibrium-distance checks
# reading a periodic omega-limit as a closed orbit needs a complemented cone;
# a nondegenerate quadratic cone always is (its positive eigenspace meets it only at 0)
CONE_ASSUMPTION = "cone assumed complemented (holds for every nondegenerate quadratic cone)"


class OmegaKind(enum.Enum):
    CONVERGES = "ConvergesToEquilibrium"
    PERIODIC = "PeriodicOrbit"
    CONTAINS_EQUILIBRIUM = "ContainsEquilibrium"
    UNRESOLVED = "Unresolved"


@dataclass(frozen=True)
class OmegaClass:
    kind: OmegaKind
    point: Optional[np.ndarray] = None
    period: Optional[float] = None
    note: str = ""

    def __eq__(self, other):
        if not isinstance(other, OmegaClass):
            return NotImplemented
        same_point = (self.point is None and other.point is None) or (
            self.point is not None and other.point is not None
            and np.array_equal(self.point, other.point))
        return (self.kind is other.kind and same_point and self.period == other.period
                and self.note == other.note)


@dataclass(frozen=True)
class PseudoOrderWitness:
    t1: float
    t2: float
    form_value: float


@dataclass(frozen=True)
class ClassifierParams:
    transient: float = 50.0
    tail_window: float = 50.0
    eps_conv: float = 1e-5
    eps_eq: float = 1e-3
    delta_sep: Optional[float] = None  # None: 1e-4 * box diameter (1e-4 without a box)
    order_tol: float = 1e-9
    max_scan_points: int = 2000
    rec_tol_rel: float = 1e-2
    min_period: Optional[float] = None  # None: 20 samples
    repeat_tol: float = 0.1
    extend_once: bool = True
    integrator: IntegratorConfig = DEFAULT_CONFIG

    def __post_init__(self):
        if self.transient < 0 or self.tail_window <= 0:
            raise ValidationError("transient must be >= 0 and tail_window > 0")
        if self.delta_sep is not None and self.delta_sep <= 0:
            raise ValidationError("delta_sep must be positive")

    @property
    def horizon(self) -> float:
        return self.transient + self.tail_window

    def resolved_delta_sep(self, box=None) -> float:
        if self.delta_sep is not None:
            return self.delta_sep
        return 1e-4 * (box.diameter if box is not None else 1.0)

    def with_(self, **changes) -> "ClassifierParams":
        return replace(self, **changes)


@dataclass(eq=False)
class OrbitRecord:
    x0: np.ndarray
    pseudo_order_witness: Optional[PseudoOrderWitness]
    omega_class: OmegaClass
    in_Q: bool
    in_S: bool
    horizon_used: float
    tail_min_eq_distance: float = math.inf
    tail_sample: Optional[np.ndarray] = field(default=None, repr=False)
    index: int = -1

    def same_as(self, other: "OrbitRecord") -> bool:
        return (np.array_equal(self.x0, other.x0)
                and self.pseudo_order_witness == other.pseudo_order_witness
                and self.omega_class == other.omega_class
                and self.in_Q == other.in_Q and self.in_S == other.in_S
                and self.horizon_used == other.horizon_used)


def csv_header(dim: int) -> list:
    return (["index"] + [f"x0_{i + 1}" for i in range(dim)]
            + ["in_Q", "in_S", "omega_class", "period", "witness_t1", "witness_t2",
               "horizon_used"])


def csv_row(rec: OrbitRecord) -> list:
    w = rec.pseudo_order_witness
    period = rec.omega_class.period
    return ([str(rec.index)] + [repr(float(v)) for v in rec.x0]
            + [str(rec.in_Q).lower(), str(rec.in_S).lower(), rec.omega_class.kind.value,
               "" if period is None else repr(float(period)),
               "" if w is None else repr(w.t1), "" if w is None else repr(w.t2),
               repr(float(rec.horizon_used))])


# -- pseudo-order detection ---------------------------------------------------

def detect_pseudo_ordered(traj: Trajectory, cone: QuadraticCone, delta_sep: float,
                          tol: float = 1e-9, max_points: int = 2000,
                          kernels=None) -> Optional[PseudoOrderWitness]:
    """First sampled pair ``t1 < t2`` whose difference is strictly inside the cone.

    The orbit is subsampled to at most ``max_points`` points for a full pairwise
    scan; when that finds nothing, the scan is repeated at full resolution
    around the pair that came closest.
    """
    if delta_sep <= 0:
        raise ValidationError("delta_sep must be positive")
    kernels = kernels or _backend.kernels
    states = np.ascontiguousarray(traj.states)
    times = traj.times
    m = len(states)
    if m < 2:
        return None
    stride = max(1, math.ceil(m / max_points))
    idx = np.arange(0, m, stride)
    i, j, form, bi, bj, _ = kernels.first_ordered_pair(states[idx], cone.q_matrix,
                                                        delta_sep, tol)
    if i >= 0:
        return PseudoOrderWitness(float(times[idx[i]]), float(times[idx[j]]), float(form))
    if stride == 1 or bi < 0:
        return None
    local = np.unique(np.concatenate([
        np.arange(max(0, idx[bi] - stride), min(m, idx[bi] + stride + 1)),
        np.arange(max(0, idx[bj] - stride), min(m, idx[bj] + stride + 1)),
    ]))
    i, j, form, _, _, _ = kernels.first_ordered_pair(states[local], cone.q_matrix,
                                                      delta_sep, tol)
    if i >= 0:
        return PseudoOrderWitness(float(times[local[i]]), float(times[local[j]]), float(form))
    return None


# -- period estimation --------------------------------------------------------

def _parabola_vertex(ts, ds):
    """Abscissa of the vertex of the parabola through three points."""
    (t0, t1, t2), (d0, d1, d2) = ts, ds
    denom = (t0 - t1) * (t0 - t2) * (t1 - t2)
    a = (t2 * (d1 - d0) + t1 * (d0 - d2) + t0 * (d2 - d1)) / denom
    b = (t2 * t2 * (d0 - d1) + t1 * t1 * (d2 - d0) + t0 * t0 * (d1 - d2)) / denom
    if a <= 0:
        return t1
    return min(max(-b / (2 * a), t0), t2)


def _returns(times, d2, start_time, rec_tol2):
    """Indices of local minima of ``d2`` below ``rec_tol2`` at or after ``start_time``."""
    inner = np.arange(1, len(d2) - 1)
    is_min = (d2[inner] < d2[inner - 1]) & (d2[inner] <= d2[inner + 1])
    cand = inner[is_min & (d2[inner] < rec_tol2) & (times[inner] >= start_time)]
    return cand


def estimate_period(tail: Trajectory, rec_tol: Optional[float] = None,
                    min_period: Optional[float] = None,
                    repeat_tol: float = 0.1) -> Optional[float]:
    """Closest-return period of a tail segment, or ``None``.

    ``rec_tol`` defaults to 1% of the tail's bounding-box diagonal and
    ``min_period`` to 20 sample spacings.  A period is accepted only if a
    second return follows and the two return intervals agree within
    ``repeat_tol``.
    """
    times = tail.times
    states = tail.states
    if len(times) < 5:
        return None
    dt = float(np.median(np.diff(times)))
    diameter = float(np.linalg.norm(states.max(axis=0) - states.min(axis=0)))
    if diameter == 0.0:
        return None
    rec_tol = 1e-2 * diameter if rec_tol is None else rec_tol
    min_period = 20 * dt if min_period is None else min_period
    if min_period <= 0:
        raise ValidationError("min_period must be positive")
    ref = states[0]
    d2 = np.einsum("ij,ij->i", states - ref, states - ref)
    t_ref = times[0]
    first = _returns(times, d2, t_ref + min_period, rec_tol * rec_tol)
    if first.size == 0:
        return None
    i1 = int(first[0])
    t1 = _parabola_vertex(times[i1 - 1:i1 + 2], d2[i1 - 1:i1 + 2])
    second = first[times[first] >= t1 + min_period]
    if second.size == 0:
        return None
    i2 = int(second[0])
    t2 = _parabola_vertex(times[i2 - 1:i2 + 2], d2[i2 - 1:i2 + 2])
    p1 = t1 - t_ref
    p2 = t2 - t1
    if abs(p2 - p1) > repeat_tol * p1:
        return None
    return float(p1)


# -- omega-limit classification -------------------------------------------------

def _tail_min_eq_distance(tail_states, equilibria):
    best = math.inf
    best_eq = None
    for eq in equilibria:
        d = float(np.sqrt(np.min(np.einsum("ij,ij->i", tail_states - eq, tail_states - eq))))
        if d < best:
            best, best_eq = d, eq
    return best, best_eq


def _decide(tail: Trajectory, equilibria, params: ClassifierParams) -> OmegaClass:
    states = tail.states
    diameter = float(np.linalg.norm(states.max(axis=0) - states.min(axis=0)))
    eqs = [np.asarray(e, dtype=float) for e in equilibria]
    if diameter < params.eps_conv and eqs:
        end = states[-1]
        dists = [float(np.linalg.norm(end - e)) for e in eqs]
        k = int(np.argmin(dists))
        eq = eqs[k]
        within = float(np.sqrt(np.max(np.einsum("ij,ij->i", states - eq, states - eq))))
        mid = states[len(states) // 2]
        # moving away from the equilibrium at the end of the window: saddle passage
        escaping = np.linalg.norm(end - eq) > np.linalg.norm(mid - eq)
        if within < params.eps_conv and not escaping:
            return OmegaClass(OmegaKind.CONVERGES, point=eq.copy())
    dmin, near = _tail_min_eq_distance(states, eqs)
    if dmin < params.eps_eq:
        return OmegaClass(OmegaKind.CONTAINS_EQUILIBRIUM, point=near.copy())
    period = estimate_period(tail, rec_tol=params.rec_tol_rel * diameter if diameter > 0 else None,
                             min_period=params.min_period, repeat_tol=params.repeat_tol)
    if period is not None:
        return OmegaClass(OmegaKind.PERIODIC, period=period)
    return OmegaClass(OmegaKind.UNRESOLVED)


def _extend(model: VectorFieldModel, traj: Trajectory, duration: float,
            cfg: IntegratorConfig) -> Trajectory:
    t0 = traj.t_end
    times, states = run_augmented(model, traj.final, t0, t0 + duration, 0, cfg)
    return Trajectory(np.concatenate([traj.times, times[1:]]),
                      np.concatenate([traj.states, states[1:]]), traj.x0)


def _classify_omega(model, traj, equilibria, params):
    if traj.duration < params.horizon - 1e-9:
        raise HorizonTooShort(
            f"trajectory covers {traj.duration:g} time units; need {params.horizon:g}")
    tail_window = params.tail_window
    tail = traj.window(traj.t_end - tail_window)
    omega = _decide(tail, equilibria, params)
    if omega.kind is OmegaKind.UNRESOLVED and params.extend_once and model is not None:
        try:
            traj = _extend(model, traj, traj.duration, params.integrator)
        except NumericalFailure as exc:
            return OmegaClass(OmegaKind.UNRESOLVED, note=f"extension failed: {exc}"), traj, tail
        tail_window *= 2
        tail = traj.window(traj.t_end - tail_window)
        omega = _decide(tail, equilibria, params)
    return omega, traj, tail


def classify_omega(model: Optional[VectorFieldModel], traj: Trajectory, equilibria,
                   cone: QuadraticCone, params: ClassifierParams = ClassifierParams()) -> OmegaClass:
    """Classify the omega-limit set from the tail of ``traj``.

    Decision order: convergence to a known equilibrium, passage within
    ``eps_eq`` of one, periodic return, unresolved.  An unresolved result
    triggers one re-integration that doubles the horizon (requires ``model``).
    ``cone`` is accepted for interface symmetry; any quadratic cone is
    complemented, which the periodic reading of the result assumes.
    """
    del cone
    return _classify_omega(model, traj, equilibria, params)[0]


def classify_orbit(model: VectorFieldModel, cone: QuadraticCone, x0, equilibria,
                   params: ClassifierParams = ClassifierParams(), box=None,
                   kernels=None) -> OrbitRecord:
    """Integrate ``x0`` and build its :class:`OrbitRecord`."""
    x0 = np.asarray(x0, dtype=float)
    delta_sep = params.resolved_delta_sep(box)
    cfg = params.integrator
    try:
        times, states = run_augmented(model, x0, 0.0, params.horizon, 0, cfg, kernels=kernels)
    except NumericalFailure as exc:
        times, states = exc.partial
        traj = Trajectory(times, states, x0)
        witness = detect_pseudo_ordered(traj, cone, delta_sep, params.order_tol,
                                        params.max_scan_points, kernels)
        return OrbitRecord(
            x0=x0, pseudo_order_witness=witness,
            omega_class=OmegaClass(OmegaKind.UNRESOLVED, note=f"{type(exc).__name__}: {exc}"),
            in_Q=witness is not None, in_S=False,
            horizon_used=float(exc.t_reached if exc.t_reached is not None else times[-1]))
    traj = Trajectory(times, states, x0)
    omega, traj, tail = _classify_omega(model, traj, equilibria, params)
    witness = detect_pseudo_ordered(traj, cone, delta_sep, params.order_tol,
                                    params.max_scan_points, kernels)
    dmin, _ = _tail_min_eq_distance(tail.states, [np.asarray(e, float) for e in equilibria])
    keep = max(1, math.ceil(len(tail.states) / TAIL_KEEP))
    return OrbitRecord(
        x0=x0,
        pseudo_order_witness=witness,
        omega_class=omega,
        in_Q=witness is not None,
        in_S=omega.kind is OmegaKind.CONVERGES,
        horizon_used=traj.duration,
        tail_min_eq_distance=dmin,
        tail_sample=tail.states[::keep].copy(),
    )
