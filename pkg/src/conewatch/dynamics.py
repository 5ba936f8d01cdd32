"""Flow and variational-flow integration, equilibria, dissipativity probe."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np

from conewatch import _backend, _pykernels
from conewatch.errors import BlowUp, StepFailure, ValidationError
from conewatch.models import VectorFieldModel


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = 0.5
    sample_dt: float = 0.01
    norm_cap: float = 1e6
    max_steps: int = 2_000_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.max_step <= 0:
            raise ValidationError("rel_tol, abs_tol and max_step must be positive")
        if self.norm_cap <= 0:
            raise ValidationError("norm_cap must be positive")

    def with_(self, **changes) -> "IntegratorConfig":
        return replace(self, **changes)


DEFAULT_CONFIG = IntegratorConfig()


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_i, hi_i]``."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_spec(cls, spec) -> "Box":
        if isinstance(spec, Box):
            return spec
        arr = np.asarray(spec, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValidationError("box must be a list of [lo, hi] pairs")
        if np.any(arr[:, 1] <= arr[:, 0]):
            raise ValidationError("box must be nondegenerate (lo < hi on every axis)")
        return cls(arr[:, 0].copy(), arr[:, 1].copy())

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Box":
        return cls.from_spec([[lo, hi]] * dim)

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi - self.lo))

    def sample(self, rng: np.random.Generator, m: int) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.random((m, self.dim))

    def contains(self, x, inflate: float = 0.0) -> bool:
        pad = inflate * (self.hi - self.lo)
        x = np.asarray(x)
        return bool(np.all(x >= self.lo - pad) and np.all(x <= self.hi + pad))

    def to_spec(self) -> list:
        return [[float(a), float(b)] for a, b in zip(self.lo, self.hi)]


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    x0: np.ndarray

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def window(self, t_from: float, t_to: float | None = None) -> "Trajectory":
        mask = self.times >= t_from - 1e-12
        if t_to is not None:
            mask &= self.times <= t_to + 1e-12
        idx = np.nonzero(mask)[0]
        return Trajectory(self.times[idx], self.states[idx], self.states[idx[0]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t"] + [f"x{i + 1}" for i in range(self.states.shape[1])])
        for t, row in zip(self.times, self.states):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass(frozen=True, eq=False)
class FundamentalMatrixPath:
    times: np.ndarray
    matrices: np.ndarray  # (len(times), n, n)

    @property
    def final(self) -> np.ndarray:
        return self.matrices[-1]


def _python_rhs(model: VectorFieldModel, p: int):
    n = model.dim
    if p == 0:
        return lambda t, y: model.F(y)

    def rhs(t, y):
        out = np.empty_like(y)
        x = y[:n]
        out[:n] = model.F(x)
        out[n:] = (model.DF(x) @ y[n:].reshape(n, p)).ravel()
        return out
    return rhs


def run_augmented(model: VectorFieldModel, y0, t0: float, t1: float, p: int,
                  cfg: IntegratorConfig, sample_dt: float | None = None,
                  kernels=None):
    """Integrate ``[x, vec(M)]`` (``M`` is ``n x p``) from ``t0`` to ``t1``.

    ``t1 < t0`` integrates backward.  Raises :class:`BlowUp` or
    :class:`StepFailure`; the exception carries ``partial`` (times, states).
    """
    kernels = kernels or _backend.kernels
    dt = cfg.sample_dt if sample_dt is None else sample_dt
    y0 = np.ascontiguousarray(y0, dtype=float)
    args = (t0, t1, dt, cfg.rel_tol, cfg.abs_tol, cfg.max_step, cfg.norm_cap, cfg.max_steps)
    if model.native is not None:
        s = model.native
        times, states, status, t_reached = kernels.integrate_native(
            s.kind, s.exps, s.coefs, s.params, model.dim, p, y0, *args)
    else:
        times, states, status, t_reached = _pykernels.dopri5(
            _python_rhs(model, p), y0, *args, model.dim)
    if status == _pykernels.STATUS_OK:
        return times, states
    if status == _pykernels.STATUS_BLOWUP:
        exc = BlowUp(f"{model.name}: state norm exceeded {cfg.norm_cap:g} at t={t_reached:.6g}",
                     t_reached)
    elif status == _pykernels.STATUS_MAX_STEPS:
        exc = StepFailure(f"{model.name}: exceeded {cfg.max_steps} steps at t={t_reached:.6g}",
                          t_reached)
    else:
        exc = StepFailure(f"{model.name}: step size underflow at t={t_reached:.6g}", t_reached)
    exc.partial = (times, states)
    raise exc


def integrate(model: VectorFieldModel, x0, t_end: float,
              cfg: IntegratorConfig = DEFAULT_CONFIG, t0: float = 0.0) -> Trajectory:
    """Trajectory of ``x0`` sampled every ``cfg.sample_dt`` up to ``t_end``."""
    if t_end <= t0:
        raise ValidationError("t_end must exceed the start time")
    x0 = np.asarray(x0, dtype=float)
    times, states = run_augmented(model, x0, t0, t_end, 0, cfg)
    return Trajectory(times, states, x0)


def integrate_variational(model: VectorFieldModel, x0, t_end: float,
                          cfg: IntegratorConfig = DEFAULT_CONFIG):
    """Co-integrate the flow and ``M' = DF(x(t)) M``, ``M(0) = I``."""
    x0 = np.asarray(x0, dtype=float)
    n = model.dim
    if t_end == 0:
        return (Trajectory(np.zeros(1), x0[None, :], x0),
                FundamentalMatrixPath(np.zeros(1), np.eye(n)[None]))
    if t_end < 0:
        raise ValidationError("t_end must be non-negative")
    y0 = np.concatenate([x0, np.eye(n).ravel()])
    times, states = run_augmented(model, y0, 0.0, t_end, n, cfg)
    traj = Trajectory(times, states[:, :n].copy(), x0)
    mats = states[:, n:].reshape(-1, n, n).copy()
    return traj, FundamentalMatrixPath(times, mats)


def propagate_frame(model: VectorFieldModel, x0, frame, duration: float,
                    cfg: IntegratorConfig = DEFAULT_CONFIG, kernels=None):
    """Push ``frame`` (``n x p``) through the cocycle for ``duration`` (may be < 0)."""
    x0 = np.asarray(x0, dtype=float)
    frame = np.asarray(frame, dtype=float)
    n, p = frame.shape
    y0 = np.concatenate([x0, frame.ravel()])
    _, states = run_augmented(model, y0, 0.0, duration, p, cfg, sample_dt=0.0, kernels=kernels)
    end = states[-1]
    return end[:n].copy(), end[n:].reshape(n, p).copy()


def find_equilibria(model: VectorFieldModel, box, grid_per_axis: int = 5,
                    newton_tol: float = 1e-10, max_iter: int = 60,
                    inflate: float = 1e-3) -> list:
    """Roots of ``F`` found by damped Newton from a uniform grid of seeds."""
    box = Box.from_spec(box)
    if grid_per_axis < 2:
        raise ValidationError("grid_per_axis must be at least 2")
    axes = [np.linspace(a, b, grid_per_axis) for a, b in zip(box.lo, box.hi)]
    seeds = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, box.dim)
    roots: list[np.ndarray] = []
    for seed in seeds:
        x = _newton(model, seed, newton_tol, max_iter)
        if x is None or not box.contains(x, inflate):
            continue
        if any(np.linalg.norm(x - r) <= 1e-6 * (1 + np.linalg.norm(r)) for r in roots):
            continue
        roots.append(x)
    roots.sort(key=lambda r: tuple(np.round(r, 9)))
    return roots


def _newton(model, x, tol, max_iter):
    x = np.array(x, dtype=float)
    fx = model.F(x)
    norm = np.linalg.norm(fx)
    for _ in range(max_iter):
        if norm <= tol * 1e-2:
            break
        try:
            step = np.linalg.solve(model.DF(x), -fx)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(model.DF(x), -fx, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            trial = x + lam * step
            ft = model.F(trial)
            nt = np.linalg.norm(ft)
            if np.isfinite(nt) and nt < norm:
                break
            lam *= 0.5
        else:
            break
        x, fx, norm = trial, ft, nt
    if not np.isfinite(norm) or norm > tol:
        return None
    # snap signed zeros and tiny residue so duplicates compare cleanly
    x[np.abs(x) < 1e-14] = 0.0
    return x


@dataclass(frozen=True)
class DissipativityReport:
    bounded: bool
    max_norm: float
    initial_max_norm: float
    blowups: int
    note: str = ("heuristic: finite sample of starts over a finite horizon; "
                 "does not prove dissipativity")


def dissipativity_probe(model: VectorFieldModel, box, horizon: float, m: int = 64,
                        rng_seed: int = 0,
                        cfg: IntegratorConfig = DEFAULT_CONFIG) -> DissipativityReport:
    """Integrate ``m`` random starts and report whether all stay below the norm cap."""
    if horizon <= 0:
        raise ValidationError("horizon must be positive")
    box = Box.from_spec(box)
    rng = np.random.default_rng(rng_seed)
    starts = box.sample(rng, m)
    cfg = cfg.with_(sample_dt=horizon / 200)
    max_norm = 0.0
    blowups = 0
    for x0 in starts:
        try:
            traj = integrate(model, x0, horizon, cfg)
        except (BlowUp, StepFailure):
            blowups += 1
            continue
        tail = traj.window(0.5 * horizon)
        max_norm = max(max_norm, float(np.linalg.norm(tail.states, axis=1).max()))
    initial = float(np.linalg.norm(starts, axis=1).max())
    bounded = blowups == 0 and max_norm < cfg.norm_cap
    return DissipativityReport(bounded, max_norm if blowups == 0 else math.inf, initial, blowups)
