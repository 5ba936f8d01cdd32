"""Lyapunov exponents, dominant/complementary bundles, separation checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from conewatch.cone import QuadraticCone, classify_many
from conewatch.dynamics import DEFAULT_CONFIG, IntegratorConfig, propagate_frame, run_augmented
from conewatch.errors import DegenerateFrame, GapTooSmall, NumericalFailure, ValidationError
from conewatch.models import VectorFieldModel


@dataclass(frozen=True)
class SpectralConfig:
    horizon: float = 100.0
    qr_interval: float = 0.5
    transient_fraction: float = 0.1
    t_warm: float = 20.0
    min_gap: float = 1e-2
    rng_seed: int = 0
    backward_norm_cap: float = 1e12
    integrator: IntegratorConfig = DEFAULT_CONFIG

    def with_(self, **changes) -> "SpectralConfig":
        return replace(self, **changes)


DEFAULT_SPECTRAL = SpectralConfig()


@dataclass(frozen=True)
class SubspaceFrame:
    base_point: np.ndarray
    frame: np.ndarray  # n x j, orthonormal columns

    @property
    def dim(self) -> int:
        return self.frame.shape[1]


@dataclass(frozen=True)
class LyapunovSpectrum:
    exponents: np.ndarray
    convergence: float  # |last-quarter average - full average|, max over exponents
    horizon: float
    averaging_time: float


@dataclass(frozen=True)
class SeparationEstimate:
    exponents: np.ndarray
    lambda_k: float
    gap: float
    gamma_est: float
    E: SubspaceFrame
    F: SubspaceFrame
    horizon: float
    convergence: float = math.nan
    warmup_used: float = math.nan

    def to_dict(self) -> dict:
        return {
            "exponents": [float(v) for v in self.exponents],
            "lambda_k": self.lambda_k,
            "gap": self.gap,
            "gamma_est": self.gamma_est,
            "horizon": self.horizon,
            "convergence": self.convergence,
            "warmup_used": self.warmup_used,
            "base_point": [float(v) for v in self.E.base_point],
            "E": [[float(v) for v in col] for col in self.E.frame.T],
            "F": [[float(v) for v in col] for col in self.F.frame.T],
        }


@dataclass(frozen=True)
class SeparationReport:
    E_in_interior: bool
    F_misses_cone: bool
    gap: float
    worst_E_ratio: float = field(default=math.nan)  # max form/|v|^2 over E samples
    worst_F_ratio: float = field(default=math.nan)  # min form/|w|^2 over F samples


def random_frame(n: int, j: int, rng_seed: int) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    q, r = np.linalg.qr(rng.standard_normal((n, j)))
    return q * np.sign(np.diag(r))


def _qr_positive(w: np.ndarray):
    q, r = np.linalg.qr(w)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return q * signs, (r.T * signs).T


def lyapunov_spectrum(model: VectorFieldModel, x0, count: int, horizon: float = 100.0,
                      qr_interval: float = 0.5, cfg: IntegratorConfig = DEFAULT_CONFIG,
                      transient_fraction: float = 0.1, rng_seed: int = 0,
                      kernels=None) -> LyapunovSpectrum:
    """First ``count`` Lyapunov exponents by QR re-orthonormalisation.

    A random orthonormal ``n x count`` frame is pushed through the variational
    flow; every ``qr_interval`` it is re-orthonormalised and the logs of the
    diagonal of ``R`` are accumulated after the first ``transient_fraction``
    of the horizon.
    """
    n = model.dim
    if not 1 <= count <= n:
        raise ValidationError(f"count must be between 1 and {n}")
    if qr_interval <= 0 or horizon < 10 * qr_interval:
        raise ValidationError("horizon must be at least 10 * qr_interval")
    steps = int(round(horizon / qr_interval))
    skip = int(round(transient_fraction * steps))
    x = np.asarray(x0, dtype=float)
    w = random_frame(n, count, rng_seed)
    logs = np.zeros((steps, count))
    for s in range(steps):
        x, w = propagate_frame(model, x, w, qr_interval, cfg, kernels=kernels)
        w, r = _qr_positive(w)
        diag = np.abs(np.diag(r))
        if not np.all(np.isfinite(diag)) or np.any(diag == 0.0):
            raise DegenerateFrame(f"frame lost rank at t={(s + 1) * qr_interval:g}")
        logs[s] = np.log(diag)
    used = logs[skip:]
    avg_time = len(used) * qr_interval
    exps = used.sum(axis=0) / avg_time
    quarter = max(1, len(used) // 4)
    late = used[-quarter:].sum(axis=0) / (quarter * qr_interval)
    order = np.argsort(-exps, kind="stable")
    return LyapunovSpectrum(
        exponents=exps[order],
        convergence=float(np.max(np.abs(late - exps))),
        horizon=steps * qr_interval,
        averaging_time=avg_time,
    )


def k_lyapunov_exponent(model: VectorFieldModel, x0, k: int, horizon: float = 100.0,
                        cfg: IntegratorConfig = DEFAULT_CONFIG, qr_interval: float = 0.5,
                        rng_seed: int = 0) -> float:
    """Growth rate of the infimum norm on the dominant k-frame (the k-th exponent)."""
    lyap = lyapunov_spectrum(model, x0, k, horizon, qr_interval, cfg, rng_seed=rng_seed)
    return float(lyap.exponents[k - 1])


def trace_average(model: VectorFieldModel, x0, horizon: float = 100.0,
                  transient_fraction: float = 0.1,
                  cfg: IntegratorConfig = DEFAULT_CONFIG) -> float:
    """Time average of ``trace DF`` along the orbit over the post-transient window."""
    times, states = run_augmented(model, np.asarray(x0, float), 0.0, horizon, 0, cfg)
    traces = np.array([np.trace(model.DF(x)) for x in states])
    mask = times >= transient_fraction * horizon - 1e-12
    t, tr = times[mask], traces[mask]
    return float(np.sum(0.5 * (tr[1:] + tr[:-1]) * np.diff(t)) / (t[-1] - t[0]))


def _warm_config(cfg: SpectralConfig) -> IntegratorConfig:
    return cfg.integrator.with_(norm_cap=max(cfg.backward_norm_cap, cfg.integrator.norm_cap))


def _backward_orbit(model, x0, cfg: SpectralConfig):
    back_cfg = _warm_config(cfg)
    try:
        times, states = run_augmented(model, x0, 0.0, -cfg.t_warm, 0, back_cfg,
                                      sample_dt=cfg.qr_interval)
    except NumericalFailure as exc:
        # keep the reachable part of the past
        times, states = exc.partial
    return times, states


def dominant_bundle(model: VectorFieldModel, x0, k: int,
                    cfg: SpectralConfig = DEFAULT_SPECTRAL):
    """Frame of ``E_x0``: a random k-frame pushed from the past to ``x0``.

    Returns ``(SubspaceFrame, warmup_used)``; the warm-up is shortened when the
    backward orbit leaves the norm cap.
    """
    x0 = np.asarray(x0, dtype=float)
    n = model.dim
    times, states = _backward_orbit(model, x0, cfg)
    w = random_frame(n, k, cfg.rng_seed + 1)
    push_cfg = _warm_config(cfg)
    # walk forward along the stored backward orbit, oldest point first
    for idx in range(len(times) - 1, 0, -1):
        dt = times[idx - 1] - times[idx]
        _, w = propagate_frame(model, states[idx], w, dt, push_cfg)
        w, _ = _qr_positive(w)
    return SubspaceFrame(x0.copy(), w), float(-times[-1])


def complementary_bundle(model: VectorFieldModel, x0, k: int,
                         cfg: SpectralConfig = DEFAULT_SPECTRAL) -> SubspaceFrame:
    """Frame of ``F_x0`` as the orthogonal complement of the adjoint-dominant k-space.

    The forward cocycle over ``t_warm`` is factored as ``Q_N R_N ... R_1``; a
    random k-frame at the end point is pulled back by the transposes with
    re-orthonormalisation, converging to the annihilator of ``F_x0``.
    """
    x0 = np.asarray(x0, dtype=float)
    n = model.dim
    steps = max(1, int(round(cfg.t_warm / cfg.qr_interval)))
    x = x0
    w = np.eye(n)
    rs = []
    for _ in range(steps):
        x, w = propagate_frame(model, x, w, cfg.qr_interval, cfg.integrator)
        w, r = _qr_positive(w)
        rs.append(r)
    y = w.T @ random_frame(n, k, cfg.rng_seed + 2)
    y, _ = _qr_positive(y)
    for r in reversed(rs):
        y, _ = _qr_positive(r.T @ y)
    full, _ = np.linalg.qr(y, mode="complete")
    return SubspaceFrame(x0.copy(), full[:, k:].copy())


def estimate_bundles(model: VectorFieldModel, x0, k: int,
                     cfg: SpectralConfig = DEFAULT_SPECTRAL):
    """``(E, F)`` frames at ``x0``; raises :class:`GapTooSmall` without a clear gap."""
    est = separation_estimate(model, x0, k, cfg)
    return est.E, est.F


def separation_estimate(model: VectorFieldModel, x0, k: int,
                        cfg: SpectralConfig = DEFAULT_SPECTRAL) -> SeparationEstimate:
    n = model.dim
    x0 = np.asarray(x0, dtype=float)
    if not 1 <= k <= n:
        raise ValidationError(f"k must be between 1 and {n}")
    if k == n:
        lyap = lyapunov_spectrum(model, x0, n, cfg.horizon, cfg.qr_interval, cfg.integrator,
                                 cfg.transient_fraction, cfg.rng_seed)
        return SeparationEstimate(
            exponents=lyap.exponents, lambda_k=float(lyap.exponents[-1]), gap=math.inf,
            gamma_est=0.0, E=SubspaceFrame(x0.copy(), np.eye(n)),
            F=SubspaceFrame(x0.copy(), np.zeros((n, 0))), horizon=lyap.horizon,
            convergence=lyap.convergence, warmup_used=0.0)
    lyap = lyapunov_spectrum(model, x0, k + 1, cfg.horizon, cfg.qr_interval, cfg.integrator,
                             cfg.transient_fraction, cfg.rng_seed)
    gap = float(lyap.exponents[k - 1] - lyap.exponents[k])
    if gap <= cfg.min_gap:
        raise GapTooSmall(f"gap {gap:.3g} between exponents {k} and {k + 1} "
                          f"is below min_gap={cfg.min_gap:g}")
    e_frame, warm = dominant_bundle(model, x0, k, cfg)
    f_frame = complementary_bundle(model, x0, k, cfg)
    return SeparationEstimate(
        exponents=lyap.exponents,
        lambda_k=float(lyap.exponents[k - 1]),
        gap=gap,
        gamma_est=math.exp(-gap),
        E=e_frame,
        F=f_frame,
        horizon=lyap.horizon,
        convergence=lyap.convergence,
        warmup_used=warm,
    )


def _span_samples(frame: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    coeffs = rng.standard_normal((m, frame.shape[1]))
    vecs = coeffs @ frame.T
    return vecs / np.linalg.norm(vecs, axis=1)[:, None]


def verify_separation(cone: QuadraticCone, estimate: SeparationEstimate, m_samples: int = 1000,
                      rng_seed: int = 0) -> SeparationReport:
    """Sample unit vectors of ``span(E)`` and ``span(F)`` and classify them."""
    rng = np.random.default_rng(rng_seed)
    ev = _span_samples(estimate.E.frame, m_samples, rng)
    codes_e, forms_e = classify_many(cone, ev)
    e_ok = bool(np.all(codes_e == -1))
    if estimate.F.dim == 0:
        return SeparationReport(e_ok, True, estimate.gap, float(forms_e.max()), math.nan)
    fv = _span_samples(estimate.F.frame, m_samples, rng)
    codes_f, forms_f = classify_many(cone, fv)
    return SeparationReport(e_ok, bool(np.all(codes_f == 1)), estimate.gap,
                            float(forms_e.max()), float(forms_f.min()))


def principal_angles(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Principal angles (radians, ascending) between the column spans of ``a`` and ``b``."""
    qa, _ = np.linalg.qr(a)
    qb, _ = np.linalg.qr(b)
    s = np.linalg.svd(qa.T @ qb, compute_uv=False)
    return np.sort(np.arccos(np.clip(s, -1.0, 1.0)))


def separation_ratios(model: VectorFieldModel, estimate: SeparationEstimate, times,
                      m_samples: int = 20, rng_seed: int = 0,
                      cfg: IntegratorConfig = DEFAULT_CONFIG) -> np.ndarray:
    """``max_w |M(t) w| / min_v |M(t) v|`` over sampled unit ``v`` in E, ``w`` in F."""
    rng = np.random.default_rng(rng_seed)
    ev = _span_samples(estimate.E.frame, m_samples, rng)
    fv = _span_samples(estimate.F.frame, m_samples, rng)
    basis = np.column_stack([ev.T, fv.T])
    log_norms = np.zeros(basis.shape[1])
    x = estimate.E.base_point
    t_prev = 0.0
    out = []
    for t in times:
        x, basis = propagate_frame(model, x, basis, t - t_prev, cfg)
        t_prev = t
        # columns evolve independently, so rescaling keeps them above abs_tol
        norms = np.linalg.norm(basis, axis=0)
        log_norms += np.log(norms)
        basis = basis / norms
        out.append(math.exp(log_norms[m_samples:].max() - log_norms[:m_samples].min()))
    return np.array(out)


def fit_separation_constant(model: VectorFieldModel, estimate: SeparationEstimate, times,
                            cfg: IntegratorConfig = DEFAULT_CONFIG):
    """Regression ``log ratio ≈ log M + t log gamma``; returns ``(M, gamma)``.

    A diagnostic only: finite data cannot certify the uniform constant.
    """
    times = np.asarray(times, dtype=float)
    ratios = separation_ratios(model, estimate, times, cfg=cfg)
    slope, intercept = np.polyfit(times, np.log(ratios), 1)
    return float(math.exp(intercept)), float(math.exp(slope))
