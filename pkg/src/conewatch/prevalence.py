"""Monte Carlo sweeps over a box: fraction of pseudo-ordered or convergent orbits.

Every sample point gets its own seed derived from ``(master_seed, index)`` so
that a sweep gives identical records whatever the worker count or the order
in which chunks finish.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import multiprocessing as mp
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from conewatch.classifier import (ClassifierParams, OmegaKind, OrbitRecord, classify_orbit,
                                  csv_header, csv_row)
from conewatch.cone import QuadraticCone, probe_neighborhood
from conewatch.dynamics import Box, DissipativityReport, dissipativity_probe, find_equilibria
from conewatch.errors import EmptySweep, ValidationError
from conewatch.models import VectorFieldModel

log = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finaliser."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def point_seed(master_seed: int, index: int) -> int:
    """64-bit seed of sample ``index``; any subset of a sweep can be recomputed alone."""
    return mix64(mix64(master_seed) + (index + 1) * GOLDEN64)


def sample_point(box: Box, master_seed: int, index: int) -> np.ndarray:
    rng = np.random.default_rng(point_seed(master_seed, index))
    return box.lo + (box.hi - box.lo) * rng.random(box.dim)


@dataclass(frozen=True)
class SweepConfig:
    box: Box
    n_points: int
    master_seed: int = 0
    params: ClassifierParams = ClassifierParams()
    workers: int = 1
    dissipativity_samples: int = 32

    def __post_init__(self):
        object.__setattr__(self, "box", Box.from_spec(self.box))
        if self.n_points < 0:
            raise ValidationError("n_points must be non-negative")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")

    @property
    def horizon(self) -> float:
        return self.params.horizon


@dataclass(eq=False)
class SweepReport:
    model_name: str
    master_seed: int
    n_points: int
    counts: dict
    n_in_Q: int
    n_in_S: int
    n_in_Q_union_S: int
    fraction_Q_union_S: float
    pb_violations: list
    records: list
    equilibria: list
    dissipativity: Optional[DissipativityReport] = None
    warnings: list = field(default_factory=list)

    @property
    def unresolved_fraction(self) -> float:
        return self.counts.get(OmegaKind.UNRESOLVED.value, 0) / self.n_points

    def periodic_fraction(self, period: Optional[float] = None, tol: float = 1e-2) -> float:
        hits = 0
        for rec in self.records:
            oc = rec.omega_class
            if oc.kind is OmegaKind.PERIODIC and (period is None or abs(oc.period - period) <= tol):
                hits += 1
        return hits / self.n_points

    def summary(self) -> dict:
        return {
            "model": self.model_name,
            "master_seed": self.master_seed,
            "n_points": self.n_points,
            "counts": dict(self.counts),
            "n_in_Q": self.n_in_Q,
            "n_in_S": self.n_in_S,
            "n_in_Q_union_S": self.n_in_Q_union_S,
            "fraction_Q_union_S": self.fraction_Q_union_S,
            "pb_violations": [rec.index for rec in self.pb_violations],
            "unresolved": [rec.index for rec in self.records
                           if rec.omega_class.kind is OmegaKind.UNRESOLVED],
            "equilibria": [[float(v) for v in e] for e in self.equilibria],
            "dissipativity": None if self.dissipativity is None else {
                "bounded": self.dissipativity.bounded,
                "max_norm": _finite_or_none(self.dissipativity.max_norm),
                "blowups": self.dissipativity.blowups,
                "note": self.dissipativity.note,
            },
            "warnings": list(self.warnings),
        }

    def records_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        dim = len(self.records[0].x0) if self.records else 0
        writer.writerow(csv_header(dim))
        for rec in self.records:
            writer.writerow(csv_row(rec))
        return buf.getvalue()


def _finite_or_none(v: float):
    return float(v) if math.isfinite(v) else None


@dataclass(frozen=True)
class PbResult:
    eligible: int
    periodic: int
    violations: list

    def to_dict(self) -> dict:
        return {"eligible": self.eligible, "periodic": self.periodic,
                "violations": [rec.index for rec in self.violations]}


def pb_check(report: SweepReport, equilibria=None, eps_eq: Optional[float] = None,
             params: ClassifierParams = ClassifierParams()) -> PbResult:
    """Count records whose omega-limit avoids equilibria and check they are periodic.

    A record is eligible when its integration finished and the tail stayed at
    least ``eps_eq`` away from every equilibrium.  Distances are recomputed
    from the stored tail sample when ``equilibria`` differs from the sweep's.
    """
    eps = params.eps_eq if eps_eq is None else eps_eq
    eqs = report.equilibria if equilibria is None else [np.asarray(e, float) for e in equilibria]
    eligible = periodic = 0
    violations = []
    for rec in report.records:
        if rec.tail_sample is None:
            continue  # integration failed; tagged Unresolved instead
        if equilibria is None:
            dmin = rec.tail_min_eq_distance
        elif eqs:
            dmin = min(float(np.linalg.norm(rec.tail_sample - e, axis=1).min()) for e in eqs)
        else:
            dmin = math.inf
        if dmin < eps:
            continue
        eligible += 1
        if rec.omega_class.kind is OmegaKind.PERIODIC:
            periodic += 1
        else:
            violations.append(rec)
    return PbResult(eligible, periodic, violations)


# -- worker plumbing ----------------------------------------------------------

_JOB = None


def _init_worker(job):
    global _JOB
    _JOB = job


def _run_chunk(bounds):
    model, cone, cfg, equilibria = _JOB
    return [_classify_index(model, cone, cfg, equilibria, i) for i in range(*bounds)]


def _classify_index(model, cone, cfg: SweepConfig, equilibria, index: int) -> OrbitRecord:
    x0 = sample_point(cfg.box, cfg.master_seed, index)
    rec = classify_orbit(model, cone, x0, equilibria, params=cfg.params, box=cfg.box)
    rec.index = index
    return rec


def _chunks(n: int, workers: int):
    size = max(1, math.ceil(n / (4 * workers)))
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def _pool_context():
    try:
        return mp.get_context("fork")
    except ValueError:
        return None


def _run_records(model, cone, cfg: SweepConfig, equilibria) -> list:
    job = (model, cone, cfg, equilibria)
    if cfg.workers == 1 or cfg.n_points == 1:
        _init_worker(job)
        return _run_chunk((0, cfg.n_points))
    records = []
    with ProcessPoolExecutor(max_workers=cfg.workers, mp_context=_pool_context(),
                             initializer=_init_worker, initargs=(job,)) as pool:
        for part in pool.map(_run_chunk, _chunks(cfg.n_points, cfg.workers)):
            records.extend(part)
    return records


def sweep(model: VectorFieldModel, cone: QuadraticCone, cfg: SweepConfig,
          equilibria=None) -> SweepReport:
    """Classify ``cfg.n_points`` uniform samples of ``cfg.box`` and aggregate.

    Unresolved records count against the fraction of ``Q ∪ S``.
    """
    if cfg.n_points == 0:
        raise EmptySweep("n_points must be at least 1")
    box = cfg.box
    if box.dim != model.dim:
        raise ValidationError(f"box has dimension {box.dim}, model {model.dim}")
    warnings = []
    diss = dissipativity_probe(model, box, cfg.horizon, m=cfg.dissipativity_samples,
                               rng_seed=cfg.master_seed, cfg=cfg.params.integrator)
    if not diss.bounded:
        msg = (f"dissipativity probe found unbounded behaviour ({diss.blowups} blow-ups); "
               "proceeding, failed integrations are tagged Unresolved")
        log.warning(msg)
        warnings.append(msg)
    if equilibria is None:
        equilibria = find_equilibria(model, box)
    equilibria = [np.asarray(e, float) for e in equilibria]

    records = sorted(_run_records(model, cone, cfg, equilibria), key=lambda r: r.index)
    counts = Counter({kind.value: 0 for kind in OmegaKind})
    counts.update(rec.omega_class.kind.value for rec in records)
    n_q = sum(rec.in_Q for rec in records)
    n_s = sum(rec.in_S for rec in records)
    n_qs = sum(rec.in_Q or rec.in_S for rec in records)
    report = SweepReport(
        model_name=model.name, master_seed=cfg.master_seed, n_points=cfg.n_points,
        counts=dict(counts), n_in_Q=n_q, n_in_S=n_s, n_in_Q_union_S=n_qs,
        fraction_Q_union_S=n_qs / cfg.n_points, pb_violations=[], records=records,
        equilibria=equilibria, dissipativity=diss, warnings=warnings,
    )
    report.pb_violations = pb_check(report, params=cfg.params).violations
    return report


def output_stem(model_name: str, master_seed: int) -> str:
    return f"sweep_{model_name}_seed{master_seed}"


def write_sweep(report: SweepReport, out_dir) -> tuple:
    """Write ``<stem>.json`` and ``<stem>.csv``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = output_stem(report.model_name, report.master_seed)
    json_path = out / f"{stem}.json"
    csv_path = out / f"{stem}.csv"
    json_path.write_text(json.dumps(report.summary(), indent=2) + "\n", encoding="utf-8")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report.records_csv())
    return json_path, csv_path


# -- probe scan ---------------------------------------------------------------

@dataclass(frozen=True)
class ProbeScanResult:
    fraction_in_Q: float
    per_point: list
    note: str = ("diagnostic only: a positive fraction cannot certify that the centre "
                 "lies outside Q or S")

    def to_dict(self) -> dict:
        return {
            "fraction_in_Q": self.fraction_in_Q,
            "note": self.note,
            "per_point": [
                {"x0": [float(v) for v in rec.x0], "in_Q": rec.in_Q,
                 "omega_class": rec.omega_class.kind.value}
                for rec in self.per_point
            ],
        }


def probe_scan(model: VectorFieldModel, cone: QuadraticCone, x, eps: float, m: int,
               params: ClassifierParams = ClassifierParams(), rng_seed: int = 0,
               equilibria=None, box=None) -> ProbeScanResult:
    """Classify ``m`` points of the probe disc of radius ``eps`` through ``x``."""
    if eps <= 0 or m < 1:
        raise ValidationError("probe_scan needs eps > 0 and m >= 1")
    x = np.asarray(x, dtype=float)
    pts = probe_neighborhood(cone, x, eps, m, rng_seed)
    box = None if box is None else Box.from_spec(box)
    if equilibria is None:
        equilibria = find_equilibria(model, box) if box is not None else []
    recs = []
    for i, p in enumerate(pts):
        rec = classify_orbit(model, cone, p, equilibria, params=params, box=box)
        rec.index = i
        recs.append(rec)
    return ProbeScanResult(sum(r.in_Q for r in recs) / len(recs), recs)


def default_workers() -> int:
    env = os.environ.get("CONEWATCH_JOBS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
