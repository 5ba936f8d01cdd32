"""``conewatch`` command line.

Each subcommand takes an optional JSON config file plus flags; flags win.  The
merged config is validated against the packaged JSON schema (unknown keys are
rejected) and every run writes ``<stem>.json`` (summary), ``<stem>.csv`` (tidy
data) and ``<stem>.log`` into the output directory.

Exit status: 0 success, 2 invalid input, 3 numerical failure, 4 an asserted
property did not hold.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from conewatch import _backend
from conewatch.classifier import (CONE_ASSUMPTION, ClassifierParams, classify_orbit, csv_header,
                                  csv_row)
from conewatch.cone import classify_point, cone_from_dict, cone_to_dict, probe_subspace
from conewatch.cooperativity import (empirical_monotonicity, fundamental_cone_invariance,
                                     grid_points, minimal_constant_lambda, smith_lmi_check)
from conewatch.dynamics import Box, IntegratorConfig, find_equilibria, integrate
from conewatch.errors import ConewatchError, GapTooSmall, NumericalFailure, ValidationError
from conewatch.models import model_from_dict
from conewatch.prevalence import SweepConfig, pb_check, probe_scan, sweep
from conewatch.spectral import (lyapunov_spectrum, separation_estimate, SpectralConfig,
                                trace_average, verify_separation)
from conewatch.zoo import get_model

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_ASSERT = 4

COMMANDS = ("cone-info", "check-coop", "classify", "sweep", "lyapunov", "probe")

log = logging.getLogger("conewatch")


def load_schema() -> dict:
    text = resources.files("conewatch").joinpath("schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _validator(defn: str):
    schema = load_schema()
    sub = {"$ref": f"#/$defs/{defn}", "$defs": schema["$defs"]}
    return jsonschema.Draft202012Validator(sub)


def validate_config(config: dict) -> None:
    """Raise :class:`ValidationError` naming the offending field."""
    _raise_first(_validator("run_config"), config, "config")


def validate_summary(summary: dict) -> None:
    _raise_first(_validator("summary"), summary, "summary")


def _raise_first(validator, doc, what):
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.path), list(e.path)))
    if errors:
        err = errors[0]
        where = "/".join(str(p) for p in err.path) or "<root>"
        raise ValidationError(f"{what} error at {where}: {err.message}")


# -- argument parsing ---------------------------------------------------------

def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"not valid JSON: {exc.msg}") from None


def _vector_arg(text: str):
    text = text.strip()
    if text.startswith("["):
        return _json_arg(text)
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _param_arg(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError("expected KEY=VALUE")
    try:
        return key.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {key!r} needs a number") from None


# flag dest -> config key
_FLAG_KEYS = {
    "model": "model", "cone": "cone", "lam": "lambda", "box": "box", "seed": "master_seed",
    "out": "output_dir", "jobs": "jobs", "n": "n_points", "x0": "x0", "horizon": "horizon",
    "grid": "grid_per_axis", "boundary_samples": "boundary_samples", "pairs": "pairs",
    "count": "count", "k": "k", "qr_interval": "qr_interval", "eps": "eps", "m": "m",
    "assert_theorem_A": "assert_theorem_A", "assert_theorem_B": "assert_theorem_B",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conewatch",
                                     description="Experiments for flows monotone with respect to "
                                                 "rank-k quadratic cones.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file; flags override it")
    common.add_argument("--model", help="zoo model name")
    common.add_argument("--param", type=_param_arg, action="append", dest="params",
                        metavar="KEY=VALUE", help="model parameter override (repeatable)")
    common.add_argument("--cone", type=_json_arg, help='cone as JSON, e.g. {"eigenvalues": [-1,-1,1]}')
    common.add_argument("--lambda", type=float, dest="lam", help="constant lambda for the LMI")
    common.add_argument("--box", type=_json_arg, help="box as JSON list of [lo, hi] pairs")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--horizon", type=float)
    common.add_argument("-q", "--quiet", action="store_true", help="no log output on stderr")

    p = sub.add_parser("cone-info", parents=[common], help="cone signature, probe, membership")
    p.add_argument("--x0", type=_vector_arg, help="point to classify against the cone")

    p = sub.add_parser("check-coop", parents=[common], help="cooperativity checks")
    p.add_argument("--grid", type=int, help="LMI grid points per axis (default 21)")
    p.add_argument("--boundary-samples", type=int, dest="boundary_samples")
    p.add_argument("--pairs", type=int, help="pairs for the empirical monotonicity test")

    p = sub.add_parser("classify", parents=[common], help="classify one orbit")
    p.add_argument("--x0", type=_vector_arg)

    p = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep over the box")
    p.add_argument("--n", type=int, help="number of sample points")
    p.add_argument("--jobs", type=int, help="worker processes (CONEWATCH_JOBS overrides)")
    p.add_argument("--assert-theorem-A", type=float, dest="assert_theorem_A", metavar="THRESHOLD",
                   help="exit 4 if the fraction of Q or S is below THRESHOLD")
    p.add_argument("--assert-theorem-B", action="store_const", const=True,
                   dest="assert_theorem_B",
                   help="exit 4 if an orbit avoiding equilibria is not periodic")

    p = sub.add_parser("lyapunov", parents=[common], help="Lyapunov spectrum and bundles")
    p.add_argument("--x0", type=_vector_arg)
    p.add_argument("--count", type=int, help="number of exponents (default: dimension)")
    p.add_argument("--k", type=int, help="also estimate the k-dominant splitting")
    p.add_argument("--qr-interval", type=float, dest="qr_interval")

    p = sub.add_parser("probe", parents=[common], help="probe-neighbourhood scan")
    p.add_argument("--x0", type=_vector_arg)
    p.add_argument("--eps", type=float)
    p.add_argument("--m", type=int)
    return parser


def merge_config(args: argparse.Namespace) -> dict:
    """Config file contents overridden by explicit flags.

    Without a config file, a zoo model's default box fills in a missing box.
    """
    config = {}
    if args.config is not None:
        try:
            config = json.loads(args.config.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(config, dict):
            raise ValidationError("config error at <root>: must be a JSON object")
    config["command"] = args.command
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            config[key] = value
    if args.params:
        config.setdefault("model_params", {}).update(dict(args.params))
    if args.config is None and isinstance(config.get("model"), str) and "box" not in config:
        try:
            config["box"] = get_model(config["model"], **config.get("model_params", {})) \
                .default_box.to_spec()
        except ConewatchError:
            pass  # reported after schema validation
    return config


def resolve_jobs(config: dict) -> int:
    env = os.environ.get("CONEWATCH_JOBS")
    if env:
        try:
            jobs = int(env)
        except ValueError:
            raise ValidationError(f"CONEWATCH_JOBS must be an integer, got {env!r}") from None
        if jobs < 1:
            raise ValidationError("CONEWATCH_JOBS must be at least 1")
        return jobs
    return config.get("jobs") or os.cpu_count() or 1


# -- experiment setup ---------------------------------------------------------

class Setup:
    """Model, cone, lambda and box resolved from a validated config."""

    def __init__(self, config: dict):
        self.config = config
        spec = config["model"]
        entry = None
        if isinstance(spec, str):
            entry = get_model(spec, **config.get("model_params", {}))
            self.model = entry.model
        else:
            if config.get("model_params"):
                raise ValidationError("model_params only applies to zoo models")
            self.model = model_from_dict(spec)
            if spec.get("kind", "builtin") == "builtin":
                entry = get_model(spec["name"], **(spec.get("coefficients") or {}))
        self.entry = entry
        if "cone" in config:
            self.cone = cone_from_dict(config["cone"])
        elif entry is not None:
            self.cone = entry.recommended_cone
        else:
            raise ValidationError("config error at cone: required for models outside the zoo")
        if self.cone.dim != self.model.dim:
            raise ValidationError(f"cone dimension {self.cone.dim} differs from model "
                                  f"dimension {self.model.dim}")
        if "lambda" in config:
            self.lam = float(config["lambda"])
        elif entry is not None and entry.recommended_lambda is not None:
            self.lam = entry.recommended_lambda
        else:
            self.lam = None
        if "box" in config:
            self.box = Box.from_spec(config["box"])
            if self.box.dim != self.model.dim:
                raise ValidationError(f"box dimension {self.box.dim} differs from model "
                                      f"dimension {self.model.dim}")
        else:
            self.box = entry.default_box if entry is not None else None
        self.seed = int(config.get("master_seed", 0))
        self.integrator = IntegratorConfig(**config.get("integrator", {}))
        self.classifier = ClassifierParams(integrator=self.integrator,
                                           **config.get("classifier", {}))
        if "x0" in config and len(config["x0"]) != self.model.dim:
            raise ValidationError(f"config error at x0: expected {self.model.dim} entries")

    @property
    def x0(self) -> np.ndarray:
        return np.asarray(self.config["x0"], dtype=float)


class Output:
    """Collects tidy CSV rows and named extra CSV files."""

    def __init__(self):
        self.header = None
        self.rows = []
        self.raw = None  # preformatted CSV text, used instead of header/rows
        self.extra = {}

    def table(self, header, rows):
        self.header = list(header)
        self.rows = [list(r) for r in rows]

    @property
    def has_data(self) -> bool:
        return self.raw is not None or self.header is not None

    def csv_text(self) -> str:
        if self.raw is not None:
            return self.raw
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if self.header is not None:
            writer.writerow(self.header)
        writer.writerows(self.rows)
        return buf.getvalue()


def _num(v) -> str:
    return repr(float(v))


# -- commands -----------------------------------------------------------------

def cmd_cone_info(s: Setup, out: Output) -> tuple:
    cone = s.cone
    result = {
        "dim": cone.dim,
        "rank": cone.rank,
        "cone": cone_to_dict(cone),
        "q_matrix": cone.q_matrix.tolist(),
        "probe_subspace": probe_subspace(cone).T.tolist(),
    }
    if "x0" in s.config:
        member = classify_point(cone, s.x0)
        result["x0_membership"] = {"class": member.cls.value, "form_value": member.form_value}
    out.table(["index", "eigenvalue"] + [f"basis_{i + 1}" for i in range(cone.dim)],
              [[i, _num(ev)] + [_num(v) for v in cone.basis[:, i]]
               for i, ev in enumerate(cone.eigenvalues)])
    log.info("cone of dimension %d and rank %d", cone.dim, cone.rank)
    return result, EXIT_OK


def cmd_check_coop(s: Setup, out: Output) -> tuple:
    cfg = s.config
    box = s.box
    horizon = float(cfg.get("horizon", 20.0))
    rows = []
    result = {"lambda": s.lam}
    checks = []
    if s.model.has_jacobian:
        pts = grid_points(box, int(cfg.get("grid_per_axis", 21)))
        if s.lam is not None:
            lmi = smith_lmi_check(s.cone, s.model, s.lam, pts)
            result["lmi"] = lmi.to_dict()
            checks.append(lmi.passed)
            rows += [["lmi", "worst_eigenvalue", _num(lmi.worst_eigenvalue)],
                     ["lmi", "pass", str(lmi.passed).lower()]]
            log.info("LMI worst eigenvalue %.6g over %d points", lmi.worst_eigenvalue,
                     lmi.points_checked)
        interval = minimal_constant_lambda(s.cone, s.model, pts)
        result["constant_lambda_interval"] = None if interval is None else list(interval)
        if interval is not None:
            rows += [["lmi", "lambda_min", _num(interval[0])],
                     ["lmi", "lambda_max", _num(interval[1])]]
        log.info("constant lambda interval on the grid: %s", interval)
    else:
        result["lmi"] = None
        log.info("no analytic Jacobian; LMI check skipped")
    rng = np.random.default_rng(s.seed)
    x_i, x_j = box.sample(rng, 2)
    inv = fundamental_cone_invariance(s.cone, s.model, x_i, x_j, horizon,
                                      m_boundary=int(cfg.get("boundary_samples", 200)),
                                      rng_seed=s.seed, cfg=s.integrator)
    result["invariance"] = inv.to_dict()
    checks.append(inv.passed)
    rows += [["invariance", "n_violations", str(inv.n_violations)],
             ["invariance", "pass", str(inv.passed).lower()]]
    mono = empirical_monotonicity(s.cone, s.model, int(cfg.get("pairs", 50)), horizon,
                                  s.seed, box, cfg=s.integrator)
    result["monotonicity"] = mono.to_dict()
    checks.append(mono.violations == 0)
    rows += [["monotonicity", "pairs_tested", str(mono.pairs_tested)],
             ["monotonicity", "violations", str(mono.violations)]]
    result["pass"] = bool(all(checks))
    out.table(["check", "metric", "value"], rows)
    log.info("cooperativity checks pass=%s", result["pass"])
    return result, EXIT_OK


def cmd_classify(s: Setup, out: Output) -> tuple:
    params = s.classifier
    if "horizon" in s.config:
        h = float(s.config["horizon"])
        params = params.with_(transient=h / 2, tail_window=h / 2)
    box = s.box
    eqs = find_equilibria(s.model, box) if box is not None else []
    rec = classify_orbit(s.model, s.cone, s.x0, eqs, params=params, box=box)
    rec.index = 0
    w = rec.pseudo_order_witness
    result = {
        "x0": s.x0.tolist(),
        "in_Q": rec.in_Q,
        "in_S": rec.in_S,
        "omega_class": rec.omega_class.kind.value,
        "period": rec.omega_class.period,
        "note": rec.omega_class.note,
        "witness": None if w is None else {"t1": w.t1, "t2": w.t2, "form_value": w.form_value},
        "horizon_used": rec.horizon_used,
        "tail_min_eq_distance": rec.tail_min_eq_distance,
        "equilibria": [e.tolist() for e in eqs],
        "assumptions": [CONE_ASSUMPTION],
    }
    out.table(csv_header(s.model.dim), [csv_row(rec)])
    failed = rec.tail_sample is None
    if not failed:
        traj = integrate(s.model, s.x0, rec.horizon_used, s.integrator)
        out.extra["trajectory"] = traj.to_csv()
    log.info("omega class %s (in_Q=%s, in_S=%s)", result["omega_class"], rec.in_Q, rec.in_S)
    return result, EXIT_NUMERICAL if failed else EXIT_OK


def cmd_sweep(s: Setup, out: Output) -> tuple:
    cfg = s.config
    params = s.classifier
    if "horizon" in cfg:
        h = float(cfg["horizon"])
        params = params.with_(transient=h / 2, tail_window=h / 2)
    jobs = resolve_jobs(cfg)
    sc = SweepConfig(s.box, int(cfg["n_points"]), s.seed, params, workers=jobs)
    started = time.perf_counter()
    report = sweep(s.model, s.cone, sc)
    elapsed = time.perf_counter() - started
    pb = pb_check(report, params=params)
    result = report.summary()
    result["pb_check"] = pb.to_dict()
    result["assumptions"] = [CONE_ASSUMPTION]
    out.raw = report.records_csv()
    log.info("sweep of %d points with %d workers took %.2f s", sc.n_points, jobs, elapsed)
    log.info("fraction_Q_union_S = %.6f", report.fraction_Q_union_S)
    print(f"fraction_Q_union_S = {report.fraction_Q_union_S:.6f}")
    status = EXIT_OK
    threshold = cfg.get("assert_theorem_A")
    if threshold is not None and report.fraction_Q_union_S < threshold:
        log.error("fraction %.6f below asserted threshold %g", report.fraction_Q_union_S,
                  threshold)
        status = EXIT_ASSERT
    if cfg.get("assert_theorem_B") and pb.violations:
        log.error("%d orbits avoid equilibria without being periodic", len(pb.violations))
        status = EXIT_ASSERT
    return result, status


def cmd_lyapunov(s: Setup, out: Output) -> tuple:
    cfg = s.config
    n = s.model.dim
    count = int(cfg.get("count", n))
    horizon = float(cfg.get("horizon", 100.0))
    qr_interval = float(cfg.get("qr_interval", 0.5))
    if count > n:
        raise ValidationError(f"config error at count: at most {n}")
    lyap = lyapunov_spectrum(s.model, s.x0, count, horizon, qr_interval, s.integrator,
                             rng_seed=s.seed)
    result = {
        "exponents": lyap.exponents.tolist(),
        "convergence": lyap.convergence,
        "horizon": lyap.horizon,
    }
    if count == n:
        result["exponent_sum"] = float(lyap.exponents.sum())
        result["trace_average"] = trace_average(s.model, s.x0, horizon, cfg=s.integrator)
    rows = [["exponent", i + 1, _num(v)] for i, v in enumerate(lyap.exponents)]
    if "k" in cfg:
        k = int(cfg["k"])
        est = separation_estimate(s.model, s.x0, k,
                                  SpectralConfig(horizon=horizon, qr_interval=qr_interval,
                                                 rng_seed=s.seed, integrator=s.integrator))
        sep = verify_separation(s.cone, est, rng_seed=s.seed)
        result["separation"] = est.to_dict()
        result["separation"]["E_in_interior"] = sep.E_in_interior
        result["separation"]["F_misses_cone"] = sep.F_misses_cone
        rows.append(["gap", k, _num(est.gap)])
    out.table(["quantity", "index", "value"], rows)
    log.info("exponents %s", np.array2string(lyap.exponents, precision=6))
    return result, EXIT_OK


def cmd_probe(s: Setup, out: Output) -> tuple:
    res = probe_scan(s.model, s.cone, s.x0, float(s.config["eps"]), int(s.config["m"]),
                     params=s.classifier, rng_seed=s.seed, box=s.box)
    result = res.to_dict()
    dim = s.model.dim
    out.table(["index"] + [f"x0_{i + 1}" for i in range(dim)] + ["in_Q", "omega_class"],
              [[i] + [_num(v) for v in rec.x0] + [str(rec.in_Q).lower(),
                                                 rec.omega_class.kind.value]
               for i, rec in enumerate(res.per_point)])
    log.info("fraction_in_Q = %.6f (%s)", res.fraction_in_Q, res.note)
    print(f"fraction_in_Q = {res.fraction_in_Q:.6f}")
    return result, EXIT_OK


HANDLERS = {
    "cone-info": cmd_cone_info,
    "check-coop": cmd_check_coop,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "lyapunov": cmd_lyapunov,
    "probe": cmd_probe,
}


# -- output -------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars and arrays become Python, non-finite floats null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _stem(setup: Setup) -> str:
    return f"{setup.config['command']}_{setup.model.name}_seed{setup.seed}"


def _attach_log(path: Path, quiet: bool):
    log.setLevel(logging.INFO)
    log.propagate = False
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(message)s")
    fh = logging.FileHandler(path, mode="w", encoding="utf-8")
    fh.setFormatter(fmt)
    log.addHandler(fh)
    if not quiet:
        sh = logging.StreamHandler(sys.stderr)
        sh.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        log.addHandler(sh)


def _detach_log():
    for h in list(log.handlers):
        log.removeHandler(h)
        h.close()


def run(config: dict, quiet: bool = False) -> int:
    """Validate ``config``, run the command and write its artifacts; returns the exit status."""
    validate_config(config)
    setup = Setup(config)
    out_dir = Path(config.get("output_dir", "out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = _stem(setup)
    _attach_log(out_dir / f"{stem}.log", quiet)
    try:
        log.info("conewatch %s on %s (backend %s)", config["command"], setup.model.name,
                 _backend.BACKEND)
        out = Output()
        try:
            result, status = HANDLERS[config["command"]](setup, out)
        except (NumericalFailure, GapTooSmall) as exc:
            log.error("%s: %s", type(exc).__name__, exc)
            result, status = {"error": f"{type(exc).__name__}: {exc}"}, EXIT_NUMERICAL
        artifacts = [f"{stem}.json", f"{stem}.log"]
        if out.has_data:
            _write(out_dir / f"{stem}.csv", out.csv_text())
            artifacts.append(f"{stem}.csv")
        for name, text in out.extra.items():
            _write(out_dir / f"{stem}_{name}.csv", text)
            artifacts.append(f"{stem}_{name}.csv")
        summary = _clean({"command": config["command"], "exit_status": status,
                          "config": config, "result": result, "artifacts": artifacts})
        validate_summary(summary)
        _write(out_dir / f"{stem}.json", json.dumps(summary, indent=2, allow_nan=False) + "\n")
        log.info("wrote %s", ", ".join(artifacts))
        return status
    finally:
        _detach_log()


def _write(path: Path, text: str):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = merge_config(args)
        return run(config, quiet=args.quiet)
    except (ValidationError, ConewatchError) as exc:
        print(f"conewatch: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
