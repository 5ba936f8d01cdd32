"""Compare the compiled and pure-Python kernels on the hot loops.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each case runs the same inputs through both backends, reports the best wall
time of ``--repeat`` runs and the largest absolute difference between the two
outputs.
"""

import argparse
import time

import numpy as np

from conewatch import get_kernels, get_model
from conewatch.dynamics import DEFAULT_CONFIG


def _best_of(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def case_flow(kern, model, p, t_end):
    s = model.native
    n = model.dim
    y0 = np.concatenate([[0.5, 0.0, 0.5], np.eye(n, p).ravel()])
    cfg = DEFAULT_CONFIG
    return lambda: kern.integrate_native(s.kind, s.exps, s.coefs, s.params, n, p, y0, 0.0,
                                         t_end, cfg.sample_dt, cfg.rel_tol, cfg.abs_tol,
                                         cfg.max_step, cfg.norm_cap, cfg.max_steps)


def case_scan(kern, points, qmat):
    # with an enormous tol no pair qualifies, so the whole triangle is scanned
    return lambda: kern.first_ordered_pair(points, qmat, 1e-3, 1e300)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    try:
        ckern = get_kernels("cython")
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return 1
    pkern = get_kernels("python")
    lc = get_model("limit_cycle_3d").model
    ff = get_model("cyclic_feedback_3d").model

    rng = np.random.default_rng(0)
    pts = rng.standard_normal((600, 3))
    qmat = get_model("linear_diag").recommended_cone.q_matrix

    cases = [
        ("flow limit_cycle_3d, t=20", case_flow, (lc, 0, 20.0), lambda o: o[1]),
        ("variational limit_cycle_3d, t=20", case_flow, (lc, 3, 20.0), lambda o: o[1]),
        ("flow cyclic_feedback_3d, t=20", case_flow, (ff, 0, 20.0), lambda o: o[1]),
        ("ordered-pair scan, 600 points", case_scan, (pts, qmat), lambda o: np.array(o[3:])),
    ]
    print(f"{'case':36s} {'cython [s]':>11s} {'python [s]':>11s} {'speed-up':>9s} {'max diff':>10s}")
    for label, make, extra, pick in cases:
        tc, oc = _best_of(make(ckern, *extra), args.repeat)
        tp, op = _best_of(make(pkern, *extra), args.repeat)
        diff = float(np.max(np.abs(np.asarray(pick(oc), float) - np.asarray(pick(op), float))))
        print(f"{label:36s} {tc:11.4f} {tp:11.4f} {tp / tc:9.1f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
